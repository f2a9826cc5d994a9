use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How communication rounds are spaced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Communicate every `p` iterations: {p, 2p, ..., p⌊T/p⌋}.
    FixedP { p: usize },
    /// Gaps p0, p0−1, ..., 2, 1, 1, 1, ...
    DecayingP { p0: usize },
    /// An explicit, strictly increasing set of iterations in [1, T].
    Explicit { steps: Vec<usize> },
}

/// The iterations t ∈ [1, T] at which workers synchronize.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncSchedule {
    kind: ScheduleKind,
    horizon: usize,
    steps: Vec<usize>,
    member: Vec<bool>,
}

impl SyncSchedule {
    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.member.get(t).copied().unwrap_or(false)
    }

    /// Number of schedule elements ≤ t.
    pub fn count_through(&self, t: usize) -> usize {
        self.steps.partition_point(|&s| s <= t)
    }
}

/// Expands a schedule kind over the horizon `[1, horizon]`. Iteration 0 is
/// never a sync step.
pub fn build_schedule(kind: ScheduleKind, horizon: usize) -> Result<SyncSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("iteration count T must be at least 1".into()));
    }
    let steps: Vec<usize> = match &kind {
        ScheduleKind::FixedP { p } => {
            if *p == 0 {
                return Err(Error::InvalidConfig("p must be at least 1".into()));
            }
            (1..=horizon / p).map(|j| j * p).collect()
        }
        ScheduleKind::DecayingP { p0 } => {
            if *p0 == 0 {
                return Err(Error::InvalidConfig("p0 must be at least 1".into()));
            }
            let mut out = Vec::new();
            let mut at = 0usize;
            let mut gap = *p0;
            loop {
                at += gap;
                if at > horizon {
                    break;
                }
                out.push(at);
                gap = gap.saturating_sub(1).max(1);
            }
            out
        }
        ScheduleKind::Explicit { steps } => {
            if steps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(
                    "explicit schedule must be strictly increasing".into(),
                ));
            }
            if steps.iter().any(|&s| s == 0 || s > horizon) {
                return Err(Error::InvalidConfig(format!(
                    "explicit schedule elements must lie in [1, {horizon}]"
                )));
            }
            steps.clone()
        }
    };
    let mut member = vec![false; horizon + 1];
    for &s in &steps {
        member[s] = true;
    }
    Ok(SyncSchedule {
        kind,
        horizon,
        steps,
        member,
    })
}
