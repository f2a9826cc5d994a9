//! Gaussian-mechanism noise calibration and (ε, δ) accounting.
//!
//! Each communication round has two perturbation sites: the local upload
//! and the server broadcast. A run of `R` rounds gives every site the
//! per-round budget (ε/R, δ/R); basic composition over `2R` releases then
//! yields (2ε, 2δ) for the whole run.
//!
//! The optional [`BudgetSplit`] instead assigns a fixed per-round budget
//! (ε₁, δ) to the local site and (ε₂, δ) to the server site. Its scales come
//! from applying the Gaussian mechanism directly with sensitivity
//! `1 / min_i s_i` (times the runtime ‖Z‖_max factor), that is
//! `σ = √(2 ln(1.25/δ)) / (ε₁ min_i s_i)` and
//! `σ′ = max_i p_i √(2 ln(1.25/δ)) / (ε₂ min_i s_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::NoiseStream;

mod epsilon_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                _ => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

/// Per-round budget split between the local and server perturbation sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    #[serde(with = "epsilon_serde")]
    pub local_epsilon: f64,
    #[serde(with = "epsilon_serde")]
    pub server_epsilon: f64,
}

/// Privacy budget of a run. `epsilon = +∞` disables all noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    /// Serialized as the string `"inf"` when infinite, since JSON has no infinity.
    #[serde(with = "epsilon_serde")]
    pub epsilon: f64,
    pub delta: f64,
    /// Number of communication rounds the budget is spread over. The engine
    /// overwrites this with the size of the sync schedule.
    #[serde(default)]
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<BudgetSplit>,
}

impl PrivacyConfig {
    pub fn new(epsilon: f64, delta: f64, rounds: usize) -> Result<Self> {
        let cfg = Self {
            epsilon,
            delta,
            rounds,
            split: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noiseless() -> Self {
        Self {
            epsilon: f64::INFINITY,
            delta: 0.0,
            rounds: 0,
            split: None,
        }
    }

    pub fn with_split(mut self, local_epsilon: f64, server_epsilon: f64) -> Self {
        self.split = Some(BudgetSplit {
            local_epsilon,
            server_epsilon,
        });
        self
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn is_noiseless(&self) -> bool {
        match self.split {
            Some(s) => s.local_epsilon == f64::INFINITY && s.server_epsilon == f64::INFINITY,
            None => self.epsilon == f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_noiseless() {
            return Ok(());
        }
        let eps_ok = |e: f64| e > 0.0 && !e.is_nan();
        match self.split {
            Some(s) => {
                if !eps_ok(s.local_epsilon) || !eps_ok(s.server_epsilon) {
                    return Err(Error::InvalidBudget(format!(
                        "split epsilons must be positive, got ({}, {})",
                        s.local_epsilon, s.server_epsilon
                    )));
                }
            }
            None => {
                if !eps_ok(self.epsilon) {
                    return Err(Error::InvalidBudget(format!(
                        "epsilon must be positive, got {}",
                        self.epsilon
                    )));
                }
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidBudget(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Gaussian noise standard deviations before the runtime ‖Z‖_max factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    /// σ, local site under full participation.
    pub sigma_local: f64,
    /// σ′, server site under full participation.
    pub sigma_server_full: f64,
    /// σ, local site under partial participation.
    pub sigma_local_partial: f64,
    /// σ′, server site under partial participation, Scheme 1.
    pub sigma_server_s1: f64,
    /// σ″, server site under partial participation, Scheme 2.
    pub sigma_server_s2: f64,
}

/// Device sampling scheme for partial participation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// K i.i.d. draws with replacement, index i with probability p_i.
    #[serde(rename = "S1")]
    WithReplacement,
    /// K uniform draws without replacement, reweighted by m/K.
    #[serde(rename = "S2")]
    WithoutReplacement,
}

fn gaussian_factor(arg: f64) -> Result<f64> {
    if !(arg > 1.0) {
        return Err(Error::InvalidBudget(format!(
            "log argument 1.25·R·q/δ = {arg} must exceed 1"
        )));
    }
    Ok((2.0 * arg.ln()).sqrt())
}

fn check_common(cfg: &PrivacyConfig, min_shard: usize) -> Result<()> {
    cfg.validate()?;
    if min_shard == 0 {
        return Err(Error::InvalidConfig("min_shard must be at least 1".into()));
    }
    if cfg.rounds == 0 {
        return Err(Error::InvalidBudget(
            "noise enabled but the run has no communication rounds".into(),
        ));
    }
    Ok(())
}

fn inv_or_zero(eps: f64) -> f64 {
    if eps == f64::INFINITY {
        0.0
    } else {
        1.0 / eps
    }
}

/// Noise scales for full participation.
pub fn scales_full(cfg: &PrivacyConfig, min_shard: usize, max_weight: f64) -> Result<NoiseScales> {
    if cfg.is_noiseless() {
        return Ok(NoiseScales::default());
    }
    check_common(cfg, min_shard)?;
    if !(max_weight > 0.0 && max_weight <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "max weight must lie in (0, 1], got {max_weight}"
        )));
    }
    let s = min_shard as f64;
    let (local, server) = match cfg.split {
        None => {
            let r = cfg.rounds as f64;
            let sigma = r / (cfg.epsilon * s) * gaussian_factor(1.25 * r / cfg.delta)?;
            (sigma, sigma * max_weight)
        }
        Some(split) => {
            let c = gaussian_factor(1.25 / cfg.delta)?;
            (
                c * inv_or_zero(split.local_epsilon) / s,
                c * max_weight * inv_or_zero(split.server_epsilon) / s,
            )
        }
    };
    Ok(NoiseScales {
        sigma_local: local,
        sigma_server_full: server,
        ..NoiseScales::default()
    })
}

/// Noise scales for partial participation with `k` sampled devices per round.
pub fn scales_partial(
    cfg: &PrivacyConfig,
    min_shard: usize,
    weights: &[f64],
    k: usize,
    scheme: Scheme,
) -> Result<NoiseScales> {
    let m = weights.len();
    if k == 0 || k > m {
        return Err(Error::InvalidConfig(format!(
            "participating devices K = {k} must lie in [1, {m}]"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "weights must be nonnegative and sum to 1, got sum {total}"
        )));
    }
    if cfg.is_noiseless() {
        return Ok(NoiseScales::default());
    }
    check_common(cfg, min_shard)?;

    let p_max = weights.iter().cloned().fold(0.0, f64::max);
    let q_max = match scheme {
        Scheme::WithReplacement => p_max,
        Scheme::WithoutReplacement => 1.0 / m as f64,
    };
    let s = min_shard as f64;
    let kf = k as f64;
    let mf = m as f64;
    let (local, server_s1, server_s2) = match cfg.split {
        None => {
            let r = cfg.rounds as f64;
            let local = r / (cfg.epsilon * s) * gaussian_factor(1.25 * r * q_max / cfg.delta)?;
            let base = r / (kf * cfg.epsilon * s) * gaussian_factor(1.25 * r / cfg.delta)?;
            (local, base, base * mf * p_max)
        }
        Some(split) => {
            let c_local = if split.local_epsilon == f64::INFINITY {
                0.0
            } else {
                gaussian_factor(1.25 * q_max / cfg.delta)?
            };
            let c = gaussian_factor(1.25 / cfg.delta)?;
            let server = c * inv_or_zero(split.server_epsilon) / (kf * s);
            (
                c_local * inv_or_zero(split.local_epsilon) / s,
                server,
                server * mf * p_max,
            )
        }
    };
    Ok(NoiseScales {
        sigma_local_partial: local,
        sigma_server_s1: server_s1,
        sigma_server_s2: server_s2,
        ..NoiseScales::default()
    })
}

/// rows×cols matrix of i.i.d. N(0, scale²) draws. `scale = 0` gives exact
/// zeros without consuming the stream.
pub fn sample_noise(rows: usize, cols: usize, scale: f64, stream: &mut NoiseStream) -> DenseMatrix {
    assert!(scale >= 0.0 && scale.is_finite(), "noise scale must be finite and nonnegative");
    if scale == 0.0 {
        return DenseMatrix::zeros(rows, cols);
    }
    let mut m = stream.gaussian_matrix(rows, cols);
    m.scale_in_place(scale);
    m
}

/// Total leakage of a completed run.
pub fn account(cfg: &PrivacyConfig) -> (f64, f64) {
    account_after(cfg, cfg.rounds)
}

/// Cumulative leakage after `completed` of `cfg.rounds` rounds.
///
/// Noiseless runs report ε = +∞ once anything has been released.
pub fn account_after(cfg: &PrivacyConfig, completed: usize) -> (f64, f64) {
    if completed == 0 {
        return (0.0, 0.0);
    }
    if cfg.is_noiseless() {
        return (f64::INFINITY, 0.0);
    }
    let c = completed as f64;
    match cfg.split {
        Some(s) => (c * (s.local_epsilon + s.server_epsilon), 2.0 * c * cfg.delta),
        None => {
            let r = cfg.rounds.max(1) as f64;
            let frac = c / r;
            (2.0 * cfg.epsilon * frac, 2.0 * cfg.delta * frac)
        }
    }
}
