//! Federated power iterations: worker state, synchronization schedules,
//! full- and partial-participation protocols, alignment and diagnostics.
//!
//! Each iteration every worker multiplies its basis by its local Gram
//! matrix. At scheduled iterations the workers align their products to a
//! baseline worker, perturb them with calibrated Gaussian noise and upload;
//! the server aggregates, perturbs again and broadcasts. Every worker then
//! orthonormalizes whatever it holds.

mod diagnostics;
mod sampling;
mod schedule;

pub use diagnostics::{baseline_index, local_approx_eta, residual_rho};
pub use sampling::{aggregate_partial, draw_participants};
pub use schedule::{build_schedule, ScheduleKind, SyncSchedule};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ShardedDataset;
use crate::error::{Error, Result};
use crate::linalg::{orth, orth_completed, sin_theta_k, svd, DenseMatrix, OrthonormalBasis};
use crate::privacy::{
    account_after, sample_noise, scales_full, scales_partial, NoiseScales, PrivacyConfig, Scheme,
};
use crate::rng::{NoiseStream, StreamId};
use diagnostics::{alignment_matrix, apply};

/// Alignment applied to worker products before aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// D = I.
    None,
    /// Orthogonal Procrustes transformation.
    Opt,
    /// ±1 diagonal sign fixing.
    SignFix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Participation {
    Full,
    Partial { k: usize, scheme: Scheme },
}

/// What to do when a product handed to orthonormalization is rank deficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Complete the basis with the Householder completion. Needed whenever a
    /// shard has fewer rows than the iteration rank.
    #[default]
    Complete,
    /// Fail with `RankDeficient`.
    Strict,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Target rank.
    pub k: usize,
    /// Iteration rank, `k ≤ r ≤ d`.
    pub r: usize,
    /// Number of local iterations T.
    pub iterations: usize,
    pub schedule: ScheduleKind,
    pub alignment: Alignment,
    pub privacy: PrivacyConfig,
    pub participation: Participation,
    pub seed: u64,
    /// Record metrics at every iteration instead of only at sync steps and T.
    #[serde(default)]
    pub record_every_step: bool,
    /// Keep the estimate Z̄_t of every recorded step in the trace.
    #[serde(default)]
    pub capture_iterates: bool,
    /// Compute ρ_t at each record (costs m spectral norms).
    #[serde(default = "default_true")]
    pub track_residual: bool,
    #[serde(default)]
    pub rank_policy: RankPolicy,
}

impl RunConfig {
    /// Noiseless, full participation, OPT alignment, fixed p.
    pub fn new(k: usize, r: usize, iterations: usize, p: usize) -> Self {
        Self {
            k,
            r,
            iterations,
            schedule: ScheduleKind::FixedP { p },
            alignment: Alignment::Opt,
            privacy: PrivacyConfig::noiseless(),
            participation: Participation::Full,
            seed: 0,
            record_every_step: false,
            capture_iterates: false,
            track_residual: true,
            rank_policy: RankPolicy::Complete,
        }
    }

    pub fn validate(&self, dataset: &ShardedDataset) -> Result<()> {
        if self.k == 0 || self.k > self.r || self.r > dataset.d() {
            return Err(Error::InvalidConfig(format!(
                "need 1 ≤ k ≤ r ≤ d, got k={}, r={}, d={}",
                self.k,
                self.r,
                dataset.d()
            )));
        }
        if let Participation::Partial { k, .. } = self.participation {
            if k == 0 || k > dataset.m() {
                return Err(Error::InvalidConfig(format!(
                    "participating devices K = {k} must lie in [1, {}]",
                    dataset.m()
                )));
            }
        }
        self.privacy.validate()
    }
}

/// Metrics at one recorded iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord {
    pub t: usize,
    pub comm_count: usize,
    pub sin_theta_k: f64,
    pub rho_t: f64,
    pub eta: f64,
    pub eps_spent: f64,
    pub delta_spent: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub records: Vec<SyncRecord>,
    /// Final orthonormalized estimate Z̄_T.
    pub z_bar: OrthonormalBasis,
    pub schedule: SyncSchedule,
    pub noise: NoiseScales,
    /// Privacy configuration with `rounds` set to the schedule size.
    pub privacy: PrivacyConfig,
    /// Partial participation only: no sync happened, so the output used
    /// every worker with full weights.
    pub fallback_full_aggregation: bool,
    /// Z̄_t per record when `capture_iterates` is set.
    pub iterates: Vec<(usize, OrthonormalBasis)>,
}

impl RunTrace {
    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.sin_theta_k)
    }

    pub fn min_error(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.sin_theta_k)
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum error over records with `t ≤ horizon`.
    pub fn min_error_through(&self, horizon: usize) -> f64 {
        self.records
            .iter()
            .filter(|r| r.t <= horizon)
            .map(|r| r.sin_theta_k)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Top-k right singular subspace of the unsplit data, computed from the
/// assembled Gram matrix.
pub fn reference_subspace(dataset: &ShardedDataset, k: usize) -> Result<OrthonormalBasis> {
    if k == 0 || k > dataset.d() {
        return Err(Error::InvalidConfig(format!(
            "reference rank {k} must lie in [1, {}]",
            dataset.d()
        )));
    }
    Ok(svd(&dataset.assembled_gram())?.v.leading(k))
}

/// Shared seeded initial basis Z_0: orthonormalized d×r standard Gaussian.
pub fn initial_basis(d: usize, r: usize, seed: u64) -> Result<OrthonormalBasis> {
    orth(&NoiseStream::new(seed, StreamId::Init).gaussian_matrix(d, r))
}

pub fn run_full(dataset: &ShardedDataset, cfg: &RunConfig) -> Result<RunTrace> {
    if cfg.participation != Participation::Full {
        return Err(Error::InvalidConfig("run_full needs full participation".into()));
    }
    let reference = reference_subspace(dataset, cfg.k)?;
    Simulation::new(dataset, cfg)?.run(&reference)
}

pub fn run_partial(dataset: &ShardedDataset, cfg: &RunConfig) -> Result<RunTrace> {
    if !matches!(cfg.participation, Participation::Partial { .. }) {
        return Err(Error::InvalidConfig("run_partial needs partial participation".into()));
    }
    let reference = reference_subspace(dataset, cfg.k)?;
    Simulation::new(dataset, cfg)?.run(&reference)
}

/// Runs either protocol against a precomputed reference V_k.
pub fn run_with_reference(
    dataset: &ShardedDataset,
    cfg: &RunConfig,
    reference: &OrthonormalBasis,
) -> Result<RunTrace> {
    if reference.rows() != dataset.d() || reference.cols() != cfg.k {
        return Err(Error::dims(
            "run_with_reference",
            format!("{}x{}", dataset.d(), cfg.k),
            format!("{}x{}", reference.rows(), reference.cols()),
        ));
    }
    Simulation::new(dataset, cfg)?.run(reference)
}

/// The most recent aggregation's participants.
#[derive(Clone, Debug)]
struct LastSync {
    set: Vec<usize>,
    baseline: usize,
}

struct Simulation<'a> {
    dataset: &'a ShardedDataset,
    cfg: &'a RunConfig,
    grams: Vec<DenseMatrix>,
    schedule: SyncSchedule,
    privacy: PrivacyConfig,
    noise: NoiseScales,
    full_baseline: usize,
    eta: f64,
}

impl<'a> Simulation<'a> {
    fn new(dataset: &'a ShardedDataset, cfg: &'a RunConfig) -> Result<Self> {
        cfg.validate(dataset)?;
        let schedule = build_schedule(cfg.schedule.clone(), cfg.iterations)?;
        let privacy = cfg.privacy.with_rounds(schedule.len());
        let noise = if privacy.is_noiseless() || schedule.is_empty() {
            NoiseScales::default()
        } else {
            match cfg.participation {
                Participation::Full => {
                    scales_full(&privacy, dataset.min_shard(), dataset.max_weight())?
                }
                Participation::Partial { k, scheme } => {
                    scales_partial(&privacy, dataset.min_shard(), dataset.weights(), k, scheme)?
                }
            }
        };
        let grams: Vec<DenseMatrix> = dataset
            .shards()
            .par_iter()
            .map(crate::linalg::gram)
            .collect();
        Ok(Self {
            dataset,
            cfg,
            grams,
            schedule,
            privacy,
            noise,
            full_baseline: baseline_index(dataset.weights(), None),
            eta: local_approx_eta(dataset)?,
        })
    }

    fn orthonormalize(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        let q = match self.cfg.rank_policy {
            RankPolicy::Complete => orth_completed(y)?,
            RankPolicy::Strict => orth(y)?,
        };
        Ok(q.into_matrix())
    }

    fn local_sigma(&self) -> f64 {
        match self.cfg.participation {
            Participation::Full => self.noise.sigma_local,
            Participation::Partial { .. } => self.noise.sigma_local_partial,
        }
    }

    fn server_sigma(&self) -> f64 {
        match self.cfg.participation {
            Participation::Full => self.noise.sigma_server_full,
            Participation::Partial {
                scheme: Scheme::WithReplacement,
                ..
            } => self.noise.sigma_server_s1,
            Participation::Partial {
                scheme: Scheme::WithoutReplacement,
                ..
            } => self.noise.sigma_server_s2,
        }
    }

    fn run(&self, reference: &OrthonormalBasis) -> Result<RunTrace> {
        let start = Instant::now();
        let cfg = self.cfg;
        let m = self.dataset.m();
        let z0 = initial_basis(self.dataset.d(), cfg.r, cfg.seed)?.into_matrix();
        let mut workers: Vec<DenseMatrix> = vec![z0; m];
        let mut last_sync: Option<LastSync> = None;
        let mut round = 0usize;
        let mut records = Vec::new();
        let mut iterates = Vec::new();

        for t in 1..=cfg.iterations {
            let products: Vec<DenseMatrix> = self
                .grams
                .par_iter()
                .zip(workers.par_iter())
                .map(|(g, z)| g.matmul(z).expect("M_i is d×d, Z is d×r"))
                .collect();

            if self.schedule.contains(t) {
                round += 1;
                let (aggregate, sync) = self.synchronize(round, &workers, &products)?;
                let z = self.orthonormalize(&aggregate)?;
                workers = vec![z; m];
                last_sync = Some(sync);
            } else {
                workers = products
                    .par_iter()
                    .map(|y| self.orthonormalize(y))
                    .collect::<Result<_>>()?;
            }

            if cfg.record_every_step || self.schedule.contains(t) || t == cfg.iterations {
                let estimate = self.estimate(t, &workers, last_sync.as_ref())?;
                let rho = if cfg.track_residual {
                    residual_rho(&workers, cfg.alignment, self.full_baseline)?
                } else {
                    f64::NAN
                };
                let comm_count = self.schedule.count_through(t);
                let (eps_spent, delta_spent) = account_after(&self.privacy, comm_count);
                records.push(SyncRecord {
                    t,
                    comm_count,
                    sin_theta_k: sin_theta_k(&estimate, reference)?,
                    rho_t: rho,
                    eta: self.eta,
                    eps_spent,
                    delta_spent,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
                if cfg.capture_iterates {
                    iterates.push((t, estimate));
                }
            }
        }

        let z_bar = self.estimate(cfg.iterations, &workers, last_sync.as_ref())?;
        let fallback = matches!(cfg.participation, Participation::Partial { .. }) && last_sync.is_none();
        Ok(RunTrace {
            records,
            z_bar,
            schedule: self.schedule.clone(),
            noise: self.noise,
            privacy: self.privacy,
            fallback_full_aggregation: fallback,
            iterates,
        })
    }

    /// One communication round: returns the perturbed aggregate to broadcast.
    fn synchronize(
        &self,
        round: usize,
        workers: &[DenseMatrix],
        products: &[DenseMatrix],
    ) -> Result<(DenseMatrix, LastSync)> {
        let cfg = self.cfg;
        let seed = cfg.seed;
        let weights = self.dataset.weights();
        let m = workers.len();

        let set: Vec<usize> = match cfg.participation {
            Participation::Full => (0..m).collect(),
            Participation::Partial { k, scheme } => {
                let mut stream = NoiseStream::new(seed, StreamId::Sampling { round: round as u64 });
                draw_participants(weights, k, scheme, &mut stream)?
            }
        };
        let baseline = match cfg.participation {
            Participation::Full => self.full_baseline,
            Participation::Partial { .. } => baseline_index(weights, Some(&set)),
        };
        let mut distinct = set.clone();
        distinct.dedup();

        let local_sigma = self.local_sigma();
        let base_z = &workers[baseline];
        // (upload, ‖Z_{t-1} D‖_max) for each distinct participant.
        let uploads: Vec<(usize, DenseMatrix, f64)> = distinct
            .par_iter()
            .map(|&i| {
                let d = alignment_matrix(cfg.alignment, &workers[i], base_z)?;
                let mut y = apply(&products[i], d.as_ref());
                let aligned_max = apply(&workers[i], d.as_ref()).max_abs();
                let scale = workers[i].max_abs() * local_sigma;
                if scale > 0.0 {
                    let mut stream = NoiseStream::new(
                        seed,
                        StreamId::LocalNoise {
                            round: round as u64,
                            worker: i as u64,
                        },
                    );
                    y.axpy(1.0, &sample_noise(y.rows(), y.cols(), scale, &mut stream))?;
                }
                Ok((i, y, aligned_max))
            })
            .collect::<Result<_>>()?;

        let (rows, cols) = products[0].shape();
        let server_scale = uploads.iter().map(|u| u.2).fold(0.0, f64::max) * self.server_sigma();

        let mut aggregate = match cfg.participation {
            Participation::Full => {
                let mut acc = DenseMatrix::zeros(rows, cols);
                for (i, y, _) in &uploads {
                    acc.axpy(weights[*i], y)?;
                }
                acc
            }
            Participation::Partial { scheme, .. } => {
                let mut slots: Vec<DenseMatrix> = vec![DenseMatrix::zeros(0, 0); m];
                for (i, y, _) in uploads {
                    slots[i] = y;
                }
                aggregate_partial(&slots, weights, &set, scheme)
            }
        };
        if server_scale > 0.0 {
            let mut stream = NoiseStream::new(seed, StreamId::ServerNoise { round: round as u64 });
            aggregate.axpy(1.0, &sample_noise(rows, cols, server_scale, &mut stream))?;
        }
        Ok((aggregate, LastSync { set, baseline }))
    }

    /// Z̄_t: the protocol's output formula evaluated at iteration t, orthonormalized.
    fn estimate(
        &self,
        t: usize,
        workers: &[DenseMatrix],
        last_sync: Option<&LastSync>,
    ) -> Result<OrthonormalBasis> {
        let weights = self.dataset.weights();
        let m = workers.len();
        let synced = self.schedule.contains(t);

        let (set, baseline, coef): (Vec<usize>, usize, Box<dyn Fn(usize) -> f64>) =
            match (self.cfg.participation, last_sync) {
                (Participation::Partial { k, scheme }, Some(sync)) => {
                    let kf = k as f64;
                    let mf = m as f64;
                    let c: Box<dyn Fn(usize) -> f64> = match scheme {
                        Scheme::WithReplacement => Box::new(move |_| 1.0 / kf),
                        Scheme::WithoutReplacement => Box::new(move |i| mf / kf * weights[i]),
                    };
                    (sync.set.clone(), sync.baseline, c)
                }
                _ => ((0..m).collect(), self.full_baseline, Box::new(|i| weights[i])),
            };

        let (rows, cols) = workers[0].shape();
        let mut acc = DenseMatrix::zeros(rows, cols);
        for &i in &set {
            if synced {
                acc.axpy(coef(i), &workers[i])?;
            } else {
                let d = alignment_matrix(self.cfg.alignment, &workers[i], &workers[baseline])?;
                acc.axpy(coef(i), &apply(&workers[i], d.as_ref()))?;
            }
        }
        Ok(OrthonormalBasis::from_trusted(self.orthonormalize(&acc)?))
    }
}
