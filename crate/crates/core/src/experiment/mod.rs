//! Experiment runner: JSON configs, repeated seeded runs, baseline
//! comparisons and privacy sweeps, all emitted as CSV.

mod csv;

pub use self::csv::{
    BaselineRow, BaselineTable, CsvTrace, RepeatTrace, Summary, SweepEntry, SweepOutcome,
    SweepTable, TraceRow, SCHEMA_VERSION, TRACE_COLUMNS,
};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dr_svd, uda, wda};
use crate::data::{
    parse_libsvm, partition, scale_features, sort_rows_by_column, synth, PartitionMode,
    ShardedDataset, SyntheticSpec,
};
use crate::engine::{local_approx_eta, reference_subspace, run_with_reference, Alignment, RunConfig};
use crate::error::{Error, Result};
use crate::linalg::{sin_theta_k, svd, OrthonormalBasis};
use crate::privacy::PrivacyConfig;
use crate::rng::derive_seed;

/// Iteration horizon for the sweep's minimum-error statistic.
pub const SWEEP_HORIZON: usize = 40;

/// Where the data matrix comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Libsvm {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Synthetic(SyntheticSpec),
}

fn default_partition() -> PartitionMode {
    PartitionMode::Shuffled { seed: 0 }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Max-abs scale every feature column to [-1, 1].
    #[serde(default)]
    pub scale: bool,
    /// Sort rows by this column before partitioning (heterogeneous shards).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort_by_column: Option<usize>,
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    /// Number of workers.
    pub m: usize,
    #[serde(flatten)]
    pub run: RunConfig,
    #[serde(default = "one")]
    pub repeat: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Fill the wall_ms column. Off by default so traces are reproducible
    /// byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading config {}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Checks that do not need the data; the rest happen in [`prepare`].
    pub fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(Error::InvalidConfig("repeat must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.run.privacy.validate()
    }

    /// Seed of repeat `index`.
    pub fn repeat_seed(&self, index: usize) -> u64 {
        derive_seed(self.run.seed, index as u64)
    }
}

/// A loaded, partitioned dataset together with its reference subspace.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: ShardedDataset,
    pub reference: OrthonormalBasis,
}

/// Loads, scales, sorts and partitions the data, validates the run config
/// against it and computes the reference V_k.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    cfg.run.validate(&dataset)?;
    let reference = reference_subspace(&dataset, cfg.run.k)
        .map_err(|e| e.context("computing the reference subspace"))?;
    Ok(Prepared { dataset, reference })
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<ShardedDataset> {
    let mut a = match &cfg.dataset {
        DatasetSource::Libsvm { path, dim } => parse_libsvm(path, *dim)
            .map_err(|e| e.context(format!("loading {}", path.display())))?
            .features,
        DatasetSource::Synthetic(spec) => synth(spec)?,
    };
    if cfg.scale {
        a = scale_features(&a);
    }
    if let Some(col) = cfg.sort_by_column {
        a = sort_rows_by_column(&a, col)?;
    }
    partition(&a, cfg.m, cfg.partition)
}

fn run_repeats(cfg: &ExperimentConfig, prepared: &Prepared, run: &RunConfig) -> Result<Vec<RepeatTrace>> {
    (0..cfg.repeat)
        .into_par_iter()
        .map(|index| {
            let seed = cfg.repeat_seed(index);
            let mut run = run.clone();
            run.seed = seed;
            let trace = run_with_reference(&prepared.dataset, &run, &prepared.reference)
                .map_err(|e| e.context(format!("repeat {index} (seed {seed})")))?;
            let rows = trace
                .records
                .iter()
                .map(|r| TraceRow::from_record(r, cfg.timing))
                .collect();
            Ok(RepeatTrace { index, seed, rows })
        })
        .collect()
}

/// Executes `cfg.repeat` seeded runs and collects their records.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let prepared = prepare(cfg)?;
    run_prepared(cfg, &prepared)
}

/// As [`run_experiment`], reusing an already prepared dataset.
pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<CsvTrace> {
    let repeats = run_repeats(cfg, prepared, &cfg.run)?;
    Ok(CsvTrace::new(cfg, repeats))
}

pub const BASELINE_NAMES: [&str; 6] = [
    "FedPower-OPT",
    "FedPower-SignFix",
    "FedPower-vanilla",
    "UDA",
    "WDA",
    "DR-SVD",
];

/// Final error of every FedPower variant and one-shot baseline, mean and
/// sample std over `cfg.repeat` seeds.
pub fn compare_baselines(cfg: &ExperimentConfig) -> Result<BaselineTable> {
    let prepared = prepare(cfg)?;
    let ds = &prepared.dataset;
    let reference = &prepared.reference;
    let k = cfg.run.k;

    let mut rows = Vec::with_capacity(BASELINE_NAMES.len());
    for (name, alignment) in BASELINE_NAMES
        .iter()
        .zip([Alignment::Opt, Alignment::SignFix, Alignment::None])
    {
        let mut run = cfg.run.clone();
        run.alignment = alignment;
        run.record_every_step = false;
        run.track_residual = false;
        let repeats = run_repeats(cfg, &prepared, &run).map_err(|e| e.context(*name))?;
        let finals: Vec<f64> = repeats.iter().map(|r| r.final_error()).collect();
        rows.push(BaselineRow::from_samples(name, &finals));
    }

    // UDA and WDA are deterministic; they still count as `repeat` samples.
    let uda_err = sin_theta_k(&uda(ds, k).map_err(|e| e.context("UDA"))?.v, reference)?;
    rows.push(BaselineRow::from_samples("UDA", &vec![uda_err; cfg.repeat]));
    let wda_err = sin_theta_k(&wda(ds, k).map_err(|e| e.context("WDA"))?.v, reference)?;
    rows.push(BaselineRow::from_samples("WDA", &vec![wda_err; cfg.repeat]));

    let dr: Vec<f64> = (0..cfg.repeat)
        .into_par_iter()
        .map(|i| {
            let f = dr_svd(ds, k, cfg.repeat_seed(i)).map_err(|e| e.context("DR-SVD"))?;
            sin_theta_k(&f.v, reference)
        })
        .collect::<Result<_>>()?;
    rows.push(BaselineRow::from_samples("DR-SVD", &dr));

    Ok(BaselineTable::new(cfg, rows))
}

/// One experiment per ε. Every other privacy setting comes from `cfg`, whose
/// δ must be positive; any budget split is dropped. An `InvalidBudget` for a
/// given ε is recorded in its entry and the sweep continues.
pub fn privacy_sweep(cfg: &ExperimentConfig, eps_list: &[f64]) -> Result<SweepTable> {
    if !(cfg.run.privacy.delta > 0.0) {
        return Err(Error::InvalidConfig(
            "privacy sweep needs a positive delta in the base config".into(),
        ));
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("privacy sweep needs at least one epsilon".into()));
    }
    let prepared = prepare(cfg)?;
    let horizon = SWEEP_HORIZON.min(cfg.run.iterations);
    let mut entries = Vec::with_capacity(eps_list.len());
    for &epsilon in eps_list {
        let mut point = cfg.clone();
        point.run.privacy = PrivacyConfig {
            epsilon,
            delta: cfg.run.privacy.delta,
            rounds: 0,
            split: None,
        };
        let outcome = match point
            .run
            .privacy
            .validate()
            .and_then(|_| run_prepared(&point, &prepared))
        {
            Ok(trace) => {
                let mins: Vec<f64> = trace.repeats.iter().map(|r| r.min_error_through(horizon)).collect();
                let (mean, std) = csv::mean_std(&mins);
                let last = trace.repeats[0].rows.last().cloned();
                let (eps_spent, delta_spent) = last.map_or((0.0, 0.0), |r| (r.eps_spent, r.delta_spent));
                SweepOutcome::Completed {
                    min_mean: mean,
                    min_std: std,
                    eps_spent,
                    delta_spent,
                    trace,
                }
            }
            Err(e) if matches!(e.root(), Error::InvalidBudget(_)) => SweepOutcome::Failed {
                kind: e.kind().to_string(),
                message: e.to_string(),
            },
            Err(e) => return Err(e.context(format!("epsilon {epsilon}"))),
        };
        entries.push(SweepEntry { epsilon, outcome });
    }
    Ok(SweepTable::new(cfg, horizon, entries))
}

/// Summary statistics of a prepared dataset.
#[derive(Clone, Debug, Serialize)]
pub struct DatasetReport {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub min_shard: usize,
    pub max_shard: usize,
    /// max_i ‖M_i − M‖₂ / ‖M‖₂.
    pub eta: f64,
    /// Leading eigenvalues of M = AᵀA/n.
    pub eigenvalues: Vec<f64>,
    /// λ_{k+1} / λ_k for the configured k.
    pub eigengap_ratio: Option<f64>,
}

const REPORTED_EIGENVALUES: usize = 20;

pub fn inspect_dataset(cfg: &ExperimentConfig) -> Result<DatasetReport> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let eig = svd(&ds.assembled_gram())?.singular_values;
    let k = cfg.run.k;
    let gap = (k >= 1 && k < eig.len() && eig[k - 1] > 0.0).then(|| eig[k] / eig[k - 1]);
    let sizes = ds.shard_sizes();
    Ok(DatasetReport {
        n: ds.n(),
        d: ds.d(),
        m: ds.m(),
        min_shard: *sizes.iter().min().expect("m ≥ 1"),
        max_shard: *sizes.iter().max().expect("m ≥ 1"),
        eta: local_approx_eta(&ds)?,
        eigenvalues: eig.into_iter().take(REPORTED_EIGENVALUES).collect(),
        eigengap_ratio: gap,
    })
}
