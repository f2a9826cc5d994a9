mod common;

use fedpower::baselines::{distributed_power, power_method};
use fedpower::data::{partition, synth, PartitionMode, ShardedDataset, SyntheticSpec};
use fedpower::engine::{
    initial_basis, reference_subspace, residual_rho, run_full, run_partial, Alignment,
    Participation, RunConfig, RunTrace, ScheduleKind,
};
use fedpower::linalg::{gram, orth, projection_distance, sign_fix, DenseMatrix};
use fedpower::privacy::{account, PrivacyConfig, Scheme};
use fedpower::Error;
use proptest::prelude::*;

use common::{heterogeneous, ratio_spectrum};

const ALIGNMENTS: [Alignment; 3] = [Alignment::Opt, Alignment::SignFix, Alignment::None];

fn synthetic(n: usize, d: usize, k: usize, m: usize, seed: u64) -> ShardedDataset {
    let a = synth(&SyntheticSpec {
        n,
        d,
        singular_values: ratio_spectrum(d, k, 2.0),
        seed,
    })
    .unwrap();
    partition(&a, m, PartitionMode::Shuffled { seed }).unwrap()
}

fn noisy(cfg: RunConfig, eps: f64) -> RunConfig {
    RunConfig {
        privacy: PrivacyConfig::new(eps, 0.01, 0).unwrap(),
        ..cfg
    }
}

fn comparable(trace: &RunTrace) -> Vec<(usize, usize, u64, u64, u64)> {
    trace
        .records
        .iter()
        .map(|r| {
            (
                r.t,
                r.comm_count,
                r.sin_theta_k.to_bits(),
                r.rho_t.to_bits(),
                r.eps_spent.to_bits(),
            )
        })
        .collect()
}

#[test]
fn single_worker_is_the_power_method() {
    let ds = synthetic(120, 10, 3, 1, 4);
    let m = ds.assembled_gram();
    for p in [1, 3, 7] {
        for alignment in ALIGNMENTS {
            let cfg = RunConfig {
                alignment,
                seed: 17,
                ..RunConfig::new(3, 5, 21, p)
            };
            let trace = run_full(&ds, &cfg).unwrap();
            let want = power_method(&m, 5, 21, 17).unwrap();
            assert!(projection_distance(&trace.z_bar, &want).unwrap() < 1e-12);
        }
    }
}

#[test]
fn p_one_is_distributed_power() {
    let ds = heterogeneous(300, 12, 3, 6, 2);
    let want = distributed_power(&ds, 4, 30, 8).unwrap();
    for alignment in ALIGNMENTS {
        let cfg = RunConfig {
            alignment,
            seed: 8,
            ..RunConfig::new(3, 4, 30, 1)
        };
        let trace = run_full(&ds, &cfg).unwrap();
        assert!(projection_distance(&trace.z_bar, &want).unwrap() < 1e-12);
    }
}

#[test]
fn diagonal_closed_form() {
    // Rows of each shard give M = diag(4, 3, 2, 1).
    let shard = DenseMatrix::from_rows(&[
        [4.0, 0.0, 0.0, 0.0],
        [0.0, 12f64.sqrt(), 0.0, 0.0],
        [0.0, 0.0, 8f64.sqrt(), 0.0],
        [0.0, 0.0, 0.0, 2.0],
    ])
    .unwrap();
    let ds = ShardedDataset::from_shards(vec![shard.clone(), shard]).unwrap();
    assert!(ds.assembled_gram().max_abs_diff(&DenseMatrix::diag(&[4.0, 3.0, 2.0, 1.0])) < 1e-15);

    let t = 40;
    let seed = 3;
    let z0 = initial_basis(4, 1, seed).unwrap();
    let v: Vec<f64> = [4f64, 3.0, 2.0, 1.0]
        .iter()
        .enumerate()
        .map(|(i, l)| l.powi(t) * z0.as_matrix()[(i, 0)])
        .collect();
    let tail = (v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
    let want = tail / (v[0] * v[0] + tail * tail).sqrt();

    for p in [1, 4, 5] {
        let cfg = RunConfig {
            seed,
            ..RunConfig::new(1, 1, t as usize, p)
        };
        let got = run_full(&ds, &cfg).unwrap().final_error();
        assert!((got - want).abs() <= 1e-9 * want, "p={p}: {got} vs {want}");
    }
}

#[test]
fn noiseless_sync_steps_have_zero_residual() {
    let ds = heterogeneous(200, 10, 3, 5, 6);
    for alignment in ALIGNMENTS {
        let cfg = RunConfig {
            alignment,
            record_every_step: true,
            ..RunConfig::new(3, 5, 24, 4)
        };
        let trace = run_full(&ds, &cfg).unwrap();
        for rec in &trace.records {
            if rec.t % 4 == 0 {
                assert!(rec.rho_t < 1e-14, "t={}: {}", rec.t, rec.rho_t);
            } else {
                assert!(rec.rho_t > 0.0);
            }
        }
    }
}

#[test]
fn single_worker_error_is_monotone() {
    let ds = synthetic(100, 9, 3, 1, 12);
    let cfg = RunConfig {
        record_every_step: true,
        ..RunConfig::new(3, 3, 40, 1)
    };
    let errs: Vec<f64> = run_full(&ds, &cfg)
        .unwrap()
        .records
        .iter()
        .map(|r| r.sin_theta_k)
        .collect();
    for w in errs[3..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let ds = heterogeneous(240, 10, 3, 8, 1);
    let configs = [
        noisy(RunConfig::new(3, 5, 20, 2), 2.0),
        RunConfig {
            participation: Participation::Partial {
                k: 3,
                scheme: Scheme::WithReplacement,
            },
            alignment: Alignment::SignFix,
            ..noisy(RunConfig::new(3, 5, 20, 2), 2.0)
        },
        RunConfig {
            participation: Participation::Partial {
                k: 5,
                scheme: Scheme::WithoutReplacement,
            },
            schedule: ScheduleKind::DecayingP { p0: 5 },
            ..noisy(RunConfig::new(3, 5, 20, 2), 2.0)
        },
    ];
    for cfg in configs {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| match cfg.participation {
                    Participation::Full => run_full(&ds, &cfg),
                    Participation::Partial { .. } => run_partial(&ds, &cfg),
                })
                .unwrap()
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(comparable(&a), comparable(&b));
        assert_eq!(a.z_bar, b.z_bar);
    }
}

#[test]
fn accounting_matches_schedule() {
    let ds = heterogeneous(200, 10, 3, 4, 2);
    for schedule in [ScheduleKind::FixedP { p: 3 }, ScheduleKind::DecayingP { p0: 4 }] {
        let cfg = RunConfig {
            schedule: schedule.clone(),
            ..noisy(RunConfig::new(3, 4, 12, 1), 1.5)
        };
        let trace = run_full(&ds, &cfg).unwrap();
        let last = trace.records.last().unwrap();
        assert_eq!(last.t, 12);
        assert_eq!(last.comm_count, trace.schedule.len());
        assert_eq!(trace.privacy.rounds, trace.schedule.len());
        assert_eq!((last.eps_spent, last.delta_spent), account(&trace.privacy));
        assert!((last.eps_spent - 3.0).abs() < 1e-12);
        assert!(trace.z_bar.is_orthonormal(1e-12));
        assert!(trace.noise.sigma_local > 0.0);
    }
}

#[test]
fn partial_single_device_is_the_power_method() {
    let ds = synthetic(80, 8, 2, 1, 5);
    for scheme in [Scheme::WithReplacement, Scheme::WithoutReplacement] {
        let cfg = RunConfig {
            participation: Participation::Partial { k: 1, scheme },
            ..RunConfig::new(2, 3, 15, 2)
        };
        let trace = run_partial(&ds, &cfg).unwrap();
        let want = power_method(&ds.assembled_gram(), 3, 15, 0).unwrap();
        assert!(projection_distance(&trace.z_bar, &want).unwrap() < 1e-12);
    }
}

#[test]
fn partial_without_rounds_falls_back() {
    let ds = heterogeneous(100, 8, 2, 4, 3);
    let cfg = RunConfig {
        participation: Participation::Partial {
            k: 2,
            scheme: Scheme::WithReplacement,
        },
        ..RunConfig::new(2, 3, 5, 9)
    };
    let trace = run_partial(&ds, &cfg).unwrap();
    assert!(trace.fallback_full_aggregation);
    assert!(trace.schedule.is_empty());
    assert_eq!(trace.records.len(), 1);
    assert!(trace.z_bar.is_orthonormal(1e-12));
}

#[test]
fn configuration_errors() {
    let ds = heterogeneous(100, 10, 2, 10, 3);
    // 1.25·R·(1/m)/δ = 1.25·1·0.1/0.5 ≤ 1.
    let cfg = RunConfig {
        participation: Participation::Partial {
            k: 3,
            scheme: Scheme::WithoutReplacement,
        },
        privacy: PrivacyConfig::new(1.0, 0.5, 0).unwrap(),
        ..RunConfig::new(2, 3, 4, 4)
    };
    assert!(matches!(run_partial(&ds, &cfg), Err(Error::InvalidBudget(_))));
    assert!(matches!(run_full(&ds, &cfg), Err(Error::InvalidConfig(_))));
    assert!(run_full(&ds, &RunConfig::new(4, 3, 4, 1)).is_err());
    assert!(run_full(&ds, &RunConfig::new(2, 11, 4, 1)).is_err());
    assert!(run_full(&ds, &RunConfig::new(2, 3, 0, 1)).is_err());
    let too_many = RunConfig {
        participation: Participation::Partial {
            k: 11,
            scheme: Scheme::WithReplacement,
        },
        ..RunConfig::new(2, 3, 4, 1)
    };
    assert!(run_partial(&ds, &too_many).is_err());
}

#[test]
fn reference_is_top_eigenspace() {
    let ds = synthetic(150, 8, 3, 3, 9);
    let v = reference_subspace(&ds, 3).unwrap();
    let a = ds.assemble();
    let m = gram(&a);
    // M V_k stays inside span(V_k).
    let mv = orth(&m.matmul(v.as_matrix()).unwrap()).unwrap();
    assert!(projection_distance(&mv, &v).unwrap() < 1e-12);
}

/// Worker states after `steps` unsynchronized local iterations from a shared start.
fn local_states(ds: &ShardedDataset, r: usize, steps: usize, seed: u64) -> Vec<DenseMatrix> {
    let z0 = initial_basis(ds.d(), r, seed).unwrap().into_matrix();
    ds.shards()
        .iter()
        .map(|s| {
            let g = gram(s);
            let mut z = z0.clone();
            for _ in 0..steps {
                z = orth(&g.matmul(&z).unwrap()).unwrap().into_matrix();
            }
            z
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alignment_dominance(seed in 0u64..10_000, steps in 1usize..8, m in 2usize..8) {
        let ds = heterogeneous(40 * m, 10, 3, m, seed);
        let states = local_states(&ds, 4, steps, seed);
        let opt = residual_rho(&states, Alignment::Opt, 0).unwrap();
        let sign = residual_rho(&states, Alignment::SignFix, 0).unwrap();
        let none = residual_rho(&states, Alignment::None, 0).unwrap();
        prop_assert!(opt <= sign + 1e-12, "opt {} sign {}", opt, sign);
        prop_assert!(opt <= none + 1e-12, "opt {} none {}", opt, none);
        // Sign fixing only dominates the identity in the Frobenius norm.
        for z in &states[1..] {
            let fixed = z.matmul(&sign_fix(z, &states[0]).unwrap()).unwrap();
            let f_sign = fixed.sub(&states[0]).unwrap().frobenius_norm();
            let f_none = z.sub(&states[0]).unwrap().frobenius_norm();
            prop_assert!(f_sign <= f_none + 1e-12);
        }
    }

    #[test]
    fn output_is_orthonormal(seed in 0u64..1000, p in 1usize..6, eps in 0.5f64..50.0) {
        let ds = heterogeneous(120, 8, 2, 4, seed);
        let cfg = RunConfig { seed, ..noisy(RunConfig::new(2, 3, 12, p), eps) };
        let trace = run_full(&ds, &cfg).unwrap();
        prop_assert!(trace.z_bar.is_orthonormal(1e-12));
        prop_assert!(trace.records.iter().all(|r| (0.0..=1.0).contains(&r.sin_theta_k)));
    }
}
