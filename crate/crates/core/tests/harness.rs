use mclab_core::chain::{
    discounted_distribution, discounted_mean, ChainInstance, Distribution, Kernel, StateFunction,
};
use mclab_core::estimators::{exact_fh_expectation, EstimatorKind};
use mclab_core::harness::{
    coverage_check, figure2_config, run_experiment, sweep_horizon, write_results_csv,
    write_summary_csv, ChainSource, CoverageStatus, EstimatorEntry, ExperimentConfig, OutputPaths,
};
use mclab_core::rng::derive_seed;
use mclab_core::sampling::{sample_history, ResetPolicy};

fn two_state_source() -> ChainSource {
    ChainSource::Inline {
        name: "two".into(),
        kernel: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        init: vec![1.0, 0.0],
    }
}

fn config(
    estimators: Vec<EstimatorEntry>,
    budgets: Vec<usize>,
    replications: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        chain: two_state_source(),
        function: Some(vec![1.0, 0.0]),
        gamma: 0.9,
        estimators,
        budgets,
        replications,
        master_seed: 42,
        delta: Some(0.1),
        workers: None,
        output: OutputPaths::default(),
    }
}

fn all_four() -> Vec<EstimatorEntry> {
    vec![
        EstimatorEntry::new(EstimatorKind::As, None),
        EstimatorEntry::new(EstimatorKind::Os, None),
        EstimatorEntry::new(EstimatorKind::Fhn, Some(10)),
        EstimatorEntry::new(EstimatorKind::Fhc, Some(10)),
    ]
}

fn csv_bytes(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<u8>) {
    let out = run_experiment(cfg).unwrap();
    let (mut r, mut s) = (Vec::new(), Vec::new());
    write_results_csv(&out.results, &mut r).unwrap();
    write_summary_csv(&out.summary, &mut s).unwrap();
    (r, s)
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = config(all_four(), vec![100, 1000], 6);
    assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg));
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = config(all_four(), vec![100, 1000], 6);
    cfg.workers = Some(1);
    let one = csv_bytes(&cfg);
    cfg.workers = Some(4);
    assert_eq!(one, csv_bytes(&cfg));
}

#[test]
fn adding_an_estimator_keeps_other_rows() {
    let base = run_experiment(&config(
        vec![EstimatorEntry::new(EstimatorKind::As, None)],
        vec![200],
        5,
    ))
    .unwrap();
    let more = run_experiment(&config(all_four(), vec![200], 5)).unwrap();
    let as_rows: Vec<_> = more
        .results
        .iter()
        .filter(|r| r.estimator == EstimatorKind::As)
        .cloned()
        .collect();
    assert_eq!(base.results, as_rows);
}

#[test]
fn rows_carry_the_oracle_mean() {
    let cfg = config(all_four(), vec![100], 3);
    let out = run_experiment(&cfg).unwrap();
    let k = Kernel::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
    let chain = ChainInstance::new("two", k, Distribution::new(vec![1.0, 0.0]).unwrap()).unwrap();
    let mean = discounted_mean(&chain, 0.9, &StateFunction::new(vec![1.0, 0.0])).unwrap();
    assert_eq!(out.results.len(), 4 * 3);
    for r in &out.results {
        assert!((r.true_mean - mean).abs() < 1e-10);
        assert_eq!(r.abs_error, r.estimate.map(|e| (e - r.true_mean).abs()));
    }
}

#[test]
fn constant_function_is_estimated_exactly_by_as() {
    let mut cfg = config(
        vec![EstimatorEntry::new(EstimatorKind::As, None)],
        vec![50, 500],
        1,
    );
    cfg.function = Some(vec![1.0, 1.0]);
    for r in run_experiment(&cfg).unwrap().results {
        assert_eq!(r.abs_error, Some(0.0));
    }
}

#[test]
fn failed_replications_are_flagged_not_fatal() {
    // With γ = 0.999 and N = 5 most histories have no reset.
    let mut cfg = config(
        vec![
            EstimatorEntry::new(EstimatorKind::Os, None),
            EstimatorEntry::new(EstimatorKind::As, None),
        ],
        vec![5],
        30,
    );
    cfg.gamma = 0.999;
    let out = run_experiment(&cfg).unwrap();
    let os: Vec<_> = out
        .results
        .iter()
        .filter(|r| r.estimator == EstimatorKind::Os)
        .collect();
    let failed = os.iter().filter(|r| r.estimate.is_none()).count();
    assert!(failed > 20);
    assert!(os
        .iter()
        .all(|r| r.estimate.is_some() == r.abs_error.is_some()));
    assert!(out
        .results
        .iter()
        .filter(|r| r.estimator == EstimatorKind::As)
        .all(|r| r.estimate.is_some()));
    let summary = out
        .summary
        .iter()
        .find(|s| s.estimator == EstimatorKind::Os)
        .unwrap();
    assert_eq!(summary.failures, failed);

    cfg.estimators.remove(0);
    let alone = run_experiment(&cfg).unwrap();
    let as_rows: Vec<_> = out
        .results
        .iter()
        .filter(|r| r.estimator == EstimatorKind::As)
        .cloned()
        .collect();
    assert_eq!(alone.results, as_rows);
}

#[test]
fn summary_interval_brackets_mean() {
    let out = run_experiment(&config(all_four(), vec![100, 1000], 8)).unwrap();
    assert_eq!(out.summary.len(), 8);
    for s in &out.summary {
        let (m, lo, hi) = (
            s.mean_error.unwrap(),
            s.ci95_lo.unwrap(),
            s.ci95_hi.unwrap(),
        );
        assert!(lo <= m && m <= hi);
        assert!(s.bound_value.is_some());
    }
}

#[test]
fn sweep_fhc_is_rescaled_fhn() {
    let cfg = config(
        vec![
            EstimatorEntry::new(EstimatorKind::Fhn, None),
            EstimatorEntry::new(EstimatorKind::Fhc, None),
        ],
        vec![1000],
        3,
    );
    let sweep = sweep_horizon(&cfg, &[5, 10, 20]).unwrap();
    for t in [5usize, 10, 20] {
        for r in 0..3 {
            let pick = |k| {
                sweep
                    .results
                    .iter()
                    .find(|x| x.estimator == k && x.horizon == Some(t) && x.seed_index == r)
                    .unwrap()
            };
            let (n, c) = (
                pick(EstimatorKind::Fhn).estimate.unwrap(),
                pick(EstimatorKind::Fhc).estimate.unwrap(),
            );
            assert!((c - n / (1.0 - 0.9f64.powi(t as i32))).abs() < 1e-12);
        }
    }
    // ⌈T*⌉ = ⌈ln √1000 / ln(1/0.9)⌉ = 33; the closest divisor of 1000 is 40 or 25.
    assert!(sweep.summary.iter().any(|s| s.is_optimal));
}

#[test]
fn sweep_on_iid_chain_matches_sample_mean() {
    // γ = 0 and T = 1: FHN averages f over N independent draws from ν.
    let mut cfg = config(
        vec![EstimatorEntry::new(EstimatorKind::Fhn, None)],
        vec![400],
        2,
    );
    cfg.gamma = 0.0;
    cfg.chain = ChainSource::Inline {
        name: "iid".into(),
        kernel: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        init: vec![0.5, 0.5],
    };
    let sweep = sweep_horizon(&cfg, &[1]).unwrap();
    for r in &sweep.results {
        let seed = derive_seed(42, &[1, 1, 400, r.seed_index as u64]);
        let h = sample_history(
            &cfg.resolve().unwrap().chain,
            &ResetPolicy::fixed(1),
            400,
            seed,
        )
        .unwrap();
        let mean = h.states.iter().filter(|&&x| x == 0).count() as f64 / 400.0;
        assert!((r.estimate.unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn coverage_trivially_passes_at_large_delta() {
    let cfg = config(
        vec![
            EstimatorEntry::new(EstimatorKind::Os, None),
            EstimatorEntry::new(EstimatorKind::As, None),
        ],
        vec![100, 1000],
        20,
    );
    let rows = coverage_check(&cfg, 0.999).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.status == CoverageStatus::Pass));
}

#[test]
fn coverage_of_as_from_discounted_start() {
    // ν = π_γ removes the χ² term of the AS bound.
    let k = Kernel::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
    let chain =
        ChainInstance::new("two", k.clone(), Distribution::new(vec![0.6, 0.4]).unwrap()).unwrap();
    let mut nu = vec![0.6, 0.4];
    for _ in 0..200 {
        let c = chain
            .with_init(Distribution::new(nu.clone()).unwrap())
            .unwrap();
        nu = discounted_distribution(&c, 0.9).unwrap().probs().to_vec();
    }
    let mut cfg = config(
        vec![EstimatorEntry::new(EstimatorKind::As, None)],
        vec![1000],
        400,
    );
    cfg.chain = ChainSource::Inline {
        name: "fixed".into(),
        kernel: k.rows(),
        init: nu,
    };
    for row in coverage_check(&cfg, 0.1).unwrap() {
        assert_eq!(row.status, CoverageStatus::Pass, "{row:?}");
    }
}

#[test]
fn adaptive_marginal_approaches_discounted_distribution() {
    let k = Kernel::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
    let chain = ChainInstance::new("two", k, Distribution::new(vec![1.0, 0.0]).unwrap()).unwrap();
    let gamma = 0.9;
    let target = discounted_distribution(&chain, gamma).unwrap().probs()[0];
    let reps = 20_000u64;
    let hits = (0..reps)
        .filter(|&r| {
            let h = sample_history(
                &chain,
                &ResetPolicy::adaptive(gamma),
                80,
                derive_seed(3, &[r]),
            )
            .unwrap();
            h.states[79] == 0
        })
        .count();
    let freq = hits as f64 / reps as f64;
    let se = (target * (1.0 - target) / reps as f64).sqrt();
    // After 79 steps of P_γ the start is forgotten up to (0.5·0.9)^79.
    assert!((freq - target).abs() < 4.0 * se, "{freq} vs {target}");
}

#[test]
fn figure2_budgets_are_divisible() {
    let cfg = figure2_config(0.5, 0.9, 2, 0);
    cfg.validate().unwrap();
    assert_eq!(cfg.estimators.len(), 4);
}

#[test]
fn longer_horizons_help_fhn_on_slow_chain() {
    let cfg = ExperimentConfig {
        chain: ChainSource::Alpha {
            alpha: 0.99,
            n: 3,
            start: None,
        },
        function: None,
        gamma: 0.99,
        estimators: vec![EstimatorEntry::new(EstimatorKind::Fhn, None)],
        budgets: vec![100_000],
        replications: 20,
        master_seed: 5,
        delta: None,
        workers: None,
        output: OutputPaths::default(),
    };
    let sweep = sweep_horizon(&cfg, &[10, 50, 200]).unwrap();
    let err = |t| {
        sweep
            .summary
            .iter()
            .find(|s| s.horizon == t)
            .unwrap()
            .mean_error
            .unwrap()
    };
    assert!(
        err(10) >= err(50) && err(50) >= err(200),
        "{} {} {}",
        err(10),
        err(50),
        err(200)
    );

    // The uniform start is stationary on the cycle, so FHC has no bias to
    // lose as T grows.
    let resolved = cfg.resolve().unwrap();
    for t in [10, 50, 200] {
        let e = exact_fh_expectation(&resolved.chain, 0.99, t, &resolved.f, EstimatorKind::Fhc)
            .unwrap();
        assert!((e - resolved.true_mean).abs() < 1e-12);
    }
}
