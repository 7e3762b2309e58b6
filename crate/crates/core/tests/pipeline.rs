use style_timing::dataset::{Dataset, Universe};
use style_timing::experiments::{
    run_backtest, run_backtest_idx, walk_forward, Candidate, SelectionScore, WalkForwardMode,
    WalkForwardSpec,
};
use style_timing::policy::PolicyConfig;
use style_timing::report::{run, RunConfig};
use style_timing::synth::{synth_data, SynthParams};
use style_timing::Error;

fn synth(seed: u64) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let u = Universe::default();
    synth_data(dir.path(), seed, &SynthParams::default(), &u).unwrap();
    let ds = Dataset::load(dir.path(), &u).unwrap();
    (dir, ds)
}

#[test]
fn synthetic_dataset_loads_with_late_member() {
    let (_dir, ds) = synth(3);
    assert!(ds.factors.is_some());
    assert!(ds.frame.credit.is_some());
    let late = ds
        .coverage
        .iter()
        .max_by_key(|c| c.first_return_date)
        .unwrap();
    assert_eq!(late.group, "D");
    assert_eq!(ds.dates[ds.basket_start], late.first_return_date);
    assert!(ds.first_feasible().unwrap() > ds.basket_start);
    assert!(ds.g[ds.basket_start..=ds.basket_end]
        .iter()
        .all(|r| r.is_finite()));
    // Ten members, SPY, TNX, VIX, BAA10Y and the factor file.
    assert_eq!(ds.checksums.len(), 15);
}

#[test]
fn window_before_warmup_is_rejected() {
    let (_dir, ds) = synth(3);
    let start = ds.dates[ds.basket_start];
    let end = ds.dates[ds.basket_end];
    let err = run_backtest(&ds, &PolicyConfig::best_local(), "x", start, end).unwrap_err();
    assert!(matches!(err, Error::Warmup { .. }));
}

#[test]
fn walk_forward_with_one_candidate_is_the_plain_backtest() {
    let (_dir, ds) = synth(5);
    let lo = ds.first_feasible().unwrap();
    let hi = ds.basket_end;
    let cfg = PolicyConfig::best_local();
    let pool = [Candidate::new(cfg)];
    let oos = lo + 300;
    let plain = run_backtest_idx(&ds, &cfg, "p", oos, hi).unwrap();
    for mode in [
        WalkForwardMode::Expanding,
        WalkForwardMode::Rolling,
        WalkForwardMode::Fixed,
    ] {
        let spec = WalkForwardSpec::new(mode);
        let wf = walk_forward(
            &ds,
            &pool,
            &spec,
            &SelectionScore::default(),
            lo,
            oos,
            hi,
            "wf",
        )
        .unwrap();
        assert_eq!(wf.result.net, plain.net);
        assert_eq!(wf.result.weights_g, plain.weights_g);
        assert!(wf.blocks.iter().all(|b| b.config_id == pool[0].id));
    }
}

#[test]
fn manifest_config_reproduces_outputs() {
    let out = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        experiment: "tilt".into(),
        synthetic: true,
        seed: 9,
        out_dir: out.path().to_path_buf(),
        ..RunConfig::default()
    };
    let first = run(&cfg).unwrap();
    assert_eq!(first.experiments_run, vec!["tilt".to_string()]);

    let again = tempfile::tempdir().unwrap();
    let replay = RunConfig {
        out_dir: again.path().to_path_buf(),
        ..first.config.clone()
    };
    let second = run(&replay).unwrap();
    assert_eq!(first, second);
    for line in &first.outputs {
        let rel = line.split(' ').next().unwrap();
        assert_eq!(
            std::fs::read(out.path().join(rel)).unwrap(),
            std::fs::read(again.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}
