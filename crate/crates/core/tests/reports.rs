use std::fs;
use std::path::PathBuf;

use beam_bai::harness::{
    read_summary, read_trials, run_scenario, write_reports, ScenarioConfig, ScenarioReport,
    BOUNDS_HEADER, SUMMARY_HEADER, TRIALS_HEADER,
};
use tempfile::TempDir;

fn scenario1(overrides: &[&str]) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/scenario1.toml");
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::load(&path, &overrides).unwrap()
}

#[test]
fn empty_report_writes_headers_only() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario1(&[]);
    let empty = ScenarioReport {
        summary: vec![],
        trials: vec![],
        bounds: vec![],
        noise: vec![],
    };
    write_reports(&cfg, &empty, dir.path()).unwrap();
    for (f, h) in [
        ("summary.csv", SUMMARY_HEADER),
        ("trials.csv", TRIALS_HEADER),
        ("bounds.csv", BOUNDS_HEADER),
    ] {
        assert_eq!(
            fs::read_to_string(dir.path().join(f)).unwrap(),
            format!("{h}\n")
        );
    }
}

#[test]
fn summary_and_trials_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario1(&["trials=5", "snr_db_grid=[74, 78]", "algorithms=2PT&S,HEBA"]);
    let report = run_scenario(&cfg).unwrap();
    write_reports(&cfg, &report, dir.path()).unwrap();

    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), report.summary.len());
    for (a, b) in summary.iter().zip(&report.summary) {
        assert_eq!(a.algorithm, b.algorithm);
        assert_eq!(a.trials, b.trials);
        for (x, y) in [
            (a.snr_db, b.snr_db),
            (a.mean_tau, b.mean_tau),
            (a.std_tau, b.std_tau),
            (a.error_rate, b.error_rate),
            (a.mean_ear, b.mean_ear),
        ] {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    let trials = read_trials(&dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.len(), report.trials.len());
    for (a, b) in trials.iter().zip(&report.trials) {
        assert_eq!(
            (
                &a.algorithm,
                a.trial,
                a.seed,
                a.tau,
                a.tau_phase1,
                a.tau_phase2,
                a.chosen_arm,
                a.correct
            ),
            (
                &b.algorithm,
                b.trial,
                b.seed,
                b.tau,
                b.tau_phase1,
                b.tau_phase2,
                b.chosen_arm,
                b.correct
            )
        );
    }
}

#[test]
fn adding_an_algorithm_leaves_other_streams_alone() {
    let small = run_scenario(&scenario1(&[
        "trials=3",
        "snr_db_grid=78",
        "algorithms=HT&S",
    ]))
    .unwrap();
    let large = run_scenario(&scenario1(&[
        "trials=3",
        "snr_db_grid=78",
        "algorithms=EBA,2PHT&S,HT&S",
    ]))
    .unwrap();
    let pick = |r: &ScenarioReport| {
        r.trials
            .iter()
            .filter(|t| t.algorithm == "HT&S")
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(pick(&small), pick(&large));
}

#[test]
fn single_trial_rows_have_zero_std() {
    let report = run_scenario(&scenario1(&[
        "trials=1",
        "snr_db_grid=78",
        "algorithms=EBA,2PHT&S",
    ]))
    .unwrap();
    assert!(report
        .summary
        .iter()
        .all(|r| r.std_tau == 0.0 && r.trials == 1));
}

#[test]
fn two_phase_taus_add_up() {
    let report = run_scenario(&scenario1(&[
        "trials=4",
        "snr_db_grid=78",
        "algorithms=2PHT&S,2PT&S",
    ]))
    .unwrap();
    for t in &report.trials {
        assert_eq!(t.tau, Some(t.tau_phase1.unwrap() + t.tau_phase2.unwrap()));
        assert!(t.budget_ok);
    }
}
