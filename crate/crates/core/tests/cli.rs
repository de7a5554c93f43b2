use std::fs;
use std::path::{Path, PathBuf};

use beam_bai::cli::{self, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK};
use beam_bai::harness::{
    parse_meta, read_summary, read_trials, BOUNDS_HEADER, SUMMARY_HEADER, TRIALS_HEADER, VERSION,
};
use tempfile::TempDir;

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
        .to_string_lossy()
        .into_owned()
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("beam-bai").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn toy(dir: &Path, means: &[f64], sigma2: f64, delta: f64) -> String {
    let path = dir.join("toy.toml");
    let means: Vec<String> = means.iter().map(|m| format!("{m:?}")).collect();
    fs::write(
        &path,
        format!(
            r#"name = "toy"
means = [{}]
snr_db_grid = [0.0]
noise_dbm = {:?}
delta = {delta:?}
trials = 1
seed = 1
algorithms = ["HT&S"]
[steering]
num_antennas = 8
codebook_size = 8
"#,
            means.join(", "),
            10.0 * sigma2.log10()
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_exits_one_with_path() {
    let (code, _, err) = invoke(&["run", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("/nonexistent/scenario.toml"), "{err}");
}

#[test]
fn unknown_key_and_bad_override_are_config_errors() {
    let s1 = scenario("scenario1");
    let (code, _, err) = invoke(&["check", "--config", &s1, "--set", "no_such_key=3"]);
    assert_eq!(code, EXIT_CONFIG, "{err}");
    let (code, _, _) = invoke(&["check", "--config", &s1, "--set", "delta"]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = invoke(&["check", "--config", &s1, "--set", "delta=1.5"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn unknown_subcommand_is_config_error() {
    let (code, _, _) = invoke(&["plot", "--config", "x"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn zero_jobs_rejected() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, _) = invoke(&[
        "run",
        "--config",
        &scenario("scenario1"),
        "--out",
        &out,
        "--jobs",
        "0",
    ]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn run_smoke_writes_reports_and_echoes_overrides() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, stdout, err) = invoke(&[
        "run",
        "--config",
        &scenario("scenario1"),
        "--out",
        &out,
        "--set",
        "trials=10",
        "--set",
        "snr_db_grid=78",
        "--set",
        "algorithms=2PHT&S,HT&S",
        "--jobs",
        "2",
        "--weight-refresh",
        "2",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.contains("2PHT&S"));
    for f in ["summary.csv", "trials.csv", "bounds.csv", "meta"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let first = |f: &str| {
        fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(first("summary.csv"), SUMMARY_HEADER);
    assert_eq!(first("trials.csv"), TRIALS_HEADER);
    assert_eq!(first("bounds.csv"), BOUNDS_HEADER);

    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|r| r.trials == 10 && r.snr_db == 78.0));
    let trials = read_trials(&dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.len(), 20);

    let (version, cfg) = parse_meta(&fs::read_to_string(dir.path().join("meta")).unwrap()).unwrap();
    assert_eq!(version, VERSION);
    assert_eq!(cfg.trials, 10);
    assert_eq!(cfg.snr_db_grid, vec![78.0]);
    assert_eq!(
        cfg.algorithms,
        vec!["2PHT&S".to_string(), "HT&S".to_string()]
    );
    assert_eq!(cfg.weight_refresh, 2);
}

#[test]
fn run_is_byte_identical_across_invocations_and_job_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let out = dir.path().to_string_lossy().into_owned();
        let (code, _, err) = invoke(&[
            "run",
            "--config",
            &scenario("scenario1"),
            "--out",
            &out,
            "--set",
            "trials=4",
            "--set",
            "snr_db_grid=[74, 78]",
            "--set",
            "algorithms=2PHT&S,EBA",
            "--jobs",
            jobs,
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    for f in ["summary.csv", "trials.csv", "bounds.csv", "meta"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn step_cap_hit_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, stdout, _) = invoke(&[
        "run",
        "--config",
        &scenario("scenario1"),
        "--out",
        &out,
        "--set",
        "trials=2",
        "--set",
        "snr_db_grid=66",
        "--set",
        "algorithms=HT&S",
        "--step-cap",
        "5",
    ]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(stdout.contains("step cap"));
    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary[0].error_rate, 1.0);
}

#[test]
fn overlapping_flag_switches_variant() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, stdout, err) = invoke(&[
        "run",
        "--config",
        &scenario("scenario1"),
        "--out",
        &out,
        "--set",
        "trials=2",
        "--set",
        "snr_db_grid=78",
        "--set",
        "algorithms=2PHT&S",
        "--overlapping",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.contains("2PHT&S-overlapping"), "{stdout}");
}

#[test]
fn check_toy_verdicts() {
    let dir = TempDir::new().unwrap();
    let (code, out, _) = invoke(&[
        "check",
        "--config",
        &toy(dir.path(), &[2.0, 1.0], 10.0, 0.1),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("holds") && !out.contains("violated"), "{out}");
    let (code, out, _) = invoke(&["check", "--config", &toy(dir.path(), &[2.0, 1.0], 0.5, 0.1)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("violated"), "{out}");
}

#[test]
fn check_scenario_prints_per_arm_thresholds() {
    let (code, out, _) = invoke(&[
        "check",
        "--config",
        &scenario("scenario1"),
        "--set",
        "snr_db_grid=66",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("snr 66 dB:"));
    assert!(
        out.lines()
            .filter(|l| l.trim_start().starts_with("arm"))
            .count()
            >= 119
    );
}

#[test]
fn bounds_quarter_delta_gives_zero_lower_bound() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, err) = invoke(&[
        "bounds",
        "--config",
        &scenario("scenario1"),
        "--out",
        &out,
        "--set",
        "delta=0.25",
        "--set",
        "delta_split=[0.125, 0.125]",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let lb: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(lb, 0.0);
    }
}

#[test]
fn bounds_scenario_one_four_rows() {
    let (code, out, err) = invoke(&["bounds", "--config", &scenario("scenario1")]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn bounds_toy_matches_library() {
    use beam_bai::glr::{c_star_u, lower_bound, UpperConstant};
    use beam_bai::BanditInstance64;
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, err) = invoke(&[
        "bounds",
        "--config",
        &toy(dir.path(), &[2.0, 1.0], 10.0, 0.1),
        "--out",
        &out,
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    // noise_dbm round-trips through a logarithm
    let s = 10f64.powf(10.0 * 10f64.log10() / 10.0);
    let inst = BanditInstance64::new(vec![2.0, 1.0], s).unwrap();
    let lb: f64 = row[2].parse().unwrap();
    approx::assert_relative_eq!(lb, lower_bound(&inst, 0.1).unwrap(), max_relative = 1e-12);
    assert!(matches!(
        c_star_u(&[2.0, 1.0], s).unwrap(),
        UpperConstant::Vacuous { .. }
    ));
    assert_eq!(row[3], "vacuous");
}

fn read_means(dir: &Path) -> (Vec<f64>, Vec<f64>) {
    let text = fs::read_to_string(dir.join("means.csv")).unwrap();
    let mut base = Vec::new();
    let mut sup = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: f64 = f[2].parse().unwrap();
        match f[0] {
            "base" => base.push(v),
            "super" => sup.push(v),
            k => panic!("unexpected kind {k}"),
        }
    }
    (base, sup)
}

fn argsort_desc(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    idx
}

#[test]
fn inspect_scenario_one_best_base_arm() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, err) = invoke(&["inspect", "--config", &scenario("scenario1"), "--out", &out]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (base, sup) = read_means(dir.path());
    assert_eq!(base.len(), 120);
    assert_eq!(sup.len(), 40);
    assert_eq!(argsort_desc(&base)[0] + 1, 18);
}

#[test]
fn inspect_scenario_two_top_super_arms() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, err) = invoke(&[
        "inspect",
        "--config",
        &scenario("scenario2"),
        "--out",
        &out,
        "--snr",
        "74",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (_, sup) = read_means(dir.path());
    let mut top: Vec<usize> = argsort_desc(&sup)[..2].iter().map(|i| i + 1).collect();
    top.sort();
    assert_eq!(top, vec![30, 31]);
}

#[test]
fn inspect_imported_channel() {
    let dir = TempDir::new().unwrap();
    // Single plane wave toward cos θ = 0, scaled so powers stay moderate.
    let n = 16;
    let lines: Vec<String> = (0..n).map(|_| "1.0,0.0".to_string()).collect();
    fs::write(dir.path().join("h.csv"), lines.join("\n")).unwrap();
    let cfg = dir.path().join("imported.toml");
    fs::write(
        &cfg,
        r#"name = "imported"
channel_file = "h.csv"
snr_db_grid = [0.0]
delta = 0.1
trials = 1
seed = 1
algorithms = ["HT&S"]
[steering]
num_antennas = 16
codebook_size = 32
"#,
    )
    .unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, err) = invoke(&["inspect", "--config", &cfg.to_string_lossy(), "--out", &out]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (base, _) = read_means(dir.path());
    // f_k points at cos θ = -1 + 2k/K, so the broadside beam is k = K/2.
    assert_eq!(argsort_desc(&base)[0], 16);
}

#[test]
fn inspect_rejects_explicit_means() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (code, _, _) = invoke(&[
        "inspect",
        "--config",
        &toy(dir.path(), &[2.0, 1.0], 10.0, 0.1),
        "--out",
        &out,
    ]);
    assert_eq!(code, EXIT_CONFIG);
}
