use std::path::Path;
use std::process::{Command, Output};

fn rydeff(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydeff"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn dephasing_config(methods: &str, gamma: f64, out: &str) -> String {
    format!(
        r#"{{
        "methods": [{methods}],
        "lattice": {{"n_sites": 3, "exponent_p": 6, "nn_strength": 10.0, "boundary": "periodic"}},
        "dephasing": {{"rabi_omega": 1.0, "detuning": 0.0, "dephasing_gamma": {gamma}}},
        "time": {{"t_end": 4.0, "samples": 21}},
        "observables": ["mean_density", "fluctuations", "g2_1"],
        "output_dir": "{out}"
    }}"#
    )
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydeff(&["presets", "list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for p in [
        "fig2_delta0.json",
        "fig3_scan.json",
        "fig4.json",
        "fig5.json",
    ] {
        assert!(text.contains(p), "{text}");
    }
    let shown = rydeff(&["presets", "show", "fig4"], dir.path());
    assert!(String::from_utf8(shown.stdout)
        .unwrap()
        .contains("\"omega_p\": [0.1, 1.0, 10.0]"));
}

#[test]
fn run_writes_csv_and_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.json",
        &dephasing_config(r#""rate2", "full-integrate""#, 10.0, "out"),
    );
    let out = rydeff(&["run", &cfg], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/rate2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,mean_density,fluctuations,g2_1");
    assert_eq!(lines.clone().count(), 21);
    let first_value = lines.nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = first_value
        .split('e')
        .next()
        .unwrap()
        .trim_start_matches('-')
        .replace('.', "");
    assert_eq!(mantissa.len(), 17, "{first_value}");
    assert!(dir.path().join("out/full-integrate.csv").exists());

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(manifest["code_version"]
        .as_str()
        .unwrap()
        .starts_with("rydeff "));
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    let mut resolved = manifest["config"].clone();
    assert_eq!(resolved["trajectories"], 2000);
    resolved["output_dir"] = "again".into();
    let cfg2 = write(dir.path(), "b.json", &resolved.to_string());
    assert!(rydeff(&["run", &cfg2], dir.path()).status.success());
    for f in ["rate2.csv", "full-integrate.csv"] {
        let a = std::fs::read(dir.path().join("out").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("again").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown =
        dephasing_config(r#""rate2""#, 10.0, "out").replacen('{', r#"{"colour": "blue","#, 1);
    let cfg = write(dir.path(), "u.json", &unknown);
    let out = rydeff(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let cfg = write(
        dir.path(),
        "e.json",
        &dephasing_config(r#""eit-reduced""#, 10.0, "out"),
    );
    let out = rydeff(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eit"));

    assert_eq!(
        rydeff(&["run", "missing.json"], dir.path()).status.code(),
        Some(2)
    );

    let cfg = write(
        dir.path(),
        "ok.json",
        &dephasing_config(r#""rate2""#, 10.0, "out"),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_rydeff"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("RYDEFF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = dephasing_config(r#""full-integrate""#, 10.0, "out").replacen(
        '{',
        r#"{"tolerances": {"rel_tol": 1e-300, "abs_tol": 1e-300},"#,
        1,
    );
    let cfg = write(dir.path(), "s.json", &text);
    let out = rydeff(&["run", &cfg], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("full-integrate"));
}

fn max_deviation(report: &[u8], column: &str) -> f64 {
    let text = String::from_utf8_lossy(report);
    let line = text
        .lines()
        .find(|l| l.starts_with(column))
        .unwrap_or_else(|| panic!("no {column} in {text}"));
    line.split(',').nth(1).unwrap().parse().unwrap()
}

#[test]
fn compare_reports_deviations() {
    let dir = tempfile::tempdir().unwrap();
    let mut devs = Vec::new();
    for gamma in [10.0, 20.0] {
        let out_dir = format!("g{gamma}");
        let cfg = write(
            dir.path(),
            &format!("{out_dir}.json"),
            &dephasing_config(r#""rate2", "rate4""#, gamma, &out_dir),
        );
        assert!(rydeff(&["run", &cfg], dir.path()).status.success());
        let a = format!("{out_dir}/rate2.csv");
        let same = rydeff(&["compare", &a, &a], dir.path());
        assert!(same.status.success());
        assert_eq!(max_deviation(&same.stdout, "mean_density"), 0.0);
        let report = rydeff(
            &["compare", &a, &format!("{out_dir}/rate4.csv")],
            dir.path(),
        );
        assert!(report.status.success());
        devs.push(max_deviation(&report.stdout, "mean_density"));
    }
    assert!(devs[1] < devs[0], "{devs:?}");

    let other = write(dir.path(), "other.csv", "x,mean_density\n0,1\n");
    let out = rydeff(&["compare", "g10/rate2.csv", &other], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweeps_and_scans_name_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "methods": ["positivity-scan", "steady-state"],
        "lattice": {"n_sites": 2, "exponent_p": 6, "nn_strength": 5.0, "boundary": "periodic"},
        "dephasing": {"rabi_omega": 1.0, "dephasing_gamma": 10.0},
        "scan": {"v_min": 0.0, "v_max": 10.0, "delta_min": -5.0, "delta_max": 5.0, "n_v": 3, "n_delta": 4},
        "observables": ["mean_density"],
        "sweep": {"detuning": [-1.0, 1.0]},
        "output_dir": "out"
    }"#;
    let cfg = write(dir.path(), "scan.json", text);
    let out = rydeff(&["run", "--sequential", &cfg], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let scan =
        std::fs::read_to_string(dir.path().join("out/positivity-scan_detuning=-1.csv")).unwrap();
    assert_eq!(
        scan.lines().next().unwrap(),
        "v,delta,all_rates_nonnegative,min_rate"
    );
    assert_eq!(scan.lines().count(), 13);
    let ss = std::fs::read_to_string(dir.path().join("out/steady-state_detuning=1.csv")).unwrap();
    let value: f64 = ss.lines().nth(1).unwrap().parse().unwrap();
    assert!((value - 0.5).abs() < 1e-8, "{value}");
}

#[test]
fn eit_methods_and_stationary_table_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "methods": ["eit-full", "eit-reduced", "eit-exclusion", "eit-nonpert", "compare"],
        "lattice": {"n_sites": 2, "exponent_p": 6, "nn_strength": 100.0, "boundary": "periodic"},
        "eit": {"omega_p": 1.0, "omega_c": 1.0, "decay_gamma": 100.0},
        "time": {"t_end": 5.0, "samples": 6},
        "observables": ["mean_density", "sigma_x"],
        "output_dir": "out"
    }"#;
    let cfg = write(dir.path(), "eit.json", text);
    let out = rydeff(&["run", &cfg], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = rydeff(
        &["compare", "out/eit-full.csv", "out/eit-reduced.csv"],
        dir.path(),
    );
    assert!(max_deviation(&report.stdout, "mean_density") < 0.02);
    let table = std::fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    assert_eq!(
        table.lines().next().unwrap(),
        "n_sites,nn_strength,decay_gamma,omega_p,trace_distance"
    );
}
