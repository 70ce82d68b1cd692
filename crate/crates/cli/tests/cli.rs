use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybrid-alloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SHORT: &str = r#"
name = "short"
duration = 2.0
[reference]
kind = "torque_schedule"
hold_angle = 45.0
segments = [[0.0, 0.0], [0.5, 3.0]]
"#;

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.toml"), SHORT).unwrap();
    let o = cli(&["run", "short.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("fes_violations   0"));
    let trace = std::fs::read_to_string(dir.path().join("short.csv")).unwrap();
    assert!(trace.starts_with("# scenario: short\n# scenario_sha256: "));
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 2002);
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.toml"), SHORT).unwrap();
    assert!(cli(&["run", "short.toml", "-o", "a.csv"], dir.path()).status.success());
    assert!(cli(&["run", "short.toml", "-o", "b.csv"], dir.path()).status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), SHORT.replace("duration = 2.0", "dt = 0.5")).unwrap();
    let o = cli(&["run", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(cli(&["run", "missing.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(cli(&["run", "builtin:nope"], dir.path()).status.code(), Some(1));
}

#[test]
fn compare_identical_and_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.toml"), SHORT).unwrap();
    std::fs::write(dir.path().join("longer.toml"), SHORT.replace("2.0", "3.0")).unwrap();
    cli(&["run", "short.toml", "-o", "a.csv"], dir.path());
    cli(&["run", "short.toml", "-o", "b.csv"], dir.path());
    cli(&["run", "longer.toml", "-o", "c.csv"], dir.path());
    let o = cli(&["compare", "a.csv", "b.csv"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("max_abs_delta   0.0000e0"), "{}", stdout(&o));
    assert_eq!(cli(&["compare", "a.csv", "c.csv"], dir.path()).status.code(), Some(1));
}

#[test]
fn synth_then_identify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["synth-grid", "-o", "grid.csv", "--muscle", "extensor"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cli(
        &["identify", "grid.csv", "-o", "ext.toml", "--bandwidth-hint", "4"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("bandwidth 3.97"), "{}", stdout(&o));
    let model = std::fs::read_to_string(dir.path().join("ext.toml")).unwrap();
    assert!(model.contains("format = \"fes-model/1\""));

    // the fitted model drives a scenario
    std::fs::write(
        dir.path().join("fitted.toml"),
        format!("{SHORT}\n[fes]\nextensor = \"ext.toml\"\n"),
    )
    .unwrap();
    assert!(cli(&["run", "fitted.toml"], dir.path()).status.success());
}

#[test]
fn identify_requires_muscle_choice_for_mixed_files() {
    let dir = tempfile::tempdir().unwrap();
    cli(&["synth-grid", "-o", "grid.csv"], dir.path());
    assert_eq!(
        cli(&["identify", "grid.csv", "-o", "m.toml"], dir.path()).status.code(),
        Some(1)
    );
    let o = cli(
        &[
            "identify",
            "grid.csv",
            "-o",
            "m.toml",
            "--muscle",
            "flexor",
            "--bandwidth-hint",
            "1",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_prints_one_line_per_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["verify", "--suite", "lyapunov"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let fields: Vec<_> = text.split_whitespace().collect();
    assert_eq!(fields[..2], ["lyapunov", "pass"]);
    assert_eq!(fields.len(), 3);

    let o = cli(&["verify", "--suite", "nullspace"], dir.path());
    assert_eq!(stdout(&o).trim(), "nullspace pass 0.000000e0");
}

#[test]
fn verify_state_bound_on_given_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.toml"), SHORT).unwrap();
    let o = cli(&["verify", "--suite", "iss", "--scenario", "short.toml"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("iss/short pass"));
    assert_eq!(cli(&["verify", "--suite", "bogus"], dir.path()).status.code(), Some(1));
}

#[test]
fn numeric_blowup_exits_with_two_and_names_the_tick() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("blowup.toml"),
        "name = \"blowup\"\nduration = 1.0\n[reference]\nkind = \"trajectory\"\n[plant]\ninertia = 1e-300\njoint_limits = [-1e308, 1e308]\n",
    )
    .unwrap();
    let o = cli(&["run", "blowup.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tick 0"));
}

#[test]
fn shipped_scenarios_run_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["run", "builtin:fig3b", "-o", "fig3b.csv"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("fes_violations   0"));
}
