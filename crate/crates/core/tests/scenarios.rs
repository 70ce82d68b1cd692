use hybrid_alloc::sim::{builtin_scenarios, compare, run, Scenario, Trace, BUILTIN, COLUMNS};
use hybrid_alloc::verify::iss_bound_check;

#[test]
fn shipped_scenarios_match_their_files() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for (name, text) in BUILTIN {
        let on_disk = std::fs::read_to_string(dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(on_disk, text);
        let s = Scenario::load(&dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(s.name, name);
    }
}

#[test]
fn hash_ignores_formatting_but_not_content() {
    let a = Scenario::from_toml(
        "name = \"x\"\nduration = 2.0\n[reference]\nkind = \"torque_schedule\"\nhold_angle = 60.0\nsegments = [[0.0, 1.0]]\n",
        None,
    )
    .unwrap();
    let b = Scenario::from_toml(
        "# comment\nduration   = 2.0\nname = \"x\"\n\n[reference]\nsegments = [[0.0, 1.0]]\nhold_angle = 60.0\nkind = \"torque_schedule\"\n",
        None,
    )
    .unwrap();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    let mut c = a.clone();
    c.plant.damping = 0.2;
    assert_ne!(a.hash().unwrap(), c.hash().unwrap());
}

#[test]
fn trace_file_round_trip_and_self_comparison() {
    let s = &builtin_scenarios().unwrap()[0];
    let out = run(s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    out.trace.write(&path).unwrap();
    let back = Trace::read(&path).unwrap();
    assert_eq!(back, out.trace);
    assert_eq!(back.meta.scenario_sha256, s.hash().unwrap());
    let cmp = compare(&back, &out.trace).unwrap();
    assert_eq!(cmp.max_abs_delta, 0.0);
    assert_eq!(cmp.rmse_deg, [out.summary.rmse_deg; 2]);
}

#[test]
fn compare_rejects_different_grids() {
    let s = &builtin_scenarios().unwrap()[0];
    let a = run(s).unwrap().trace;
    let mut b = a.clone();
    b.rows.pop();
    assert!(compare(&a, &b).is_err());
}

#[test]
fn missing_zeta_column_is_an_input_error() {
    let s = &builtin_scenarios().unwrap()[0];
    let text = run(s).unwrap().trace.to_csv_string().unwrap();
    let stripped = text.replace(",zeta1,", ",zeta_one,");
    let err = Trace::parse(&stripped).unwrap_err();
    assert!(err.to_string().contains("zeta1"), "{err}");
    assert!(COLUMNS.contains(&"zeta1"));
}

#[test]
fn state_bound_reduces_to_share_times_peak_for_frozen_weights() {
    // weights far from any bound keep alpha_s fixed at w3 / (w_i + w3)
    let s = Scenario::from_toml(
        r#"
name = "frozen"
duration = 6.0
[allocator]
w_base = [0.25, 0.25, 1.0]
saturation_aware = false
[reference]
kind = "torque_schedule"
hold_angle = 60.0
segments = [[0.0, 0.0], [0.5, 2.0]]
"#,
        None,
    )
    .unwrap();
    let trace = run(&s).unwrap().trace;
    let r = iss_bound_check(&trace).unwrap();
    assert!((r.bound[0] - 0.8 * 2.0).abs() < 1e-12, "{r:?}");
    assert!(r.pass);
    // the steady state approaches the bound from below
    assert!(r.max_abs_zeta[0] > 0.99 * r.bound[0]);
}
