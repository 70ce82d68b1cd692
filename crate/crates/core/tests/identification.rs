use hybrid_alloc::fes::io::{model_from_str, model_to_string, parse_training_csv, write_training_csv};
use hybrid_alloc::fes::{identify, synthesize_training_grid, FesModel, GridProtocol, IdentifyOptions};

fn static_rmse(truth: &FesModel, fitted: &FesModel) -> f64 {
    let mut sq = 0.0;
    let mut n = 0.0;
    for i in 0..=20 {
        let u = truth.upsilon_min() + (truth.upsilon_max() - truth.upsilon_min()) * i as f64 / 20.0;
        for theta in [15.0, 30.0, 45.0, 60.0, 75.0, 90.0] {
            let d = truth.recruitment_at(u, theta) * truth.peak_torque(theta)
                - fitted.recruitment_at(u, theta) * fitted.peak_torque(theta);
            sq += d * d;
            n += 1.0;
        }
    }
    (sq / n).sqrt()
}

#[test]
fn noisy_grid_still_identifies_dynamics() {
    for (truth, seed) in [(FesModel::synthetic_flexor(), 3), (FesModel::synthetic_extensor(), 4)] {
        let protocol = GridProtocol {
            noise_std: 0.05,
            seed,
            ..Default::default()
        };
        let grid = synthesize_training_grid(&truth, &protocol).unwrap();
        let id = identify(&grid, truth.bandwidth(), &IdentifyOptions::default()).unwrap();
        let bw = id.model.bandwidth();
        assert!((bw / truth.bandwidth() - 1.0).abs() <= 0.1, "{}: {bw}", truth.name);
        assert!((id.model.delay_td - truth.delay_td).abs() <= id.sample_period + 1e-12);
        let scale = truth.contraction.torques().iter().copied().fold(0.0, f64::max);
        assert!(static_rmse(&truth, &id.model) <= 0.02 * scale, "{}", truth.name);
    }
}

#[test]
fn training_csv_and_model_file_round_trip() {
    let truth = FesModel::synthetic_extensor();
    let protocol = GridProtocol {
        angles: vec![30.0, 60.0, 90.0],
        ..Default::default()
    };
    let grid = synthesize_training_grid(&truth, &protocol).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    write_training_csv(&path, std::slice::from_ref(&grid)).unwrap();
    let parsed = parse_training_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(parsed.len(), 1);
    assert_eq!(parsed[0].records.len(), grid.records.len());

    let id = identify(&parsed[0], 4.0, &IdentifyOptions::default()).unwrap();
    let text = model_to_string(&id.model).unwrap();
    let back = model_from_str(&text).unwrap();
    assert_eq!(back.recruitment.values(), id.model.recruitment.values());
    assert_eq!(back.activation, id.model.activation);
    assert_eq!(back.delay_td, id.model.delay_td);
}

#[test]
fn missing_column_is_named() {
    let csv = "muscle,upsilon_mA,theta_deg,t_s\nflexor,10,30,0.0\n";
    let err = parse_training_csv(csv.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("torque_Nm"), "{err}");
}
