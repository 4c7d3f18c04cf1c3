use gaussmark::channel::{evolve, infer_transmission, ChannelSpec, InferOptions};
use gaussmark::reconstruction::{
    bootstrap_markers, reconstruct, BootstrapOptions, CalibrationOptions, PipelineOptions, TraceSet,
};
use gaussmark::{classify_cm, simulate_all, SimConfig, StandardFormCM, TwoModeGaussian};

const C_REF: f64 = 0.866_025_403_784_438_6;

fn reference() -> StandardFormCM {
    StandardFormCM::new(1.0, 1.0, C_REF, -C_REF).unwrap()
}

fn traces(state: &StandardFormCM, cfg: &SimConfig) -> TraceSet {
    TraceSet::new(simulate_all(state, cfg).unwrap()).unwrap()
}

#[test]
fn default_detector_reconstructs_the_lossy_state() {
    let cfg = SimConfig {
        samples_per_trace: 100_000,
        seed: 101,
        ..SimConfig::default()
    };
    let truth = evolve(
        &reference().covariance(),
        &ChannelSpec::new(cfg.effective_transmission()).unwrap(),
    );
    let rec = reconstruct(&traces(&reference(), &cfg), &PipelineOptions::default()).unwrap();
    assert!(rec.physical);
    assert!(rec.gaussianity.iter().all(|g| !g.flagged));
    for i in 0..4 {
        for j in 0..4 {
            let d = (rec.cm.matrix()[(i, j)] - truth.matrix()[(i, j)]).abs();
            assert!(d < 4.0 * rec.errors[i][j] + 2e-3, "({i},{j}) off by {d}");
        }
    }
    let t = infer_transmission(&rec.cm, &InferOptions::for_measured_data()).unwrap();
    assert!((t.transmission - cfg.effective_transmission()).abs() < 0.05);
}

#[test]
fn electronic_floor_option_recovers_visibility_loss_only() {
    let cfg = SimConfig {
        samples_per_trace: 100_000,
        seed: 102,
        gain: 3.0,
        ..SimConfig::default()
    };
    let opts = PipelineOptions {
        calibration: CalibrationOptions {
            electronic_floor_raw: Some(cfg.gain * cfg.gain * cfg.noise_floor()),
        },
        ..PipelineOptions::default()
    };
    let truth = evolve(&reference().covariance(), &ChannelSpec::new(cfg.efficiency()).unwrap());
    let rec = reconstruct(&traces(&reference(), &cfg), &opts).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let d = (rec.cm.matrix()[(i, j)] - truth.matrix()[(i, j)]).abs();
            assert!(d < 4.0 * rec.errors[i][j] + 2e-3, "({i},{j}) off by {d}");
        }
    }
}

#[test]
fn bootstrap_bands_have_the_expected_size() {
    let cfg = SimConfig::ideal(100_000, 103);
    let report = bootstrap_markers(&traces(&reference(), &cfg), &BootstrapOptions::default()).unwrap();
    assert_eq!(report.failed, 0);
    let sd_phs = report.field("w_phs").unwrap().sd;
    let sd_f = report.field("fidelity").unwrap().sd;
    assert!((1e-4..=0.1).contains(&sd_phs), "{sd_phs}");
    assert!((1e-4..=0.01).contains(&sd_f), "{sd_f}");
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"cm_sd\""));
}

#[test]
fn bootstrap_tracks_transmission() {
    let cfg = SimConfig::ideal(100_000, 104);
    let state = gaussmark::channel::evolve_standard(&reference(), 0.5).unwrap();
    let opts = BootstrapOptions {
        resamples: 60,
        infer: Some(InferOptions::for_measured_data()),
        ..BootstrapOptions::default()
    };
    let report = bootstrap_markers(&traces(&state, &cfg), &opts).unwrap();
    let t = report.transmission.unwrap();
    assert!(t.count > 50);
    assert!((t.point - 0.5).abs() < 3.0 * t.sd, "{t:?}");
}

#[test]
fn markers_agree_with_truth_within_bootstrap_bands() {
    let truth_sf = StandardFormCM::new(1.3, 1.1, 0.8, -0.7).unwrap();
    assert!(truth_sf.is_physical());
    let truth = classify_cm(&truth_sf.covariance()).unwrap();
    let names = ["n", "m", "c1", "c2", "mu", "w_phs", "w_duan", "fidelity", "mutual_info"];
    let truth_of = |name: &str| match name {
        "n" => truth.n,
        "m" => truth.m,
        "c1" => truth.c1,
        "c2" => truth.c2,
        "mu" => truth.mu,
        "w_phs" => truth.w_phs,
        "w_duan" => truth.w_duan,
        "fidelity" => truth.fidelity,
        "mutual_info" => truth.mutual_info,
        _ => unreachable!(),
    };
    let trials = 100;
    let mut hits = vec![0usize; names.len()];
    for trial in 0..trials {
        let cfg = SimConfig::ideal(8_000, 1_000 + trial);
        let opts = BootstrapOptions {
            resamples: 60,
            seed: trial,
            pipeline: PipelineOptions {
                bins: 16,
                ..PipelineOptions::default()
            },
            ..BootstrapOptions::default()
        };
        let report = bootstrap_markers(&traces(&truth_sf, &cfg), &opts).unwrap();
        for (k, name) in names.iter().enumerate() {
            let f = report.field(name).unwrap();
            if (f.point - truth_of(name)).abs() <= 3.0 * f.sd {
                hits[k] += 1;
            }
        }
    }
    for (name, h) in names.iter().zip(&hits) {
        assert!(*h as f64 >= 0.95 * trials as f64, "{name}: {h}/{trials}");
    }
}
