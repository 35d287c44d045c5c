mod common;

use tl_slicing::env::{EnvConfig, SlicingEnv};
use tl_slicing::seeding;
use tl_slicing::traffic::{SizeModel, TrafficModel, TrafficSpec, VrSyntheticParams};

#[test]
fn table_means_within_two_percent() {
    match common::traffic_fidelity(1_000_000, 17) {
        Ok(_) => {}
        Err(lines) => panic!("{lines:#?}"),
    }
}

#[test]
fn vr_frame_sizes_stay_in_range() {
    let m = TrafficModel::from_spec(&TrafficSpec::VrSynthetic(VrSyntheticParams::default()), std::path::Path::new("."))
        .unwrap();
    let tl_slicing::traffic::ArrivalSource::Generated { size, .. } = &m.source else {
        panic!("synthetic VR is generated")
    };
    assert!(matches!(size, SizeModel::TruncatedNormal { .. }));
    let mut rng = seeding::rng(3, 3);
    let n = 200_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let s = size.sample(&mut rng);
        assert!((500..=8000).contains(&s));
        sum += s as f64;
    }
    let mean = sum / n as f64;
    assert!((mean - size.mean()).abs() / size.mean() < 0.01, "{mean} vs {}", size.mean());
}

#[test]
fn offered_load_matches_analytic_mean() {
    // measured arrivals per slot against the model's analytic mean
    let cfg = EnvConfig::table_defaults();
    let analytic = cfg.mean_offered_bytes_per_slot();
    let mut env = SlicingEnv::new(cfg.clone()).unwrap();
    env.reset(5);
    let windows = 4000;
    for _ in 0..windows {
        env.step(0).unwrap();
    }
    let slots = (windows + 1) * cfg.window_len_slots;
    let measured = env.totals().arrived as f64 / slots as f64;
    let rel = (measured - analytic).abs() / analytic;
    assert!(rel < 0.03, "measured {measured:.1} B/slot vs analytic {analytic:.1}");
    let load = analytic / cfg.total_capacity as f64;
    assert!(load > 0.05 && load < 0.2, "default load {load:.3}");
}
