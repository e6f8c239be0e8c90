use std::path::Path;

use rustfft::num_complex::Complex64;
use proptest::prelude::*;

use collapse_timing::analysis::{detect_zero_current_window, ks_distance, summarize_batch};
use collapse_timing::config::parse_config;
use collapse_timing::io::{parse_weights_csv, weights_csv};
use collapse_timing::propagator::{run_evolution, ComponentWeights, DetectorSpec};
use collapse_timing::reduction::{ReductionRule, TrialInputs, ZERO_CURRENT_RATIO};
use collapse_timing::state::{build_grid, energy_moments, gaussian_packet, superpose, Grid1D, PacketSpec};

fn grid() -> Grid1D {
    build_grid(1024, 400.0, -200.0).unwrap()
}

fn packet() -> impl Strategy<Value = PacketSpec> {
    (-60.0..60.0f64, 2.0..8.0f64, -3.0..3.0f64, 0.05..1.0f64)
        .prop_map(|(c, w, p, a)| PacketSpec::new(c, w, p).with_weight(a))
}

/// Two Gaussian bumps in J on [0, 100], with P₁ the running integral.
fn two_bump_record(scale: f64) -> ComponentWeights {
    let n = 2001;
    let dt = 0.05;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let bump = |t: f64, c: f64| (-(t - c) * (t - c) / 2.0).exp();
    let current: Vec<f64> = times.iter().map(|&t| scale * (bump(t, 20.0) + bump(t, 70.0))).collect();
    let mut p1 = vec![0.0];
    for i in 1..n {
        p1.push(p1[i - 1] + 0.5 * dt * (current[i] + current[i - 1]));
    }
    let total = p1[n - 1];
    let p1: Vec<f64> = p1.iter().map(|p| p / total * 0.99).collect();
    let p0 = p1.iter().map(|p| 1.0 - p).collect();
    ComponentWeights::new(times, p0, p1, current).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn superposition_norm_is_bilinear(a in packet(), b in packet()) {
        let g = grid();
        let (pa, pb) = (gaussian_packet(&g, &a).unwrap(), gaussian_packet(&g, &b).unwrap());
        let sum = superpose(&pa, &pb).unwrap();
        let dx = g.spacing();
        let sq = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        let cross: f64 = pa
            .amplitudes()
            .iter()
            .zip(pb.amplitudes())
            .map(|(x, y)| (x.conj() * y).re)
            .sum::<f64>()
            * dx;
        let expected = sq(pa.amplitudes()) + sq(pb.amplitudes()) + 2.0 * cross;
        prop_assert!((sum.norm_sqr() - expected).abs() < 1e-10 * expected.max(1.0));
    }

    #[test]
    fn energy_moments_ignore_overall_scale(a in packet(), factor in 1e-3..1e3f64) {
        let psi = gaussian_packet(&grid(), &a).unwrap();
        let m = energy_moments(&psi, 1.0).unwrap();
        let s = energy_moments(&psi.scaled(factor), 1.0).unwrap();
        prop_assert!((m.mean_energy - s.mean_energy).abs() <= 1e-10 * m.mean_energy.abs().max(1e-3));
        prop_assert!((m.energy_spread - s.energy_spread).abs() <= 1e-10 * m.energy_spread);
    }

    #[test]
    fn two_pulse_energy_spread_survives_gap_doubling(
        width in 3.0..6.0f64,
        momentum in 2.0..4.0f64,
        gap_in_widths in 8.0..15.0f64,
    ) {
        let g = build_grid(4096, 1600.0, -800.0).unwrap();
        let gap = gap_in_widths * width;
        let spread = |gap: f64| {
            let lead = gaussian_packet(&g, &PacketSpec::new(0.0, width, momentum).with_weight(0.5)).unwrap();
            let trail = gaussian_packet(&g, &PacketSpec::new(-gap, width, momentum).with_weight(0.5)).unwrap();
            energy_moments(&superpose(&lead, &trail).unwrap(), 1.0).unwrap().energy_spread
        };
        let (one, two) = (spread(gap), spread(2.0 * gap));
        prop_assert!((two - one).abs() / one < 0.05, "{one} vs {two}");
    }

    #[test]
    fn ks_is_invariant_under_monotone_time_maps(
        knots in prop::collection::vec(0usize..201, 1..200),
        a in 0.1..5.0f64,
        b in -10.0..10.0f64,
    ) {
        let w = two_bump_record(1.0);
        let samples: Vec<f64> = knots.iter().map(|&k| w.times[k * 10]).collect();
        let map = |t: f64| a * t + 1e-3 * t * t * t + b;
        let mapped = ComponentWeights::new(
            w.times.iter().map(|&t| map(t)).collect(),
            w.p_no_capture.clone(),
            w.p_capture.clone(),
            w.current.clone(),
        ).unwrap();
        let mapped_samples: Vec<f64> = samples.iter().map(|&t| map(t)).collect();
        let d0 = ks_distance(&samples, &w).unwrap();
        let d1 = ks_distance(&mapped_samples, &mapped).unwrap();
        prop_assert!((d0 - d1).abs() < 1e-12, "{d0} vs {d1}");
    }

    #[test]
    fn window_detection_ignores_current_scale(scale in 1e-6..1e6f64) {
        let a = detect_zero_current_window(&two_bump_record(1.0), ZERO_CURRENT_RATIO);
        let b = detect_zero_current_window(&two_bump_record(scale), ZERO_CURRENT_RATIO);
        prop_assert_eq!(a.exists, b.exists);
        prop_assert_eq!(a.window_start, b.window_start);
        prop_assert_eq!(a.window_end, b.window_end);
    }

    #[test]
    fn batch_summary_ignores_record_order(seed in 0u64..1_000_000, perm in Just((0..400).collect::<Vec<usize>>()).prop_shuffle()) {
        let w = two_bump_record(1.0);
        let window = detect_zero_current_window(&w, ZERO_CURRENT_RATIO);
        let rule = ReductionRule::current_jump();
        let inputs = TrialInputs { weights: &w, rule: &rule, moments: None, window: Some(&window) };
        let records = inputs.run_batch(seed, perm.len()).unwrap();
        let shuffled: Vec<_> = perm.iter().map(|&i| records[i].clone()).collect();
        let s0 = summarize_batch(&records, &w, &window, 50).unwrap();
        let s1 = summarize_batch(&shuffled, &w, &window, 50).unwrap();
        prop_assert_eq!(s0, s1);
    }

    #[test]
    fn trials_are_a_function_of_the_seed(seed in any::<u64>()) {
        let w = two_bump_record(1.0);
        let rule = ReductionRule::current_jump();
        let inputs = TrialInputs { weights: &w, rule: &rule, moments: None, window: None };
        prop_assert_eq!(inputs.run_trial(seed).unwrap(), inputs.run_trial(seed).unwrap());
    }

    #[test]
    fn env_rule_flags_zero_weight_whenever_onset_is_later(onset in 0.5..50.0f64, tau in 1e-9..0.4f64) {
        // P₁ is exactly zero until `onset`
        let n = 1001;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let p1: Vec<f64> = times.iter().map(|&t| if t <= onset { 0.0 } else { (1.0 - (onset - t).exp()) * 0.9 }).collect();
        let w = ComponentWeights::new(
            times.clone(),
            p1.iter().map(|p| 1.0 - p).collect(),
            p1,
            vec![0.0; n],
        ).unwrap();
        let rule = ReductionRule::penrose_env(tau);
        let inputs = TrialInputs { weights: &w, rule: &rule, moments: None, window: None };
        for r in inputs.run_batch(7, 50).unwrap() {
            prop_assert!(r.flags.zero_weight_collapse);
        }
    }

    #[test]
    fn weights_csv_round_trips_bit_exact(values in prop::collection::vec((0.0..1.0f64, -1e-3..10.0f64), 1..50)) {
        let times: Vec<f64> = (0..values.len()).map(|i| i as f64 * 0.37).collect();
        let p1: Vec<f64> = values.iter().map(|v| v.0).collect();
        let w = ComponentWeights::new(
            times,
            p1.iter().map(|p| 1.0 - p).collect(),
            p1,
            values.iter().map(|v| v.1).collect(),
        ).unwrap();
        prop_assert_eq!(parse_weights_csv(&weights_csv(&w), Path::new("w.csv")).unwrap(), w);
    }

    #[test]
    fn config_round_trips(
        n_exp in 10u32..12,
        strength in 0.0..3.0f64,
        tau in 1e-9..1.0f64,
        seed in 0u64..=i64::MAX as u64,
        trials in 1usize..100_000,
        env in any::<bool>(),
        bins in 1usize..500,
    ) {
        let text = format!(
            r#"
[grid]
n_points = {}
length = 800.0
origin = -400.0
[scenario]
kind = "single_pulse"
t_final = 30.0
dt = 0.005
[packet]
center = -50.0
width = 4.0
momentum = 3.0
[detector]
center = 0.0
half_width = 15.0
strength = {strength:?}
[rules]
penrose_env = {env}
tau_env = {tau:?}
[trials]
n_trials = {trials}
base_seed = {seed}
[output]
histogram_bins = {bins}
"#,
            1usize << n_exp
        );
        let c = parse_config(&text).unwrap();
        prop_assert_eq!(parse_config(&c.to_config_string()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn absorbing_runs_keep_the_books(
        strength in 0.1..1.5f64,
        momentum in 1.5..3.0f64,
        width in 3.0..5.0f64,
    ) {
        let g = build_grid(1024, 400.0, -200.0).unwrap();
        let psi = gaussian_packet(&g, &PacketSpec::new(-30.0, width, momentum)).unwrap();
        let det = DetectorSpec::new(0.0, 10.0, strength);
        let w = run_evolution(&psi, &det, 55.0 / momentum, 0.005, 2).unwrap().weights;
        prop_assert!(w.p_capture[0] < 1e-9);
        for (p0, p1) in w.p_no_capture.iter().zip(&w.p_capture) {
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-6);
        }
        for p in w.p_capture.windows(2) {
            prop_assert!(p[1] >= p[0] - 1e-8);
        }
        for (acc, p1) in w.integrated_current().iter().zip(&w.p_capture) {
            prop_assert!((acc - p1).abs() < 1e-5, "{acc} vs {p1}");
        }
    }
}
