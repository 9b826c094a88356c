//! Smaller experiments whose outcome is a qualitative shape rather than a
//! closed form.

use std::f64::consts::PI;

use speclab_core::dynamics::EnergyPoint;
use speclab_core::embedded::{embedded_eigenvalue_experiment, EmbeddedConfig};
use speclab_core::oscillatory::{normalization_constant, weighted_cos4_sum};
use speclab_core::potentials::Potential;
use speclab_core::scan::{local_dimension_diagnostic, log_grid};

#[test]
fn resonant_slope_is_linear_in_amplitude() {
    let slope = |c: f64| {
        let cfg = EmbeddedConfig {
            amplitude: c,
            ..EmbeddedConfig::default()
        };
        embedded_eigenvalue_experiment(&cfg).unwrap().resonant_min_slope
    };
    let s: Vec<f64> = [2.0, 4.0, 8.0].into_iter().map(slope).collect();
    for w in s.windows(2) {
        assert!(w[0] < 0.0 && w[1] < 0.0, "{s:?}");
        let ratio = w[1] / w[0];
        assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "ratio {ratio}, slopes {s:?}");
    }
}

#[test]
fn zero_amplitude_gives_flat_slopes() {
    let cfg = EmbeddedConfig {
        amplitude: 0.0,
        ..EmbeddedConfig::default()
    };
    let r = embedded_eigenvalue_experiment(&cfg).unwrap();
    for s in &r.sweep {
        for v in [s.resonant, s.below, s.above] {
            assert!(v.abs() < 0.01, "{s:?}");
        }
    }
}

#[test]
fn weak_coupling_keeps_dimension_one() {
    let p = Potential::power_decay(0.1, 1.0).unwrap();
    let fit = local_dimension_diagnostic(&p, 10_000, 0.3, &log_grid(1e-1, 1e-3, 5)).unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.05, "slope {}", fit.slope);
}

#[test]
fn normalization_grows_like_half_log() {
    let p = Potential::zero();
    let ep = EnergyPoint::from_k(0.3).unwrap();
    let small = normalization_constant(&p, &ep, 1_000).unwrap();
    let large = normalization_constant(&p, &ep, 1_000_000).unwrap();
    let c_emp = (large - 0.5 * 1e6_f64.ln())
        .abs()
        .max((small - 0.5 * 1e3_f64.ln()).abs());
    assert!(c_emp < 1.0, "offset {c_emp}");
    assert!(
        (large - small - 0.5 * 1e3_f64.ln()).abs() <= c_emp,
        "difference {}",
        large - small
    );
}

#[test]
fn free_cos4_sum_matches_direct_summation() {
    let k = 0.3;
    let length = 100_000;
    let d = weighted_cos4_sum(&Potential::zero(), &EnergyPoint::from_k(k).unwrap(), length).unwrap();
    let direct: f64 = (1..=length)
        .map(|n| (4.0 * PI * (n + 1) as f64 * k).cos() / n as f64)
        .sum();
    assert!((d.value - direct).abs() < 1e-8, "{} vs {direct}", d.value);
}
