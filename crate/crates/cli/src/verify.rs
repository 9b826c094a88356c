//! Invariant battery. `free` checks the closed forms of the zero potential;
//! `all` adds every module invariant at desk-scale sizes.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde_json::{json, Value};
use speclab_core::dynamics::{
    angle_increment_audit, prufer_from_vector, prufer_trace, transfer_product, EnergyPoint, PrueferWalk,
};
use speclab_core::embedded::{embedded_eigenvalue_experiment, EmbeddedConfig};
use speclab_core::fit::least_squares;
use speclab_core::oscillatory::{
    cross_sin_sum, harmonic_control, normalization_constant, orthogonality_campaign, weighted_cos4_sum,
    weighted_inner_product, WeightedSequence,
};
use speclab_core::potentials::{verify_bound, Potential};
use speclab_core::scan::{count_bound_experiment, local_dimension_diagnostic, log_grid, ScanConfig};
use speclab_core::spectral::{
    calibrate_comparison_constant, complex_quasimomentum, free_interval_mass, measure_of_interval, oracle_eigenpairs,
    oracle_spectral_measure, spectral_density_truncated, two_measure_comparison, weyl_m_at, ComparisonParams,
    QuadratureOptions,
};

use crate::manifest::Audits;
use crate::{CliError, Run};

type Check = Result<(), CliError>;

fn free_suite(a: &mut Audits) -> Check {
    let zero = Potential::zero();

    let mut worst = 0.0f64;
    for j in 0..8 {
        let ep = EnergyPoint::from_k(0.1 + 0.05 * j as f64)?;
        for len in [1, 10, 100] {
            let rho = spectral_density_truncated(&zero, len, &ep)?.density;
            worst = worst.max((rho - ep.sin_pk() / PI).abs());
        }
    }
    a.check(
        "free_density",
        worst < 1e-12,
        format!("max |rho - sin(pi k)/pi| = {worst:.2e}"),
    );

    let ep = EnergyPoint::from_k(0.3)?;
    let trace = prufer_trace(&zero, &ep, 100_000)?;
    let dtheta = trace
        .iter()
        .map(|s| (s.theta() - (s.n as f64 + 1.0) * 0.3).abs())
        .fold(0.0, f64::max);
    let dlog = trace
        .iter()
        .map(|s| (s.log_r - trace[0].log_r).abs())
        .fold(0.0, f64::max);
    a.check(
        "free_pruefer_closed_form",
        dtheta < 1e-10 && dlog < 1e-10,
        format!("|theta - (n+1)k| <= {dtheta:.2e}, |d logR| <= {dlog:.2e} over 1e5 steps"),
    );

    let mut worst = 0.0f64;
    for re in [-1.5, -0.3, 0.0, 0.7, 1.9] {
        for im in [1e-3, 0.1, 1.0] {
            let z = Complex64::new(re, im);
            let ce = complex_quasimomentum(z)?;
            let m = weyl_m_at(&zero, 50, z)?;
            worst = worst.max((m + ce.zeta().inv()).norm());
        }
    }
    a.check(
        "free_weyl_function",
        worst < 1e-12,
        format!("max |m + 1/zeta| = {worst:.2e}"),
    );

    let mut worst = 0.0f64;
    for (lo, hi) in [(-1.9, -1.0), (-0.5, 0.5), (0.2, 1.95)] {
        worst = worst.max((measure_of_interval(&zero, 10, lo, hi)?.mass - free_interval_mass(lo, hi)).abs());
    }
    a.check(
        "free_interval_mass",
        worst < 1e-8,
        format!("max |quadrature - closed form| = {worst:.2e}"),
    );

    let oracle = oracle_spectral_measure(&zero, 1000, -1.0, 1.0)?.mass;
    let exact = free_interval_mass(-1.0, 1.0);
    a.check(
        "free_oracle_mass",
        (oracle - exact).abs() < 1e-3,
        format!("oracle {oracle:.6} vs closed form {exact:.6}"),
    );

    let params = ComparisonParams {
        length: 100,
        reference_length: 100,
        eps: 0.1,
        order: 2.0,
        sigma: 0.5,
        constant: 0.0,
    };
    let mut min_deficit = f64::INFINITY;
    for e in [-1.5, -0.4, 0.3, 1.2] {
        min_deficit =
            min_deficit.min(two_measure_comparison(&zero, e, &params, &QuadratureOptions::default())?.deficit);
    }
    a.check(
        "free_comparison_deficit",
        min_deficit > 0.0,
        format!("min deficit {min_deficit:.3e}"),
    );

    let cos4 = weighted_cos4_sum(&zero, &ep, 100_000)?.drift_slope;
    a.check("free_cos4_drift", cos4.abs() < 0.05, format!("drift slope {cos4:.4}"));

    let dim = local_dimension_diagnostic(&zero, 10_000, 0.3, &log_grid(1e-1, 1e-3, 5))?.slope;
    a.check("free_dimension", (dim - 1.0).abs() <= 0.02, format!("slope {dim:.4}"));

    let r = embedded_eigenvalue_experiment(&EmbeddedConfig {
        amplitude: 0.0,
        length: 10_000,
        sweep: 2,
        ..EmbeddedConfig::default()
    })?;
    let worst = r
        .sweep
        .iter()
        .map(|s| s.resonant.abs().max(s.below.abs()).max(s.above.abs()))
        .fold(0.0, f64::max);
    a.check("free_embedded_flat", worst < 0.01, format!("max |slope| = {worst:.2e}"));

    let mut worst = 0.0f64;
    for i in 0..=38 {
        for j in 0..=12 {
            let z = Complex64::new(-1.9 + 0.1 * i as f64, 10f64.powf(-6.0 + 0.5 * j as f64));
            worst = worst.max(complex_quasimomentum(z)?.round_trip_error());
        }
    }
    a.check(
        "quasimomentum_round_trip",
        worst < 1e-10,
        format!("max relative error {worst:.2e}"),
    );
    Ok(())
}

fn potentials_suite(a: &mut Audits, seed: u64) -> Check {
    let families = [
        Potential::zero(),
        Potential::power_decay(1.0, 1.0)?,
        Potential::wigner_von_neumann(1.0, 0.3, 0.0)?,
        Potential::seeded_random_decay(0.4, seed)?,
    ];
    let failures: Vec<&str> = families
        .iter()
        .filter(|p| {
            !p.declared_bound()
                .is_some_and(|b| verify_bound(p, b, 1_000_000).is_ok_and(|c| c.holds))
        })
        .map(|p| p.family().name())
        .collect();
    a.check(
        "declared_bounds",
        failures.is_empty(),
        format!("up to n = 1e6; failing: {failures:?}"),
    );

    let mut identical = true;
    for p in &families {
        let once = p.cutoff(500)?;
        let twice = once.cutoff(500)?;
        identical &= (0..=1000).all(|n| once.eval(n).to_bits() == twice.eval(n).to_bits());
    }
    a.check("cutoff_idempotent", identical, "on 0..=2L with L = 500");

    let x = Potential::seeded_random_decay(1.0, seed)?.sites(10_000);
    let y = Potential::seeded_random_decay(1.0, seed)?.sites(10_000);
    let same = x.iter().zip(&y).all(|(u, v)| u.to_bits() == v.to_bits());
    a.check("seeded_reproducible", same, format!("seed {seed}, 1e4 sites"));
    Ok(())
}

fn dynamics_suite(a: &mut Audits, seed: u64) -> Check {
    let ep = EnergyPoint::from_k(0.3)?;
    let mut worst = 0.0f64;
    for p in [
        Potential::power_decay(1.0, 1.0)?,
        Potential::seeded_random_decay(2.0, seed)?,
    ] {
        worst = worst.max(transfer_product(&p, &ep, 1_000_000)?.det_residual());
    }
    a.check(
        "transfer_determinant",
        worst < 1e-9,
        format!("max relative |det - 1| = {worst:.2e} at L = 1e6"),
    );

    let mut worst = 0.0f64;
    for p in [
        Potential::power_decay(1.0, 1.0)?,
        Potential::wigner_von_neumann(3.0, 0.2, 1.0)?,
    ] {
        let trace = prufer_trace(&p, &ep, 10_000)?;
        let sites = p.sites(10_000);
        let (mut prev, mut cur, mut scale) = (0.0f64, 1.0f64, 0.0f64);
        for (n, s) in trace.iter().enumerate().take(10_001) {
            let (r, theta) = prufer_from_vector(prev, cur, &ep)?;
            let d = theta - s.theta.frac();
            worst = worst.max((r.ln() + scale - s.log_r).abs()).max((d - d.round()).abs());
            if n < sites.len() {
                let next = (ep.energy() - sites[n]) * cur - prev;
                prev = cur;
                cur = next;
                let size = prev.abs().max(cur.abs());
                if size > 1e100 {
                    prev /= size;
                    cur /= size;
                    scale += size.ln();
                }
            }
        }
    }
    a.check(
        "representation_equivalence",
        worst < 1e-8,
        format!("max deviation {worst:.2e}"),
    );

    let ep = EnergyPoint::from_k(0.25)?;
    let mut violations = 0;
    for s in 0..3 {
        let p = Potential::seeded_random_decay(0.4, seed.wrapping_add(s))?;
        violations += angle_increment_audit(&p, &ep, 100_000, 1e-12)?.violations;
    }
    a.check(
        "angle_increment_bound",
        violations == 0,
        format!("{violations} violations in 3e5 steps"),
    );

    let mut worst = 0.0f64;
    for (u, v) in [(0.3, -1.2), (2.0, 0.5), (-1e-3, 4.0)] {
        let (r, t) = prufer_from_vector(u, v, &ep)?;
        for lambda in [1e-3, 0.5, 7.0, 1e4] {
            let (rs, ts) = prufer_from_vector(lambda * u, lambda * v, &ep)?;
            let d = ts - t;
            worst = worst.max((rs / (lambda * r) - 1.0).abs()).max((d - d.round()).abs());
        }
    }
    a.check("polar_homogeneity", worst < 1e-12, format!("max deviation {worst:.2e}"));
    Ok(())
}

fn spectral_suite(a: &mut Audits) -> Check {
    let p = Potential::power_decay(1.0, 1.0)?;

    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let k = 0.02 + 0.96 * ((i as f64 * 0.618_033_988_749_895) % 1.0);
        let len = 1 + (i * 7919) % 10_000;
        let ep = EnergyPoint::from_k(k)?;
        let rho = spectral_density_truncated(&p, len, &ep)?.density;
        let r2 = PrueferWalk::new(&p, ep).advance_to(len)?.r_squared();
        worst = worst.max((PI * rho * ep.sin_pk() * r2 - 1.0).abs());
    }
    a.check(
        "dual_route_identity",
        worst < 1e-9,
        format!("max |pi rho sin(pi k) R^2 - 1| = {worst:.2e}"),
    );

    let mut min_im = f64::INFINITY;
    for eps in [1e-1, 1e-2, 1e-3] {
        for i in 0..334 {
            let e = -1.9 + 3.8 * (i as f64 + 0.5) / 334.0;
            min_im = min_im.min(weyl_m_at(&p, 100, Complex64::new(e, eps))?.im);
        }
    }
    a.check(
        "herglotz",
        min_im > 0.0,
        format!("min Im m = {min_im:.3e} over 1002 points"),
    );

    let ep = EnergyPoint::from_energy(0.3)?;
    let rho = spectral_density_truncated(&p, 100, &ep)?.density;
    let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&eps| weyl_m_at(&p, 100, Complex64::new(0.3, eps)).map(|m| (m.im / PI - rho).abs()))
        .collect::<Result<_, _>>()?;
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    a.check(
        "boundary_value_order",
        ratios.iter().all(|r| (5.0..20.0).contains(r)),
        format!("errors {:.2e}, {:.2e}, {:.2e}", errs[0], errs[1], errs[2]),
    );

    let quad = measure_of_interval(&p, 100, -1.0, 1.0)?.mass;
    let oracle = oracle_spectral_measure(&p.cutoff(100)?, 1000, -1.0, 1.0)?.mass;
    a.check(
        "oracle_equivalence",
        (quad - oracle).abs() < 1e-3,
        format!("quadrature {quad:.6} oracle {oracle:.6}"),
    );

    let whole = measure_of_interval(&p, 100, -1.99, 1.99)?.mass;
    let positive = (0..200).all(|i| {
        EnergyPoint::from_energy(-1.99 + 3.98 * i as f64 / 199.0)
            .and_then(|ep| spectral_density_truncated(&p, 100, &ep))
            .is_ok_and(|s| s.density > 0.0)
    });
    a.check(
        "positivity_integrability",
        positive && whole <= 1.0,
        format!("mass of (-1.99, 1.99) = {whole:.6}"),
    );

    let energies: Vec<f64> = (0..10).map(|i| -1.5 + 3.0 * i as f64 / 9.0).collect();
    let params = ComparisonParams {
        length: 100,
        reference_length: 10_000,
        eps: 0.1,
        order: 2.0,
        sigma: 0.5,
        constant: calibrate_comparison_constant(&energies, 0.1, 2.0),
    };
    let mut violations = 0;
    for &e in &energies {
        violations += two_measure_comparison(&p, e, &params, &QuadratureOptions::contour())?.violation as usize;
    }
    a.check(
        "two_measure_comparison",
        violations == 0,
        format!("{violations} violations on 10 energies"),
    );
    Ok(())
}

fn oscillatory_suite(a: &mut Audits, seed: u64) -> Check {
    let cases = [
        (Potential::power_decay(2.0, 1.0)?, 0.2),
        (Potential::wigner_von_neumann(2.0, 0.25, 0.0)?, 0.35),
        (Potential::seeded_random_decay(2.0, seed)?, 0.15),
    ];
    let mut worst = 0.0f64;
    for (p, k) in &cases {
        worst = worst.max(
            weighted_cos4_sum(p, &EnergyPoint::from_k(*k)?, 100_000)?
                .drift_slope
                .abs(),
        );
    }
    a.check(
        "cos4_drift",
        worst < 0.05,
        format!("max |drift| = {worst:.4} at L = 1e5"),
    );

    let control = harmonic_control(100_000)?.drift_slope;
    a.check(
        "harmonic_control",
        (control - 1.0).abs() <= 0.01,
        format!("slope {control:.4}"),
    );

    let s = cross_sin_sum(&Potential::power_decay(1.0, 1.0)?, 0.2, 0.21, 100_000)?;
    a.check(
        "cross_sum_split",
        s.split_residual() < 1e-10,
        format!("residual {:.2e}", s.split_residual()),
    );

    let mut ok = true;
    for p in [
        Potential::power_decay(1.0, 1.0)?,
        Potential::wigner_von_neumann(2.0, 0.3, 0.5)?,
    ] {
        let b = p.declared_bound().unwrap_or(f64::INFINITY);
        for len in [10u64, 1000, 100_000] {
            let v = WeightedSequence::from_potential(&p, len);
            ok &= weighted_inner_product(&v, &v)? <= b * b * ((len as f64).ln() + 1.0);
        }
    }
    a.check("weighted_norm_bound", ok, "<V,V> <= B^2 (ln L + 1) at L = 10, 1e3, 1e5");

    let p = Potential::power_decay(1.0, 1.0)?;
    let ep = EnergyPoint::from_k(0.3)?;
    let lengths: Vec<u64> = (0..8).map(|j| 1000u64 << j).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &len in &lengths {
        x.push((len as f64).ln());
        y.push(normalization_constant(&p, &ep, len)? - 0.5 * (len as f64).ln());
    }
    let slope = least_squares(&x, &y).map_or(f64::NAN, |f| f.slope);
    a.check(
        "normalization_no_log_growth",
        slope.abs() < 0.05,
        format!("slope of A - ln(L)/2 against ln L = {slope:.4}"),
    );

    let r = orthogonality_campaign(1000, 64, 8, seed)?;
    a.check(
        "almost_orthogonality",
        r.violations == 0,
        format!("{} violations in {} trials", r.violations, r.trials),
    );
    Ok(())
}

fn scan_suite(a: &mut Audits) -> Check {
    let p = Potential::power_decay(1.0, 1.0)?;
    let cfg = ScanConfig::default();
    let report = count_bound_experiment(&p, &cfg, &[1, 2])?;
    a.check(
        "separation_soundness",
        report.completed().all(|s| s.separation_sound),
        "scales 1, 2",
    );
    let over = report
        .completed()
        .filter(|s| s.set.length >= 1000 && s.count_exceeds_bound)
        .count();
    a.check("count_bound", over == 0, format!("max count {}", report.max_count()));
    let linkage: usize = report.completed().map(|s| s.linkage_failures).sum();
    a.check("amplitude_sum_linkage", linkage == 0, format!("{linkage} failures"));

    let mut table = vec![0.0; 401];
    table[1] = -5.0;
    let atom = Potential::sampled_table(table)?;
    let eig = oracle_eigenpairs(&atom, 400, -10.0, -2.05)?;
    let e0 = eig.first().map(|e| e.value).unwrap_or(f64::NAN);
    let slope = local_dimension_diagnostic(&atom, 400, e0, &log_grid(1e-1, 1e-2, 4))?.slope;
    a.check(
        "point_mass_dimension",
        slope.abs() < 0.05,
        format!("slope {slope:.4} at E = {e0:.6}"),
    );

    let r = embedded_eigenvalue_experiment(&EmbeddedConfig {
        length: 10_000,
        ..EmbeddedConfig::default()
    })?;
    a.check(
        "embedded_resonance",
        r.resonant_min_slope < -0.5 && r.max_off_resonant < 0.05,
        format!(
            "resonant {:.4}, max |off| {:.2e}",
            r.resonant_min_slope, r.max_off_resonant
        ),
    );
    Ok(())
}

pub fn verify(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let all = match cfg.suite.as_str() {
        "free" => false,
        "all" => true,
        other => return Err(CliError::Config(format!("unknown suite {other:?}; use free or all"))),
    };
    free_suite(&mut run.audits)?;
    if all {
        potentials_suite(&mut run.audits, cfg.seed)?;
        dynamics_suite(&mut run.audits, cfg.seed)?;
        spectral_suite(&mut run.audits)?;
        oscillatory_suite(&mut run.audits, cfg.seed)?;
        scan_suite(&mut run.audits)?;
    }
    let audits = run.audits.snapshot();
    let mut w = run.csv_writer("verify.csv")?;
    w.write_record(["audit", "status", "detail"])?;
    for (name, status, detail) in &audits {
        w.write_record([name, status, detail])?;
    }
    w.flush()?;
    let failed: Vec<&String> = audits.iter().filter(|a| a.1 != "pass").map(|a| &a.0).collect();
    Ok(json!({
        "suite": cfg.suite,
        "audits": audits.len(),
        "not_passing": failed,
    }))
}
