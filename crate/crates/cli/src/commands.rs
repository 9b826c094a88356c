use std::f64::consts::PI;

use serde_json::{json, Value};
use speclab_core::dynamics::{
    angle_increment_audit, prufer_from_vector, prufer_trace, transfer_product, EnergyPoint, PrueferWalk,
};
use speclab_core::embedded::{embedded_eigenvalue_experiment, EmbeddedConfig};
use speclab_core::oscillatory::{
    cross_sin_sum, harmonic_control, normalization_constant, weighted_cos4_sum, weighted_inner_product,
    WeightedSequence, DRIFT_FIT_FROM,
};
use speclab_core::par::map_ordered;
use speclab_core::potentials::{Family, Potential};
use speclab_core::scan::{count_bound_experiment, local_dimension_diagnostic, log_grid, ScanConfig};
use speclab_core::spectral::{
    measure_of_interval_with, oracle_spectral_measure, spectral_density_truncated, MeasureMethod, QuadratureOptions,
};

use crate::config::RunConfig;
use crate::manifest::Status;
use crate::{CliError, Run};

fn f(x: f64) -> String {
    format!("{x}")
}

fn is_zero(p: &Potential) -> bool {
    matches!(p.family(), Family::Zero)
}

fn energy_point(cfg: &RunConfig) -> Result<EnergyPoint, CliError> {
    Ok(match cfg.e {
        Some(e) => EnergyPoint::from_energy(e)?,
        None => EnergyPoint::from_k(cfg.k)?,
    })
}

pub fn quadrature_options(cfg: &RunConfig) -> Result<QuadratureOptions, CliError> {
    let method = match cfg.method.as_str() {
        "simpson" => MeasureMethod::Quadrature,
        "contour" => MeasureMethod::Contour,
        other => {
            return Err(CliError::Config(format!(
                "unknown method {other:?}; use simpson or contour"
            )))
        }
    };
    if !(cfg.tol > 0.0) {
        return Err(CliError::Config("tol must be positive".into()));
    }
    Ok(QuadratureOptions {
        method,
        tol: cfg.tol,
        ..QuadratureOptions::default()
    })
}

fn energy_grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    if cfg.grid < 1 {
        return Err(CliError::Config("grid must be at least 1".into()));
    }
    if cfg.grid > 1 && !(cfg.e_min < cfg.e_max) {
        return Err(CliError::Config("need Emin < Emax".into()));
    }
    let n = cfg.grid;
    Ok((0..n)
        .map(|i| {
            if n == 1 {
                cfg.e_min
            } else {
                cfg.e_min + (cfg.e_max - cfg.e_min) * i as f64 / (n - 1) as f64
            }
        })
        .collect())
}

/// Distance of `theta` from `reference` modulo 1.
fn angle_gap(theta: f64, reference: f64) -> f64 {
    let d = theta - reference;
    (d - d.round()).abs()
}

pub fn trace(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let p = cfg.potential()?;
    let ep = energy_point(cfg)?;
    let len = cfg.l;
    if len < 1 || cfg.stride < 1 {
        return Err(CliError::Config("need L >= 1 and stride >= 1".into()));
    }
    let states = prufer_trace(&p, &ep, len)?;
    let mut w = run.csv_writer("trace.csv")?;
    w.write_record(["n", "theta", "log_r"])?;
    for s in states.iter().take(len as usize + 1) {
        if s.n % cfg.stride == 0 || s.n == len {
            w.write_record([s.n.to_string(), f(s.theta()), f(s.log_r)])?;
        }
    }
    w.flush()?;

    let last = states[len as usize];
    let t = transfer_product(&p, &ep, len)?;
    run.audits.check(
        "transfer_determinant",
        t.det_residual() < 1e-9,
        format!("relative |det - 1| = {:.2e}", t.det_residual()),
    );
    let (b, d) = t.dirichlet_column();
    let (r, theta) = prufer_from_vector(b, d, &ep)?;
    let dlog = (r.ln() + t.log_scale - last.log_r).abs();
    let dtheta = angle_gap(theta, last.theta.frac());
    run.audits.check(
        "representation_equivalence",
        dlog < 1e-8 && dtheta < 1e-8,
        format!("|d logR| = {dlog:.2e}, |d theta| = {dtheta:.2e} at n = {len}"),
    );
    let audit = angle_increment_audit(&p, &ep, len, 1e-12)?;
    run.audits.check(
        "angle_increment_bound",
        audit.violations == 0,
        format!(
            "{} violations in {} applicable steps",
            audit.violations, audit.applicable
        ),
    );
    if is_zero(&p) {
        let drift_theta = (last.theta() - (len as f64 + 1.0) * ep.k()).abs();
        let drift_r = (last.log_r - states[0].log_r).abs();
        run.audits.check(
            "free_closed_form",
            drift_theta <= 1e-10 * (len as f64 / 1e6).max(1.0) && drift_r <= 1e-10,
            format!("|theta - (n+1)k| = {drift_theta:.2e}, |d logR| = {drift_r:.2e}"),
        );
    }
    Ok(json!({
        "energy": ep.energy(),
        "k": ep.k(),
        "length": len,
        "final_theta": last.theta(),
        "final_log_r": last.log_r,
        "rows_file": "trace.csv",
    }))
}

pub fn density(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let p = cfg.potential()?;
    let len = cfg.l;
    let grid = energy_grid(cfg)?;
    let points: Vec<EnergyPoint> = grid
        .iter()
        .map(|&e| EnergyPoint::from_energy(e))
        .collect::<Result<_, _>>()?;
    let rows = map_ordered(&points, cfg.jobs, |ep| -> Result<(f64, f64), CliError> {
        let rho = spectral_density_truncated(&p, len, ep)?.density;
        let mut walk = PrueferWalk::new(&p, *ep);
        let r2 = walk.advance_to(len)?.r_squared();
        Ok((rho, (PI * rho * ep.sin_pk() * r2 - 1.0).abs()))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut w = run.csv_writer("density.csv")?;
    w.write_record(["E", "k", "density"])?;
    for (ep, (rho, _)) in points.iter().zip(&rows) {
        w.write_record([f(ep.energy()), f(ep.k()), f(*rho)])?;
    }
    w.flush()?;

    let positive = rows.iter().all(|(rho, _)| rho.is_finite() && *rho > 0.0);
    run.audits
        .check("density_positive", positive, format!("{} grid energies", rows.len()));
    let dual = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    run.audits.check(
        "dual_route_identity",
        dual < 1e-9,
        format!("max |pi rho sin(pi k) R^2 - 1| = {dual:.2e}"),
    );
    if is_zero(&p) {
        let worst = points
            .iter()
            .zip(&rows)
            .map(|(ep, (rho, _))| (rho - ep.sin_pk() / PI).abs())
            .fold(0.0, f64::max);
        run.audits.check(
            "free_density",
            worst < 1e-12,
            format!("max |rho - sin(pi k)/pi| = {worst:.2e}"),
        );
    }
    Ok(json!({
        "length": len,
        "points": rows.len(),
        "min_density": rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        "max_density": rows.iter().map(|r| r.0).fold(0.0, f64::max),
        "rows_file": "density.csv",
    }))
}

pub fn oracle_compare(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let p = cfg.potential()?;
    let len = cfg.l;
    let size = cfg.size.unwrap_or(10 * len);
    let (lo, hi) = (cfg.e_min, cfg.e_max);
    let quad = measure_of_interval_with(&p, len, lo, hi, &quadrature_options(cfg)?)?;
    let oracle = oracle_spectral_measure(&p.cutoff(len)?, size, lo, hi)?;
    let diff = (quad.mass - oracle.mass).abs();
    let applicable = size >= 10 * len && len >= 100 && lo > -1.95 && hi < 1.95;
    let status = match (diff < 1e-3, applicable) {
        (true, _) => Status::Pass,
        (false, false) => Status::Marginal,
        (false, true) => Status::Fail,
    };
    run.audits.record(
        "oracle_equivalence",
        status,
        format!("|diff| = {diff:.3e}; N >= 10 L, L >= 100 and endpoints inside (-1.95, 1.95): {applicable}"),
    );
    Ok(json!({
        "interval": [lo, hi],
        "length": len,
        "size": size,
        "quadrature_mass": quad.mass,
        "quadrature_error": quad.error,
        "oracle_mass": oracle.mass,
        "abs_diff": diff,
    }))
}

fn drift_status(slope: f64, ok: impl Fn(f64) -> bool) -> Status {
    if !slope.is_finite() {
        Status::Marginal
    } else if ok(slope) {
        Status::Pass
    } else {
        Status::Fail
    }
}

pub fn sums(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let p = cfg.potential()?;
    let ep = energy_point(cfg)?;
    let len = cfg.l;
    let cos4 = weighted_cos4_sum(&p, &ep, len)?;
    let mut w = run.csv_writer("sums.csv")?;
    w.write_record(["L", "value", "running_max", "running_min"])?;
    for c in &cos4.checkpoints {
        w.write_record([c.length.to_string(), f(c.value), f(c.running_max), f(c.running_min)])?;
    }
    w.flush()?;

    run.audits.record(
        "cos4_drift",
        drift_status(cos4.drift_slope, |s| s.abs() < 0.05),
        format!(
            "drift slope {:.4} over checkpoints >= {DRIFT_FIT_FROM}",
            cos4.drift_slope
        ),
    );
    let control = harmonic_control(len)?;
    run.audits.record(
        "harmonic_control",
        drift_status(control.drift_slope, |s| (s - 1.0).abs() <= 0.01),
        format!("slope {:.4}", control.drift_slope),
    );
    if let Some(b) = p.declared_bound() {
        let v = WeightedSequence::from_potential(&p, len);
        let norm2 = weighted_inner_product(&v, &v)?;
        let bound = b * b * ((len as f64).ln() + 1.0);
        run.audits.check(
            "weighted_norm_bound",
            norm2 <= bound * (1.0 + 1e-12),
            format!("<V,V> = {norm2:.6} vs B^2 (ln L + 1) = {bound:.6}"),
        );
    }
    let normalization = if len >= 2 {
        Some(normalization_constant(&p, &ep, len)?)
    } else {
        None
    };
    let cross = match cfg.k2 {
        Some(k2) => {
            let s = cross_sin_sum(&p, ep.k(), k2, len)?;
            run.audits.check(
                "cross_sum_split",
                s.split_residual() < 1e-10,
                format!("|S - (D - T)/2| = {:.2e}", s.split_residual()),
            );
            Some(json!({
                "k1": ep.k(),
                "k2": k2,
                "value": s.product.value,
                "drift_slope": s.product.drift_slope,
                "cos_difference": s.cos_difference,
                "cos_total": s.cos_total,
            }))
        }
        None => None,
    };
    Ok(json!({
        "k": ep.k(),
        "length": len,
        "cos4": {
            "value": cos4.value,
            "running_max": cos4.running_max,
            "running_min": cos4.running_min,
            "drift_slope": cos4.drift_slope,
        },
        "harmonic_slope": control.drift_slope,
        "normalization": normalization,
        "normalization_minus_half_log": normalization.map(|a| a - 0.5 * (len as f64).ln()),
        "cross": cross,
        "rows_file": "sums.csv",
    }))
}

pub fn scan_config(cfg: &RunConfig) -> ScanConfig {
    ScanConfig {
        beta: cfg.beta,
        sigma: cfg.sigma,
        count: cfg.n,
        eps: cfg.eps,
        c1: cfg.c1,
        c_interval: cfg.c_interval,
        k_min: cfg.kmin,
        k_max: cfg.kmax,
        jobs: cfg.jobs,
        ..ScanConfig::default()
    }
}

pub fn scan(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let p = cfg.potential()?;
    let scales = cfg.scale_list()?;
    let report = count_bound_experiment(&p, &scan_config(cfg), &scales)?;
    let mut w = run.csv_writer("scan.csv")?;
    w.write_record(["scale", "L", "k", "E", "r_squared", "sum"])?;
    for s in report.completed() {
        for c in &s.set.points {
            w.write_record([
                s.set.scale.to_string(),
                s.set.length.to_string(),
                f(c.k),
                f(2.0 * (PI * c.k).cos()),
                f(c.r_squared),
                f(c.sum),
            ])?;
        }
    }
    w.flush()?;

    let sound = report.completed().all(|s| s.separation_sound);
    run.audits.check(
        "separation_soundness",
        sound,
        "selected points pass the separation test",
    );
    let over_long = report
        .completed()
        .filter(|s| s.count_exceeds_bound && s.set.length >= 1_000)
        .count();
    let over_short = report
        .completed()
        .filter(|s| s.count_exceeds_bound && s.set.length < 1_000)
        .count();
    let status = if over_long > 0 {
        Status::Fail
    } else if over_short > 0 {
        Status::Marginal
    } else {
        Status::Pass
    };
    run.audits.record(
        "count_bound",
        status,
        format!(
            "max count {} vs N = {}; exceedances at L >= 1e3: {over_long}, below: {over_short}",
            report.max_count(),
            cfg.n
        ),
    );
    let linkage: usize = report.completed().map(|s| s.linkage_failures).sum();
    run.audits.check(
        "amplitude_sum_linkage",
        linkage == 0,
        format!("{linkage} selected points violate the linkage"),
    );
    let marginal: usize = report.completed().map(|s| s.set.marginal.len()).sum();
    run.audits.record(
        "near_threshold_points",
        if marginal == 0 { Status::Pass } else { Status::Marginal },
        format!("{marginal} grid points within a factor 2 of the amplitude threshold"),
    );
    run.audits.record(
        "first_horizon",
        if report.first_horizon_adequate {
            Status::Pass
        } else {
            Status::Marginal
        },
        format!("L_1 = {}", scan_config(cfg).length_at(1)),
    );
    Ok(serde_json::to_value(&report).expect("scan reports serialize"))
}

pub fn dimension(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let p = cfg.potential()?;
    let energy = cfg.e.unwrap_or(2.0 * (PI * cfg.k).cos());
    if !(cfg.eps_max > cfg.eps_min && cfg.eps_min > 0.0) || cfg.points < 2 {
        return Err(CliError::Config("need eps-max > eps-min > 0 and points >= 2".into()));
    }
    let grid = log_grid(cfg.eps_max, cfg.eps_min, cfg.points);
    let fit = local_dimension_diagnostic(&p, cfg.l, energy, &grid)?;
    let mut w = run.csv_writer("dimension.csv")?;
    w.write_record(["eps", "mass", "log_eps", "log_mass"])?;
    for d in &fit.points {
        w.write_record([f(d.eps), f(d.mass), f(d.eps.ln()), f(d.mass.ln())])?;
    }
    w.flush()?;

    let monotone = fit.points.windows(2).all(|w| w[1].mass <= w[0].mass * (1.0 + 1e-9));
    run.audits.check("mass_monotone", monotone, "mass shrinks with eps");
    if is_zero(&p) && energy.abs() < 2.0 {
        run.audits.check(
            "free_dimension",
            (fit.slope - 1.0).abs() <= 0.02,
            format!("slope {:.4}", fit.slope),
        );
    }
    Ok(json!({
        "energy": fit.energy,
        "length": fit.length,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "rows_file": "dimension.csv",
    }))
}

pub fn embedded(run: &mut Run) -> Result<Value, CliError> {
    let cfg = run.cfg;
    let ecfg = EmbeddedConfig {
        amplitude: cfg.c,
        resonance: cfg.k0,
        phase: cfg.phi,
        length: cfg.l,
        ..EmbeddedConfig::default()
    };
    let report = embedded_eigenvalue_experiment(&ecfg)?;
    let mut w = run.csv_writer("embedded.csv")?;
    w.write_record(["phi", "resonant", "below", "above"])?;
    for s in &report.sweep {
        w.write_record([f(s.phase), f(s.resonant), f(s.below), f(s.above)])?;
    }
    w.flush()?;

    if cfg.c == 0.0 {
        let worst = report
            .sweep
            .iter()
            .map(|s| s.resonant.abs().max(s.below.abs()).max(s.above.abs()))
            .fold(0.0, f64::max);
        run.audits
            .check("free_flat", worst < 0.01, format!("max |slope| = {worst:.2e}"));
    } else {
        run.audits.record(
            "off_resonant_flat",
            if report.max_off_resonant < 0.05 {
                Status::Pass
            } else {
                Status::Marginal
            },
            format!("max |slope| off resonance = {:.2e}", report.max_off_resonant),
        );
        match report.tuned {
            Some(t) => run.audits.check(
                "decaying_solution_boundary",
                t.boundary_residual < 1e-8,
                format!("phi* = {:.12}, |u(0)| = {:.2e}", t.phase, t.boundary_residual),
            ),
            None => run.audits.record(
                "decaying_solution_boundary",
                Status::Marginal,
                "no phase with a decaying Dirichlet solution found",
            ),
        }
        run.audits.record(
            "resonant_decay",
            if report.resonant_min_slope < 0.0 {
                Status::Pass
            } else {
                Status::Marginal
            },
            format!("minimum resonant slope {:.4}", report.resonant_min_slope),
        );
    }
    let mut value = serde_json::to_value(&report).expect("embedded reports serialize");
    value["resonant_slope"] = json!(report.resonant_min_slope);
    value["off_resonant_slope"] = json!(report.max_off_resonant);
    Ok(value)
}
