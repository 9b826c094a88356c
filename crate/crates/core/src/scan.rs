//! Multiscale search for separated quasimomenta with small Pruefer
//! amplitude, the count and covering bounds built on it, and a local
//! dimension diagnostic for truncated spectral measures.
//!
//! At scale `m` with `eps_m = eps^m`:
//! - horizon `L_m = floor(eps_m^-(1+sigma))`,
//! - separation length `eps_m^(1/N^2)`,
//! - amplitude threshold `R^2(L_m, k) <= C(I) eps_m^(1-beta)`,
//! - sum threshold `|sum_{n=1}^{L_m} V(n) sin(2 pi theta(n-1, k))| >= (1-beta) C1 ln(1/eps_m)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dynamics::{EnergyPoint, Neumaier, PrueferWalk};
use crate::error::{invalid, Error, Result};
use crate::fit::least_squares;
use crate::par::map_ordered;
use crate::potentials::Potential;
use crate::spectral::{contour_mass, QuadratureOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    pub beta: f64,
    pub sigma: f64,
    /// `N` of the separation conditions.
    pub count: u32,
    pub eps: f64,
    /// Sum-threshold constant; `None` selects `min_{k in window} sin(pi k)`.
    pub c1: Option<f64>,
    /// Amplitude-threshold constant; `None` selects `2 sup_{window} sin^-2(pi k)`.
    pub c_interval: Option<f64>,
    /// Quasimomentum window `[k_min, k_max]`.
    pub k_min: f64,
    pub k_max: f64,
    /// Grid points per separation length.
    pub grid_resolution: usize,
    /// Lower bound on the number of grid points across the window.
    pub min_grid_points: usize,
    /// Scales whose horizon exceeds this are skipped.
    pub max_length: u64,
    pub jobs: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            beta: 0.5,
            sigma: 0.5,
            count: 10,
            eps: 0.1,
            c1: None,
            c_interval: None,
            k_min: 0.1,
            k_max: 0.4,
            grid_resolution: 64,
            min_grid_points: 512,
            max_length: 10_000_000,
            jobs: 1,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", "must lie in (0, 1)"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be positive"));
        }
        if self.count < 1 {
            return Err(invalid("N", "must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid("eps", "must lie in (0, 1)"));
        }
        if !(self.k_min > 0.0 && self.k_min < self.k_max && self.k_max < 1.0) {
            return Err(invalid("window", "need 0 < k_min < k_max < 1"));
        }
        if self.grid_resolution < 1 {
            return Err(invalid("grid_resolution", "must be at least 1"));
        }
        if let Some(c) = self.c1 {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid("C1", "must be positive"));
            }
        }
        if let Some(c) = self.c_interval {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid("C_I", "must be positive"));
            }
        }
        Ok(())
    }

    /// `M = 1 + beta`.
    pub fn order(&self) -> f64 {
        1.0 + self.beta
    }

    pub fn window(&self) -> Result<(EnergyPoint, EnergyPoint)> {
        Ok((EnergyPoint::from_k(self.k_min)?, EnergyPoint::from_k(self.k_max)?))
    }

    fn min_sine(&self) -> f64 {
        // sin(pi k) is concave on (0, 1): its minimum sits at an endpoint
        (PI * self.k_min).sin().min((PI * self.k_max).sin())
    }

    pub fn c1(&self) -> f64 {
        self.c1.unwrap_or_else(|| self.min_sine())
    }

    pub fn c_interval(&self) -> f64 {
        self.c_interval.unwrap_or_else(|| 2.0 / self.min_sine().powi(2))
    }

    pub fn eps_at(&self, m: u32) -> f64 {
        self.eps.powi(m as i32)
    }

    /// `floor(eps_m^-(1+sigma))`, nudged so exact powers are not lost to
    /// rounding.
    pub fn length_at(&self, m: u32) -> u64 {
        let l = self.eps_at(m).powf(-(1.0 + self.sigma));
        (l * (1.0 + 1e-12)).floor() as u64
    }

    pub fn separation_at(&self, m: u32) -> f64 {
        self.eps_at(m).powf(1.0 / (self.count as f64).powi(2))
    }

    pub fn r2_threshold_at(&self, m: u32) -> f64 {
        self.c_interval() * self.eps_at(m).powf(1.0 - self.beta)
    }

    pub fn sum_threshold_at(&self, m: u32) -> f64 {
        (1.0 - self.beta) * self.c1() * (1.0 / self.eps_at(m)).ln()
    }

    fn contains(&self, k: f64) -> bool {
        k >= self.k_min && k <= self.k_max
    }
}

/// Everything measured at one quasimomentum on the horizon `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointCertificate {
    pub k: f64,
    /// `R^2` of state `L`.
    pub r_squared: f64,
    /// `sum_{n=1}^{L} V(n) sin(2 pi theta(n-1))`.
    pub sum: f64,
    /// `2 ln R(L) - 2 ln R(1) + sum_{n=2}^{L} V(n) sin(2 pi theta(n-1)) / sin(pi k)`.
    pub identity_residual: f64,
    /// `sum_{n=2}^{L} (V(n) / sin(pi k))^2`, the second-order envelope of the residual.
    pub residual_envelope: f64,
}

impl PointCertificate {
    pub fn linkage_holds(&self) -> bool {
        self.identity_residual.abs() <= self.residual_envelope + 1e-9
    }
}

pub fn certify_point(p: &Potential, k: f64, length: u64) -> Result<PointCertificate> {
    if length < 1 {
        return Err(Error::InvalidCutoff(length));
    }
    let ep = EnergyPoint::from_k(k)?;
    let mut walk = PrueferWalk::new(p, ep);
    let mut sum = Neumaier::default();
    let mut tail = Neumaier::default();
    let mut envelope = Neumaier::default();
    let mut log_r1 = 0.0;
    for _ in 0..length {
        let t = walk.advance()?;
        let s = t.v * (2.0 * PI * t.from.theta.frac()).sin();
        sum.add(s);
        if t.site == 1 {
            log_r1 = t.to.log_r;
        } else {
            let x = t.v / ep.sin_pk();
            tail.add(s / ep.sin_pk());
            envelope.add(x * x);
        }
    }
    let s = walk.state();
    Ok(PointCertificate {
        k,
        r_squared: s.r_squared(),
        sum: sum.sum(),
        identity_residual: 2.0 * (s.log_r - log_r1) + tail.sum(),
        residual_envelope: envelope.sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumCondition {
    pub k: f64,
    pub sum: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCondition {
    pub i: usize,
    pub j: usize,
    pub gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub scale: u32,
    pub length: u64,
    pub sum_threshold: f64,
    pub separation: f64,
    pub sums: Vec<SumCondition>,
    pub gaps: Vec<GapCondition>,
    pub holds: bool,
}

/// Checks both separation conditions for the given points at scale `m`.
pub fn separation_test(points: &[f64], p: &Potential, cfg: &ScanConfig, m: u32) -> Result<SeparationReport> {
    cfg.validate()?;
    if m < 1 {
        return Err(invalid("m", "scales start at 1"));
    }
    if let Some(&k) = points.iter().find(|&&k| !cfg.contains(k)) {
        return Err(Error::OutsideWindow(k));
    }
    let length = cfg.length_at(m);
    let threshold = cfg.sum_threshold_at(m);
    let separation = cfg.separation_at(m);
    let certs = map_ordered(points, cfg.jobs, |&k| certify_point(p, k, length));
    let mut sums = Vec::with_capacity(points.len());
    for c in certs {
        let c = c?;
        sums.push(SumCondition {
            k: c.k,
            sum: c.sum,
            holds: c.sum.abs() >= threshold,
        });
    }
    let mut gaps = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let gap = (points[i] - points[j]).abs();
            gaps.push(GapCondition {
                i,
                j,
                gap,
                holds: gap >= separation,
            });
        }
    }
    let holds = sums.iter().all(|s| s.holds) && gaps.iter().all(|g| g.holds);
    Ok(SeparationReport {
        scale: m,
        length,
        sum_threshold: threshold,
        separation,
        sums,
        gaps,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatedSet {
    pub scale: u32,
    pub length: u64,
    pub eps: f64,
    pub separation: f64,
    pub r2_threshold: f64,
    pub sum_threshold: f64,
    pub grid_spacing: f64,
    pub grid_points: usize,
    /// Grid points passing both the amplitude and the sum threshold, by `k`.
    pub candidates: Vec<PointCertificate>,
    /// Greedy selection among candidates in ascending `R^2`, pairwise at
    /// least twice the separation length apart; ordered by `k`.
    pub points: Vec<PointCertificate>,
    /// Grid quasimomenta whose `R^2` is within a factor 2 of the threshold.
    pub marginal: Vec<f64>,
}

impl SeparatedSet {
    pub fn quasimomenta(&self) -> Vec<f64> {
        self.points.iter().map(|c| c.k).collect()
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.points.windows(2).map(|w| w[1].k - w[0].k).reduce(f64::min)
    }
}

fn scan_grid(cfg: &ScanConfig, m: u32) -> (f64, Vec<f64>) {
    let width = cfg.k_max - cfg.k_min;
    let spacing = (cfg.separation_at(m) / cfg.grid_resolution as f64).min(width / cfg.min_grid_points.max(1) as f64);
    let cells = (width / spacing).ceil() as usize;
    let spacing = width / cells as f64;
    let grid = (0..=cells)
        .map(|i| {
            if i == cells {
                cfg.k_max
            } else {
                cfg.k_min + i as f64 * spacing
            }
        })
        .collect();
    (spacing, grid)
}

pub fn singular_interval_scan(p: &Potential, cfg: &ScanConfig, m: u32) -> Result<SeparatedSet> {
    cfg.validate()?;
    if m < 1 {
        return Err(invalid("m", "scales start at 1"));
    }
    let length = cfg.length_at(m);
    if length > cfg.max_length {
        return Err(Error::HorizonTooLarge {
            scale: m,
            horizon: length,
            cap: cfg.max_length,
        });
    }
    let separation = cfg.separation_at(m);
    let r2_threshold = cfg.r2_threshold_at(m);
    let sum_threshold = cfg.sum_threshold_at(m);
    let (grid_spacing, grid) = scan_grid(cfg, m);
    let certs: Vec<PointCertificate> = map_ordered(&grid, cfg.jobs, |&k| certify_point(p, k, length))
        .into_iter()
        .collect::<Result<_>>()?;

    let marginal = certs
        .iter()
        .filter(|c| c.r_squared > 0.5 * r2_threshold && c.r_squared <= 2.0 * r2_threshold)
        .map(|c| c.k)
        .collect();
    let mut order: Vec<usize> = (0..certs.len())
        .filter(|&i| certs[i].r_squared <= r2_threshold && certs[i].sum.abs() >= sum_threshold)
        .collect();
    let candidates = order.iter().map(|&i| certs[i]).collect();
    order.sort_by(|&a, &b| certs[a].r_squared.total_cmp(&certs[b].r_squared).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen
            .iter()
            .all(|&j| (certs[i].k - certs[j].k).abs() >= 2.0 * separation)
        {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    if let Some(w) = chosen.windows(2).find(|w| w[1] - w[0] <= 1) {
        return Err(Error::GridTooCoarse(certs[w[0]].k, certs[w[1]].k));
    }
    Ok(SeparatedSet {
        scale: m,
        length,
        eps: cfg.eps_at(m),
        separation,
        r2_threshold,
        sum_threshold,
        grid_spacing,
        grid_points: grid.len(),
        candidates,
        points: chosen.iter().map(|&i| certs[i]).collect(),
        marginal,
    })
}

/// Greedy left-to-right cover of sorted points by closed intervals of the
/// given length.
pub fn greedy_cover(sorted: &[f64], length: f64) -> Vec<(f64, f64)> {
    let mut cover: Vec<(f64, f64)> = Vec::new();
    for &k in sorted {
        match cover.last() {
            Some(&(_, hi)) if k <= hi => {}
            _ => cover.push((k, k + length)),
        }
    }
    cover
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ScaleOutcome {
    Completed(Box<ScaleReport>),
    Skipped { scale: u32, length: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    pub set: SeparatedSet,
    pub count: usize,
    pub count_exceeds_bound: bool,
    /// Cover of the candidate set by intervals of the separation length.
    pub cover: Vec<(f64, f64)>,
    pub cover_exceeds_bound: bool,
    /// `mu_{L_m}` of the energies covered by the cover intervals, clipped
    /// to the window.
    pub candidate_mass: f64,
    /// Selected points violating the small-amplitude/large-sum linkage.
    pub linkage_failures: usize,
    /// Selected points pass the separation test as stated.
    pub separation_sound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub config: ScanConfig,
    pub c1: f64,
    pub c_interval: f64,
    /// `L_1 >= 10^3`; smaller first horizons are run and reported.
    pub first_horizon_adequate: bool,
    pub scales: Vec<ScaleOutcome>,
}

impl ScanReport {
    pub fn completed(&self) -> impl Iterator<Item = &ScaleReport> {
        self.scales.iter().filter_map(|s| match s {
            ScaleOutcome::Completed(r) => Some(r.as_ref()),
            ScaleOutcome::Skipped { .. } => None,
        })
    }

    pub fn max_count(&self) -> usize {
        self.completed().map(|r| r.count).max().unwrap_or(0)
    }

    pub fn max_cover(&self) -> usize {
        self.completed().map(|r| r.cover.len()).max().unwrap_or(0)
    }
}

fn energy_of(k: f64) -> f64 {
    2.0 * (PI * k).cos()
}

pub fn count_bound_experiment(p: &Potential, cfg: &ScanConfig, scales: &[u32]) -> Result<ScanReport> {
    cfg.validate()?;
    let mut outcomes = Vec::with_capacity(scales.len());
    for &m in scales {
        let length = cfg.length_at(m.max(1));
        let set = match singular_interval_scan(p, cfg, m) {
            Ok(set) => set,
            Err(Error::HorizonTooLarge { scale, horizon, cap }) => {
                outcomes.push(ScaleOutcome::Skipped {
                    scale,
                    length: horizon,
                    reason: format!("horizon {horizon} exceeds the cap {cap}"),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let ks: Vec<f64> = set.candidates.iter().map(|c| c.k).collect();
        let cover = greedy_cover(&ks, set.separation);
        let sites = p.sites(length);
        let mut mass = 0.0;
        for &(a, b) in &cover {
            let (lo, hi) = (energy_of(b.min(cfg.k_max)), energy_of(a));
            if hi > lo {
                mass += contour_mass(&sites, lo, hi, &QuadratureOptions::contour())?.mass;
            }
        }
        let separation_sound = separation_test(&set.quasimomenta(), p, cfg, m)?.holds;
        let count = set.points.len();
        let linkage_failures = set.points.iter().filter(|c| !c.linkage_holds()).count();
        outcomes.push(ScaleOutcome::Completed(Box::new(ScaleReport {
            count,
            count_exceeds_bound: count > cfg.count as usize,
            cover_exceeds_bound: cover.len() > 8 * cfg.count as usize,
            cover,
            candidate_mass: mass,
            linkage_failures,
            separation_sound,
            set,
        })));
    }
    Ok(ScanReport {
        config: cfg.clone(),
        c1: cfg.c1(),
        c_interval: cfg.c_interval(),
        first_horizon_adequate: cfg.length_at(1) >= 1_000,
        scales: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionPoint {
    pub eps: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionFit {
    pub energy: f64,
    pub length: u64,
    pub points: Vec<DimensionPoint>,
    /// Slope of `ln mu_L(E - eps, E + eps)` against `ln eps`.
    pub slope: f64,
    pub intercept: f64,
}

/// Log-log fit of `mu_L((E - eps, E + eps))` against `eps`. Masses come from
/// the contour route, which resolves resonances far narrower than `eps` and
/// atoms outside the band.
pub fn local_dimension_diagnostic(p: &Potential, length: u64, energy: f64, eps_grid: &[f64]) -> Result<DimensionFit> {
    if length < 1 {
        return Err(Error::InvalidCutoff(length));
    }
    if eps_grid.len() < 2 {
        return Err(invalid("eps_grid", "need at least two scales"));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("eps_grid", "must be strictly decreasing"));
    }
    let resolution = 1.0 / length as f64;
    if let Some(&e) = eps_grid.iter().find(|&&e| !(e >= resolution)) {
        return Err(invalid(
            "eps_grid",
            format!("{e} is below the resolution scale 1/L = {resolution}"),
        ));
    }
    let sites = p.sites(length);
    let mut points = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let m = contour_mass(&sites, energy - eps, energy + eps, &QuadratureOptions::contour())?;
        if !(m.mass > 0.0) {
            return Err(Error::NumericalFault {
                step: 0,
                detail: format!("nonpositive mass {} at eps = {eps}", m.mass),
            });
        }
        points.push(DimensionPoint { eps, mass: m.mass });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().map(|d| (d.eps.ln(), d.mass.ln())).unzip();
    let fit = least_squares(&x, &y).ok_or_else(|| invalid("eps_grid", "scales must differ"))?;
    Ok(DimensionFit {
        energy,
        length,
        points,
        slope: fit.slope,
        intercept: fit.intercept,
    })
}

/// `n` scales spaced evenly in `ln eps` from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_arithmetic() {
        let cfg = ScanConfig::default();
        assert_eq!(cfg.length_at(1), 31);
        assert_eq!(cfg.length_at(2), 1000);
        assert_eq!(cfg.length_at(3), 31622);
        assert!((cfg.separation_at(1) - 0.1f64.powf(0.01)).abs() < 1e-15);
        assert_eq!(cfg.order(), 1.5);
        let s = (0.1 * PI).sin();
        assert!((cfg.c1() - s).abs() < 1e-15);
        assert!((cfg.c_interval() - 2.0 / (s * s)).abs() < 1e-12);
    }

    #[test]
    fn zero_potential_has_no_candidates() {
        let cfg = ScanConfig::default();
        let set = singular_interval_scan(&Potential::zero(), &cfg, 2).unwrap();
        assert!(set.points.is_empty() && set.candidates.is_empty());
        let r = separation_test(&[0.2, 0.3], &Potential::zero(), &cfg, 1).unwrap();
        assert!(r.sums.iter().all(|s| !s.holds && s.sum == 0.0));
    }

    #[test]
    fn close_points_fail_the_gap_condition() {
        let cfg = ScanConfig {
            count: 2,
            ..ScanConfig::default()
        };
        let sep = cfg.separation_at(1);
        let p = Potential::power_decay(1.0, 1.0).unwrap();
        let r = separation_test(&[0.11, 0.11 + 0.5 * sep], &p, &cfg, 1).unwrap();
        assert!(!r.gaps[0].holds && !r.holds);
        assert!(matches!(
            separation_test(&[0.45], &p, &cfg, 1),
            Err(Error::OutsideWindow(_))
        ));
    }

    #[test]
    fn cover_is_greedy() {
        let c = greedy_cover(&[0.0, 0.1, 0.25, 0.3, 0.9], 0.25);
        assert_eq!(c, vec![(0.0, 0.25), (0.3, 0.55), (0.9, 1.15)]);
    }

    #[test]
    fn horizon_cap() {
        let cfg = ScanConfig {
            max_length: 100,
            ..ScanConfig::default()
        };
        let r = count_bound_experiment(&Potential::zero(), &cfg, &[1, 2]).unwrap();
        assert!(matches!(r.scales[1], ScaleOutcome::Skipped { scale: 2, .. }));
        assert!(!r.first_horizon_adequate);
    }

    #[test]
    fn free_dimension_is_one() {
        let grid = log_grid(1e-1, 1e-3, 5);
        let d = local_dimension_diagnostic(&Potential::zero(), 1000, 0.3, &grid).unwrap();
        assert!((d.slope - 1.0).abs() < 0.02, "{}", d.slope);
        assert!(local_dimension_diagnostic(&Potential::zero(), 100, 0.3, &[0.1, 1e-3]).is_err());
    }
}
