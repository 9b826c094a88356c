//! Embedded eigenvalue of the Wigner-von Neumann potential
//! `V(n) = c sin(2 pi k0 n + phi) / (1 + n)` at `E0 = 2 cos(pi k0)`.
//!
//! At `E0` one solution decays like `n^-a` and the other grows like `n^a`
//! with `a = |c| / (4 sin(pi k0))`. The Dirichlet solution is the decaying
//! one only for isolated phases `phi*`; for every other phase it grows.
//! Forward iteration cannot follow a decaying solution past the point
//! where rounding errors are amplified by `n^(2a)`, so the decaying
//! solution is obtained by backward iteration from far out, where it
//! dominates, and `phi*` is located as a zero of its boundary value `u(0)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dynamics::{prufer_from_vector, EnergyPoint, PrueferWalk};
use crate::error::{invalid, Result};
use crate::fit::least_squares;
use crate::potentials::Potential;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedConfig {
    pub amplitude: f64,
    pub resonance: f64,
    /// The sweep uses `phase + 2 pi j / sweep` for `j < sweep`.
    pub phase: f64,
    pub sweep: usize,
    pub length: u64,
    /// Off-resonant quasimomenta are `k0 -/+ offset`.
    pub offset: f64,
    /// Locate a phase whose Dirichlet solution is the decaying one.
    pub tune: bool,
    /// Coarse phase grid for the tuning search.
    pub tune_grid: usize,
    /// Backward iteration starts at `start_factor * L`.
    pub start_factor: u64,
}

impl Default for EmbeddedConfig {
    fn default() -> Self {
        EmbeddedConfig {
            amplitude: 8.0,
            resonance: 0.25,
            phase: 0.0,
            sweep: 8,
            length: 100_000,
            offset: 0.05,
            tune: true,
            tune_grid: 64,
            start_factor: 4,
        }
    }
}

impl EmbeddedConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(invalid("c", "must be finite"));
        }
        let k0 = self.resonance;
        if !(k0 - self.offset > 0.0 && k0 + self.offset < 0.5) {
            return Err(invalid("k0", "k0 -/+ offset must stay inside (0, 1/2)"));
        }
        if self.length < 10_000 {
            return Err(invalid("L", "the experiment needs L >= 10^4"));
        }
        if self.sweep < 1 || self.tune_grid < 4 || self.start_factor < 2 {
            return Err(invalid("sweep", "need sweep >= 1, tune_grid >= 4, start_factor >= 2"));
        }
        Ok(())
    }

    fn potential(&self, phase: f64) -> Result<Potential> {
        Potential::wigner_von_neumann(self.amplitude, self.resonance, phase.rem_euclid(2.0 * PI))
    }

    pub fn sweep_phases(&self) -> Vec<f64> {
        (0..self.sweep)
            .map(|j| (self.phase + 2.0 * PI * j as f64 / self.sweep as f64).rem_euclid(2.0 * PI))
            .collect()
    }
}

/// Least-squares slope of `ln R(n)` against `ln n` over `n in [L/10, L]`.
fn fit_window(length: u64) -> (u64, u64) {
    ((length / 10).max(1), length)
}

/// Slope of `ln R` of the forward Dirichlet solution.
pub fn forward_log_r_slope(p: &Potential, k: f64, length: u64) -> Result<f64> {
    let (lo, hi) = fit_window(length);
    let mut walk = PrueferWalk::new(p, EnergyPoint::from_k(k)?);
    walk.advance_to(lo - 1)?;
    let mut x = Vec::with_capacity((hi - lo + 1) as usize);
    let mut y = Vec::with_capacity((hi - lo + 1) as usize);
    while walk.state().n < hi {
        let t = walk.advance()?;
        x.push((t.to.n as f64).ln());
        y.push(t.to.log_r);
    }
    Ok(least_squares(&x, &y).map_or(f64::NAN, |f| f.slope))
}

const RESCALE_ABOVE: f64 = 1e150;

/// Normalized `(u(0), u(1))`.
type BoundaryPair = (f64, f64);

/// The solution dominant under backward iteration from `start`, given
/// sites `V(1..=start)`. Returns `(u(0), u(1))` normalized to unit length
/// and, for states `n` in `record`, the pairs `(ln n, ln R(n))`.
fn backward_solution(
    sites: &[f64],
    ep: &EnergyPoint,
    record: Option<(u64, u64)>,
) -> Result<(BoundaryPair, Vec<(f64, f64)>)> {
    let e = ep.energy();
    let (mut cur, mut next) = (1.0f64, 0.0f64);
    let mut log_scale = 0.0;
    let mut trace = Vec::new();
    for n in (1..=sites.len()).rev() {
        // (cur, next) = (u(n), u(n+1))
        if let Some((lo, hi)) = record {
            let n = n as u64;
            if n >= lo && n <= hi {
                let (r, _) = prufer_from_vector(cur, next, ep)?;
                trace.push(((n as f64).ln(), r.ln() + log_scale));
            }
        }
        let prev = (e - sites[n - 1]) * cur - next;
        next = cur;
        cur = prev;
        let size = cur.abs().max(next.abs());
        if size > RESCALE_ABOVE {
            cur /= size;
            next /= size;
            log_scale += size.ln();
        }
    }
    let norm = cur.hypot(next);
    trace.reverse();
    Ok(((cur / norm, next / norm), trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSlopes {
    pub phase: f64,
    pub resonant: f64,
    pub below: f64,
    pub above: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunedPhase {
    pub phase: f64,
    /// `|u(0)| / |(u(0), u(1))|` of the decaying solution at this phase.
    pub boundary_residual: f64,
    /// Slope of `ln R` of the decaying (here: Dirichlet) solution.
    pub eigenfunction_slope: f64,
    /// Slope of the forward Dirichlet iteration at the same phase, which
    /// departs from the eigenfunction once rounding errors grow.
    pub forward_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedReport {
    pub config: EmbeddedConfig,
    pub energy: f64,
    /// `|c| / (4 sin(pi k0))`, the predicted decay exponent.
    pub predicted_exponent: f64,
    pub sweep: Vec<PhaseSlopes>,
    /// Minimum resonant forward slope over the sweep phases.
    pub sweep_min_resonant: f64,
    pub tuned: Option<TunedPhase>,
    /// Minimum of the sweep minimum and the tuned eigenfunction slope.
    pub resonant_min_slope: f64,
    /// Largest `|slope|` off resonance over the sweep.
    pub max_off_resonant: f64,
}

/// Sites `V(1..=len)` from the expansion `sin(a + phi) = sin a cos phi +
/// cos a sin phi`, reusing the phase-free parts across phases.
struct PhaseBasis {
    sine: Vec<f64>,
    cosine: Vec<f64>,
}

impl PhaseBasis {
    fn new(cfg: &EmbeddedConfig, len: u64) -> Result<Self> {
        let s = cfg.potential(0.0)?.sites(len);
        let c = cfg.potential(0.5 * PI)?.sites(len);
        Ok(PhaseBasis { sine: s, cosine: c })
    }

    fn sites(&self, phase: f64) -> Vec<f64> {
        let (sp, cp) = phase.sin_cos();
        self.sine
            .iter()
            .zip(&self.cosine)
            .map(|(s, c)| s * cp + c * sp)
            .collect()
    }
}

/// Phases in `[0, 2 pi)` where the decaying solution satisfies `u(0) = 0`.
/// Sign changes of `u(0) u(1)` on a coarse grid are bisected; those that
/// converge to a pole of `u(0)/u(1)` instead of a zero are discarded.
pub fn dirichlet_phases(cfg: &EmbeddedConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let ep = EnergyPoint::from_k(cfg.resonance)?;
    let start = cfg.start_factor * cfg.length;
    let basis = PhaseBasis::new(cfg, start)?;
    let boundary = |phase: f64| -> Result<(f64, f64)> { Ok(backward_solution(&basis.sites(phase), &ep, None)?.0) };
    let grid = cfg.tune_grid;
    let phases: Vec<f64> = (0..=grid).map(|j| 2.0 * PI * j as f64 / grid as f64).collect();
    let values: Vec<(f64, f64)> = phases.iter().map(|&p| boundary(p)).collect::<Result<_>>()?;
    let mut roots = Vec::new();
    for j in 0..grid {
        let (mut a, mut b) = (phases[j], phases[j + 1]);
        let (mut ua, ub) = (values[j], values[j + 1]);
        if (ua.0 * ua.1 > 0.0) == (ub.0 * ub.1 > 0.0) {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            let um = boundary(mid)?;
            if (um.0 * um.1 > 0.0) == (ua.0 * ua.1 > 0.0) {
                a = mid;
                ua = um;
            } else {
                b = mid;
            }
            if b - a < 1e-15 {
                break;
            }
        }
        let phase = 0.5 * (a + b);
        let u = boundary(phase)?;
        if u.0.abs() < u.1.abs() {
            roots.push((phase.rem_euclid(2.0 * PI), u.0.abs()));
        }
    }
    Ok(roots)
}

pub fn embedded_eigenvalue_experiment(cfg: &EmbeddedConfig) -> Result<EmbeddedReport> {
    cfg.validate()?;
    let k0 = cfg.resonance;
    let mut sweep = Vec::with_capacity(cfg.sweep);
    for phase in cfg.sweep_phases() {
        let p = cfg.potential(phase)?;
        sweep.push(PhaseSlopes {
            phase,
            resonant: forward_log_r_slope(&p, k0, cfg.length)?,
            below: forward_log_r_slope(&p, k0 - cfg.offset, cfg.length)?,
            above: forward_log_r_slope(&p, k0 + cfg.offset, cfg.length)?,
        });
    }
    let sweep_min_resonant = sweep.iter().map(|s| s.resonant).fold(f64::INFINITY, f64::min);
    let max_off_resonant = sweep
        .iter()
        .map(|s| s.below.abs().max(s.above.abs()))
        .fold(0.0, f64::max);

    let tuned = if cfg.tune && cfg.amplitude != 0.0 {
        let ep = EnergyPoint::from_k(k0)?;
        let mut best: Option<TunedPhase> = None;
        for (phase, _) in dirichlet_phases(cfg)? {
            let p = cfg.potential(phase)?;
            let sites = p.sites(cfg.start_factor * cfg.length);
            let ((u0, _), trace) = backward_solution(&sites, &ep, Some(fit_window(cfg.length)))?;
            let (x, y): (Vec<f64>, Vec<f64>) = trace.into_iter().unzip();
            let slope = least_squares(&x, &y).map_or(f64::NAN, |f| f.slope);
            let candidate = TunedPhase {
                phase,
                boundary_residual: u0.abs(),
                eigenfunction_slope: slope,
                forward_slope: forward_log_r_slope(&p, k0, cfg.length)?,
            };
            if best.is_none_or(|b| candidate.eigenfunction_slope < b.eigenfunction_slope) {
                best = Some(candidate);
            }
        }
        best
    } else {
        None
    };
    let resonant_min_slope = tuned.map_or(sweep_min_resonant, |t| t.eigenfunction_slope.min(sweep_min_resonant));
    Ok(EmbeddedReport {
        config: cfg.clone(),
        energy: 2.0 * (PI * k0).cos(),
        predicted_exponent: cfg.amplitude.abs() / (4.0 * (PI * k0).sin()),
        sweep,
        sweep_min_resonant,
        tuned,
        resonant_min_slope,
        max_off_resonant,
    })
}
