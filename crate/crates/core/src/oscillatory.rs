//! Harmonically weighted sums of Pruefer phases and the weighted
//! Hilbert space `<u, v> = sum_n u(n) v(n) n`.
//!
//! Sums use `theta(n)`, the angle of state `n`, over `n = 1..=L`, and are
//! recorded at logarithmically spaced checkpoints `round(10^(j/4))` so that
//! growth in `ln L` can be measured by a line fit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{EnergyPoint, Neumaier, PrueferWalk};
use crate::error::{invalid, Error, Result};
use crate::fit::least_squares;
use crate::potentials::Potential;

/// Horizon from which checkpoints enter the drift fit.
pub const DRIFT_FIT_FROM: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub length: u64,
    pub value: f64,
    pub running_max: f64,
    pub running_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumDiagnostic {
    pub length: u64,
    pub value: f64,
    pub running_max: f64,
    pub running_min: f64,
    /// Slope of `value` against `ln L` over checkpoints with
    /// `L >= DRIFT_FIT_FROM`; NaN with fewer than two such checkpoints.
    pub drift_slope: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// `round(10^(j/4))` for `j = 0, 1, ...` up to `length`, deduplicated,
/// with `length` itself appended.
pub fn checkpoint_grid(length: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = Vec::new();
    for j in 0.. {
        let l = 10f64.powf(j as f64 / 4.0).round() as u64;
        if l > length {
            break;
        }
        if grid.last() != Some(&l) {
            grid.push(l);
        }
    }
    if grid.last() != Some(&length) {
        grid.push(length);
    }
    grid
}

/// Least-squares slope of checkpoint values against `ln L` for `L >= from`.
pub fn drift_slope(checkpoints: &[Checkpoint], from: u64) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = checkpoints
        .iter()
        .filter(|c| c.length >= from)
        .map(|c| ((c.length as f64).ln(), c.value))
        .unzip();
    least_squares(&x, &y).map_or(f64::NAN, |f| f.slope)
}

struct Accumulator {
    sum: Neumaier,
    max: f64,
    min: f64,
    grid: Vec<u64>,
    next: usize,
    checkpoints: Vec<Checkpoint>,
}

impl Accumulator {
    fn new(length: u64) -> Self {
        let grid = checkpoint_grid(length);
        Accumulator {
            sum: Neumaier::default(),
            max: f64::NEG_INFINITY,
            min: f64::INFINITY,
            checkpoints: Vec::with_capacity(grid.len()),
            grid,
            next: 0,
        }
    }

    fn push(&mut self, n: u64, term: f64) {
        self.sum.add(term);
        let v = self.sum.sum();
        self.max = self.max.max(v);
        self.min = self.min.min(v);
        if self.grid.get(self.next) == Some(&n) {
            self.checkpoints.push(Checkpoint {
                length: n,
                value: v,
                running_max: self.max,
                running_min: self.min,
            });
            self.next += 1;
        }
    }

    fn finish(self, length: u64) -> SumDiagnostic {
        SumDiagnostic {
            length,
            value: self.sum.sum(),
            running_max: self.max,
            running_min: self.min,
            drift_slope: drift_slope(&self.checkpoints, DRIFT_FIT_FROM),
            checkpoints: self.checkpoints,
        }
    }
}

fn check_length(length: u64) -> Result<()> {
    if length < 1 {
        return Err(invalid("L", "sums need L >= 1"));
    }
    Ok(())
}

/// `sum_{n=1}^{L} term(n)` with diagnostics.
pub fn weighted_sum<F>(length: u64, mut term: F) -> Result<SumDiagnostic>
where
    F: FnMut(u64) -> Result<f64>,
{
    check_length(length)?;
    let mut acc = Accumulator::new(length);
    for n in 1..=length {
        acc.push(n, term(n)?);
    }
    Ok(acc.finish(length))
}

/// `sum_{n=1}^{L} 1/n`: the positive control with drift slope 1.
pub fn harmonic_control(length: u64) -> Result<SumDiagnostic> {
    weighted_sum(length, |n| Ok(1.0 / n as f64))
}

/// `sum_{n=1}^{L} cos(4 pi theta(n, k)) / n`.
pub fn weighted_cos4_sum(p: &Potential, ep: &EnergyPoint, length: u64) -> Result<SumDiagnostic> {
    let mut walk = PrueferWalk::new(p, *ep);
    weighted_sum(length, |n| {
        let t = walk.advance()?;
        Ok((4.0 * PI * t.to.theta.frac()).cos() / n as f64)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossSum {
    /// `sum sin(2 pi theta_1) sin(2 pi theta_2) / n`.
    pub product: SumDiagnostic,
    /// `sum cos(2 pi (theta_1 - theta_2)) / n`.
    pub cos_difference: f64,
    /// `sum cos(2 pi (theta_1 + theta_2)) / n`.
    pub cos_total: f64,
}

impl CrossSum {
    /// `|product - (cos_difference - cos_total) / 2|`.
    pub fn split_residual(&self) -> f64 {
        (self.product.value - 0.5 * (self.cos_difference - self.cos_total)).abs()
    }
}

/// `sum_{n=1}^{L} sin(2 pi theta(n, k1)) sin(2 pi theta(n, k2)) / n`,
/// along with both cosine sums of the product-to-sum split.
pub fn cross_sin_sum(p: &Potential, k1: f64, k2: f64, length: u64) -> Result<CrossSum> {
    if k1 == k2 {
        return Err(invalid("k2", "cross sums need k1 != k2"));
    }
    for (name, k) in [("k1", k1), ("k2", k2)] {
        if !(k > 0.0 && k < 0.5) {
            return Err(invalid(name, format!("must lie in (0, 1/2), got {k}")));
        }
    }
    let mut w1 = PrueferWalk::new(p, EnergyPoint::from_k(k1)?);
    let mut w2 = PrueferWalk::new(p, EnergyPoint::from_k(k2)?);
    let mut diff = Neumaier::default();
    let mut total = Neumaier::default();
    let product = weighted_sum(length, |n| {
        let a = 2.0 * PI * w1.advance()?.to.theta.frac();
        let b = 2.0 * PI * w2.advance()?.to.theta.frac();
        let inv = 1.0 / n as f64;
        diff.add((a - b).cos() * inv);
        total.add((a + b).cos() * inv);
        Ok(a.sin() * b.sin() * inv)
    })?;
    Ok(CrossSum {
        product,
        cos_difference: diff.sum(),
        cos_total: total.sum(),
    })
}

/// A finite sequence `u(1..=L)` in the space with `<u, v> = sum u v n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSequence {
    values: Vec<f64>,
}

impl WeightedSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("entry {} is not finite", i + 1)));
        }
        Ok(WeightedSequence { values })
    }

    /// `V(1..=L)` of a potential.
    pub fn from_potential(p: &Potential, length: u64) -> Self {
        WeightedSequence {
            values: p.sites(length),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        inner(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightedSequence {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

fn inner(u: &[f64], v: &[f64]) -> f64 {
    let mut s = Neumaier::default();
    for (i, (a, b)) in u.iter().zip(v).enumerate() {
        s.add(a * b * (i + 1) as f64);
    }
    s.sum()
}

pub fn weighted_inner_product(u: &WeightedSequence, v: &WeightedSequence) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(inner(&u.values, &v.values))
}

/// `A = sum_{n=1}^{L} sin^2(2 pi theta(n, k)) / n`.
pub fn normalization_constant(p: &Potential, ep: &EnergyPoint, length: u64) -> Result<f64> {
    if length < 2 {
        return Err(invalid("L", "the normalization constant needs L >= 2"));
    }
    let mut walk = PrueferWalk::new(p, *ep);
    let mut s = Neumaier::default();
    for n in 1..=length {
        let t = walk.advance()?;
        s.add((2.0 * PI * t.to.theta.frac()).sin().powi(2) / n as f64);
    }
    Ok(s.sum())
}

/// Norms may deviate from 1 by at most this much.
pub const UNIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthogonalityCheck {
    /// `N sup_{i != j} |<e_i, e_j>|`.
    pub alpha: f64,
    /// `sum_i <g, e_i>^2`.
    pub lhs: f64,
    /// `(1 + alpha) |g|^2`.
    pub rhs: f64,
    /// False when `alpha >= 1`: the inequality is then not asserted.
    pub applicable: bool,
    pub holds: bool,
}

/// `sum_i <g, e_i>^2 <= (1 + alpha) |g|^2` for unit vectors `e_i`.
pub fn almost_orthogonality_check(g: &WeightedSequence, units: &[WeightedSequence]) -> Result<OrthogonalityCheck> {
    for (i, e) in units.iter().enumerate() {
        if e.len() != g.len() {
            return Err(Error::LengthMismatch {
                left: g.len(),
                right: e.len(),
            });
        }
        let norm = e.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitVector { index: i, norm });
        }
    }
    let mut sup: f64 = 0.0;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            sup = sup.max(inner(&units[i].values, &units[j].values).abs());
        }
    }
    let alpha = units.len() as f64 * sup;
    let lhs: f64 = units.iter().map(|e| inner(&g.values, &e.values).powi(2)).sum();
    let rhs = (1.0 + alpha) * inner(&g.values, &g.values);
    let applicable = alpha < 1.0;
    Ok(OrthogonalityCheck {
        alpha,
        lhs,
        rhs,
        applicable,
        holds: !applicable || lhs <= rhs + UNIT_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CampaignReport {
    /// Trials with `alpha < 1`.
    pub trials: u64,
    /// Draws discarded because `alpha >= 1`.
    pub inapplicable: u64,
    pub violations: u64,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
    pub max_alpha: f64,
}

fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

/// `trials` applicable draws of up to `max_units` near-orthogonal unit
/// vectors in dimension `dim`: an orthonormal set (weighted Gram-Schmidt)
/// perturbed by noise of random size and renormalized. Half of the test
/// vectors lie in the span of the units, where the inequality is tightest.
pub fn orthogonality_campaign(trials: u64, dim: usize, max_units: usize, seed: u64) -> Result<CampaignReport> {
    if dim < max_units || max_units < 1 {
        return Err(invalid("dim", "need 1 <= max_units <= dim"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CampaignReport {
        trials: 0,
        inapplicable: 0,
        violations: 0,
        worst_ratio: 0.0,
        max_alpha: 0.0,
    };
    while report.trials < trials {
        let count = rng.random_range(1..=max_units);
        let noise = rng.random_range(0.0..0.3);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
        while basis.len() < count {
            let mut v: Vec<f64> = (0..dim).map(|_| unit_draw(&mut rng)).collect();
            for b in &basis {
                let c = inner(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let norm = inner(&v, &v).sqrt();
            if norm > 1e-8 {
                basis.push(v.iter().map(|x| x / norm).collect());
            }
        }
        let units: Vec<WeightedSequence> = basis
            .iter()
            .map(|b| {
                let v: Vec<f64> = b
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + noise * unit_draw(&mut rng) / ((i + 1) as f64).sqrt())
                    .collect();
                let norm = inner(&v, &v).sqrt();
                WeightedSequence {
                    values: v.iter().map(|x| x / norm).collect(),
                }
            })
            .collect();
        let g: Vec<f64> = if rng.random_bool(0.5) {
            let mut g = vec![0.0; dim];
            for e in &units {
                let c = unit_draw(&mut rng);
                g.iter_mut().zip(&e.values).for_each(|(x, y)| *x += c * y);
            }
            g
        } else {
            (0..dim).map(|_| unit_draw(&mut rng)).collect()
        };
        let check = almost_orthogonality_check(&WeightedSequence { values: g }, &units)?;
        if !check.applicable {
            report.inapplicable += 1;
            continue;
        }
        report.trials += 1;
        report.max_alpha = report.max_alpha.max(check.alpha);
        if check.rhs > 0.0 {
            report.worst_ratio = report.worst_ratio.max(check.lhs / check.rhs);
        }
        if !check.holds {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_quarter_decades() {
        let g = checkpoint_grid(1000);
        assert_eq!(g, vec![1, 2, 3, 6, 10, 18, 32, 56, 100, 178, 316, 562, 1000]);
        assert_eq!(*checkpoint_grid(1500).last().unwrap(), 1500);
    }

    #[test]
    fn harmonic_control_slope() {
        let d = harmonic_control(100_000).unwrap();
        assert!((d.drift_slope - 1.0).abs() < 0.01);
        assert!(d.running_min <= d.value && d.value <= d.running_max);
    }

    #[test]
    fn free_cos4_sum_matches_direct_summation() {
        let k = 0.3;
        let d = weighted_cos4_sum(&Potential::zero(), &EnergyPoint::from_k(k).unwrap(), 10_000).unwrap();
        let mut direct = Neumaier::default();
        for n in 1..=10_000u64 {
            let theta = ((n + 1) as f64 * k).fract();
            direct.add((4.0 * PI * theta).cos() / n as f64);
        }
        assert!((d.value - direct.sum()).abs() < 1e-9);
    }

    #[test]
    fn inner_product_examples() {
        let u = WeightedSequence::new(vec![1.0, 0.5, 1.0 / 3.0]).unwrap();
        let uu = weighted_inner_product(&u, &u).unwrap();
        assert!((uu - (1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-15);
        let short = WeightedSequence::new(vec![1.0]).unwrap();
        assert!(matches!(
            weighted_inner_product(&u, &short),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(WeightedSequence::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn orthonormal_units_give_bessel() {
        let e1 = WeightedSequence::new(vec![1.0, 0.0, 0.0]).unwrap();
        let e2 = WeightedSequence::new(vec![0.0, 1.0 / 2f64.sqrt(), 0.0]).unwrap();
        let g = WeightedSequence::new(vec![1.0, 2.0, 3.0]).unwrap();
        let c = almost_orthogonality_check(&g, &[e1, e2]).unwrap();
        assert_eq!(c.alpha, 0.0);
        assert!(c.holds && c.applicable && c.lhs <= c.rhs);
        let bad = WeightedSequence::new(vec![1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            almost_orthogonality_check(&g, &[bad]),
            Err(Error::NotUnitVector { index: 0, .. })
        ));
    }

    #[test]
    fn crowded_units_are_inapplicable() {
        let e = WeightedSequence::new(vec![1.0, 0.0]).unwrap();
        let g = WeightedSequence::new(vec![1.0, 1.0]).unwrap();
        let c = almost_orthogonality_check(&g, &[e.clone(), e]).unwrap();
        assert!(!c.applicable && c.holds);
    }

    #[test]
    fn small_campaign() {
        let r = orthogonality_campaign(200, 16, 4, 7).unwrap();
        assert_eq!(r.trials, 200);
        assert_eq!(r.violations, 0);
        assert!(r.max_alpha < 1.0);
    }
}
