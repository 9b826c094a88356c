//! Finite Jacobi truncation as a brute-force reference for the spectral
//! measure: diagonal `V(1..=N)`, unit off-diagonals. Its eigenvalues
//! `lambda_j` and squared first eigenvector components `w_j` give the
//! discrete measure `sum_j w_j delta(lambda_j)`.
//!
//! Eigenvalues are isolated by Sturm counts and polished by a safeguarded
//! Illinois iteration on the normalized characteristic polynomial. First
//! components come from splicing the forward (Dirichlet at 0) and backward
//! (Dirichlet at N+1) solutions where their product peaks.

use serde::Serialize;

use crate::dynamics::Neumaier;
use crate::error::{invalid, Error, Result};
use crate::potentials::Potential;

use super::{MeasureEstimate, MeasureMethod};

const LANES: usize = 8;
const GROW_ABOVE: f64 = 3.273390607896142e150; // 2^500
const SHRINK_BELOW: f64 = 3.054936363499605e-151; // 2^-500
const DOWN: f64 = 7.458340731200207e-155; // 2^-512
const UP: f64 = 1.3407807929942597e154; // 2^512
const RESCALE_EVERY: usize = 64;

/// Eigenvalue tolerance of the polishing step.
pub const EIGENVALUE_TOL: f64 = 1e-12;
/// Cells narrower than this still holding two eigenvalues are rejected.
pub const MIN_SPACING: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenPair {
    pub value: f64,
    pub weight: f64,
}

/// One pass of the three-term recurrence `p_n = (lambda - V_n) p_{n-1} - p_{n-2}`
/// per lane. Returns the number of sign changes of `p_0..p_N` (eigenvalues
/// above `lambda`) and `p_N / |(p_N, p_{N-1})|`.
fn sturm_lanes(diag: &[f64], lam: &[f64; LANES]) -> ([u32; LANES], [f64; LANES]) {
    let mut prev = [0.0f64; LANES];
    let mut cur = [1.0f64; LANES];
    let mut changes = [0u64; LANES];
    let mut start = 0;
    while start < diag.len() {
        let end = (start + RESCALE_EVERY).min(diag.len());
        sturm_block(&diag[start..end], lam, &mut prev, &mut cur, &mut changes);
        for j in 0..LANES {
            let size = cur[j].abs().max(prev[j].abs());
            if size > GROW_ABOVE {
                cur[j] *= DOWN;
                prev[j] *= DOWN;
            } else if size < SHRINK_BELOW {
                cur[j] *= UP;
                prev[j] *= UP;
            }
        }
        start = end;
    }
    let mut secular = [0.0; LANES];
    let mut counts = [0u32; LANES];
    for j in 0..LANES {
        secular[j] = cur[j] / cur[j].hypot(prev[j]);
        counts[j] = changes[j] as u32;
    }
    (counts, secular)
}

#[inline(always)]
fn sturm_block(
    block: &[f64],
    lam: &[f64; LANES],
    prev: &mut [f64; LANES],
    cur: &mut [f64; LANES],
    changes: &mut [u64; LANES],
) {
    let (mut p, mut c, mut n) = (*prev, *cur, *changes);
    for &v in block {
        for j in 0..LANES {
            let next = (lam[j] - v) * c[j] - p[j];
            // sign bits differ; an exact zero counts as positive
            n[j] = n[j].wrapping_add((next.to_bits() ^ c[j].to_bits()) >> 63);
            p[j] = c[j];
            c[j] = next;
        }
    }
    (*prev, *cur, *changes) = (p, c, n);
}

/// Sturm data at arbitrarily many points, batched by lanes.
fn sturm_many(diag: &[f64], points: &[f64]) -> Vec<(u32, f64)> {
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(LANES) {
        let mut lam = [chunk[chunk.len() - 1]; LANES];
        lam[..chunk.len()].copy_from_slice(chunk);
        let (c, f) = sturm_lanes(diag, &lam);
        for j in 0..chunk.len() {
            out.push((c[j], f[j]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    a: f64,
    b: f64,
    above_a: u32,
    above_b: u32,
    fa: f64,
    fb: f64,
}

/// Splits `[lo, hi)` into cells holding exactly one eigenvalue each.
fn isolate(diag: &[f64], lo: f64, hi: f64) -> Result<Vec<Cell>> {
    let ends = sturm_many(diag, &[lo, hi]);
    let total = ends[0].0.saturating_sub(ends[1].0) as usize;
    if total == 0 {
        return Ok(Vec::new());
    }
    let pieces = (2 * total).max(1);
    let h = (hi - lo) / pieces as f64;
    let interior: Vec<f64> = (1..pieces).map(|i| lo + i as f64 * h).collect();
    let data = sturm_many(diag, &interior);
    let mut knots = Vec::with_capacity(pieces + 1);
    knots.push((lo, ends[0]));
    knots.extend(interior.iter().copied().zip(data));
    knots.push((hi, ends[1]));
    let mut pending: Vec<Cell> = knots
        .windows(2)
        .map(|w| Cell {
            a: w[0].0,
            b: w[1].0,
            above_a: w[0].1 .0,
            above_b: w[1].1 .0,
            fa: w[0].1 .1,
            fb: w[1].1 .1,
        })
        .collect();
    let mut isolated = Vec::with_capacity(total);
    while !pending.is_empty() {
        let mut crowded = Vec::new();
        for c in pending.drain(..) {
            match c.above_a.saturating_sub(c.above_b) {
                0 => {}
                1 => isolated.push(c),
                _ => {
                    if c.b - c.a < MIN_SPACING {
                        return Err(Error::IllConditioned {
                            at: c.a,
                            spacing: c.b - c.a,
                        });
                    }
                    crowded.push(c);
                }
            }
        }
        let mids: Vec<f64> = crowded.iter().map(|c| 0.5 * (c.a + c.b)).collect();
        let data = sturm_many(diag, &mids);
        for ((c, m), (above, f)) in crowded.into_iter().zip(mids).zip(data) {
            pending.push(Cell {
                b: m,
                above_b: above,
                fb: f,
                ..c
            });
            pending.push(Cell {
                a: m,
                above_a: above,
                fa: f,
                ..c
            });
        }
    }
    isolated.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(isolated)
}

#[derive(Debug, Clone, Copy)]
struct Polish {
    cell: usize,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    /// End replaced by the previous step: -1 left, +1 right, 0 none.
    replaced: i8,
    width_before: f64,
    slow_steps: u8,
}

impl Polish {
    fn new(cell: usize, c: &Cell) -> Self {
        Polish {
            cell,
            a: c.a,
            b: c.b,
            fa: c.fa,
            fb: c.fb,
            replaced: 0,
            width_before: c.b - c.a,
            slow_steps: 0,
        }
    }

    fn done(&self) -> bool {
        self.b - self.a <= EIGENVALUE_TOL || self.fa == 0.0 || self.fb == 0.0
    }

    fn root(&self) -> f64 {
        if self.fa == 0.0 {
            self.a
        } else if self.fb == 0.0 {
            self.b
        } else {
            0.5 * (self.a + self.b)
        }
    }

    /// False position, kept at least half a tolerance inside the bracket so
    /// the bracket collapses once the root is pinned; bisection after two
    /// steps that failed to halve the bracket.
    fn trial(&self) -> f64 {
        let mid = 0.5 * (self.a + self.b);
        if self.slow_steps >= 2 {
            return mid;
        }
        let x = (self.a * self.fb - self.b * self.fa) / (self.fb - self.fa);
        if !(x > self.a && x < self.b) {
            return mid;
        }
        let margin = 0.5 * EIGENVALUE_TOL;
        x.clamp(self.a + margin, self.b - margin)
    }

    /// Anderson-Bjorck update: when the same end is replaced twice in a row
    /// the retained value is damped by `1 - f(x)/f(old end)`.
    fn update(&mut self, x: f64, fx: f64) {
        let bisected = self.slow_steps >= 2;
        if fx == 0.0 {
            self.a = x;
            self.fa = 0.0;
            return;
        }
        if (fx < 0.0) == (self.fa < 0.0) {
            if self.replaced == -1 && !bisected {
                let m = 1.0 - fx / self.fa;
                self.fb *= if m > 0.0 { m } else { 0.5 };
            }
            self.a = x;
            self.fa = fx;
            self.replaced = -1;
        } else {
            if self.replaced == 1 && !bisected {
                let m = 1.0 - fx / self.fb;
                self.fa *= if m > 0.0 { m } else { 0.5 };
            }
            self.b = x;
            self.fb = fx;
            self.replaced = 1;
        }
        let width = self.b - self.a;
        if bisected || width <= 0.5 * self.width_before {
            self.slow_steps = 0;
            self.width_before = width;
        } else {
            self.slow_steps += 1;
        }
    }
}

/// Polishes every isolated cell to `EIGENVALUE_TOL`, keeping all lanes busy.
fn polish(diag: &[f64], cells: &[Cell]) -> Vec<f64> {
    let mut roots = vec![f64::NAN; cells.len()];
    let mut queue = 0;
    let mut lanes: [Option<Polish>; LANES] = [None; LANES];
    loop {
        for lane in lanes.iter_mut() {
            while lane.is_none() && queue < cells.len() {
                let p = Polish::new(queue, &cells[queue]);
                queue += 1;
                if p.done() {
                    roots[p.cell] = p.root();
                } else {
                    *lane = Some(p);
                }
            }
        }
        if lanes.iter().all(Option::is_none) {
            return roots;
        }
        let mut lam = [0.0; LANES];
        for (j, lane) in lanes.iter().enumerate() {
            if let Some(p) = lane {
                lam[j] = p.trial();
            }
        }
        let (_, f) = sturm_lanes(diag, &lam);
        for (j, lane) in lanes.iter_mut().enumerate() {
            if let Some(p) = lane {
                p.update(lam[j], f[j]);
                if p.done() {
                    roots[p.cell] = p.root();
                    *lane = None;
                }
            }
        }
    }
}

/// Steps between overflow checks such that values below `GROW_ABOVE`
/// cannot overflow in between.
fn check_stride(diag: &[f64], lam: &[f64; LANES]) -> usize {
    let reach = lam.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let growth = diag.iter().fold(0.0f64, |m, v| m.max(v.abs())) + reach + 1.0;
    ((480.0 / growth.log2().max(1.0)) as usize).clamp(1, 64)
}

/// Rescales lane `j` of `rows` (and the carried value) when its newest
/// entry exceeds `GROW_ABOVE`.
fn tame(rows: &mut [[f64; LANES]], newest: usize, carry: &mut [f64; LANES]) {
    for j in 0..LANES {
        if rows[newest][j].abs() > GROW_ABOVE {
            for row in rows.iter_mut() {
                row[j] *= DOWN;
            }
            carry[j] *= DOWN;
        }
    }
}

/// Squared first components of the normalized eigenvectors for a batch of
/// eigenvalues. `fwd` and `bwd` are scratch buffers of length `N`.
fn first_components(
    diag: &[f64],
    lam: &[f64; LANES],
    fwd: &mut [[f64; LANES]],
    bwd: &mut [[f64; LANES]],
) -> [f64; LANES] {
    let n = diag.len();
    let stride = check_stride(diag, lam);
    // forward: u_1 = 1, u_{i+1} = (lambda - V_i) u_i - u_{i-1}
    fwd[0] = [1.0; LANES];
    let mut before = [0.0f64; LANES];
    let mut cur = fwd[0];
    let mut countdown = stride;
    for i in 0..n - 1 {
        let mut next = [0.0; LANES];
        for j in 0..LANES {
            next[j] = (lam[j] - diag[i]) * cur[j] - before[j];
        }
        before = cur;
        cur = next;
        fwd[i + 1] = next;
        countdown -= 1;
        if countdown == 0 {
            countdown = stride;
            tame(&mut fwd[..=i + 1], i + 1, &mut before);
            cur = fwd[i + 1];
        }
    }
    // backward: w_N = 1, w_{i-1} = (lambda - V_i) w_i - w_{i+1}
    bwd[n - 1] = [1.0; LANES];
    let mut after = [0.0f64; LANES];
    let mut cur = bwd[n - 1];
    let mut countdown = stride;
    for i in (1..n).rev() {
        let mut next = [0.0; LANES];
        for j in 0..LANES {
            next[j] = (lam[j] - diag[i]) * cur[j] - after[j];
        }
        after = cur;
        cur = next;
        bwd[i - 1] = next;
        countdown -= 1;
        if countdown == 0 {
            countdown = stride;
            tame(&mut bwd[i - 1..], 0, &mut after);
            cur = bwd[i - 1];
        }
    }
    let mut twist = [0usize; LANES];
    let mut best = [-1.0f64; LANES];
    for (i, (u, w)) in fwd.iter().zip(bwd.iter()).enumerate() {
        for j in 0..LANES {
            let v = (u[j] * w[j]).abs();
            if v > best[j] {
                best[j] = v;
                twist[j] = i;
            }
        }
    }
    let mut iu = [0.0; LANES];
    let mut iw = [0.0; LANES];
    for j in 0..LANES {
        iu[j] = 1.0 / fwd[twist[j]][j];
        iw[j] = 1.0 / bwd[twist[j]][j];
    }
    let mut norm = [0.0f64; LANES];
    for (i, (u, w)) in fwd.iter().zip(bwd.iter()).enumerate() {
        for j in 0..LANES {
            let x = if i <= twist[j] { u[j] * iu[j] } else { w[j] * iw[j] };
            norm[j] += x * x;
        }
    }
    let mut weights = [0.0; LANES];
    for j in 0..LANES {
        let first = fwd[0][j] * iu[j];
        weights[j] = first * first / norm[j];
    }
    weights
}

fn pairs_of(diag: &[f64], lo: f64, hi: f64) -> Result<Vec<EigenPair>> {
    let cells = isolate(diag, lo, hi)?;
    let values = polish(diag, &cells);
    let n = diag.len();
    let mut fwd = vec![[0.0; LANES]; n];
    let mut bwd = vec![[0.0; LANES]; n];
    let mut out = Vec::with_capacity(values.len());
    for chunk in values.chunks(LANES) {
        let mut lam = [chunk[chunk.len() - 1]; LANES];
        lam[..chunk.len()].copy_from_slice(chunk);
        let w = first_components(diag, &lam, &mut fwd, &mut bwd);
        for j in 0..chunk.len() {
            out.push(EigenPair {
                value: chunk[j],
                weight: w[j],
            });
        }
    }
    Ok(out)
}

/// Closed interval containing the whole spectrum of the truncation.
pub fn spectrum_hull(diag: &[f64]) -> (f64, f64) {
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
    (lo - 2.0 - pad, hi + 2.0 + pad)
}

/// Eigenpairs of the `N x N` truncation with eigenvalue in `[lo, hi)`,
/// ordered by eigenvalue.
pub fn oracle_eigenpairs(p: &Potential, size: u64, lo: f64, hi: f64) -> Result<Vec<EigenPair>> {
    if size < 10 {
        return Err(invalid(
            "N",
            format!("matrix dimension must be at least 10, got {size}"),
        ));
    }
    if !(lo < hi) {
        return Err(invalid("interval", format!("need E1 < E2, got ({lo}, {hi})")));
    }
    let diag = p.sites(size);
    if diag.iter().any(|v| !v.is_finite()) {
        return Err(invalid("potential", "non-finite site value"));
    }
    let (a, b) = spectrum_hull(&diag);
    pairs_of(&diag, lo.max(a), hi.min(b))
}

pub fn oracle_spectral_measure(p: &Potential, size: u64, lo: f64, hi: f64) -> Result<MeasureEstimate> {
    let pairs = oracle_eigenpairs(p, size, lo, hi)?;
    let mut mass = Neumaier::default();
    for e in &pairs {
        mass.add(e.weight);
    }
    Ok(MeasureEstimate {
        lo,
        hi,
        mass: mass.sum(),
        error: 0.0,
        method: MeasureMethod::Oracle,
    })
}

/// `(1/pi) sum_j w_j eps / ((E - lambda_j)^2 + eps^2)`: the discrete measure
/// convolved with a Cauchy kernel of width `eps`.
pub fn stieltjes_smoothed_density(pairs: &[EigenPair], energy: f64, eps: f64) -> f64 {
    let mut s = Neumaier::default();
    for e in pairs {
        let d = energy - e.value;
        s.add(e.weight * eps / (d * d + eps * eps));
    }
    s.sum() / std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn free_eigen_data_is_explicit() {
        let n = 100u64;
        let pairs = oracle_eigenpairs(&Potential::zero(), n, -3.0, 3.0).unwrap();
        assert_eq!(pairs.len(), n as usize);
        for (i, e) in pairs.iter().enumerate() {
            let j = (n as usize - i) as f64;
            let t = j * PI / (n as f64 + 1.0);
            assert!((e.value - 2.0 * t.cos()).abs() < 1e-12, "{i}");
            let w = 2.0 * t.sin().powi(2) / (n as f64 + 1.0);
            assert!((e.weight - w).abs() < 1e-13, "{i}: {} vs {w}", e.weight);
        }
    }

    #[test]
    fn total_mass_is_one() {
        let p = Potential::power_decay(3.0, 0.5).unwrap();
        let m = oracle_spectral_measure(&p, 500, -10.0, 10.0).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_state_weight() {
        let mut v = vec![0.0; 401];
        v[1] = -5.0;
        let p = Potential::sampled_table(v).unwrap();
        let pairs = oracle_eigenpairs(&p, 400, -10.0, -2.5).unwrap();
        assert_eq!(pairs.len(), 1);
        // v(n) = r^(n-1) with r = -1/5 solves the eigen-equation, so
        // lambda = r + 1/r and the first component carries 1 - r^2
        assert!((pairs[0].value + 5.2).abs() < 1e-12);
        assert!((pairs[0].weight - 0.96).abs() < 1e-12);
        let all = oracle_spectral_measure(&p, 400, -20.0, 20.0).unwrap();
        assert!((all.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_matrices() {
        assert!(oracle_eigenpairs(&Potential::zero(), 5, -1.0, 1.0).is_err());
    }
}
