//! Transfer matrices and Pruefer variables for real energies in the band.
//!
//! Indexing: the state with index `n` describes the solution pair
//! `(u(n), u(n+1))` of the Dirichlet solution `u(0) = 0, u(1) = 1`, so that
//! state 0 carries `R = 1/sin(pi k)` and `theta = k`. The step from state
//! `n` to `n + 1` uses the potential at site `n + 1`.
//!
//! In these coordinates
//!
//! ```text
//! u(n)   = R sin(pi theta - pi k)
//! u(n+1) = R sin(pi theta)
//! ```
//!
//! and one step obeys
//!
//! ```text
//! R'^2 / R^2           = 1 - x sin(2 pi theta) + x^2 sin^2(pi theta)
//! cot(pi theta' - pi k) = cot(pi theta) - x,          x = V / sin(pi k)
//! ```
//!
//! The angle recursion fixes `theta'` only mod 1; the lift is continued on
//! the branch `theta' - theta - k` in `(-1/2, 1/2]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potentials::{Potential, Samples};

/// A real energy `E = 2 cos(pi k)` in the open band with its quasimomentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    energy: f64,
    k: f64,
    #[serde(skip)]
    sin_pk: f64,
    #[serde(skip)]
    cos_pk: f64,
}

impl EnergyPoint {
    pub fn from_k(k: f64) -> Result<Self> {
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::QuasimomentumOutOfRange(k));
        }
        let (sin_pk, cos_pk) = (PI * k).sin_cos();
        Ok(EnergyPoint {
            energy: 2.0 * cos_pk,
            k,
            sin_pk,
            cos_pk,
        })
    }

    pub fn from_energy(energy: f64) -> Result<Self> {
        if !(energy > -2.0 && energy < 2.0) {
            return Err(Error::EnergyOutsideBand(energy));
        }
        let k = (0.5 * energy).acos() / PI;
        let (sin_pk, cos_pk) = (PI * k).sin_cos();
        Ok(EnergyPoint {
            energy,
            k,
            sin_pk,
            cos_pk,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sin_pk(&self) -> f64 {
        self.sin_pk
    }

    pub fn cos_pk(&self) -> f64 {
        self.cos_pk
    }
}

/// Row-major `[a b; c d]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TransferMatrix {
    pub const IDENTITY: TransferMatrix = TransferMatrix {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// `self * rhs`.
    pub fn mul(&self, rhs: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (self.a * v.0 + self.b * v.1, self.c * v.0 + self.d * v.1)
    }

    fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    fn scaled(&self, s: f64) -> TransferMatrix {
        TransferMatrix {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }
}

/// One site: `(u(n-1), u(n)) -> (u(n), (E - v) u(n) - u(n-1))`.
pub fn step_matrix(ep: &EnergyPoint, v: f64) -> TransferMatrix {
    TransferMatrix {
        a: 0.0,
        b: 1.0,
        c: -1.0,
        d: ep.energy - v,
    }
}

/// A transfer product stored as `exp(log_scale) * matrix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferProduct {
    pub matrix: TransferMatrix,
    pub log_scale: f64,
}

impl TransferProduct {
    /// `(u(L), u(L+1))` of the Dirichlet solution, without the scale factor.
    pub fn dirichlet_column(&self) -> (f64, f64) {
        (self.matrix.b, self.matrix.d)
    }

    /// `|det - 1|` measured against `|ad| + |bc|`, the size of the terms
    /// whose cancellation produces the determinant.
    pub fn det_residual(&self) -> f64 {
        let m = &self.matrix;
        // the unscaled determinant should equal exp(-2 log_scale)
        let target = (-2.0 * self.log_scale).exp();
        let size = (m.a * m.d).abs() + (m.b * m.c).abs();
        if size >= target {
            (m.det() - target).abs() / size
        } else {
            (m.det() / target - 1.0).abs()
        }
    }
}

// Power-of-two rescaling keeps the accumulated products exact.
const RESCALE_ABOVE: f64 = 1.3407807929942597e154; // 2^512
const RESCALE_BY: f64 = 7.458340731200207e-155; // 2^-512
const LOG_RESCALE: f64 = 512.0 * std::f64::consts::LN_2;

/// `T = S(V(L)) ... S(V(1))`, mapping `(phi(0), phi(1))` to `(phi(L), phi(L+1))`.
pub fn transfer_product(p: &Potential, ep: &EnergyPoint, length: u64) -> Result<TransferProduct> {
    if length < 1 {
        return Err(invalid("L", "transfer products need L >= 1"));
    }
    let mut m = TransferMatrix::IDENTITY;
    let mut log_scale = 0.0;
    for v in p.samples(1).take(length as usize) {
        let e = ep.energy - v;
        m = TransferMatrix {
            a: m.c,
            b: m.d,
            c: e * m.c - m.a,
            d: e * m.d - m.b,
        };
        if m.max_abs() > RESCALE_ABOVE {
            m = m.scaled(RESCALE_BY);
            log_scale += LOG_RESCALE;
        }
    }
    Ok(TransferProduct { matrix: m, log_scale })
}

/// Propagates the Dirichlet pair `(u(0), u(1)) = (0, 1)` over the given
/// site values and returns `(u(L), u(L+1), log_scale)`.
pub(crate) fn dirichlet_endpoint(sites: &[f64], energy: f64) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    let mut log_scale = 0.0;
    for (i, v) in sites.iter().enumerate() {
        let next = (energy - v) * cur - prev;
        prev = cur;
        cur = next;
        if i % 32 == 31 && cur.abs().max(prev.abs()) > RESCALE_ABOVE {
            prev *= RESCALE_BY;
            cur *= RESCALE_BY;
            log_scale += LOG_RESCALE;
        }
    }
    (prev, cur, log_scale)
}

/// A lifted angle `turns + frac` with `frac` in `[0, 1)`. Keeping the
/// winding number separate preserves full precision in the phase after
/// millions of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    turns: i64,
    frac: f64,
}

impl Lift {
    pub fn new(x: f64) -> Self {
        let turns = x.floor();
        Lift {
            turns: turns as i64,
            frac: x - turns,
        }
    }

    pub fn value(&self) -> f64 {
        self.turns as f64 + self.frac
    }

    pub fn turns(&self) -> i64 {
        self.turns
    }

    /// The angle mod 1.
    pub fn frac(&self) -> f64 {
        self.frac
    }

    pub fn add(&self, delta: f64) -> Lift {
        let x = self.frac + delta;
        let whole = x.floor();
        let mut frac = x - whole;
        let mut turns = self.turns + whole as i64;
        if frac >= 1.0 {
            frac -= 1.0;
            turns += 1;
        }
        Lift { turns, frac }
    }

    /// `self - other` as a real number.
    pub fn minus(&self, other: &Lift) -> f64 {
        (self.turns - other.turns) as f64 + (self.frac - other.frac)
    }
}

/// Reduces to `(-1/2, 1/2]`.
pub(crate) fn wrap_half(x: f64) -> f64 {
    let mut w = x - x.round();
    if w <= -0.5 {
        w += 1.0;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrueferState {
    pub n: u64,
    /// `ln R(n, k)`.
    pub log_r: f64,
    pub theta: Lift,
}

impl PrueferState {
    /// Dirichlet data: `R = 1/sin(pi k)`, `theta = k`.
    pub fn initial(ep: &EnergyPoint) -> Self {
        PrueferState {
            n: 0,
            log_r: -ep.sin_pk.ln(),
            theta: Lift::new(ep.k),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta.value()
    }

    pub fn r_squared(&self) -> f64 {
        (2.0 * self.log_r).exp()
    }

    /// `(u(n), u(n+1)) / R`: the solution pair with the amplitude removed.
    pub fn direction(&self, ep: &EnergyPoint) -> (f64, f64) {
        let a = PI * self.theta.frac;
        ((a - PI * ep.k).sin(), a.sin())
    }
}

/// Polar form of a solution pair: returns `R` and `theta mod 1`.
pub fn prufer_from_vector(u_prev: f64, u_cur: f64, ep: &EnergyPoint) -> Result<(f64, f64)> {
    if u_prev == 0.0 && u_cur == 0.0 {
        return Err(Error::ZeroVector);
    }
    let y1 = u_prev;
    let y2 = (u_cur - ep.cos_pk * u_prev) / ep.sin_pk;
    let r = y1.hypot(y2);
    // y = R (sin phi, cos phi) with phi = pi theta - pi k
    let phi = y1.atan2(y2);
    Ok((r, (phi / PI + ep.k).rem_euclid(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrueferOptions {
    /// Below this `|sin(pi theta)|` the cot recursion is replaced by a
    /// transfer-matrix step.
    pub cot_guard: f64,
}

impl Default for PrueferOptions {
    fn default() -> Self {
        PrueferOptions { cot_guard: 1e-6 }
    }
}

pub fn prufer_step(s: &PrueferState, v: f64, ep: &EnergyPoint) -> Result<PrueferState> {
    prufer_step_with(s, v, ep, &PrueferOptions::default())
}

pub fn prufer_step_with(s: &PrueferState, v: f64, ep: &EnergyPoint, opts: &PrueferOptions) -> Result<PrueferState> {
    let fault = |detail: String| Error::NumericalFault { step: s.n, detail };
    if !(s.log_r.is_finite() && s.theta.frac.is_finite() && v.is_finite()) {
        return Err(fault(format!("non-finite input (log R = {}, V = {v})", s.log_r)));
    }
    if v == 0.0 {
        return Ok(PrueferState {
            n: s.n + 1,
            log_r: s.log_r,
            theta: s.theta.add(ep.k),
        });
    }
    let x = v / ep.sin_pk;
    let (sa, ca) = (PI * s.theta.frac).sin_cos();

    let (log_ratio, delta) = if sa.abs() >= opts.cot_guard {
        let f = x * sa * (x * sa - 2.0 * ca);
        if !(f > -1.0) {
            return Err(fault(format!("amplitude ratio {} is not positive", 1.0 + f)));
        }
        let cot_next = ca / sa - x;
        // acot into (0, pi); this is pi theta' - pi k mod pi
        let phi = 1.0f64.atan2(cot_next);
        (0.5 * f.ln_1p(), wrap_half(phi / PI - s.theta.frac))
    } else {
        let (u_prev, u_cur) = s.direction(ep);
        let (u_next_prev, u_next) = step_matrix(ep, v).apply((u_prev, u_cur));
        let (r, theta_mod1) =
            prufer_from_vector(u_next_prev, u_next, ep).map_err(|_| fault("solution pair vanished".into()))?;
        (r.ln(), wrap_half(theta_mod1 - s.theta.frac - ep.k))
    };
    let next = PrueferState {
        n: s.n + 1,
        log_r: s.log_r + log_ratio,
        theta: s.theta.add(ep.k + delta),
    };
    if !next.log_r.is_finite() {
        return Err(fault("log R overflowed".into()));
    }
    Ok(next)
}

/// One Pruefer step together with the site potential that drove it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Site of the potential value, `to.n`.
    pub site: u64,
    pub v: f64,
    pub from: PrueferState,
    pub to: PrueferState,
}

impl Transition {
    /// `theta(n+1) - k - theta(n)`.
    pub fn angle_increment(&self, k: f64) -> f64 {
        self.to.theta.minus(&self.from.theta) - k
    }
}

/// Streaming Pruefer evolution; [`prufer_trace`] collects it.
pub struct PrueferWalk<'a> {
    ep: EnergyPoint,
    opts: PrueferOptions,
    state: PrueferState,
    samples: Samples<'a>,
}

impl<'a> PrueferWalk<'a> {
    pub fn new(p: &'a Potential, ep: EnergyPoint) -> Self {
        Self::with_options(p, ep, PrueferOptions::default())
    }

    pub fn with_options(p: &'a Potential, ep: EnergyPoint, opts: PrueferOptions) -> Self {
        PrueferWalk {
            state: PrueferState::initial(&ep),
            ep,
            opts,
            samples: p.samples(1),
        }
    }

    pub fn energy(&self) -> &EnergyPoint {
        &self.ep
    }

    pub fn state(&self) -> &PrueferState {
        &self.state
    }

    pub fn advance(&mut self) -> Result<Transition> {
        let v = self.samples.next().unwrap_or(0.0);
        let from = self.state;
        let to = prufer_step_with(&from, v, &self.ep, &self.opts)?;
        self.state = to;
        Ok(Transition {
            site: to.n,
            v,
            from,
            to,
        })
    }

    /// Advances until the state index reaches `n`.
    pub fn advance_to(&mut self, n: u64) -> Result<&PrueferState> {
        while self.state.n < n {
            self.advance()?;
        }
        Ok(&self.state)
    }
}

/// States `0..=L+1`.
pub fn prufer_trace(p: &Potential, ep: &EnergyPoint, length: u64) -> Result<Vec<PrueferState>> {
    prufer_trace_with(p, ep, length, &PrueferOptions::default())
}

pub fn prufer_trace_with(
    p: &Potential,
    ep: &EnergyPoint,
    length: u64,
    opts: &PrueferOptions,
) -> Result<Vec<PrueferState>> {
    if length < 1 {
        return Err(invalid("L", "traces need L >= 1"));
    }
    let mut walk = PrueferWalk::with_options(p, *ep, *opts);
    let mut trace = Vec::with_capacity(length as usize + 2);
    trace.push(*walk.state());
    for _ in 0..=length {
        trace.push(walk.advance()?.to);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementAudit {
    pub steps: u64,
    /// Steps with `|V/sin(pi k)| < 1/2`, where the bound applies.
    pub applicable: u64,
    pub violations: u64,
    /// Largest `|increment| - |V/sin(pi k)|` over applicable steps.
    pub worst_excess: f64,
}

/// Audits `|theta(n+1) - k - theta(n)| <= |V/sin(pi k)| + tol` over `L` steps.
pub fn angle_increment_audit(p: &Potential, ep: &EnergyPoint, length: u64, tol: f64) -> Result<IncrementAudit> {
    let mut walk = PrueferWalk::new(p, *ep);
    let mut audit = IncrementAudit {
        steps: 0,
        applicable: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    for _ in 0..length {
        let t = walk.advance()?;
        audit.steps += 1;
        let x = (t.v / ep.sin_pk).abs();
        if x < 0.5 {
            audit.applicable += 1;
            let excess = t.angle_increment(ep.k).abs() - x;
            audit.worst_excess = audit.worst_excess.max(excess);
            if excess > tol {
                audit.violations += 1;
            }
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogAmplitudeIdentity {
    /// `2 (ln R(L) - ln R(1))`.
    pub lhs: f64,
    /// `-sum (V/sin(pi k)) sin(2 pi theta)` over the steps from state 1 to `L`,
    /// each term pairing a site potential with the angle it acts on.
    pub rhs_sum: f64,
    pub residual: f64,
    /// `sum (V/sin(pi k))^2` over the same steps; every step contributes at
    /// most `x^2` to the residual.
    pub second_order: f64,
}

pub fn log_amplitude_identity(p: &Potential, ep: &EnergyPoint, length: u64) -> Result<LogAmplitudeIdentity> {
    if length < 2 {
        return Err(invalid("L", "the identity needs L >= 2"));
    }
    let mut walk = PrueferWalk::new(p, *ep);
    walk.advance()?;
    let start = walk.state().log_r;
    let mut rhs = Neumaier::default();
    let mut second = Neumaier::default();
    while walk.state().n < length {
        let t = walk.advance()?;
        let x = t.v / ep.sin_pk;
        rhs.add(-x * (2.0 * PI * t.from.theta.frac).sin());
        second.add(x * x);
    }
    let lhs = 2.0 * (walk.state().log_r - start);
    let rhs_sum = rhs.sum();
    Ok(LogAmplitudeIdentity {
        lhs,
        rhs_sum,
        residual: lhs - rhs_sum,
        second_order: second.sum(),
    })
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}
