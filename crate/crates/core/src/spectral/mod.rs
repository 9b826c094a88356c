//! Weyl m-function, spectral density and interval masses of the
//! spectral measure of cutoff potentials.
//!
//! For a potential supported on `1..=L`, the spectral measure is purely
//! absolutely continuous on `(-2, 2)` with density
//! `(1/pi) sin(pi k) / ((d - b cos pi k)^2 + b^2 sin^2 pi k)`, where
//! `(b, d) = (u(L), u(L+1))` is the Dirichlet solution at the cutoff.

pub mod oracle;
pub mod quadrature;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dirichlet_endpoint, transfer_product, EnergyPoint};
use crate::error::{invalid, Error, Result};
use crate::potentials::Potential;

pub use oracle::{oracle_eigenpairs, oracle_spectral_measure, stieltjes_smoothed_density, EigenPair};

/// A point `z = 2 cos(pi (k + i gamma))` of the upper half-plane, with
/// `k` in `(0, 1)` and `gamma < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEnergy {
    pub z: Complex64,
    pub k: f64,
    pub gamma: f64,
}

impl ComplexEnergy {
    /// `zeta = exp(i pi (k + i gamma))`, the root of `zeta + 1/zeta = z`
    /// outside the unit circle.
    pub fn zeta(&self) -> Complex64 {
        Complex64::from_polar((-PI * self.gamma).exp(), PI * self.k)
    }

    /// `2 cos(pi (k + i gamma))` evaluated from the stored `(k, gamma)`.
    pub fn reconstruct(&self) -> Complex64 {
        (Complex64::new(self.k, self.gamma) * PI).cos() * 2.0
    }

    pub fn round_trip_error(&self) -> f64 {
        (self.reconstruct() - self.z).norm() / (1.0 + self.z.norm())
    }
}

fn outer_root(z: Complex64) -> Complex64 {
    let disc = ((z - 2.0) * (z + 2.0)).sqrt();
    let plus = (z + disc) * 0.5;
    let minus = (z - disc) * 0.5;
    if plus.norm_sqr() >= minus.norm_sqr() {
        plus
    } else {
        minus
    }
}

pub fn complex_quasimomentum(z: Complex64) -> Result<ComplexEnergy> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::NotUpperHalfPlane(z.im));
    }
    let zeta = outer_root(z);
    Ok(ComplexEnergy {
        z,
        k: zeta.arg() / PI,
        gamma: -zeta.norm().ln() / PI,
    })
}

const BACKWARD_RESCALE: f64 = 1e150;

/// Back-propagates the decaying solution `zeta^{-n}` from the cutoff to
/// the origin and returns `-u(1)/u(0)`.
pub(crate) fn weyl_m_sites(sites: &[f64], z: Complex64, zeta: Complex64) -> Result<Complex64> {
    let mut cur = Complex64::new(1.0, 0.0);
    let mut next = zeta.inv();
    for &v in sites.iter().rev() {
        let prev = (z - v) * cur - next;
        next = cur;
        cur = prev;
        let size = cur.l1_norm();
        if size > BACKWARD_RESCALE {
            cur /= size;
            next /= size;
        }
    }
    let scale = cur.l1_norm().max(next.l1_norm());
    if cur.l1_norm() <= f64::MIN_POSITIVE * scale || !scale.is_finite() {
        return Err(Error::DegenerateBoundary(cur.norm()));
    }
    Ok(-next / cur)
}

pub fn weyl_m_truncated(p: &Potential, length: u64, ce: &ComplexEnergy) -> Result<Complex64> {
    if length < 1 {
        return Err(Error::InvalidCutoff(length));
    }
    weyl_m_sites(&p.sites(length), ce.z, ce.zeta())
}

/// Weyl function at a raw point of the upper half-plane.
pub fn weyl_m_at(p: &Potential, length: u64, z: Complex64) -> Result<Complex64> {
    weyl_m_truncated(p, length, &complex_quasimomentum(z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralDensitySample {
    pub energy: EnergyPoint,
    pub length: u64,
    pub density: f64,
}

fn density_formula(b: f64, d: f64, log_scale: f64, sin_pk: f64, cos_pk: f64) -> f64 {
    let real = d - b * cos_pk;
    let imag = b * sin_pk;
    sin_pk / (PI * (real * real + imag * imag)) * (-2.0 * log_scale).exp()
}

pub fn spectral_density_truncated(p: &Potential, length: u64, ep: &EnergyPoint) -> Result<SpectralDensitySample> {
    if length < 1 {
        return Err(Error::InvalidCutoff(length));
    }
    let t = transfer_product(&p.cutoff(length)?, ep, length)?;
    let (b, d) = t.dirichlet_column();
    Ok(SpectralDensitySample {
        energy: *ep,
        length,
        density: density_formula(b, d, t.log_scale, ep.sin_pk(), ep.cos_pk()),
    })
}

/// Density at a real energy from precomputed sites `V(1..=L)`.
pub(crate) fn density_from_sites(sites: &[f64], energy: f64) -> f64 {
    let half = 0.5 * energy;
    let sin_pk = ((1.0 - half) * (1.0 + half)).sqrt();
    let (b, d, log_scale) = dirichlet_endpoint(sites, energy);
    density_formula(b, d, log_scale, sin_pk, half)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMethod {
    /// Adaptive Simpson over the real-energy density.
    Quadrature,
    /// Weyl function integrated around a rectangle above the interval.
    Contour,
    /// Finite Jacobi matrix eigen-decomposition.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    /// Estimated absolute error; zero for the oracle.
    pub error: f64,
    pub method: MeasureMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub method: MeasureMethod,
    pub tol: f64,
    pub max_depth: u32,
    pub panels: usize,
    /// Panel budget of the Gauss-Kronrod legs of the contour route.
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            method: MeasureMethod::Quadrature,
            tol: 1e-8,
            max_depth: 40,
            panels: 16,
            max_panels: 20_000,
        }
    }
}

impl QuadratureOptions {
    pub fn contour() -> Self {
        QuadratureOptions {
            method: MeasureMethod::Contour,
            ..Self::default()
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo > -2.0 && hi < 2.0 && lo < hi) {
        return Err(invalid("interval", format!("need -2 < E1 < E2 < 2, got ({lo}, {hi})")));
    }
    Ok(())
}

pub fn measure_of_interval(p: &Potential, length: u64, lo: f64, hi: f64) -> Result<MeasureEstimate> {
    measure_of_interval_with(p, length, lo, hi, &QuadratureOptions::default())
}

pub fn measure_of_interval_with(
    p: &Potential,
    length: u64,
    lo: f64,
    hi: f64,
    opts: &QuadratureOptions,
) -> Result<MeasureEstimate> {
    if length < 1 {
        return Err(Error::InvalidCutoff(length));
    }
    check_interval(lo, hi)?;
    let sites = p.sites(length);
    match opts.method {
        MeasureMethod::Quadrature => {
            // one initial panel per oscillation scale 1/L of the density
            let panels = opts.panels.max((length as f64 * (hi - lo)).ceil() as usize);
            let r = quadrature::adaptive_simpson(
                |e| density_from_sites(&sites, e),
                lo,
                hi,
                opts.tol,
                opts.max_depth,
                panels,
            )?;
            Ok(MeasureEstimate {
                lo,
                hi,
                mass: r.value,
                error: r.error,
                method: MeasureMethod::Quadrature,
            })
        }
        MeasureMethod::Contour => contour_mass(&sites, lo, hi, opts),
        MeasureMethod::Oracle => {
            let n = (10 * length).max(10);
            oracle_spectral_measure(p, n, lo, hi)
        }
    }
}

/// `mu((E1, E2))` for an interval whose endpoints carry no atoms, from the
/// Stieltjes inversion formula deformed onto the rectangle
/// `E1 -> E1 + ih -> E2 + ih -> E2`:
/// `pi mu = Re int_0^h m(E1+it) dt + Im int m(E+ih) dE - Re int_0^h m(E2+it) dt`.
/// Valid for any real interval, including atoms outside `(-2, 2)`.
pub(crate) fn contour_mass(sites: &[f64], lo: f64, hi: f64, opts: &QuadratureOptions) -> Result<MeasureEstimate> {
    let height = (0.5 * (hi - lo)).min(0.5);
    let tol = opts.tol * PI / 3.0;
    let m_at = |z: Complex64| -> Result<Complex64> { weyl_m_sites(sites, z, outer_root(z)) };
    let mut fault = None;
    let mut guarded = |z: Complex64, part: fn(Complex64) -> f64| -> f64 {
        match m_at(z) {
            Ok(m) => part(m),
            Err(e) => {
                fault.get_or_insert(e);
                0.0
            }
        }
    };
    let left = quadrature::adaptive_gauss_kronrod(
        |t| guarded(Complex64::new(lo, t), |m| m.re),
        0.0,
        height,
        tol,
        opts.max_panels,
    )?;
    let top = quadrature::adaptive_gauss_kronrod(
        |e| guarded(Complex64::new(e, height), |m| m.im),
        lo,
        hi,
        tol,
        opts.max_panels,
    )?;
    let right = quadrature::adaptive_gauss_kronrod(
        |t| guarded(Complex64::new(hi, t), |m| m.re),
        0.0,
        height,
        tol,
        opts.max_panels,
    )?;
    if let Some(e) = fault {
        return Err(e);
    }
    Ok(MeasureEstimate {
        lo,
        hi,
        mass: (left.value + top.value - right.value) / PI,
        error: (left.error + top.error + right.error) / PI,
        method: MeasureMethod::Contour,
    })
}

/// Mass of `(E1, E2)` under the free measure `sqrt(4 - E^2) / (2 pi) dE`,
/// with the interval clipped to `[-2, 2]`.
pub fn free_interval_mass(lo: f64, hi: f64) -> f64 {
    let primitive = |e: f64| {
        let u = (0.5 * e).clamp(-1.0, 1.0);
        (u * ((1.0 - u) * (1.0 + u)).sqrt() + u.asin()) / PI
    };
    primitive(hi) - primitive(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub energy: f64,
    pub eps: f64,
    /// `mu_{L_ref}((E - eps, E + eps))`.
    pub reference_mass: f64,
    /// `mu_L((E - eps/2, E + eps/2))`.
    pub truncated_mass: f64,
    pub deficit: f64,
    /// `-C eps^M`.
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonParams {
    pub length: u64,
    pub reference_length: u64,
    pub eps: f64,
    pub order: f64,
    pub sigma: f64,
    pub constant: f64,
}

impl ComparisonParams {
    pub fn validate(&self) -> Result<()> {
        if self.length < 1 || self.reference_length < self.length {
            return Err(invalid("L_ref", "need 1 <= L <= L_ref"));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        let floor = (self.length as f64).powf(-1.0 / (1.0 + self.sigma));
        if !(self.eps > floor) {
            return Err(invalid("eps", format!("must exceed L^(-1/(1+sigma)) = {floor}")));
        }
        if !(self.constant >= 0.0) || !self.order.is_finite() {
            return Err(invalid("C", "constant must be nonnegative and the order finite"));
        }
        Ok(())
    }
}

/// Checks `mu_{L_ref}(E-eps, E+eps) >= mu_L(E-eps/2, E+eps/2) - C eps^M`,
/// with the long truncation standing in for the full measure.
pub fn two_measure_comparison(
    p: &Potential,
    energy: f64,
    params: &ComparisonParams,
    opts: &QuadratureOptions,
) -> Result<ComparisonReport> {
    params.validate()?;
    let eps = params.eps;
    check_interval(energy - eps, energy + eps)?;
    let reference = measure_of_interval_with(p, params.reference_length, energy - eps, energy + eps, opts)?;
    let truncated = measure_of_interval_with(p, params.length, energy - 0.5 * eps, energy + 0.5 * eps, opts)?;
    let deficit = reference.mass - truncated.mass;
    let bound = -params.constant * eps.powf(params.order);
    Ok(ComparisonReport {
        energy,
        eps,
        reference_mass: reference.mass,
        truncated_mass: truncated.mass,
        deficit,
        bound,
        violation: deficit < bound,
    })
}

/// Largest `|deficit| / eps^M` of the free measure over the given energies.
pub fn calibrate_comparison_constant(energies: &[f64], eps: f64, order: f64) -> f64 {
    energies
        .iter()
        .map(|&e| {
            let deficit = free_interval_mass(e - eps, e + eps) - free_interval_mass(e - 0.5 * eps, e + 0.5 * eps);
            deficit.abs() / eps.powf(order)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quasimomentum_fixture() {
        let z = (Complex64::new(0.25, -0.1) * PI).cos() * 2.0;
        assert!((z.re - 1.4846).abs() < 1e-4 && (z.im - 0.4517).abs() < 1e-4);
        let ce = complex_quasimomentum(z).unwrap();
        assert!((ce.k - 0.25).abs() < 1e-12);
        assert!((ce.gamma + 0.1).abs() < 1e-12);
        assert!(ce.round_trip_error() < 1e-14);
    }

    #[test]
    fn quasimomentum_real_limit() {
        let ce = complex_quasimomentum(Complex64::new(0.0, 1e-9)).unwrap();
        assert!((ce.k - 0.5).abs() < 1e-8);
        assert!(ce.gamma < 0.0 && ce.gamma > -1e-8);
        assert!(complex_quasimomentum(Complex64::new(0.3, 0.0)).is_err());
        assert!(complex_quasimomentum(Complex64::new(0.3, -1.0)).is_err());
    }

    #[test]
    fn free_weyl_function_is_the_exponential() {
        let z = Complex64::new(0.7, 0.05);
        let ce = complex_quasimomentum(z).unwrap();
        let m = weyl_m_truncated(&Potential::zero(), 40, &ce).unwrap();
        let expect = -(Complex64::new(0.0, -PI) * Complex64::new(ce.k, ce.gamma)).exp();
        assert!((m - expect).norm() < 1e-13);
        assert!(m.im > 0.0);
    }

    #[test]
    fn free_density_is_sine_over_pi() {
        for &k in &[0.1, 0.3, 0.5, 0.77] {
            let ep = EnergyPoint::from_k(k).unwrap();
            for &l in &[1, 7, 300] {
                let s = spectral_density_truncated(&Potential::zero(), l, &ep).unwrap();
                assert!((s.density - (PI * k).sin() / PI).abs() < 1e-13);
                assert!((density_from_sites(&vec![0.0; l as usize], ep.energy()) - s.density).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn density_is_the_boundary_value_of_weyl() {
        let p = Potential::power_decay(1.0, 1.0).unwrap();
        let ep = EnergyPoint::from_energy(0.0).unwrap();
        let d = spectral_density_truncated(&p, 50, &ep).unwrap().density;
        let m = weyl_m_at(&p, 50, Complex64::new(0.0, 1e-8)).unwrap();
        assert!((m.im / PI - d).abs() < 1e-6);
    }

    #[test]
    fn free_masses() {
        let whole = measure_of_interval(&Potential::zero(), 5, -2.0 + 1e-6, 2.0 - 1e-6).unwrap();
        let exact = free_interval_mass(-2.0 + 1e-6, 2.0 - 1e-6);
        assert!((whole.mass - exact).abs() < 1e-8);
        assert!((1.0 - exact) < 1e-7 && (1.0 - exact) > 0.0);
        let half = measure_of_interval(&Potential::zero(), 5, 0.0, 2.0 - 1e-6).unwrap();
        assert!((half.mass - 0.5).abs() < 1e-7);
        let c = measure_of_interval_with(&Potential::zero(), 5, -0.4, 1.3, &QuadratureOptions::contour()).unwrap();
        assert!((c.mass - free_interval_mass(-0.4, 1.3)).abs() < 1e-8);
    }

    #[test]
    fn contour_agrees_with_simpson() {
        let p = Potential::power_decay(1.0, 1.0).unwrap();
        let s = measure_of_interval(&p, 100, -1.0, 0.6).unwrap();
        let c = measure_of_interval_with(&p, 100, -1.0, 0.6, &QuadratureOptions::contour()).unwrap();
        assert!((s.mass - c.mass).abs() < 1e-7, "{} vs {}", s.mass, c.mass);
    }

    #[test]
    fn comparison_rejects_small_eps() {
        let params = ComparisonParams {
            length: 100,
            reference_length: 100,
            eps: 0.01,
            order: 2.0,
            sigma: 0.5,
            constant: 1.0,
        };
        let r = two_measure_comparison(&Potential::zero(), 0.0, &params, &QuadratureOptions::default());
        assert!(matches!(r, Err(Error::InvalidParameter { name: "eps", .. })));
    }

    #[test]
    fn comparison_with_equal_lengths_is_monotone() {
        let params = ComparisonParams {
            length: 200,
            reference_length: 200,
            eps: 0.1,
            order: 2.0,
            sigma: 0.5,
            constant: 0.0,
        };
        let p = Potential::power_decay(1.0, 1.0).unwrap();
        let r = two_measure_comparison(&p, 0.3, &params, &QuadratureOptions::default()).unwrap();
        assert!(r.deficit > 0.0 && !r.violation);
    }
}
