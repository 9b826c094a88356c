//! Adaptive quadrature rules.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

/// Adaptive Simpson with Richardson correction. The interval is first
/// split into `panels` equal pieces, each receiving a proportional share
/// of the absolute tolerance; a piece is accepted once
/// `|S(left) + S(right) - S(whole)| <= 15 tol`.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, tol: f64, max_depth: u32, panels: usize) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    let panels = panels.max(1);
    let mut evaluations = 0;
    let mut eval = |x: f64| {
        evaluations += 1;
        f(x)
    };
    let h = (b - a) / panels as f64;
    let mut stack = Vec::with_capacity(2 * max_depth as usize + panels);
    let mut left = eval(a);
    for i in 0..panels {
        let pa = a + i as f64 * h;
        let pb = if i + 1 == panels { b } else { a + (i + 1) as f64 * h };
        let fm = eval(0.5 * (pa + pb));
        let fb = eval(pb);
        stack.push(Panel {
            a: pa,
            b: pb,
            fa: left,
            fm,
            fb,
            whole: (pb - pa) / 6.0 * (left + 4.0 * fm + fb),
            tol: tol / panels as f64,
            depth: 0,
        });
        left = fb;
    }
    let mut value = 0.0;
    let mut error = 0.0;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = eval(lm);
        let frm = eval(rm);
        let sl = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
        let sr = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
        let delta = sl + sr - p.whole;
        if delta.abs() <= 15.0 * p.tol || (p.depth > 0 && m - p.a <= f64::EPSILON * m.abs()) {
            value += sl + sr + delta / 15.0;
            error += delta.abs() / 15.0;
        } else if p.depth + 1 >= max_depth {
            return Err(Error::QuadratureDiverged {
                lo: p.a,
                hi: p.b,
                depth: max_depth,
            });
        } else {
            stack.push(Panel {
                a: m,
                b: p.b,
                fa: p.fm,
                fm: frm,
                fb: p.fb,
                whole: sr,
                tol: 0.5 * p.tol,
                depth: p.depth + 1,
            });
            stack.push(Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: sl,
                tol: 0.5 * p.tol,
                depth: p.depth + 1,
            });
        }
    }
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}

// 7-point Gauss / 15-point Kronrod nodes on [-1, 1], positive half.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// G7/K15 on one panel: `(kronrod, |kronrod - gauss|)`.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod: always bisects the panel with the
/// largest error estimate until the total estimate drops below `tol`.
pub fn adaptive_gauss_kronrod<F>(mut f: F, a: f64, b: f64, tol: f64, max_panels: usize) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    let mut evaluations = 0;
    let mut g = |x: f64| {
        evaluations += 1;
        f(x)
    };
    let (v, e) = gk15(&mut g, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let (value, error) = panels.iter().fold((0.0, 0.0), |(s, r), p| (s + p.2, r + p.3));
        if error <= tol {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        if panels.len() >= max_panels {
            let worst = panels
                .iter()
                .max_by(|x, y| x.3.total_cmp(&y.3))
                .expect("at least one panel");
            return Err(Error::QuadratureDiverged {
                lo: worst.0,
                hi: worst.1,
                depth: max_panels as u32,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one panel");
        let (pa, pb, _, _) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        let (lv, le) = gk15(&mut g, pa, m);
        let (rv, re) = gk15(&mut g, m, pb);
        panels.push((pa, m, lv, le));
        panels.push((m, pb, rv, re));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let r = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12, 40, 1).unwrap();
        assert!((r.value - 4.0).abs() < 1e-12);
        let r = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10, 40, 4).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
        // square-root endpoint singularity
        let r = adaptive_simpson(f64::sqrt, 0.0, 1.0, 1e-9, 50, 1).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn simpson_depth_limit() {
        let r = adaptive_simpson(|x| (1.0 / x).sin(), 1e-9, 1.0, 1e-14, 6, 1);
        assert!(matches!(r, Err(Error::QuadratureDiverged { .. })));
    }

    #[test]
    fn kronrod_peaks() {
        let h = 1e-4;
        let r = adaptive_gauss_kronrod(|x| h / (x * x + h * h), -1.0, 1.0, 1e-10, 10_000).unwrap();
        let exact = 2.0 * (1.0 / h).atan();
        assert!((r.value - exact).abs() < 1e-9);
    }
}
