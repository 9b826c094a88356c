//! Potential families for the half-line operator
//! `(Hu)(n) = u(n+1) + u(n-1) + V(n) u(n)`.
//!
//! Every family is a pure function of the site index. The Dirichlet
//! condition pins `u(0) = 0`, so `V(0)` never enters a computation; the
//! families still define it so that bound checks cover `n = 0`.

use std::f64::consts::{PI, TAU};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Zero,
    /// `B / (1+n)^alpha`.
    PowerDecay {
        amplitude: f64,
        exponent: f64,
    },
    /// `c sin(2 pi k0 n + phi) / (1+n)`; resonant at quasimomentum `k0`.
    WignerVonNeumann {
        amplitude: f64,
        resonance: f64,
        phase: f64,
    },
    /// `values[n]` for `n < values.len()`, zero beyond.
    SampledTable {
        values: Vec<f64>,
    },
    /// `B x_n / (1+n)` with `x_n` uniform on `[-1, 1)`, drawn from the
    /// ChaCha8 stream seeded by `seed`; `x_n` is the `n`-th 64-bit word.
    SeededRandomDecay {
        amplitude: f64,
        seed: u64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Zero => "zero",
            Family::PowerDecay { .. } => "power_decay",
            Family::WignerVonNeumann { .. } => "wigner_von_neumann",
            Family::SampledTable { .. } => "sampled_table",
            Family::SeededRandomDecay { .. } => "seeded_random_decay",
        }
    }
}

/// An immutable potential: a family, an optional cutoff `L` and the
/// constant `B` in `|V(n)| <= B/(1+n)` when one is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    family: Family,
    cutoff: Option<u64>,
    declared_bound: Option<f64>,
}

fn finite(name: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(name, format!("must be finite, got {x}")))
    }
}

impl Potential {
    pub fn zero() -> Self {
        Potential {
            family: Family::Zero,
            cutoff: None,
            declared_bound: Some(0.0),
        }
    }

    /// `B/(1+n)^alpha`. The `1/(1+n)` bound is only declared for `alpha >= 1`.
    pub fn power_decay(amplitude: f64, exponent: f64) -> Result<Self> {
        let amplitude = finite("B", amplitude)?;
        if amplitude < 0.0 {
            return Err(invalid("B", "amplitude must be nonnegative"));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(invalid("alpha", format!("exponent must be positive, got {exponent}")));
        }
        Ok(Potential {
            family: Family::PowerDecay { amplitude, exponent },
            cutoff: None,
            declared_bound: (exponent >= 1.0).then_some(amplitude),
        })
    }

    pub fn wigner_von_neumann(amplitude: f64, resonance: f64, phase: f64) -> Result<Self> {
        let amplitude = finite("c", amplitude)?;
        if !(resonance > 0.0 && resonance < 1.0) {
            return Err(invalid(
                "k0",
                format!("resonant quasimomentum must lie in (0, 1), got {resonance}"),
            ));
        }
        if !(0.0..TAU).contains(&phase) {
            return Err(invalid("phi", format!("phase must lie in [0, 2pi), got {phase}")));
        }
        Ok(Potential {
            family: Family::WignerVonNeumann {
                amplitude,
                resonance,
                phase,
            },
            cutoff: None,
            declared_bound: Some(amplitude.abs()),
        })
    }

    /// Tabulated values `V(0), V(1), ...`; the declared bound is the
    /// smallest `B` that the table satisfies.
    pub fn sampled_table(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid("table", format!("non-finite entry {bad}")));
        }
        // Scale up by one ulp-sized margin so the bound survives the
        // division in `verify_bound`.
        let bound = values
            .iter()
            .enumerate()
            .map(|(n, v)| {
                let b = v.abs() * (1.0 + n as f64);
                if b == 0.0 {
                    0.0
                } else {
                    b * (1.0 + 4.0 * f64::EPSILON)
                }
            })
            .fold(0.0, f64::max);
        Ok(Potential {
            family: Family::SampledTable { values },
            cutoff: None,
            declared_bound: Some(bound),
        })
    }

    pub fn seeded_random_decay(amplitude: f64, seed: u64) -> Result<Self> {
        let amplitude = finite("B", amplitude)?;
        if amplitude < 0.0 {
            return Err(invalid("B", "amplitude must be nonnegative"));
        }
        Ok(Potential {
            family: Family::SeededRandomDecay { amplitude, seed },
            cutoff: None,
            declared_bound: Some(amplitude),
        })
    }

    /// Replaces the declared bound. Nothing checks it here; use
    /// [`verify_bound`] for that.
    pub fn with_declared_bound(mut self, bound: Option<f64>) -> Self {
        self.declared_bound = bound;
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cutoff_length(&self) -> Option<u64> {
        self.cutoff
    }

    pub fn declared_bound(&self) -> Option<f64> {
        self.declared_bound
    }

    /// `V(n)`, honouring the cutoff.
    pub fn eval(&self, n: u64) -> f64 {
        if self.cutoff.is_some_and(|l| n > l) {
            return 0.0;
        }
        let x = n as f64;
        match &self.family {
            Family::Zero => 0.0,
            Family::PowerDecay { amplitude, exponent } => {
                if *exponent == 1.0 {
                    amplitude / (1.0 + x)
                } else {
                    amplitude / (1.0 + x).powf(*exponent)
                }
            }
            Family::WignerVonNeumann {
                amplitude,
                resonance,
                phase,
            } => amplitude * wvn_sine(*resonance, *phase, n) / (1.0 + x),
            Family::SampledTable { values } => values.get(n as usize).copied().unwrap_or(0.0),
            Family::SeededRandomDecay { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_word_pos(2 * n as u128);
                amplitude * unit_symmetric(rng.next_u64()) / (1.0 + x)
            }
        }
    }

    /// Sequential evaluation from site `start` on; identical to calling
    /// [`Potential::eval`] for each index, but without per-site setup.
    pub fn samples(&self, start: u64) -> Samples<'_> {
        let rng = match &self.family {
            Family::SeededRandomDecay { seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_word_pos(2 * start as u128);
                Some(rng)
            }
            _ => None,
        };
        Samples {
            potential: self,
            next: start,
            rng,
        }
    }

    /// `V(1), ..., V(len)` as a vector (index `n - 1` holds `V(n)`).
    pub fn sites(&self, len: u64) -> Vec<f64> {
        self.samples(1).take(len as usize).collect()
    }

    /// The potential cut off at `L`: unchanged on `0..=L`, zero beyond.
    pub fn cutoff(&self, length: u64) -> Result<Potential> {
        if length < 1 {
            return Err(Error::InvalidCutoff(length));
        }
        let mut p = self.clone();
        p.cutoff = Some(self.cutoff.map_or(length, |l| l.min(length)));
        Ok(p)
    }
}

/// `sin(2 pi k0 n + phi)` with the product `k0 n` reduced mod 1 first, so
/// that large `n` does not cost phase accuracy.
fn wvn_sine(resonance: f64, phase: f64, n: u64) -> f64 {
    let turns = (resonance * n as f64).rem_euclid(1.0);
    let residual = resonance.mul_add(n as f64, -(resonance * n as f64));
    (TAU * (turns + residual) + phase).sin()
}

fn unit_symmetric(word: u64) -> f64 {
    let unit = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

pub struct Samples<'a> {
    potential: &'a Potential,
    next: u64,
    rng: Option<ChaCha8Rng>,
}

impl Iterator for Samples<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let n = self.next;
        self.next += 1;
        let value = match (&self.potential.family, self.rng.as_mut()) {
            (Family::SeededRandomDecay { amplitude, .. }, Some(rng)) => {
                let draw = rng.next_u64();
                if self.potential.cutoff.is_some_and(|l| n > l) {
                    0.0
                } else {
                    amplitude * unit_symmetric(draw) / (1.0 + n as f64)
                }
            }
            _ => self.potential.eval(n),
        };
        Some(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    pub first_violation: Option<u64>,
}

/// Checks `|V(n)| <= B/(1+n)` for `0 <= n <= N`.
pub fn verify_bound(p: &Potential, bound: f64, upto: u64) -> Result<BoundCheck> {
    if upto < 1 {
        return Err(invalid("N", "must be at least 1"));
    }
    let first_violation = p
        .samples(0)
        .take(upto as usize + 1)
        .enumerate()
        .find(|(n, v)| v.abs() > bound / (1.0 + *n as f64))
        .map(|(n, _)| n as u64);
    Ok(BoundCheck {
        holds: first_violation.is_none(),
        first_violation,
    })
}

/// Resonant energy of a Wigner-von Neumann potential, `2 cos(pi k0)`.
pub fn resonant_energy(resonance: f64) -> f64 {
    2.0 * (PI * resonance).cos()
}
