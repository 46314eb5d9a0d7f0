//! The tilted CHSH family `I_{α,β}`, its bounds, and min-entropy bookkeeping.
//!
//! ```text
//! I_{α,β} = β⟨B0⟩ + α(⟨A0B0⟩ + ⟨A1B0⟩) + ⟨A0B1⟩ − ⟨A1B1⟩
//! ```
//!
//! Local models satisfy `I ≤ β + 2α`; quantum models reach
//! `√((1 + α²)(4 + β²))`. From an observed value the outcome of Bob's second
//! measurement can be guessed with probability at most
//! `½ + √(I_max² − I²) / (2(2 − αβ))`.

use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, Outcome};
use crate::error::{domain, Error, Result};

/// Slack allowed above the quantum maximum before a value is rejected.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellParams {
    alpha: f64,
    beta: f64,
    /// `2 − αβ`, kept separately so it stays accurate when `β → 2`.
    slack: f64,
}

impl BellParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !(beta >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(domain(format!(
                "need α ≥ 1, β ≥ 0 (got α={alpha}, β={beta})"
            )));
        }
        let slack = 2.0 - alpha * beta;
        if slack <= 0.0 {
            return Err(domain(format!("need αβ < 2 (got {})", alpha * beta)));
        }
        Ok(Self { alpha, beta, slack })
    }

    pub fn chsh() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            slack: 2.0,
        }
    }

    /// The member `α = 1, β = β(θ)` matched to the partially entangled state of angle θ.
    pub fn for_state(theta: f64) -> Result<Self> {
        let beta = beta_of_theta(theta)?;
        Ok(Self {
            alpha: 1.0,
            beta,
            slack: beta_deficit(theta)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `2 − αβ`.
    pub fn slack(&self) -> f64 {
        self.slack
    }
}

/// One- and two-body correlators of a 2×2 dichotomic scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelatorSet {
    pub b0: f64,
    pub b1: f64,
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
}

impl CorrelatorSet {
    /// `⟨A_x B_y⟩`.
    pub fn joint(&self, x: usize, y: usize) -> f64 {
        match (x, y) {
            (0, 0) => self.e00,
            (0, 1) => self.e01,
            (1, 0) => self.e10,
            _ => self.e11,
        }
    }
}

/// An upper bound on the guessing probability and the min-entropy it certifies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBits {
    pub g_upper: f64,
    pub bits: f64,
}

impl CertifiedBits {
    /// Clamps `g` into `[½, 1]` for one dichotomic outcome and takes `−log₂`.
    pub fn from_guess(g: f64) -> Self {
        let g_upper = g.clamp(0.5, 1.0);
        Self {
            g_upper,
            bits: 0.0 - g_upper.log2(),
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4 + 1e-12) {
        return Err(domain(format!("θ must lie in (0, π/4], got {theta}")));
    }
    Ok(())
}

/// `β(θ) = 2 cos 2θ / √(1 + sin² 2θ)`.
pub fn beta_of_theta(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let s = (2.0 * theta).sin();
    Ok(2.0 * (2.0 * theta).cos() / (1.0 + s * s).sqrt())
}

/// `2 − β(θ)` without cancellation, for small θ.
pub fn beta_deficit(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let s = (2.0 * theta).sin();
    let c = (2.0 * theta).cos();
    let r = (1.0 + s * s).sqrt();
    Ok(4.0 * s * s / (r * (r + c)))
}

/// `μ(θ) = atan(sin 2θ)`; the Alice measurement angle.
pub fn mu_of_theta(theta: f64) -> f64 {
    (2.0 * theta).sin().atan()
}

pub fn eval_inequality(c: &CorrelatorSet, p: &BellParams) -> f64 {
    p.beta * c.b0 + p.alpha * (c.e00 + c.e10) + c.e01 - c.e11
}

pub fn classical_bound(p: &BellParams) -> f64 {
    p.beta + 2.0 * p.alpha
}

pub fn quantum_max(p: &BellParams) -> f64 {
    ((1.0 + p.alpha * p.alpha) * (4.0 + p.beta * p.beta)).sqrt()
}

/// `√(I_max² − I²)`, or an error when `I` exceeds the quantum maximum by more
/// than [`VIOLATION_TOL`]. Values in the tolerance band are clamped.
fn violation_gap(i_value: f64, p: &BellParams) -> Result<f64> {
    let i_max = quantum_max(p);
    if !i_value.is_finite() || i_value > i_max + VIOLATION_TOL {
        return Err(domain(format!(
            "Bell value {i_value} exceeds the quantum maximum {i_max}"
        )));
    }
    let i = i_value.min(i_max);
    Ok((i_max * i_max - i * i).max(0.0).sqrt())
}

/// Upper bound on Bob's guessing probability for input 1 given `I_{α,β} = i_value`.
///
/// Values at or below the local bound certify nothing (`g = 1`).
pub fn guessing_bound_f(i_value: f64, p: &BellParams) -> Result<CertifiedBits> {
    let gap = violation_gap(i_value, p)?;
    if i_value <= classical_bound(p) {
        return Ok(CertifiedBits::from_guess(1.0));
    }
    let g = 0.5 + gap / (2.0 * p.slack);
    Ok(CertifiedBits::from_guess(g.min(1.0)))
}

/// Upper bound on `|⟨B1⟩|` given `I_{α,β} = i_value`, clamped to `[0, 1]`.
pub fn b1_bound(i_value: f64, p: &BellParams) -> Result<f64> {
    let gap = violation_gap(i_value, p)?;
    if i_value <= classical_bound(p) {
        return Ok(1.0);
    }
    Ok((gap / p.slack).clamp(0.0, 1.0))
}

/// Product-form randomness estimate for a measurement sequence.
///
/// This is the limit value `−Σ log₂ f(I_i)`: it becomes a bound on the
/// sequence guessing probability only as every step approaches its maximal
/// violation. It is not a finite-violation certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCertificate {
    pub bits: f64,
    pub steps: Vec<CertifiedBits>,
}

/// Combines per-step `(I_i, θ_i)` pairs, each scored with `α = 1, β = β(θ_i)`.
pub fn sequence_certificate(step_values: &[(f64, f64)]) -> Result<AsymptoticCertificate> {
    let steps = step_values
        .iter()
        .map(|&(i_value, theta)| guessing_bound_f(i_value, &BellParams::for_state(theta)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(AsymptoticCertificate {
        bits: steps.iter().map(|s| s.bits).sum(),
        steps,
    })
}

/// Correlators of a normalized 2×2 behavior.
pub fn correlators_from_distribution(dist: &Behavior) -> Result<CorrelatorSet> {
    if dist.alice_settings() != 2 || dist.bob_settings() != 2 {
        return Err(domain("correlators need a 2×2-setting behavior"));
    }
    let err = dist.normalization_error();
    if err > 1e-9 {
        return Err(Error::Normalization(err));
    }
    let bob = |y| dist.bob_marginal(y, Outcome::Plus) - dist.bob_marginal(y, Outcome::Minus);
    let joint = |x, y| {
        let mut e = 0.0;
        for a in Outcome::BOTH {
            for b in Outcome::BOTH {
                e += a.sign() * b.sign() * dist.prob(x, y, a, b);
            }
        }
        e.clamp(-1.0, 1.0)
    };
    Ok(CorrelatorSet {
        b0: bob(0).clamp(-1.0, 1.0),
        b1: bob(1).clamp(-1.0, 1.0),
        e00: joint(0, 0),
        e01: joint(0, 1),
        e10: joint(1, 0),
        e11: joint(1, 1),
    })
}
