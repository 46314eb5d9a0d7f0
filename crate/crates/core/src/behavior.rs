//! Two-party conditional distributions `p(a, b | x, y)` with dichotomic outcomes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dichotomic measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    /// Table index: `Plus -> 0`, `Minus -> 1`.
    pub fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
        }
    }
}

/// `p(a, b | x, y)` for `x < alice_settings`, `y < bob_settings`, `a, b ∈ {+1, −1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    alice_settings: usize,
    bob_settings: usize,
    table: Vec<f64>,
}

impl Behavior {
    pub fn new(alice_settings: usize, bob_settings: usize, table: Vec<f64>) -> Result<Self> {
        if alice_settings == 0 || bob_settings == 0 {
            return Err(Error::Domain("setting counts must be at least 1".into()));
        }
        if table.len() != alice_settings * bob_settings * 4 {
            return Err(Error::Domain(format!(
                "expected {} entries, got {}",
                alice_settings * bob_settings * 4,
                table.len()
            )));
        }
        if let Some(v) = table.iter().find(|v| !v.is_finite() || **v < -1e-12) {
            return Err(Error::Domain(format!("invalid probability {v}")));
        }
        Ok(Self {
            alice_settings,
            bob_settings,
            table,
        })
    }

    pub fn from_fn(
        alice_settings: usize,
        bob_settings: usize,
        f: impl Fn(usize, usize, Outcome, Outcome) -> f64,
    ) -> Result<Self> {
        let mut table = Vec::with_capacity(alice_settings * bob_settings * 4);
        for x in 0..alice_settings {
            for y in 0..bob_settings {
                for a in Outcome::BOTH {
                    for b in Outcome::BOTH {
                        table.push(f(x, y, a, b));
                    }
                }
            }
        }
        Self::new(alice_settings, bob_settings, table)
    }

    pub fn alice_settings(&self) -> usize {
        self.alice_settings
    }

    pub fn bob_settings(&self) -> usize {
        self.bob_settings
    }

    fn idx(&self, x: usize, y: usize, a: Outcome, b: Outcome) -> usize {
        ((x * self.bob_settings + y) * 2 + a.index()) * 2 + b.index()
    }

    pub fn prob(&self, x: usize, y: usize, a: Outcome, b: Outcome) -> f64 {
        self.table[self.idx(x, y, a, b)]
    }

    /// `p(a | x)` averaged over Bob's inputs.
    pub fn alice_marginal(&self, x: usize, a: Outcome) -> f64 {
        let s: f64 = (0..self.bob_settings)
            .map(|y| {
                Outcome::BOTH
                    .iter()
                    .map(|&b| self.prob(x, y, a, b))
                    .sum::<f64>()
            })
            .sum();
        s / self.bob_settings as f64
    }

    /// `p(b | y)` averaged over Alice's inputs.
    pub fn bob_marginal(&self, y: usize, b: Outcome) -> f64 {
        let s: f64 = (0..self.alice_settings)
            .map(|x| {
                Outcome::BOTH
                    .iter()
                    .map(|&a| self.prob(x, y, a, b))
                    .sum::<f64>()
            })
            .sum();
        s / self.alice_settings as f64
    }

    /// Largest `|Σ_{a,b} p(a,b|x,y) − 1|` over input pairs.
    pub fn normalization_error(&self) -> f64 {
        self.table
            .chunks(4)
            .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of either party's marginal across the other party's inputs.
    pub fn signaling_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for x in 0..self.alice_settings {
            for a in Outcome::BOTH {
                let m: Vec<f64> = (0..self.bob_settings)
                    .map(|y| Outcome::BOTH.iter().map(|&b| self.prob(x, y, a, b)).sum())
                    .collect();
                err = err.max(spread(&m));
            }
        }
        for y in 0..self.bob_settings {
            for b in Outcome::BOTH {
                let m: Vec<f64> = (0..self.alice_settings)
                    .map(|x| Outcome::BOTH.iter().map(|&a| self.prob(x, y, a, b)).sum())
                    .collect();
                err = err.max(spread(&m));
            }
        }
        err
    }

    /// Fails with `Normalization` or `Consistency` if the table is not a
    /// normalized no-signaling behavior within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.normalization_error();
        if n > tol {
            return Err(Error::Normalization(n));
        }
        let s = self.signaling_error();
        if s > tol {
            return Err(Error::Consistency(format!("signaling deviation {s:e}")));
        }
        Ok(())
    }
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_valid() {
        let u = Behavior::from_fn(2, 3, |_, _, _, _| 0.25).unwrap();
        assert!(u.validate(1e-12).is_ok());
        assert_eq!(u.alice_marginal(1, Outcome::Minus), 0.5);
        assert_eq!(u.bob_marginal(2, Outcome::Plus), 0.5);
    }

    #[test]
    fn signaling_is_detected() {
        // Bob's outcome copies Alice's input.
        let s = Behavior::from_fn(2, 2, |x, _, _a, b| {
            let bx = if x == 0 {
                Outcome::Plus
            } else {
                Outcome::Minus
            };
            if b == bx {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(matches!(s.validate(1e-9), Err(Error::Consistency(_))));
        assert!(Behavior::new(2, 2, vec![0.1; 16])
            .unwrap()
            .validate(1e-9)
            .is_err());
        assert!(Behavior::new(2, 2, vec![0.1; 15]).is_err());
    }
}
