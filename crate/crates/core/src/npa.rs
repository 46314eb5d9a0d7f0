//! Moment-matrix relaxations for the two-party dichotomic scenario.
//!
//! Each setting contributes one projector, onto outcome `+1`; the `−1`
//! probabilities follow by complement. Moment matrices are real symmetric,
//! so a word and its reverse share one moment.
//!
//! The guessing problem splits the observed behavior into one sub-behavior
//! per guess `e ∈ {+1, −1}` of an adversary, each with its own moment matrix,
//! and maximizes the probability that Bob's outcome for the target input
//! equals `e`.

use std::collections::HashMap;
use std::fmt;

use log::warn;

use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, Outcome};
use crate::bell::{BellParams, CertifiedBits};
use crate::error::{Error, Result};
use crate::sdp::{self, Entry, SdpProblem, SdpSolution, SdpStatus, SolverOptions};

/// Highest relaxation level accepted by [`build_basis`].
pub const MAX_LEVEL: usize = 3;

/// Solver tolerance for relaxations.
pub const NPA_TOL: f64 = 1e-7;

/// Largest relative gap accepted from a dual-feasible solve that stalled.
/// At extremal behaviors the dual optimum is only approached as `|y| → ∞`,
/// so the gap cannot close in double precision; the dual objective is still
/// a valid upper bound.
pub const STALLED_GAP_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub alice_settings: usize,
    pub bob_settings: usize,
}

impl Scenario {
    pub fn new(alice_settings: usize, bob_settings: usize) -> Result<Self> {
        if alice_settings == 0 || bob_settings == 0 {
            return Err(Error::Domain("setting counts must be at least 1".into()));
        }
        Ok(Self {
            alice_settings,
            bob_settings,
        })
    }

    pub fn two_by_two() -> Self {
        Self {
            alice_settings: 2,
            bob_settings: 2,
        }
    }
}

/// Projector onto outcome `+1` of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    A(usize),
    B(usize),
}

/// A product of projectors, kept in normal form: Alice letters first, no
/// letter repeated twice in a row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn new(letters: &[Letter]) -> Self {
        let mut a: Vec<Letter> = letters
            .iter()
            .copied()
            .filter(|l| matches!(l, Letter::A(_)))
            .collect();
        let mut b: Vec<Letter> = letters
            .iter()
            .copied()
            .filter(|l| matches!(l, Letter::B(_)))
            .collect();
        a.dedup();
        b.dedup();
        a.extend(b);
        Word(a)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The adjoint word.
    pub fn reversed(&self) -> Word {
        let mut l = self.0.clone();
        l.reverse();
        Word::new(&l)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut l = self.0.clone();
        l.extend_from_slice(&other.0);
        Word::new(&l)
    }

    /// Representative shared by `w` and its adjoint.
    pub fn moment_key(&self) -> Word {
        let r = self.reversed();
        if r < *self {
            r
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for l in &self.0 {
            match l {
                Letter::A(x) => write!(f, "A{x}")?,
                Letter::B(y) => write!(f, "B{y}")?,
            }
        }
        Ok(())
    }
}

/// Operator words indexing the rows of a moment matrix, with the grouping of
/// matrix positions into shared moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    pub scenario: Scenario,
    pub level: usize,
    words: Vec<Word>,
    /// Upper-triangle positions grouped by moment; the first is the representative.
    groups: Vec<Vec<(usize, usize)>>,
    group_of: HashMap<Word, usize>,
}

impl MonomialBasis {
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Number of distinct moments.
    pub fn moment_count(&self) -> usize {
        self.groups.len()
    }

    /// Representative matrix position of the moment `⟨w⟩`.
    pub fn position(&self, w: &Word) -> Option<(usize, usize)> {
        self.group_of
            .get(&w.moment_key())
            .map(|&g| self.groups[g][0])
    }
}

pub fn build_basis(s: Scenario, level: usize) -> Result<MonomialBasis> {
    if level == 0 {
        return Err(Error::Domain("relaxation level must be at least 1".into()));
    }
    if level > MAX_LEVEL {
        return Err(Error::Capacity(format!(
            "relaxation level {level} exceeds {MAX_LEVEL}"
        )));
    }
    let letters: Vec<Letter> = (0..s.alice_settings)
        .map(Letter::A)
        .chain((0..s.bob_settings).map(Letter::B))
        .collect();
    let mut words = vec![Word::identity()];
    let mut frontier = vec![Vec::<Letter>::new()];
    for len in 1..=level {
        let mut next = Vec::new();
        let mut found = Vec::new();
        for prefix in &frontier {
            for &l in &letters {
                let mut raw = prefix.clone();
                raw.push(l);
                let w = Word::new(&raw);
                if w.len() == len {
                    found.push(w);
                    next.push(raw);
                }
            }
        }
        found.sort();
        found.dedup();
        words.extend(found);
        frontier = next;
    }

    let n = words.len();
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut group_of: HashMap<Word, usize> = HashMap::new();
    for i in 0..n {
        for j in i..n {
            let key = words[i].reversed().concat(&words[j]).moment_key();
            let g = *group_of.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push((i, j));
        }
    }
    Ok(MonomialBasis {
        scenario: s,
        level,
        words,
        groups,
        group_of,
    })
}

/// `coeff · X[r][c]` as a symmetric-entry coefficient.
fn moment_entry(block: usize, (r, c): (usize, usize), coeff: f64) -> Entry {
    Entry::new(block, r, c, if r == c { coeff } else { 0.5 * coeff })
}

/// A linear functional of one- and two-body correlators plus a constant:
/// `constant + Σ a_x⟨A_x⟩ + Σ b_y⟨B_y⟩ + Σ j_xy⟨A_x B_y⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellExpr {
    pub scenario: Scenario,
    pub constant: f64,
    pub alice: Vec<f64>,
    pub bob: Vec<f64>,
    /// Row-major over `(x, y)`.
    pub joint: Vec<f64>,
}

impl BellExpr {
    pub fn zero(scenario: Scenario) -> Self {
        Self {
            scenario,
            constant: 0.0,
            alice: vec![0.0; scenario.alice_settings],
            bob: vec![0.0; scenario.bob_settings],
            joint: vec![0.0; scenario.alice_settings * scenario.bob_settings],
        }
    }

    /// `β⟨B0⟩ + α(⟨A0B0⟩ + ⟨A1B0⟩) + ⟨A0B1⟩ − ⟨A1B1⟩`.
    pub fn tilted(p: &BellParams) -> Self {
        let mut e = Self::zero(Scenario::two_by_two());
        e.bob[0] = p.beta();
        e.joint = vec![p.alpha(), 1.0, p.alpha(), -1.0];
        e
    }

    pub fn chsh() -> Self {
        Self::tilted(&BellParams::chsh())
    }

    /// Value on a behavior of the same scenario.
    pub fn evaluate(&self, p: &Behavior) -> f64 {
        let (na, nb) = (self.scenario.alice_settings, self.scenario.bob_settings);
        let mut v = self.constant;
        for x in 0..na {
            for y in 0..nb {
                let mut e = 0.0;
                for a in Outcome::BOTH {
                    for b in Outcome::BOTH {
                        e += a.sign() * b.sign() * p.prob(x, y, a, b);
                    }
                }
                v += self.joint[x * nb + y] * e;
            }
        }
        for x in 0..na {
            v += self.alice[x] * (2.0 * p.alice_marginal(x, Outcome::Plus) - 1.0);
        }
        for y in 0..nb {
            v += self.bob[y] * (2.0 * p.bob_marginal(y, Outcome::Plus) - 1.0);
        }
        v
    }

    /// The same functional on projector moments, with `⟨1⟩` carrying the constant.
    pub fn projector_form(&self) -> Vec<(Word, f64)> {
        let (na, nb) = (self.scenario.alice_settings, self.scenario.bob_settings);
        let mut one = self.constant;
        let mut pa = vec![0.0; na];
        let mut pb = vec![0.0; nb];
        let mut terms = Vec::new();
        // ⟨A⟩ = 2⟨Π_A⟩ − 1
        for x in 0..na {
            pa[x] += 2.0 * self.alice[x];
            one -= self.alice[x];
        }
        for y in 0..nb {
            pb[y] += 2.0 * self.bob[y];
            one -= self.bob[y];
        }
        // ⟨AB⟩ = 4⟨Π_AΠ_B⟩ − 2⟨Π_A⟩ − 2⟨Π_B⟩ + 1
        for x in 0..na {
            for y in 0..nb {
                let j = self.joint[x * nb + y];
                if j != 0.0 {
                    terms.push((Word::new(&[Letter::A(x), Letter::B(y)]), 4.0 * j));
                    pa[x] -= 2.0 * j;
                    pb[y] -= 2.0 * j;
                    one += j;
                }
            }
        }
        let mut out = vec![(Word::identity(), one)];
        out.extend((0..na).map(|x| (Word::new(&[Letter::A(x)]), pa[x])));
        out.extend((0..nb).map(|y| (Word::new(&[Letter::B(y)]), pb[y])));
        out.extend(terms);
        out.retain(|(_, c)| *c != 0.0);
        out
    }
}

fn functional_entries(
    basis: &MonomialBasis,
    block: usize,
    terms: &[(Word, f64)],
) -> Result<Vec<Entry>> {
    terms
        .iter()
        .map(|(w, c)| {
            let pos = basis
                .position(w)
                .ok_or_else(|| Error::Domain(format!("word {w} is not in the relaxation")))?;
            Ok(moment_entry(block, pos, *c))
        })
        .collect()
}

/// Ties every position of each moment group to its representative.
fn add_linking(p: &mut SdpProblem, basis: &MonomialBasis, block: usize) {
    for g in &basis.groups {
        let rep = g[0];
        for &pos in &g[1..] {
            p.add_constraint(
                vec![
                    moment_entry(block, pos, 1.0),
                    moment_entry(block, rep, -1.0),
                ],
                0.0,
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuessingMode {
    /// Every observed probability is reproduced by the mixture.
    FullStatistics,
    /// Only the value `t` of a Bell functional is reproduced.
    BellValue(BellExpr, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuessingSdp {
    pub problem: SdpProblem,
    pub target_input: usize,
}

impl GuessingSdp {
    pub fn write_sdpa<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.problem.write_sdpa(w)
    }
}

fn check_behavior(p_obs: &Behavior, basis: &MonomialBasis) -> Result<()> {
    let s = basis.scenario;
    if p_obs.alice_settings() != s.alice_settings || p_obs.bob_settings() != s.bob_settings {
        return Err(Error::Domain(format!(
            "behavior has {}×{} settings, relaxation expects {}×{}",
            p_obs.alice_settings(),
            p_obs.bob_settings(),
            s.alice_settings,
            s.bob_settings
        )));
    }
    p_obs.validate(1e-9)
}

pub fn build_guessing_sdp(
    p_obs: &Behavior,
    target_input: usize,
    basis: &MonomialBasis,
    mode: &GuessingMode,
) -> Result<GuessingSdp> {
    check_behavior(p_obs, basis)?;
    let s = basis.scenario;
    if target_input >= s.bob_settings {
        return Err(Error::Domain(format!("no Bob input {target_input}")));
    }
    let n = basis.size();
    let mut p = SdpProblem::new(vec![n, n]);
    let one = Word::identity();
    let target = Word::new(&[Letter::B(target_input)]);
    let pos_one = basis.position(&one).expect("identity is in every basis");
    let pos_target = basis.position(&target).expect("level ≥ 1");
    // Block 0 guesses +1, block 1 guesses −1.
    p.set_objective(vec![
        moment_entry(0, pos_target, 1.0),
        moment_entry(1, pos_one, 1.0),
        moment_entry(1, pos_target, -1.0),
    ]);
    add_linking(&mut p, basis, 0);
    add_linking(&mut p, basis, 1);

    let both = |pos| vec![moment_entry(0, pos, 1.0), moment_entry(1, pos, 1.0)];
    p.add_constraint(both(pos_one), 1.0);
    match mode {
        GuessingMode::FullStatistics => {
            for x in 0..s.alice_settings {
                let w = Word::new(&[Letter::A(x)]);
                let v = p_obs.alice_marginal(x, Outcome::Plus);
                p.add_constraint(both(basis.position(&w).expect("level ≥ 1")), v);
            }
            for y in 0..s.bob_settings {
                let w = Word::new(&[Letter::B(y)]);
                let v = p_obs.bob_marginal(y, Outcome::Plus);
                p.add_constraint(both(basis.position(&w).expect("level ≥ 1")), v);
            }
            for x in 0..s.alice_settings {
                for y in 0..s.bob_settings {
                    let w = Word::new(&[Letter::A(x), Letter::B(y)]);
                    let pos = basis.position(&w).ok_or_else(|| {
                        Error::Domain("joint moments need a level with AB words".into())
                    })?;
                    p.add_constraint(both(pos), p_obs.prob(x, y, Outcome::Plus, Outcome::Plus));
                }
            }
        }
        GuessingMode::BellValue(expr, t) => {
            if expr.scenario != s {
                return Err(Error::Domain("Bell expression scenario mismatch".into()));
            }
            let terms = expr.projector_form();
            let mut entries = functional_entries(basis, 0, &terms)?;
            entries.extend(functional_entries(basis, 1, &terms)?);
            p.add_constraint(entries, *t);
        }
    }
    Ok(GuessingSdp {
        problem: p,
        target_input,
    })
}

/// Certified guessing bound with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessingResult {
    pub certified: CertifiedBits,
    /// Weight of each adversary guess, `(+1, −1)`.
    pub weights: (f64, f64),
    pub solution: SdpSolution,
}

pub fn solve_guessing(
    p_obs: &Behavior,
    target_input: usize,
    basis: &MonomialBasis,
    mode: &GuessingMode,
    opts: &SolverOptions,
) -> Result<GuessingResult> {
    let sdp = build_guessing_sdp(p_obs, target_input, basis, mode)?;
    let sol = sdp::solve(&sdp.problem, opts)?;
    let sol = if sol.status == SdpStatus::NumericalFailure
        && sol.dual_res() <= opts.tol
        && sol.gap() <= STALLED_GAP_TOL
    {
        warn!(
            "guessing SDP stalled at gap {:.1e}; reporting the dual bound",
            sol.gap()
        );
        sol
    } else {
        sol.require_optimal()?
    };
    let (r, _) = basis.position(&Word::identity()).expect("identity");
    let weights = (sol.x_blocks[0][(r, r)], sol.x_blocks[1][(r, r)]);
    Ok(GuessingResult {
        // The dual objective bounds the relaxation from above.
        certified: CertifiedBits::from_guess(sol.dual_objective),
        weights,
        solution: sol,
    })
}

/// Options at [`NPA_TOL`].
pub fn npa_options() -> SolverOptions {
    SolverOptions {
        tol: NPA_TOL,
        ..SolverOptions::default()
    }
}

/// Upper bound on the quantum maximum of `expr` at the basis level.
pub fn bell_max_sdp(expr: &BellExpr, basis: &MonomialBasis, opts: &SolverOptions) -> Result<f64> {
    Ok(bell_max_solution(expr, basis, opts)?.dual_objective)
}

/// Moment-matrix SDP maximizing `expr` at the basis level.
pub fn bell_max_problem(expr: &BellExpr, basis: &MonomialBasis) -> Result<SdpProblem> {
    if expr.scenario != basis.scenario {
        return Err(Error::Domain("Bell expression scenario mismatch".into()));
    }
    let n = basis.size();
    let mut p = SdpProblem::new(vec![n]);
    p.set_objective(functional_entries(basis, 0, &expr.projector_form())?);
    add_linking(&mut p, basis, 0);
    let one = basis.position(&Word::identity()).expect("identity");
    p.add_constraint(vec![moment_entry(0, one, 1.0)], 1.0);
    Ok(p)
}

pub fn bell_max_solution(
    expr: &BellExpr,
    basis: &MonomialBasis,
    opts: &SolverOptions,
) -> Result<SdpSolution> {
    let sol = sdp::solve(&bell_max_problem(expr, basis)?, opts)?;
    if sol.status != SdpStatus::Optimal {
        return sol.require_optimal();
    }
    Ok(sol)
}
