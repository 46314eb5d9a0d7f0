//! Sequential measurements on one half of a partially entangled pair.
//!
//! Alice holds one qubit of `cos θ|00⟩ + sin θ|11⟩`. Bob measures his qubit
//! `n` times; at step `i` he either measures `σ_z` projectively (`y_i = 0`)
//! or applies the two-outcome Kraus pair `M_±(ξ_i)` (`y_i = 1`), after which
//! he rotates his qubit so the post-measurement state is again of the form
//! `(U ⊗ I)(cos θ'|00⟩ + sin θ'|11⟩)`. For every step and every history of
//! earlier outcomes Alice has two observables tuned to that branch.
//!
//! [`run_sequence`] builds the branch tree along the all-`y = 1` path and the
//! exact joint distribution `p(a, b⃗ | x, y⃗)` over every input combination.
//!
//! Bit conventions: outcome `+1` is bit 0 and `−1` is bit 1; histories,
//! input vectors and outcome vectors are packed with the first step as the
//! most significant bit.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, Outcome};
use crate::error::{domain, Error, Result};
use crate::par::{self, Exec};
use crate::qcore::{
    alice_operator, apply_bob, norm_sqr, schmidt_canonicalize, Cx, Mat2, PureBipartiteState,
};

/// Below this probability a branch is flagged instead of renormalized.
pub const NULL_BRANCH_PROB: f64 = 1e-14;

/// Rounding slack accepted at the upper end of angle ranges.
const ANGLE_SLACK: f64 = 1e-12;

/// Default cap on the sequence length accepted by [`run_sequence`].
pub const DEFAULT_MAX_LEN: usize = 8;

/// `cos θ|00⟩ + sin θ|11⟩` for `θ ∈ [0, π/2]`.
pub fn psi_theta(theta: f64) -> Result<PureBipartiteState> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(domain(format!("θ must lie in [0, π/2], got {theta}")));
    }
    PureBipartiteState::from_real([theta.cos(), 0.0, 0.0, theta.sin()])
}

/// Whether `psi_theta(theta)` is a product state.
pub fn is_separable(theta: f64) -> bool {
    let s = (2.0 * theta).sin().abs();
    s < 1e-15
}

/// `M_±(ξ) = cos ξ |±⟩⟨±| + sin ξ |∓⟩⟨∓|` in the computational basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausPair {
    xi: f64,
    plus: Mat2,
    minus: Mat2,
}

pub fn kraus_pair(xi: f64) -> Result<KrausPair> {
    KrausPair::new(xi)
}

impl KrausPair {
    pub fn new(xi: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::FRAC_PI_4 + ANGLE_SLACK).contains(&xi) {
            return Err(domain(format!("ξ must lie in [0, π/4], got {xi}")));
        }
        let xi = xi.min(std::f64::consts::FRAC_PI_4);
        let (s, c) = xi.sin_cos();
        let d = 0.5 * (c + s);
        let o = 0.5 * (c - s);
        Ok(Self {
            xi,
            plus: Mat2::from_real([[d, o], [o, d]]),
            minus: Mat2::from_real([[d, -o], [-o, d]]),
        })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn plus(&self) -> &Mat2 {
        &self.plus
    }

    pub fn minus(&self) -> &Mat2 {
        &self.minus
    }

    pub fn op(&self, b: Outcome) -> &Mat2 {
        match b {
            Outcome::Plus => &self.plus,
            Outcome::Minus => &self.minus,
        }
    }

    /// `M_+†M_+ − M_−†M_−`, equal to `cos 2ξ σ_x`.
    pub fn effective_observable(&self) -> Mat2 {
        self.plus.adjoint() * self.plus - self.minus.adjoint() * self.minus
    }

    /// `max |M_+†M_+ + M_−†M_− − I|`.
    pub fn completeness_error(&self) -> f64 {
        (self.plus.adjoint() * self.plus + self.minus.adjoint() * self.minus)
            .max_abs_diff(&Mat2::identity())
    }
}

/// One outcome of a Bob measurement. `post` is `None` for a flagged
/// zero-probability branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BobBranch {
    pub outcome: Outcome,
    pub prob: f64,
    pub post: Option<PureBipartiteState>,
}

impl BobBranch {
    pub fn is_null(&self) -> bool {
        self.post.is_none()
    }
}

/// Applies `I ⊗ M_b` for both outcomes and renormalizes.
pub fn measure_bob(s: &PureBipartiteState, kp: &KrausPair) -> [BobBranch; 2] {
    Outcome::BOTH.map(|b| {
        let v = apply_bob(s.amps(), kp.op(b));
        let prob = norm_sqr(&v);
        let post = if prob < NULL_BRANCH_PROB {
            None
        } else {
            PureBipartiteState::normalized(v)
        };
        BobBranch {
            outcome: b,
            prob,
            post,
        }
    })
}

/// Schmidt angle, Alice rotation and Bob correction of a post-measurement
/// state: `(I ⊗ v†)|post⟩ = (u ⊗ I)(cos θ'|00⟩ + sin θ'|11⟩)`.
pub fn canonicalize_branch(post: &PureBipartiteState) -> (f64, Mat2, Mat2) {
    let f = schmidt_canonicalize(post);
    (f.theta, f.u_alice, f.v_bob)
}

/// `U (cos μ σ_z + (−1)^k sin μ σ_x) U†` with `tan μ = sin 2θ`.
pub fn alice_observable(theta_branch: f64, u_accum: &Mat2, k: u8) -> Mat2 {
    let mu = (2.0 * theta_branch).sin().atan();
    let sign = if k == 0 { 1.0 } else { -1.0 };
    let local = Mat2::pauli_z().scale_re(mu.cos()) + Mat2::pauli_x().scale_re(sign * mu.sin());
    local.conjugate_by(u_accum)
}

fn history_bits(history: &[Outcome]) -> usize {
    history.iter().fold(0, |acc, b| acc << 1 | b.index())
}

fn bits_history(bits: usize, len: usize) -> Vec<Outcome> {
    (0..len)
        .map(|i| Outcome::from_index(bits >> (len - 1 - i) & 1))
        .collect()
}

/// Node of the branch tree along the all-`y = 1` path.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub history: Vec<Outcome>,
    pub theta: f64,
    /// Accumulated Alice rotation `U` of the canonical form.
    pub u_alice: Mat2,
    /// Bob's correction applied on entering this node (`I` at the root).
    pub v_correction: Mat2,
    pub branch_prob: f64,
    /// The step leading here had probability below [`NULL_BRANCH_PROB`].
    pub null: bool,
}

/// All branch nodes of depth `0..=n`, stored level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTree {
    pub theta1: f64,
    pub xis: Vec<f64>,
    nodes: Vec<BranchRecord>,
}

impl BranchTree {
    pub fn depth(&self) -> usize {
        self.xis.len()
    }

    pub fn nodes(&self) -> &[BranchRecord] {
        &self.nodes
    }

    pub fn node(&self, history: &[Outcome]) -> &BranchRecord {
        &self.nodes[(1 << history.len()) - 1 + history_bits(history)]
    }

    pub fn level(&self, depth: usize) -> &[BranchRecord] {
        &self.nodes[(1 << depth) - 1..(1 << (depth + 1)) - 1]
    }

    /// Largest `|Σ branch_prob − 1|` over the levels.
    pub fn probability_error(&self) -> f64 {
        (0..=self.depth())
            .map(|d| (self.level(d).iter().map(|r| r.branch_prob).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Node {
            history: Vec<i8>,
            theta: f64,
            branch_prob: f64,
            u_alice: Vec<[f64; 2]>,
        }
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|r| Node {
                history: r.history.iter().map(|b| b.sign() as i8).collect(),
                theta: r.theta,
                branch_prob: r.branch_prob,
                u_alice: r.u_alice.0.iter().flatten().map(|z| [z.re, z.im]).collect(),
            })
            .collect();
        serde_json::json!({
            "theta1": self.theta1,
            "xis": self.xis,
            "nodes": nodes,
        })
    }
}

/// Alice's measurement choice `k` for step `step` (1-based) after Bob history `history`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AliceSetting {
    pub step: usize,
    pub history: Vec<Outcome>,
    pub k: u8,
}

impl AliceSetting {
    /// `x = 2(2^{i−1} − 1) + 2h + k`.
    pub fn index(&self) -> usize {
        2 * ((1 << (self.step - 1)) - 1) + 2 * history_bits(&self.history) + self.k as usize
    }

    pub fn from_index(x: usize) -> Self {
        let mut step = 1;
        while x >= 2 * ((1 << step) - 1) {
            step += 1;
        }
        let rem = x - 2 * ((1 << (step - 1)) - 1);
        Self {
            step,
            history: bits_history(rem / 2, step - 1),
            k: (rem % 2) as u8,
        }
    }
}

/// `2(2^n − 1)`.
pub fn alice_setting_count(n: usize) -> usize {
    2 * ((1 << n) - 1)
}

/// Exact `p(a, b⃗ | x, y⃗)` for a sequence of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDistribution {
    n: usize,
    table: Vec<f64>,
}

impl SequenceDistribution {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alice_settings(&self) -> usize {
        alice_setting_count(self.n)
    }

    /// Number of input vectors `y⃗`, and of outcome vectors `b⃗`.
    pub fn patterns(&self) -> usize {
        1 << self.n
    }

    fn idx(&self, x: usize, y: usize, a: Outcome, b: usize) -> usize {
        ((y * self.alice_settings() + x) * 2 + a.index()) * self.patterns() + b
    }

    /// `y` and `b` are packed bit vectors.
    pub fn prob(&self, x: usize, y: usize, a: Outcome, b: usize) -> f64 {
        self.table[self.idx(x, y, a, b)]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Probability of the outcome prefix `b⃗_{≤len}` given `(x, y⃗)`.
    pub fn bob_prefix_prob(&self, x: usize, y: usize, prefix: usize, len: usize) -> f64 {
        let shift = self.n - len;
        let mut s = 0.0;
        for a in Outcome::BOTH {
            for rest in 0..1usize << shift {
                s += self.prob(x, y, a, prefix << shift | rest);
            }
        }
        s
    }

    pub fn normalization_error(&self) -> f64 {
        self.table
            .chunks(2 * self.patterns())
            .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest change of Alice's marginal across `y⃗` or of Bob's across `x`.
    pub fn signaling_error(&self) -> f64 {
        let (nx, ny) = (self.alice_settings(), self.patterns());
        let mut err: f64 = 0.0;
        for x in 0..nx {
            for a in Outcome::BOTH {
                let m = |y| (0..ny).map(|b| self.prob(x, y, a, b)).sum::<f64>();
                let m0 = m(0);
                for y in 1..ny {
                    err = err.max((m(y) - m0).abs());
                }
            }
        }
        for y in 0..ny {
            for b in 0..ny {
                let m = |x| {
                    Outcome::BOTH
                        .iter()
                        .map(|&a| self.prob(x, y, a, b))
                        .sum::<f64>()
                };
                let m0 = m(0);
                for x in 1..nx {
                    err = err.max((m(x) - m0).abs());
                }
            }
        }
        err
    }

    /// Largest change of `p(b⃗_{≤i} | x, y⃗)` under changes of `y_{i+1..n}`.
    pub fn causality_error(&self) -> f64 {
        let n = self.n;
        let mut err: f64 = 0.0;
        for x in 0..self.alice_settings() {
            for len in 1..n {
                let shift = n - len;
                for y in 0..self.patterns() {
                    let base = y >> shift << shift;
                    if y == base {
                        continue;
                    }
                    for prefix in 0..1usize << len {
                        let d = self.bob_prefix_prob(x, y, prefix, len)
                            - self.bob_prefix_prob(x, base, prefix, len);
                        err = err.max(d.abs());
                    }
                }
            }
        }
        err
    }

    /// Fails unless normalization, no-signaling and causality hold within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.table.iter().any(|p| *p < 0.0) {
            return Err(Error::Consistency("negative probability".into()));
        }
        let e = self.normalization_error();
        if e > tol {
            return Err(Error::Normalization(e));
        }
        let s = self.signaling_error();
        if s > tol {
            return Err(Error::Consistency(format!("signaling deviation {s:e}")));
        }
        let c = self.causality_error();
        if c > tol {
            return Err(Error::Consistency(format!("causality deviation {c:e}")));
        }
        Ok(())
    }

    /// CSV with columns `x, y_vec, a, b_vec, p`; `y_vec` as bits, `b_vec` as `+`/`-`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            x: usize,
            y_vec: String,
            a: i8,
            b_vec: String,
            p: f64,
        }
        let mut out = csv::Writer::from_writer(w);
        let n = self.n;
        for x in 0..self.alice_settings() {
            for y in 0..self.patterns() {
                let y_vec: String = (0..n)
                    .map(|i| if y >> (n - 1 - i) & 1 == 1 { '1' } else { '0' })
                    .collect();
                for a in Outcome::BOTH {
                    for b in 0..self.patterns() {
                        out.serialize(Row {
                            x,
                            y_vec: y_vec.clone(),
                            a: a.sign() as i8,
                            b_vec: bits_history(b, n).iter().map(|o| o.symbol()).collect(),
                            p: self.prob(x, y, a, b),
                        })?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceOptions {
    pub max_len: usize,
    pub exec: Exec,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            exec: Exec::available(),
        }
    }
}

/// Branch tree and exact distribution for initial angle `theta1 ∈ [0, π/4]`
/// and strengths `xis`.
pub fn run_sequence(theta1: f64, xis: &[f64]) -> Result<(BranchTree, SequenceDistribution)> {
    run_sequence_with(theta1, xis, &SequenceOptions::default())
}

pub fn run_sequence_with(
    theta1: f64,
    xis: &[f64],
    opts: &SequenceOptions,
) -> Result<(BranchTree, SequenceDistribution)> {
    let n = xis.len();
    if n == 0 {
        return Err(domain("sequence length must be at least 1"));
    }
    if n > opts.max_len {
        return Err(Error::Capacity(format!(
            "sequence length {n} exceeds the cap of {}",
            opts.max_len
        )));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_4 + ANGLE_SLACK).contains(&theta1) {
        return Err(domain(format!("θ₁ must lie in [0, π/4], got {theta1}")));
    }
    let theta1 = theta1.min(std::f64::consts::FRAC_PI_4);
    let kraus = xis
        .iter()
        .map(|&xi| KrausPair::new(xi))
        .collect::<Result<Vec<_>>>()?;
    let tree = build_tree(theta1, xis, &kraus)?;
    let dist = build_distribution(&tree, &kraus, opts.exec)?;
    Ok((tree, dist))
}

fn build_tree(theta1: f64, xis: &[f64], kraus: &[KrausPair]) -> Result<BranchTree> {
    let mut nodes = vec![BranchRecord {
        history: Vec::new(),
        theta: theta1,
        u_alice: Mat2::identity(),
        v_correction: Mat2::identity(),
        branch_prob: 1.0,
        null: false,
    }];
    for (depth, kp) in kraus.iter().enumerate() {
        let start = (1 << depth) - 1;
        for h in 0..1usize << depth {
            let parent = nodes[start + h].clone();
            let local = psi_theta(parent.theta)?;
            for br in measure_bob(&local, kp) {
                let mut history = parent.history.clone();
                history.push(br.outcome);
                let child = match br.post {
                    Some(post) if !parent.null => {
                        let (theta, u_step, v) = canonicalize_branch(&post);
                        BranchRecord {
                            history,
                            theta,
                            u_alice: parent.u_alice * u_step,
                            v_correction: v,
                            branch_prob: parent.branch_prob * br.prob,
                            null: false,
                        }
                    }
                    _ => BranchRecord {
                        history,
                        theta: 0.0,
                        u_alice: parent.u_alice,
                        v_correction: Mat2::identity(),
                        branch_prob: parent.branch_prob * br.prob,
                        null: true,
                    },
                };
                nodes.push(child);
            }
        }
    }
    Ok(BranchTree {
        theta1,
        xis: xis.to_vec(),
        nodes,
    })
}

fn z_projector(b: Outcome) -> Mat2 {
    match b {
        Outcome::Plus => Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]),
        Outcome::Minus => Mat2::from_real([[0.0, 0.0], [0.0, 1.0]]),
    }
}

/// Bob's step operators: `[step][b]` for σ_z, and `[node][b]` with correction for σ̂_x.
struct BobOps {
    z: [Mat2; 2],
    /// Indexed by the child node's position in the tree.
    corrected: Vec<Mat2>,
}

fn bob_ops(tree: &BranchTree, kraus: &[KrausPair]) -> BobOps {
    let mut corrected = vec![Mat2::identity(); tree.nodes.len()];
    for (idx, node) in tree.nodes.iter().enumerate().skip(1) {
        let step = node.history.len() - 1;
        let b = *node.history.last().expect("non-root node");
        corrected[idx] = node.v_correction.adjoint() * *kraus[step].op(b);
    }
    BobOps {
        z: Outcome::BOTH.map(z_projector),
        corrected,
    }
}

/// Alice's reduced operators `Tr_B |w_{y,b}⟩⟨w_{y,b}|` for every outcome vector `b`.
fn chain_operators(tree: &BranchTree, ops: &BobOps, n: usize, y: usize) -> Vec<Mat2> {
    let root = psi_theta(tree.theta1).expect("validated angle");
    let mut vecs: Vec<[Cx; 4]> = vec![*root.amps()];
    for step in 0..n {
        let y_i = y >> (n - 1 - step) & 1;
        let mut next = Vec::with_capacity(vecs.len() * 2);
        for (prefix, w) in vecs.iter().enumerate() {
            for b in Outcome::BOTH {
                let m = if y_i == 1 {
                    let node = (1 << (step + 1)) - 1 + (prefix << 1 | b.index());
                    &ops.corrected[node]
                } else {
                    &ops.z[b.index()]
                };
                next.push(apply_bob(w, m));
            }
        }
        vecs = next;
    }
    vecs.iter().map(alice_operator).collect()
}

fn trace_product(a: &Mat2, b: &Mat2) -> f64 {
    let mut t = Cx::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            t += a.0[i][j] * b.0[j][i];
        }
    }
    t.re
}

/// Alice's observables in setting-index order.
pub fn alice_observables(tree: &BranchTree) -> Vec<Mat2> {
    (0..alice_setting_count(tree.depth()))
        .map(|x| {
            let s = AliceSetting::from_index(x);
            let node = tree.node(&s.history);
            alice_observable(node.theta, &node.u_alice, s.k)
        })
        .collect()
}

fn build_distribution(
    tree: &BranchTree,
    kraus: &[KrausPair],
    exec: Exec,
) -> Result<SequenceDistribution> {
    let n = tree.depth();
    let ops = bob_ops(tree, kraus);
    let observables = alice_observables(tree);
    let nx = observables.len();
    let nb = 1usize << n;
    let cell = nx * 2 * nb;
    let mut table = vec![0.0; cell * nb];
    par::fill_chunks(exec, &mut table, cell, |y, out| {
        let rhos = chain_operators(tree, &ops, n, y);
        for (x, obs) in observables.iter().enumerate() {
            for (b, rho) in rhos.iter().enumerate() {
                let tr = rho.trace().re;
                let corr = trace_product(obs, rho);
                for a in Outcome::BOTH {
                    let p = 0.5 * (tr + a.sign() * corr);
                    out[(x * 2 + a.index()) * nb + b] = p.max(0.0);
                }
            }
        }
    });
    Ok(SequenceDistribution { n, table })
}

/// `P^i(a, b_i | x_k, y_i)` between Alice's two step-`step` settings for
/// `history` and Bob's step-`step` inputs, conditioned on `history` having
/// occurred with `y_1 = … = y_{step−1} = 1`.
pub fn conditional_step_distribution(
    seq: &SequenceDistribution,
    step: usize,
    history: &[Outcome],
) -> Result<Behavior> {
    let n = seq.n;
    if step == 0 || step > n || history.len() != step - 1 {
        return Err(domain(format!(
            "step {step} with a history of length {} in a sequence of length {n}",
            history.len()
        )));
    }
    let h = history_bits(history);
    let shift = n - step;
    let xs = [0u8, 1].map(|k| {
        AliceSetting {
            step,
            history: history.to_vec(),
            k,
        }
        .index()
    });
    let all_ones = (1usize << n) - 1;
    let mut table = Vec::with_capacity(16);
    for x in xs {
        for y_i in 0..2usize {
            // Later inputs are irrelevant by causality; keep them at 1.
            let y = if y_i == 1 {
                all_ones
            } else {
                all_ones & !(1 << shift)
            };
            let denom = if step == 1 {
                1.0
            } else {
                seq.bob_prefix_prob(x, y, h, step - 1)
            };
            if denom < NULL_BRANCH_PROB {
                return Err(Error::Conditioning(format!(
                    "history has probability {denom:e}"
                )));
            }
            for a in Outcome::BOTH {
                for b in Outcome::BOTH {
                    let prefix = h << 1 | b.index();
                    let p: f64 = (0..1usize << shift)
                        .map(|rest| seq.prob(x, y, a, prefix << shift | rest))
                        .sum();
                    table.push(p / denom);
                }
            }
        }
    }
    Behavior::new(2, 2, table)
}

/// Frequencies sampled from a sequence distribution.
///
/// Alice picks her setting uniformly; Bob picks `y_i = 0` (σ_z) with
/// probability `gammas[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    n: usize,
    counts: Vec<u64>,
    cell_counts: Vec<u64>,
    shots: u64,
}

impl SampleTable {
    pub fn shots(&self) -> u64 {
        self.shots
    }

    /// Number of shots with inputs `(x, y)`.
    pub fn cell_count(&self, x: usize, y: usize) -> u64 {
        self.cell_counts[y * alice_setting_count(self.n) + x]
    }

    pub fn count(&self, x: usize, y: usize, a: Outcome, b: usize) -> u64 {
        let nb = 1usize << self.n;
        self.counts[((y * alice_setting_count(self.n) + x) * 2 + a.index()) * nb + b]
    }

    /// Empirical `p̂(a, b⃗ | x, y⃗)`; zero for cells that were never sampled.
    pub fn frequency(&self, x: usize, y: usize, a: Outcome, b: usize) -> f64 {
        let c = self.cell_count(x, y);
        if c == 0 {
            0.0
        } else {
            self.count(x, y, a, b) as f64 / c as f64
        }
    }
}

/// Shots per independently seeded RNG stream.
const SAMPLE_CHUNK: u64 = 1 << 16;

pub fn sample_mode(
    seq: &SequenceDistribution,
    gammas: &[f64],
    shots: u64,
    seed: u64,
    exec: Exec,
) -> Result<SampleTable> {
    let n = seq.n;
    if gammas.len() != n {
        return Err(domain(format!(
            "expected {n} σ_z probabilities, got {}",
            gammas.len()
        )));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(domain(format!(
            "σ_z probability must lie in (0, 1), got {g}"
        )));
    }
    if shots == 0 {
        return Err(domain("shots must be at least 1"));
    }
    let nx = seq.alice_settings();
    let nb = seq.patterns();
    let cells = nx * nb;
    let samplers = (0..cells)
        .map(|c| {
            let (y, x) = (c / nx, c % nx);
            let start = ((y * nx + x) * 2) * nb;
            WeightedIndex::new(&seq.table[start..start + 2 * nb])
                .map_err(|e| Error::Consistency(format!("cell ({x}, {y}): {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let chunks = shots.div_ceil(SAMPLE_CHUNK);
    let partial = par::map_indexed(exec, chunks as usize, |chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let todo = SAMPLE_CHUNK.min(shots - chunk as u64 * SAMPLE_CHUNK);
        let mut counts = vec![0u64; cells * 2 * nb];
        let mut cell_counts = vec![0u64; cells];
        for _ in 0..todo {
            let x = rng.random_range(0..nx);
            let mut y = 0usize;
            for g in gammas {
                y = y << 1 | usize::from(rng.random::<f64>() >= *g);
            }
            let c = y * nx + x;
            let o = samplers[c].sample(&mut rng);
            cell_counts[c] += 1;
            counts[c * 2 * nb + o] += 1;
        }
        (counts, cell_counts)
    });
    let mut counts = vec![0u64; cells * 2 * nb];
    let mut cell_counts = vec![0u64; cells];
    for (c, cc) in partial {
        counts.iter_mut().zip(c).for_each(|(t, v)| *t += v);
        cell_counts.iter_mut().zip(cc).for_each(|(t, v)| *t += v);
    }
    Ok(SampleTable {
        n,
        counts,
        cell_counts,
        shots,
    })
}
