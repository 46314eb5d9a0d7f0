//! Dense primal–dual interior-point solver for small block-diagonal SDPs.
//!
//! ```text
//! primal:  maximize ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! dual:    minimize bᵀy     s.t. Σ y_i A_i − C = S ⪰ 0
//! ```
//!
//! Coefficient matrices are sparse and symmetric: an [`Entry`] at `(r, c)`
//! sets both `(r, c)` and `(c, r)`. The iteration is an infeasible-start
//! Mehrotra predictor–corrector with the HKM direction.
//!
//! Problems round-trip through the SDPA sparse text format:
//!
//! ```text
//! * comments
//! m
//! nblocks
//! d_1 d_2 …
//! b_1 … b_m
//! k blk i j v     (k = 0 for C, 1..m for A_k; 1-based, i ≤ j)
//! ```

use std::io::{BufRead, Write};

use log::{debug, log_enabled, trace, warn, Level};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One upper-triangle entry of a symmetric block-diagonal matrix (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        Self {
            block,
            row: row.min(col),
            col: row.max(col),
            value,
        }
    }
}

/// Sorts by position and sums duplicates; drops exact zeros.
fn canonical(mut entries: Vec<Entry>) -> Vec<Entry> {
    for e in entries.iter_mut() {
        *e = Entry::new(e.block, e.row, e.col, e.value);
    }
    entries.sort_by_key(|e| (e.block, e.row, e.col));
    let mut out: Vec<Entry> = Vec::with_capacity(entries.len());
    for e in entries {
        match out.last_mut() {
            Some(l) if (l.block, l.row, l.col) == (e.block, e.row, e.col) => l.value += e.value,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.value != 0.0);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub objective: Vec<Entry>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>) -> Self {
        Self {
            block_dims,
            ..Default::default()
        }
    }

    pub fn set_objective(&mut self, entries: Vec<Entry>) {
        self.objective = canonical(entries);
    }

    /// Adds `⟨A, X⟩ = rhs` and returns its index.
    pub fn add_constraint(&mut self, entries: Vec<Entry>, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            entries: canonical(entries),
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Total matrix order `Σ d_k`.
    pub fn order(&self) -> usize {
        self.block_dims.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_dims.is_empty() || self.block_dims.contains(&0) {
            return Err(Error::Domain("block sizes must be positive".into()));
        }
        let check = |e: &Entry| -> Result<()> {
            let d = *self
                .block_dims
                .get(e.block)
                .ok_or_else(|| Error::Domain(format!("block {} out of range", e.block)))?;
            if e.col >= d {
                return Err(Error::Domain(format!(
                    "entry ({}, {}) outside block {} of size {d}",
                    e.row, e.col, e.block
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Domain("non-finite coefficient".into()));
            }
            Ok(())
        };
        self.objective.iter().try_for_each(check)?;
        for c in &self.constraints {
            c.entries.iter().try_for_each(check)?;
            if !c.rhs.is_finite() {
                return Err(Error::Domain("non-finite right-hand side".into()));
            }
        }
        Ok(())
    }

    /// `⟨C, X⟩`.
    pub fn objective_value(&self, x: &[DMatrix<f64>]) -> f64 {
        pair(&self.objective, x)
    }

    /// `A(X)`.
    pub fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|c| pair(&c.entries, x)),
        )
    }

    /// `Σ y_i A_i`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out = self.zeros();
        for (c, &yi) in self.constraints.iter().zip(y.iter()) {
            scatter(&mut out, &c.entries, yi);
        }
        out
    }

    /// `C` as dense blocks.
    pub fn objective_matrix(&self) -> Vec<DMatrix<f64>> {
        let mut out = self.zeros();
        scatter(&mut out, &self.objective, 1.0);
        out
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|c| c.rhs),
        )
    }

    fn zeros(&self) -> Vec<DMatrix<f64>> {
        self.block_dims
            .iter()
            .map(|&d| DMatrix::zeros(d, d))
            .collect()
    }

    /// Writes the problem in SDPA sparse format.
    pub fn write_sdpa<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "* maximize <C,X> s.t. <A_k,X> = b_k, X psd")?;
        writeln!(w, "{}", self.constraints.len())?;
        writeln!(w, "{}", self.block_dims.len())?;
        let dims: Vec<String> = self.block_dims.iter().map(|d| d.to_string()).collect();
        writeln!(w, "{}", dims.join(" "))?;
        let rhs: Vec<String> = self.constraints.iter().map(|c| c.rhs.to_string()).collect();
        writeln!(w, "{}", rhs.join(" "))?;
        let mut line = |k: usize, e: &Entry| {
            writeln!(
                w,
                "{k} {} {} {} {}",
                e.block + 1,
                e.row + 1,
                e.col + 1,
                e.value
            )
        };
        for e in &self.objective {
            line(0, e)?;
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                line(k + 1, e)?;
            }
        }
        Ok(())
    }

    /// Reads a problem in SDPA sparse format.
    pub fn read_sdpa<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens: Vec<String> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('*') || t.starts_with('"') {
                continue;
            }
            let cleaned: String = t
                .chars()
                .map(|ch| if "{}(),".contains(ch) { ' ' } else { ch })
                .collect();
            tokens.extend(cleaned.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of input reading {what}")))
        };
        let int = |s: String| {
            s.parse::<i64>()
                .map_err(|_| Error::Parse(format!("expected an integer, got {s:?}")))
        };
        let real = |s: String| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("expected a number, got {s:?}")))
        };
        let m = int(next("m")?)?;
        let nblocks = int(next("block count")?)?;
        if m < 0 || nblocks < 1 {
            return Err(Error::Parse("invalid problem header".into()));
        }
        let mut dims = Vec::with_capacity(nblocks as usize);
        for _ in 0..nblocks {
            let d = int(next("block size")?)?;
            if d <= 0 {
                return Err(Error::Parse(format!("unsupported block size {d}")));
            }
            dims.push(d as usize);
        }
        let mut rhs = Vec::with_capacity(m as usize);
        for _ in 0..m {
            rhs.push(real(next("right-hand side")?)?);
        }
        let mut objective = Vec::new();
        let mut rows: Vec<Vec<Entry>> = vec![Vec::new(); m as usize];
        let mut rest: Vec<String> = Vec::new();
        for t in it.by_ref() {
            rest.push(t);
        }
        if !rest.len().is_multiple_of(5) {
            return Err(Error::Parse("entry lines need five fields".into()));
        }
        for f in rest.chunks(5) {
            let k = int(f[0].clone())?;
            let blk = int(f[1].clone())?;
            let i = int(f[2].clone())?;
            let j = int(f[3].clone())?;
            let v = real(f[4].clone())?;
            if k < 0 || k > m || blk < 1 || blk > nblocks || i < 1 || j < 1 {
                return Err(Error::Parse(format!(
                    "entry index out of range: {}",
                    f.join(" ")
                )));
            }
            let e = Entry::new(blk as usize - 1, i as usize - 1, j as usize - 1, v);
            if k == 0 {
                objective.push(e);
            } else {
                rows[k as usize - 1].push(e);
            }
        }
        let mut p = SdpProblem::new(dims);
        p.set_objective(objective);
        for (entries, b) in rows.into_iter().zip(rhs) {
            p.add_constraint(entries, b);
        }
        p.validate()?;
        Ok(p)
    }
}

/// `⟨A, M⟩ = tr(A M)` for symmetric `A` and any square blocks `M`.
fn pair(entries: &[Entry], m: &[DMatrix<f64>]) -> f64 {
    entries
        .iter()
        .map(|e| {
            let b = &m[e.block];
            if e.row == e.col {
                e.value * b[(e.row, e.row)]
            } else {
                e.value * (b[(e.row, e.col)] + b[(e.col, e.row)])
            }
        })
        .sum()
}

fn scatter(out: &mut [DMatrix<f64>], entries: &[Entry], scale: f64) {
    for e in entries {
        let v = scale * e.value;
        out[e.block][(e.row, e.col)] += v;
        if e.row != e.col {
            out[e.block][(e.col, e.row)] += v;
        }
    }
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn max_abs(m: &[DMatrix<f64>]) -> f64 {
    m.iter().map(|b| b.amax()).fold(0.0, f64::max)
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖A(X) − b‖_∞`.
    pub primal: f64,
    /// `‖A*(y) − S − C‖_max`.
    pub dual: f64,
    /// `|⟨C, X⟩ − bᵀy| / (1 + |bᵀy|)`.
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x_blocks: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub s_blocks: Vec<DMatrix<f64>>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        self.residuals.gap
    }

    pub fn primal_res(&self) -> f64 {
        self.residuals.primal
    }

    pub fn dual_res(&self) -> f64 {
        self.residuals.dual
    }

    /// Converts a non-optimal status into [`Error::Solver`].
    pub fn require_optimal(self) -> Result<Self> {
        if self.status == SdpStatus::Optimal {
            Ok(self)
        } else {
            Err(Error::Solver {
                message: format!("{:?} after {} iterations", self.status, self.iterations),
                primal_res: self.residuals.primal,
                dual_res: self.residuals.dual,
                gap: self.residuals.gap,
            })
        }
    }
}

pub fn residuals(
    p: &SdpProblem,
    x: &[DMatrix<f64>],
    y: &DVector<f64>,
    s: &[DMatrix<f64>],
) -> Residuals {
    let primal = (p.apply(x) - p.rhs()).amax();
    let c = p.objective_matrix();
    let ay = p.adjoint(y);
    let dual = ay
        .iter()
        .zip(s)
        .zip(&c)
        .map(|((a, s), c)| (a - s - c).amax())
        .fold(0.0, f64::max);
    let dobj = p.rhs().dot(y);
    let gap = (p.objective_value(x) - dobj).abs() / (1.0 + dobj.abs());
    Residuals { primal, dual, gap }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when gap and both residuals are below this.
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
    /// Drop constraints whose Gram pivot falls below this (relative).
    pub rank_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
            step_fraction: 0.98,
            rank_tol: 1e-10,
        }
    }
}

/// Indices of a maximal linearly independent subset of the constraints,
/// from a pivoted Cholesky factorization of their Gram matrix.
fn independent_rows(p: &SdpProblem, tol: f64) -> Vec<usize> {
    let m = p.num_constraints();
    let dense: Vec<Vec<DMatrix<f64>>> = p
        .constraints
        .iter()
        .map(|c| {
            let mut b = p.zeros();
            scatter(&mut b, &c.entries, 1.0);
            b
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = pair(&p.constraints[j].entries, &dense[i]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let scale = (0..m).map(|i| g[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut keep = Vec::new();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut diag: Vec<f64> = (0..m).map(|i| g[(i, i)]).collect();
    for k in 0..m {
        let (piv, &best) = (k..m)
            .map(|t| (t, &diag[perm[t]]))
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty range");
        if best <= tol * scale {
            break;
        }
        perm.swap(k, piv);
        let pk = perm[k];
        let lkk = best.sqrt();
        l[(pk, k)] = lkk;
        for &pt in &perm[k + 1..] {
            let mut v = g[(pt, pk)];
            for q in 0..k {
                v -= l[(pt, q)] * l[(pk, q)];
            }
            l[(pt, k)] = v / lkk;
            diag[pt] -= l[(pt, k)] * l[(pt, k)];
        }
        keep.push(pk);
    }
    keep.sort_unstable();
    keep
}

struct Reduced<'a> {
    p: &'a SdpProblem,
    rows: Vec<usize>,
}

impl Reduced<'_> {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows
                .iter()
                .map(|&i| pair(&self.p.constraints[i].entries, x)),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out = self.p.zeros();
        for (k, &i) in self.rows.iter().enumerate() {
            scatter(&mut out, &self.p.constraints[i].entries, y[k]);
        }
        out
    }

    fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|&i| self.p.constraints[i].rhs),
        )
    }

    fn full_y(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p.num_constraints());
        for (k, &i) in self.rows.iter().enumerate() {
            out[i] = y[k];
        }
        out
    }

    /// `M_ij = tr(A_i X A_j Z)`, symmetric for symmetric `X`, `Z`.
    fn schur(&self, x: &[DMatrix<f64>], z: &[DMatrix<f64>]) -> DMatrix<f64> {
        // Expand each entry into both of its positions.
        let expanded: Vec<Vec<(usize, usize, usize, f64)>> = self
            .rows
            .iter()
            .map(|&i| {
                let mut v = Vec::new();
                for e in &self.p.constraints[i].entries {
                    v.push((e.block, e.row, e.col, e.value));
                    if e.row != e.col {
                        v.push((e.block, e.col, e.row, e.value));
                    }
                }
                v
            })
            .collect();
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for &(bi, a, b, vi) in &expanded[i] {
                    for &(bj, c, d, vj) in &expanded[j] {
                        if bi == bj {
                            s += vi * vj * x[bi][(b, c)] * z[bi][(d, a)];
                        }
                    }
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Largest `α ≤ 1/fraction` with `X + α ΔX ⪰ 0`, times `fraction`, capped at 1.
fn step_length(x: &[DMatrix<f64>], dx: &[DMatrix<f64>], fraction: f64) -> Option<f64> {
    let mut alpha: f64 = 1.0;
    for (xb, db) in x.iter().zip(dx) {
        let l = Cholesky::new(xb.clone())?.unpack();
        let li_d = l.solve_lower_triangular(db)?;
        let w = l.solve_lower_triangular(&li_d.transpose())?;
        let ev = SymmetricEigen::new(sym(w)).eigenvalues;
        let lmin = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        if lmin < 0.0 {
            alpha = alpha.min(fraction / -lmin);
        }
    }
    Some(alpha)
}

fn inverse_blocks(s: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
    s.iter()
        .map(|b| Cholesky::new(b.clone()).map(|c| sym(c.inverse())))
        .collect()
}

/// Cholesky factor of the Jacobi-scaled Schur matrix, shifted only as far as needed.
struct SchurFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
    scale: DVector<f64>,
}

impl SchurFactor {
    fn new(m: &DMatrix<f64>) -> Option<Self> {
        let scale = m
            .diagonal()
            .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 });
        let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * scale[i] * scale[j]);
        if let Some(chol) = Cholesky::new(scaled.clone()) {
            return Some(Self { chol, scale });
        }
        let mut reg = 1e-14;
        while reg <= 1e-8 * (1.0 + 1e-9) {
            let mut shifted = scaled.clone();
            for i in 0..m.nrows() {
                shifted[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Some(Self { chol, scale });
            }
            reg *= 10.0;
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let t = rhs.component_mul(&self.scale);
        self.chol.solve(&t).component_mul(&self.scale)
    }
}

const REFINE_STEPS: usize = 8;

/// Iterations without improving the best iterate before giving up.
const STALL_ITERS: usize = 8;

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
}

pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    p.validate()?;
    let rows = independent_rows(p, opts.rank_tol);
    if rows.len() < p.num_constraints() {
        warn!(
            "dropping {} linearly dependent constraint(s)",
            p.num_constraints() - rows.len()
        );
    }
    let red = Reduced { p, rows };
    let b = red.rhs();
    let c = p.objective_matrix();
    let n = p.order() as f64;

    let norm_c = max_abs(&c);
    let norm_b = b.amax();
    let start = 10.0f64.max(n.sqrt()).max(norm_b).max(norm_c);
    let ident = |scale: f64| -> Vec<DMatrix<f64>> {
        p.block_dims
            .iter()
            .map(|&d| DMatrix::identity(d, d) * scale)
            .collect()
    };
    let mut it = Iterate {
        x: ident(start),
        y: DVector::zeros(red.m()),
        s: ident(start),
    };

    // Best iterate seen so far by its largest residual, returned when
    // round-off stalls the iteration.
    let mut best: Option<(f64, Iterate)> = None;
    let mut since_best = 0usize;

    let finish = |it: Iterate, status: SdpStatus, iterations: usize| -> SdpSolution {
        let y = red.full_y(&it.y);
        let res = residuals(p, &it.x, &y, &it.s);
        SdpSolution {
            primal_objective: p.objective_value(&it.x),
            dual_objective: p.rhs().dot(&y),
            residuals: res,
            x_blocks: it.x,
            y,
            s_blocks: it.s,
            status,
            iterations,
        }
    };

    // Tightest dual-feasible bound, preferred when the gap cannot close.
    let mut best_dual: Option<(f64, Iterate)> = None;

    let settle = |best: Option<(f64, Iterate)>,
                  best_dual: Option<(f64, Iterate)>,
                  it: Iterate,
                  status,
                  iterations| {
        let it = match (best, best_dual) {
            (Some((m, b)), _) if m <= opts.tol => b,
            (_, Some((_, d))) => d,
            (b, None) => b.map_or(it, |(_, b)| b),
        };
        let sol = finish(it, status, iterations);
        let r = sol.residuals;
        if r.primal <= opts.tol && r.dual <= opts.tol && r.gap <= opts.tol {
            SdpSolution {
                status: SdpStatus::Optimal,
                ..sol
            }
        } else {
            sol
        }
    };

    for iter in 0..opts.max_iter {
        let ax = red.apply(&it.x);
        let rp = &b - &ax;
        let ay = red.adjoint(&it.y);
        let rd: Vec<DMatrix<f64>> = ay
            .iter()
            .zip(&it.s)
            .zip(&c)
            .map(|((a, s), c)| a - s - c)
            .collect();
        let pobj = inner(&c, &it.x);
        let dobj = b.dot(&it.y);
        let gap = (pobj - dobj).abs() / (1.0 + dobj.abs());
        let (pres, dres) = (rp.amax(), max_abs(&rd));
        let mu = inner(&it.x, &it.s) / n;
        debug!(
            "iter {iter:3}  pobj {pobj:+.10e}  dobj {dobj:+.10e}  gap {gap:.2e}  pres {pres:.2e}  dres {dres:.2e}  mu {mu:.2e}"
        );
        if pres <= opts.tol && dres <= opts.tol && gap <= opts.tol {
            return Ok(finish(it, SdpStatus::Optimal, iter));
        }
        if dres <= opts.tol && best_dual.as_ref().is_none_or(|(d, _)| dobj < *d) {
            best_dual = Some((dobj, it.clone()));
        }
        // Infeasible iterates rank by residual, feasible ones by gap; a small
        // gap between infeasible iterates means nothing.
        let infeas = pres.max(dres);
        let merit = if infeas > opts.tol { 1.0 + infeas } else { gap };
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, it.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_ITERS {
                return Ok(settle(
                    best,
                    best_dual,
                    it,
                    SdpStatus::NumericalFailure,
                    iter,
                ));
            }
        }
        if dobj < -1e12 * (1.0 + norm_b) || pobj > 1e12 * (1.0 + norm_c) {
            return Ok(finish(it, SdpStatus::Infeasible, iter));
        }

        let Some(z) = inverse_blocks(&it.s) else {
            return Ok(settle(
                best,
                best_dual,
                it,
                SdpStatus::NumericalFailure,
                iter,
            ));
        };
        let schur = red.schur(&it.x, &z);
        if log_enabled!(Level::Trace) {
            let ev = SymmetricEigen::new(schur.clone()).eigenvalues;
            let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().cloned().fold(0.0, f64::max);
            trace!(
                "schur spectrum [{lo:.2e}, {hi:.2e}]  |y| {:.2e}",
                it.y.amax()
            );
        }
        let Some(chol) = SchurFactor::new(&schur) else {
            return Ok(settle(
                best,
                best_dual,
                it,
                SdpStatus::NumericalFailure,
                iter,
            ));
        };
        let x_rd_z: Vec<DMatrix<f64>> =
            it.x.iter()
                .zip(&rd)
                .zip(&z)
                .map(|((x, r), z)| x * r * z)
                .collect();
        let base = red.apply(&x_rd_z);

        let direction = |r: &[DMatrix<f64>]| {
            let build = |dy: &DVector<f64>| {
                let ady = red.adjoint(dy);
                let ds: Vec<DMatrix<f64>> = ady.iter().zip(&rd).map(|(a, r)| a + r).collect();
                let dx: Vec<DMatrix<f64>> = r
                    .iter()
                    .zip(&it.x)
                    .zip(&ds)
                    .zip(&z)
                    .map(|(((r, x), ds), z)| sym(r - x * ds * z))
                    .collect();
                (dx, ds)
            };
            let rhs = red.apply(r) - &base - &rp;
            let mut dy = chol.solve(&rhs);
            let (mut dx, mut ds) = build(&dy);
            // Refine against A(ΔX) = r_p, which the Schur solve only meets approximately.
            for _ in 0..REFINE_STEPS {
                let err = red.apply(&dx) - &rp;
                if err.amax() <= f64::EPSILON * (1.0 + rp.amax()) {
                    break;
                }
                dy += chol.solve(&err);
                (dx, ds) = build(&dy);
            }
            (dx, dy, ds)
        };

        // Predictor.
        let r_aff: Vec<DMatrix<f64>> = it.x.iter().map(|x| -x).collect();
        let (dx_a, _, ds_a) = direction(&r_aff);
        let (Some(ap), Some(ad)) = (
            step_length(&it.x, &dx_a, 1.0),
            step_length(&it.s, &ds_a, 1.0),
        ) else {
            return Ok(settle(
                best,
                best_dual,
                it,
                SdpStatus::NumericalFailure,
                iter,
            ));
        };
        let x_aff: Vec<DMatrix<f64>> = it.x.iter().zip(&dx_a).map(|(x, d)| x + d * ap).collect();
        let s_aff: Vec<DMatrix<f64>> = it.s.iter().zip(&ds_a).map(|(s, d)| s + d * ad).collect();
        let mu_aff = inner(&x_aff, &s_aff) / n;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let r_cor: Vec<DMatrix<f64>> =
            it.x.iter()
                .zip(&z)
                .zip(dx_a.iter().zip(&ds_a))
                .map(|((x, z), (dxa, dsa))| z * (sigma * mu) - x - sym(dxa * dsa * z))
                .collect();
        let (dx, dy, ds) = direction(&r_cor);
        let (Some(ap), Some(ad)) = (
            step_length(&it.x, &dx, opts.step_fraction),
            step_length(&it.s, &ds, opts.step_fraction),
        ) else {
            return Ok(settle(
                best,
                best_dual,
                it,
                SdpStatus::NumericalFailure,
                iter,
            ));
        };
        if ap < 1e-12 && ad < 1e-12 {
            return Ok(settle(
                best,
                best_dual,
                it,
                SdpStatus::NumericalFailure,
                iter,
            ));
        }
        for (x, d) in it.x.iter_mut().zip(&dx) {
            *x += d * ap;
        }
        for (s, d) in it.s.iter_mut().zip(&ds) {
            *s += d * ad;
        }
        it.y += dy * ad;
    }
    Ok(settle(
        best,
        best_dual,
        it,
        SdpStatus::MaxIter,
        opts.max_iter,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two() -> SdpProblem {
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(vec![Entry::new(0, 0, 1, 1.0)]);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], 1.0);
        p.add_constraint(vec![Entry::new(0, 1, 1, 1.0)], 1.0);
        p
    }

    fn trace_problem(d: usize) -> SdpProblem {
        let mut p = SdpProblem::new(vec![d]);
        let id: Vec<Entry> = (0..d).map(|i| Entry::new(0, i, i, 1.0)).collect();
        p.set_objective(id.clone());
        p.add_constraint(id, 1.0);
        p
    }

    fn min_eig(b: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(b.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_optimal(sol: &SdpSolution) {
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.gap() <= 1e-7 && sol.primal_res() <= 1e-7 && sol.dual_res() <= 1e-7);
        for b in sol.x_blocks.iter().chain(&sol.s_blocks) {
            assert!(min_eig(b) >= -1e-9);
            let shifted = b + DMatrix::identity(b.nrows(), b.nrows()) * 1e-9;
            assert!(Cholesky::new(shifted).is_some());
        }
    }

    #[test]
    fn psd_boundary_example() {
        let sol = solve(&two_by_two(), &SolverOptions::default()).unwrap();
        check_optimal(&sol);
        assert!(sol.primal_objective <= sol.dual_objective + 1e-8);
        assert!((sol.primal_objective - 2.0).abs() < 1e-6);
        assert!((sol.x_blocks[0][(0, 1)] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trace_example() {
        let sol = solve(&trace_problem(3), &SolverOptions::default()).unwrap();
        check_optimal(&sol);
        assert!((sol.dual_objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn dependent_rows_are_dropped() {
        let mut p = trace_problem(2);
        let dup = p.constraints[0]
            .entries
            .iter()
            .map(|e| Entry {
                value: 2.0 * e.value,
                ..*e
            })
            .collect();
        p.add_constraint(dup, 2.0);
        assert_eq!(independent_rows(&p, 1e-10).len(), 1);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        check_optimal(&sol);
        assert!((sol.primal_objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_problem_is_not_optimal() {
        // X_00 = −1 has no PSD solution.
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(vec![Entry::new(0, 0, 1, 1.0)]);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], -1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_ne!(sol.status, SdpStatus::Optimal);
        assert!(sol.clone().require_optimal().is_err());
    }

    #[test]
    fn residual_examples() {
        let p = two_by_two();
        let x = vec![DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])];
        // Dual: y = (1, 1), S = diag(y) − C = [[1, −1], [−1, 1]].
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let s = vec![DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])];
        let r = residuals(&p, &x, &y, &s);
        assert!(r.max() <= 1e-10);

        let xp = vec![&x[0] + DMatrix::from_row_slice(2, 2, &[1e-3, 0.0, 0.0, 0.0])];
        let r = residuals(&p, &xp, &y, &s);
        assert!((r.primal - 1e-3).abs() < 1e-12);

        let xs = vec![DMatrix::identity(2, 2)];
        let r = residuals(&p, &xs, &y, &s);
        assert!(r.gap > 0.5);
    }

    #[test]
    fn sdpa_round_trip() {
        let mut p = two_by_two();
        p.set_objective(vec![Entry::new(0, 1, 0, 0.25), Entry::new(0, 0, 0, -1e-5)]);
        let mut buf = Vec::new();
        p.write_sdpa(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "2");
        let q = SdpProblem::read_sdpa(&buf[..]).unwrap();
        assert_eq!(p, q);

        let braces = "2\n1\n{2}\n{1.0, 1.0}\n0 1 1 2 1.0\n1 1 1 1 1.0\n2 1 2 2 1.0\n";
        let r = SdpProblem::read_sdpa(braces.as_bytes()).unwrap();
        assert_eq!(r, two_by_two());
        assert!(SdpProblem::read_sdpa("1\n1\n2\n1.0\n0 1 1".as_bytes()).is_err());
        assert!(SdpProblem::read_sdpa("1\n1\n-2\n1.0\n".as_bytes()).is_err());
        assert!(SdpProblem::read_sdpa("1\n1\n2\n1.0\n1 1 3 3 1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn solves_are_deterministic() {
        let p = random_problem(5, 4, 11);
        let a = solve(&p, &SolverOptions::default()).unwrap();
        let b = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    /// A feasible, bounded random instance: rows `A_i`, a PSD point defines `b`,
    /// and `C = Σ A_i − I` makes the dual strictly feasible.
    fn random_problem(d: usize, m: usize, seed: u64) -> SdpProblem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = SdpProblem::new(vec![d]);
        let mut c = vec![];
        let x0 = DMatrix::<f64>::identity(d, d);
        for _ in 0..m {
            let mut entries = vec![];
            for i in 0..d {
                for j in i..d {
                    entries.push(Entry::new(0, i, j, rng.random_range(-1.0..1.0)));
                }
            }
            let b = pair(&entries, std::slice::from_ref(&x0));
            c.extend(entries.iter().copied());
            p.add_constraint(entries, b);
        }
        for i in 0..d {
            c.push(Entry::new(0, i, i, -1.0));
        }
        p.set_objective(c);
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn weak_duality_and_psd(d in 2usize..6, m in 1usize..6, seed in 0u64..1000) {
            let p = random_problem(d, m, seed);
            let sol = solve(&p, &SolverOptions::default()).unwrap();
            prop_assert_eq!(sol.status, SdpStatus::Optimal);
            // ⟨C,X⟩ − bᵀy = −⟨X,S⟩ + yᵀ(A(X) − b) − ⟨A*(y) − S − C, X⟩
            let slack = sol.y.lp_norm(1) * sol.primal_res()
                + sol.x_blocks.iter().map(|b| b.lp_norm(1)).sum::<f64>() * sol.dual_res();
            prop_assert!(sol.primal_objective <= sol.dual_objective + 1e-8 + slack);
            for b in sol.x_blocks.iter().chain(&sol.s_blocks) {
                prop_assert!(min_eig(b) >= -1e-9);
            }
        }
    }
}
