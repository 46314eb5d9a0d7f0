//! Experiment drivers: ξ sweeps, zero-randomness thresholds, sequence
//! reports and the randomized search for `I² + (2 − αβ)²⟨B1⟩² ≤ (1 + α²)(4 + β²)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, Outcome};
use crate::bell::{
    correlators_from_distribution, eval_inequality, guessing_bound_f, quantum_max, BellParams,
    CertifiedBits, CorrelatorSet,
};
use crate::error::{Error, Result};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::npa::{build_basis, npa_options, solve_guessing, GuessingMode, Scenario};
use crate::par::{self, Exec};
use crate::protocol::{
    alice_setting_count, conditional_step_distribution, is_separable, run_sequence_with,
    AliceSetting, BranchTree, SequenceDistribution, SequenceOptions,
};

/// Points in the table grid.
pub const TABLE_GRID_LEN: usize = 44;
/// The table grid steps by `(π/4) / TABLE_GRID_DIVISIONS`.
pub const TABLE_GRID_DIVISIONS: usize = 59;
/// Bits at or below this count as no randomness.
pub const ZERO_BITS: f64 = 1e-3;
/// Largest amount by which a found point may exceed the conjectured bound.
pub const CONJECTURE_TOL: f64 = 1e-6;
/// Bell values are capped this many ulps (relative) below the quantum maximum.
pub const BELL_VALUE_FLOOR_ULPS: f64 = 64.0;

/// The first `TABLE_GRID_LEN` points of a uniform division of `[0, π/4]`,
/// ending near 0.572.
pub fn table_grid() -> Vec<f64> {
    (0..TABLE_GRID_LEN)
        .map(|i| FRAC_PI_4 * i as f64 / TABLE_GRID_DIVISIONS as f64)
        .collect()
}

/// How a single step is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Closed-form bound from the tilted Bell value.
    Analytic,
    /// NPA relaxation at the given level.
    Npa(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Analytic => write!(f, "analytic"),
            Method::Npa(level) => write!(f, "npa-{level}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Method::Analytic),
            "npa" => Ok(Method::Npa(2)),
            _ => s
                .strip_prefix("npa-")
                .and_then(|l| l.parse().ok())
                .map(Method::Npa)
                .ok_or_else(|| Error::Parse(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub xi: f64,
    /// `NaN` when the point failed.
    pub bits: f64,
    pub method: Method,
    pub error: Option<String>,
}

/// Observed behavior of one step on `ψ(θ)` with Bob's second input `σ̂_x(ξ)`.
pub fn step_behavior(theta: f64, xi: f64) -> Result<Behavior> {
    let opts = SequenceOptions {
        exec: Exec::Sequential,
        ..SequenceOptions::default()
    };
    let (_, seq) = run_sequence_with(theta, &[xi], &opts)?;
    conditional_step_distribution(&seq, 1, &[])
}

/// Caps a Bell value just below the quantum maximum so rounding in the
/// correlators cannot push it over.
pub fn floor_bell_value(i_value: f64, p: &BellParams) -> f64 {
    let i_max = quantum_max(p);
    i_value.min(i_max - BELL_VALUE_FLOOR_ULPS * f64::EPSILON * i_max)
}

/// Randomness of Bob's `y = 1` outcome certified by `method` from `behavior`,
/// which was produced on `ψ(θ)`.
pub fn certify(behavior: &Behavior, theta: f64, method: Method) -> Result<CertifiedBits> {
    match method {
        Method::Analytic => {
            if is_separable(theta) {
                return Ok(CertifiedBits::from_guess(1.0));
            }
            let p = BellParams::for_state(theta)?;
            let c = correlators_from_distribution(behavior)?;
            guessing_bound_f(floor_bell_value(eval_inequality(&c, &p), &p), &p)
        }
        Method::Npa(level) => {
            let basis = build_basis(Scenario::two_by_two(), level)?;
            let r = solve_guessing(
                behavior,
                1,
                &basis,
                &GuessingMode::FullStatistics,
                &npa_options(),
            )?;
            Ok(r.certified)
        }
    }
}

pub fn sweep_xi(theta: f64, grid: &[f64], method: Method, exec: Exec) -> Result<Vec<SweepRow>> {
    if let Some(x) = grid
        .iter()
        .find(|x| !(**x >= 0.0 && **x <= FRAC_PI_4 + 1e-12))
    {
        return Err(Error::Domain(format!("ξ = {x} outside [0, π/4]")));
    }
    if let Method::Npa(level) = method {
        build_basis(Scenario::two_by_two(), level)?;
    }
    Ok(par::map_indexed(exec, grid.len(), |i| {
        let xi = grid[i];
        match step_behavior(theta, xi).and_then(|b| certify(&b, theta, method)) {
            Ok(c) => SweepRow {
                xi,
                bits: c.bits,
                method,
                error: None,
            },
            Err(e) => {
                warn!("θ = {theta}, ξ = {xi}: {e}");
                SweepRow {
                    xi,
                    bits: f64::NAN,
                    method,
                    error: Some(e.to_string()),
                }
            }
        }
    }))
}

/// Header `xi,bits,method`, six decimals.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["xi", "bits", "method"])?;
    for r in rows {
        out.write_record([
            format!("{:.6}", r.xi),
            format!("{:.6}", r.bits),
            r.method.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Smallest `ξ` with at most [`ZERO_BITS`] of randomness: a grid scan at
/// spacing `resolution` followed by bisection of the first bracket.
pub fn threshold_xi(theta: f64, method: Method, resolution: f64, exec: Exec) -> Result<f64> {
    if !(1e-3..=FRAC_PI_4).contains(&resolution) {
        return Err(Error::Domain(format!(
            "resolution {resolution} outside [1e-3, π/4]"
        )));
    }
    let steps = (FRAC_PI_4 / resolution).ceil() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| (FRAC_PI_4 * i as f64 / steps as f64).min(FRAC_PI_4))
        .collect();
    let bits_at =
        |xi: f64| -> Result<f64> { Ok(certify(&step_behavior(theta, xi)?, theta, method)?.bits) };
    let scan = par::map_indexed(exec, grid.len(), |i| bits_at(grid[i]));
    let mut hi = None;
    for (i, b) in scan.into_iter().enumerate() {
        if b? <= ZERO_BITS {
            hi = Some(i);
            break;
        }
    }
    let Some(k) = hi else {
        return Err(Error::NotFound(format!(
            "randomness never vanishes below π/4 at θ = {theta}"
        )));
    };
    if k == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (grid[k - 1], grid[k]);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if bits_at(mid)? <= ZERO_BITS {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One step of a sequence report, scored along the all-`+` history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub theta: f64,
    /// `None` once the shared state is a product state.
    pub i_value: Option<f64>,
    pub i_max: Option<f64>,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub theta1: f64,
    pub xis: Vec<f64>,
    pub steps: Vec<StepReport>,
    /// Sum of per-step bits.
    pub certificate_bits: f64,
    pub alice_settings: Vec<AliceSetting>,
}

pub fn sequence_report(
    theta1: f64,
    xis: &[f64],
    exec: Exec,
) -> Result<(BranchTree, SequenceDistribution, SequenceReport)> {
    let opts = SequenceOptions {
        exec,
        ..SequenceOptions::default()
    };
    let (tree, seq) = run_sequence_with(theta1, xis, &opts)?;
    let mut steps = Vec::with_capacity(xis.len());
    for step in 1..=xis.len() {
        let history = vec![Outcome::Plus; step - 1];
        let theta = tree.node(&history).theta;
        let report = if is_separable(theta) {
            StepReport {
                step,
                theta,
                i_value: None,
                i_max: None,
                bits: 0.0,
            }
        } else {
            let p = BellParams::for_state(theta)?;
            let c = correlators_from_distribution(&conditional_step_distribution(
                &seq, step, &history,
            )?)?;
            let i_value = floor_bell_value(eval_inequality(&c, &p), &p);
            StepReport {
                step,
                theta,
                i_value: Some(i_value),
                i_max: Some(quantum_max(&p)),
                bits: guessing_bound_f(i_value, &p)?.bits,
            }
        };
        steps.push(report);
    }
    let report = SequenceReport {
        theta1,
        xis: xis.to_vec(),
        certificate_bits: steps.iter().map(|s| s.bits).sum(),
        steps,
        alice_settings: (0..alice_setting_count(xis.len()))
            .map(AliceSetting::from_index)
            .collect(),
    };
    Ok((tree, seq, report))
}

/// A state angle and four Bloch vectors `m0, m1, n0, n1` (Alice's, then Bob's).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint {
    pub t: f64,
    pub bloch: [[f64; 3]; 4],
}

impl SearchPoint {
    /// From `t` followed by a polar and an azimuthal angle per vector.
    pub fn from_angles(v: &[f64]) -> Self {
        let mut bloch = [[0.0; 3]; 4];
        for (k, b) in bloch.iter_mut().enumerate() {
            let (pol, az) = (v[1 + 2 * k], v[2 + 2 * k]);
            *b = [pol.sin() * az.cos(), pol.sin() * az.sin(), pol.cos()];
        }
        Self { t: v[0], bloch }
    }

    pub fn to_angles(&self) -> Vec<f64> {
        let mut v = vec![self.t];
        for b in &self.bloch {
            v.push(b[2].clamp(-1.0, 1.0).acos());
            v.push(b[1].atan2(b[0]));
        }
        v
    }

    /// `t` uniform on `[0, π/2]`, vectors uniform on the sphere.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let t = rng.random_range(0.0..=FRAC_PI_2);
        let mut bloch = [[0.0; 3]; 4];
        for b in &mut bloch {
            loop {
                let g: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if n > 1e-12 {
                    *b = [g[0] / n, g[1] / n, g[2] / n];
                    break;
                }
            }
        }
        Self { t, bloch }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=FRAC_PI_2).contains(&self.t) {
            return Err(Error::Domain(format!("t = {} outside [0, π/2]", self.t)));
        }
        for b in &self.bloch {
            let n = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("Bloch vector of norm {n}")));
            }
        }
        Ok(())
    }

    /// Correlators of `m·σ ⊗ n·σ` on `cos t|00⟩ + sin t|11⟩`.
    pub fn correlators(&self) -> CorrelatorSet {
        let (s2, c2) = (2.0 * self.t).sin_cos();
        let [m0, m1, n0, n1] = self.bloch;
        let e = |m: [f64; 3], n: [f64; 3]| s2 * (m[0] * n[0] - m[1] * n[1]) + m[2] * n[2];
        CorrelatorSet {
            b0: c2 * n0[2],
            b1: c2 * n1[2],
            e00: e(m0, n0),
            e01: e(m0, n1),
            e10: e(m1, n0),
            e11: e(m1, n1),
        }
    }
}

/// `I_{α,β}² + (2 − αβ)²⟨B1⟩²` at `point`.
pub fn conjecture_lhs(point: &SearchPoint, p: &BellParams) -> f64 {
    let c = point.correlators();
    let i = eval_inequality(&c, p);
    let s = p.slack() * c.b1;
    i * i + s * s
}

/// `(1 + α²)(4 + β²)`.
pub fn conjecture_rhs(p: &BellParams) -> f64 {
    (1.0 + p.alpha() * p.alpha()) * (4.0 + p.beta() * p.beta())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub alpha: f64,
    pub beta: f64,
    pub best_lhs: f64,
    pub rhs: f64,
    pub point: SearchPoint,
    pub seed: u64,
    pub restarts: usize,
    pub samples: usize,
    /// `"CONJECTURE_VIOLATION"` if any evaluated point exceeded the bound.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flag: Option<String>,
}

impl ConjectureReport {
    pub fn holds(&self) -> bool {
        self.best_lhs <= self.rhs + CONJECTURE_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjectureOptions {
    pub restarts: usize,
    /// Uniform random points evaluated before the local searches.
    pub samples: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
    pub exec: Exec,
}

impl Default for ConjectureOptions {
    fn default() -> Self {
        Self {
            restarts: 100,
            samples: 10_000,
            seed: 0,
            nelder_mead: NelderMeadOptions::default(),
            exec: Exec::available(),
        }
    }
}

const SAMPLE_CHUNK: usize = 1000;

/// Random-restart Nelder–Mead maximization of the left-hand side, with
/// 10⁴ uniform samples. Deterministic per seed.
pub fn conjecture_search(p: &BellParams, restarts: usize, seed: u64) -> Result<ConjectureReport> {
    conjecture_search_with(
        p,
        &ConjectureOptions {
            restarts,
            seed,
            ..ConjectureOptions::default()
        },
    )
}

pub fn conjecture_search_with(
    p: &BellParams,
    opts: &ConjectureOptions,
) -> Result<ConjectureReport> {
    if opts.restarts == 0 {
        return Err(Error::Domain("at least one restart is needed".into()));
    }
    let rhs = conjecture_rhs(p);
    let rng_for = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(stream);
        rng
    };
    // Every evaluated point is checked, not only the optima.
    let local = par::map_indexed(opts.exec, opts.restarts, |r| {
        let start = SearchPoint::random(&mut rng_for(r as u64));
        let mut top = (conjecture_lhs(&start, p), start);
        nelder_mead::minimize(
            |v| {
                let mut pt = SearchPoint::from_angles(v);
                pt.t = pt.t.clamp(0.0, FRAC_PI_2);
                let lhs = conjecture_lhs(&pt, p);
                if lhs > top.0 {
                    top = (lhs, pt);
                }
                -lhs
            },
            &start.to_angles(),
            &opts.nelder_mead,
        );
        top
    });
    let chunks = opts.samples.div_ceil(SAMPLE_CHUNK);
    let sampled = par::map_indexed(opts.exec, chunks, |c| {
        let mut rng = rng_for((1u64 << 32) + c as u64);
        let count = SAMPLE_CHUNK.min(opts.samples - c * SAMPLE_CHUNK);
        let mut top: Option<(f64, SearchPoint)> = None;
        for _ in 0..count {
            let pt = SearchPoint::random(&mut rng);
            let lhs = conjecture_lhs(&pt, p);
            if top.as_ref().is_none_or(|(v, _)| lhs > *v) {
                top = Some((lhs, pt));
            }
        }
        top
    });
    let (best_lhs, point) = local
        .into_iter()
        .chain(sampled.into_iter().flatten())
        .fold(None::<(f64, SearchPoint)>, |acc, cur| match acc {
            Some(a) if a.0 >= cur.0 => Some(a),
            _ => Some(cur),
        })
        .expect("at least one restart");
    let flag = (best_lhs > rhs + CONJECTURE_TOL).then(|| {
        warn!("conjecture exceeded: {best_lhs} > {rhs}");
        "CONJECTURE_VIOLATION".to_string()
    });
    Ok(ConjectureReport {
        alpha: p.alpha(),
        beta: p.beta(),
        best_lhs,
        rhs,
        point,
        seed: opts.seed,
        restarts: opts.restarts,
        samples: opts.samples,
        flag,
    })
}

/// Largest left-hand side over a grid restricted to the x–z plane:
/// `t = kπ/(2r)` for `k = 0..=r` and every vector angle `2πj/r`, `j < r`.
/// Doubling `resolution` refines the grid.
pub fn grid_oracle(p: &BellParams, resolution: usize, exec: Exec) -> Result<f64> {
    if resolution < 12 {
        return Err(Error::Domain(format!(
            "resolution {resolution} below 12 points per angle"
        )));
    }
    let r = resolution;
    let angles: Vec<(f64, f64)> = (0..r)
        .map(|j| (2.0 * PI * j as f64 / r as f64).sin_cos())
        .collect();
    let (alpha, beta, slack) = (p.alpha(), p.beta(), p.slack());
    let per_t = par::map_indexed(exec, r + 1, |k| {
        let (s2, c2) = (PI * k as f64 / r as f64).sin_cos();
        let e = |m: (f64, f64), n: (f64, f64)| s2 * m.0 * n.0 + m.1 * n.1;
        let mut best: f64 = 0.0;
        for &n0 in &angles {
            for &n1 in &angles {
                // I separates into a part per Alice vector.
                let (mut lo0, mut hi0) = (f64::INFINITY, f64::NEG_INFINITY);
                let (mut lo1, mut hi1) = (f64::INFINITY, f64::NEG_INFINITY);
                for &m in &angles {
                    let f0 = alpha * e(m, n0) + e(m, n1);
                    let f1 = alpha * e(m, n0) - e(m, n1);
                    lo0 = lo0.min(f0);
                    hi0 = hi0.max(f0);
                    lo1 = lo1.min(f1);
                    hi1 = hi1.max(f1);
                }
                let base = beta * c2 * n0.1;
                let i_sq = (base + hi0 + hi1).powi(2).max((base + lo0 + lo1).powi(2));
                let b1 = slack * c2 * n1.1;
                best = best.max(i_sq + b1 * b1);
            }
        }
        best
    });
    Ok(per_t.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{beta_of_theta, mu_of_theta};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_8;

    #[test]
    fn table_grid_matches_printed_abscissae() {
        let g = table_grid();
        assert_eq!(g.len(), 44);
        let printed: Vec<&str> = include_str!("../tests/data/tables.csv")
            .lines()
            .skip(1)
            .filter_map(|l| l.strip_prefix("pi/4,")?.split(',').next())
            .collect();
        assert_eq!(printed.len(), g.len());
        for (x, p) in g.iter().zip(printed) {
            assert_eq!(format!("{x:.3}"), p);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Analytic, Method::Npa(2), Method::Npa(3)] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("npa".parse::<Method>().unwrap(), Method::Npa(2));
        assert!("sdp".parse::<Method>().is_err());
    }

    #[test]
    fn sweep_examples() {
        let rows = sweep_xi(FRAC_PI_4, &[0.0], Method::Npa(2), Exec::Sequential).unwrap();
        assert!((rows[0].bits - 1.0).abs() < 0.02);
        let rows = sweep_xi(FRAC_PI_4 / 4.0, &[0.013], Method::Npa(2), Exec::Sequential).unwrap();
        assert!((rows[0].bits - 0.896).abs() < 0.02, "{}", rows[0].bits);
        let rows = sweep_xi(FRAC_PI_8, &[0.559], Method::Npa(2), Exec::Sequential).unwrap();
        assert!(rows[0].bits.abs() < 0.02);
        assert!(rows.iter().all(|r| r.error.is_none()));
        assert!(sweep_xi(FRAC_PI_4, &[0.9], Method::Analytic, Exec::Sequential).is_err());
    }

    #[test]
    fn analytic_is_below_npa_on_the_chsh_line() {
        let grid: Vec<f64> = (0..12).map(|i| 0.05 * i as f64).collect();
        let a = sweep_xi(FRAC_PI_4, &grid, Method::Analytic, Exec::Parallel).unwrap();
        let n = sweep_xi(FRAC_PI_4, &grid, Method::Npa(2), Exec::Parallel).unwrap();
        for (a, n) in a.iter().zip(&n) {
            assert!(
                a.bits <= n.bits + 1e-3,
                "ξ = {}: {} vs {}",
                a.xi,
                a.bits,
                n.bits
            );
        }
    }

    #[test]
    fn more_entanglement_resists_better() {
        let grid: Vec<f64> = (0..8).map(|i| 0.05 + 0.05 * i as f64).collect();
        let top = sweep_xi(FRAC_PI_4, &grid, Method::Npa(2), Exec::Parallel).unwrap();
        for t in [FRAC_PI_8, FRAC_PI_4 / 4.0, FRAC_PI_4 / 8.0] {
            let rows = sweep_xi(t, &grid, Method::Npa(2), Exec::Parallel).unwrap();
            for (a, b) in top.iter().zip(&rows) {
                assert!(a.bits >= b.bits - 1e-6, "θ = {t}, ξ = {}", a.xi);
            }
        }
    }

    #[test]
    fn sweep_csv_format() {
        let rows = vec![
            SweepRow {
                xi: 0.013,
                bits: 0.8956,
                method: Method::Npa(2),
                error: None,
            },
            SweepRow {
                xi: 0.5,
                bits: 0.0,
                method: Method::Npa(2),
                error: None,
            },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "xi,bits,method\n0.013000,0.895600,npa-2\n0.500000,0.000000,npa-2\n"
        );
    }

    #[test]
    fn thresholds() {
        let t = threshold_xi(FRAC_PI_4, Method::Npa(2), 0.01, Exec::Parallel).unwrap();
        assert!((0.55..=0.60).contains(&t), "{t}");
        let t = threshold_xi(FRAC_PI_4 / 8.0, Method::Npa(2), 0.01, Exec::Parallel).unwrap();
        assert!((0.50..=0.54).contains(&t), "{t}");
        assert!(threshold_xi(FRAC_PI_4, Method::Analytic, 1e-4, Exec::Parallel).is_err());
        // CHSH reaches the local bound at cos 2ξ = √2 − 1; the cutoff bites just before.
        let t = threshold_xi(FRAC_PI_4, Method::Analytic, 0.01, Exec::Parallel).unwrap();
        let exact = 0.5 * (2f64.sqrt() - 1.0).acos();
        assert!(t <= exact && t >= exact - 0.01, "{t} vs {exact}");
    }

    #[test]
    fn sequence_report_examples() {
        let (_, _, r) = sequence_report(FRAC_PI_4, &[0.0], Exec::Sequential).unwrap();
        let s = &r.steps[0];
        assert!((s.i_value.unwrap() - s.i_max.unwrap()).abs() < 1e-12);
        assert!((r.certificate_bits - 1.0).abs() < 1e-6);

        let (_, _, r) = sequence_report(FRAC_PI_4, &[0.01, 1e-5], Exec::Sequential).unwrap();
        assert!(r.certificate_bits >= 1.9);
        assert!(
            (r.certificate_bits - 1.969393).abs() < 1e-5,
            "{}",
            r.certificate_bits
        );

        let (_, _, r) = sequence_report(FRAC_PI_4, &[0.1, 0.2, 0.3], Exec::Sequential).unwrap();
        assert_eq!(r.alice_settings.len(), 14);

        // A sharp first measurement leaves a product state.
        let (_, _, r) = sequence_report(FRAC_PI_4, &[0.0, 0.1], Exec::Sequential).unwrap();
        assert_eq!(r.steps[1].i_value, None);
        assert_eq!(r.steps[1].bits, 0.0);
    }

    fn optimal_point(theta: f64) -> SearchPoint {
        let (s, c) = mu_of_theta(theta).sin_cos();
        SearchPoint {
            t: theta,
            bloch: [[s, 0.0, c], [-s, 0.0, c], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
        }
    }

    #[test]
    fn conjecture_lhs_examples() {
        let theta = 0.3;
        let p = BellParams::new(1.0, beta_of_theta(theta).unwrap()).unwrap();
        let pt = optimal_point(theta);
        pt.validate().unwrap();
        assert!((conjecture_lhs(&pt, &p) - conjecture_rhs(&p)).abs() < 1e-9);

        let p = BellParams::new(1.7, 0.4).unwrap();
        let z = SearchPoint {
            t: 0.0,
            bloch: [[0.0, 0.0, 1.0]; 4],
        };
        let want = (0.4 + 3.4f64).powi(2) + (2.0 - 1.7 * 0.4f64).powi(2);
        assert!((conjecture_lhs(&z, &p) - want).abs() < 1e-12);

        let chsh = BellParams::chsh();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let pt = SearchPoint {
            t: FRAC_PI_4,
            bloch: [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [r, 0.0, r], [-r, 0.0, r]],
        };
        assert!((conjecture_lhs(&pt, &chsh) - 8.0).abs() < 1e-12);
        assert_eq!(conjecture_rhs(&chsh), 8.0);
    }

    #[test]
    fn conjecture_search_examples() {
        let r = conjecture_search(&BellParams::chsh(), 100, 7).unwrap();
        assert!((r.best_lhs - 8.0).abs() < 1e-4);
        assert!(r.holds() && r.flag.is_none());
        r.point.validate().unwrap();

        let p = BellParams::new(1.0, 1.15470).unwrap();
        let r = conjecture_search(&p, 100, 1).unwrap();
        assert!((r.rhs - 10.6667).abs() < 1e-3);
        assert!((r.best_lhs - r.rhs).abs() < 1e-3 && r.holds());

        let again = conjecture_search(&p, 100, 1).unwrap();
        assert_eq!(r, again);
        let seq = conjecture_search_with(
            &p,
            &ConjectureOptions {
                restarts: 100,
                seed: 1,
                exec: Exec::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r, seq);
    }

    #[test]
    fn report_json_fields() {
        let r = conjecture_search_with(
            &BellParams::chsh(),
            &ConjectureOptions {
                restarts: 2,
                samples: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in [
            "alpha", "beta", "best_lhs", "rhs", "point", "seed", "restarts",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v.get("flag").is_none());
    }

    #[test]
    fn grid_oracle_examples() {
        let chsh = BellParams::chsh();
        let g = grid_oracle(&chsh, 60, Exec::Parallel).unwrap();
        assert!((7.99..=8.0 + 1e-9).contains(&g));
        assert!(grid_oracle(&chsh, 11, Exec::Parallel).is_err());

        let p = BellParams::new(2.0, 0.3).unwrap();
        let coarse = grid_oracle(&p, 12, Exec::Parallel).unwrap();
        let fine = grid_oracle(&p, 24, Exec::Parallel).unwrap();
        assert!(fine >= coarse);
        let best = conjecture_search(&p, 20, 3).unwrap();
        assert!(fine <= best.best_lhs + 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn sweeps_are_monotone(theta in 0.1f64..FRAC_PI_4) {
            let grid: Vec<f64> = (0..12).map(|i| 0.05 * i as f64).collect();
            for method in [Method::Analytic, Method::Npa(2)] {
                let rows = sweep_xi(theta, &grid, method, Exec::Parallel).unwrap();
                for w in rows.windows(2) {
                    prop_assert!(w[1].bits <= w[0].bits + 1e-6, "{method}: {:?}", w);
                    prop_assert!((0.0..=1.0).contains(&w[1].bits));
                }
            }
        }

        #[test]
        fn random_points_respect_the_bound(alpha in 1.0f64..3.0, beta in 0.0f64..0.6, seed in 0u64..1000) {
            let p = BellParams::new(alpha, beta).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let pt = SearchPoint::random(&mut rng);
                pt.validate().unwrap();
                prop_assert!(conjecture_lhs(&pt, &p) <= conjecture_rhs(&p) + CONJECTURE_TOL);
            }
        }
    }
}
