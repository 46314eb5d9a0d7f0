//! Dense complex linear algebra on one and two qubits.
//!
//! Everything here lives in dimension 2 (local operators) or 4 (the joint
//! Alice–Bob space). Amplitudes of a joint state are ordered
//! `|00>, |01>, |10>, |11>` with Alice's qubit as the most significant index,
//! so `amps[2 * i + k]` is the coefficient of `|i>_A |k>_B`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Cx = Complex64;

const ZERO: Cx = Cx::new(0.0, 0.0);
const ONE: Cx = Cx::new(1.0, 0.0);

/// Default tolerance for algebraic identities (hermiticity, unitarity, norms).
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Default tolerance for decompositions (Schmidt reconstruction).
pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// Tolerances used by checks in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub algebraic: f64,
    pub decomposition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebraic: ALGEBRAIC_TOL,
            decomposition: DECOMPOSITION_TOL,
        }
    }
}

/// A 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Cx; 2]; 2]);

impl Mat2 {
    pub const fn new(m: [[Cx; 2]; 2]) -> Self {
        Mat2(m)
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Mat2([
            [Cx::new(m[0][0], 0.0), Cx::new(m[0][1], 0.0)],
            [Cx::new(m[1][0], 0.0), Cx::new(m[1][1], 0.0)],
        ])
    }

    pub const fn identity() -> Self {
        Mat2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub const fn zero() -> Self {
        Mat2([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub const fn pauli_x() -> Self {
        Mat2([[ZERO, ONE], [ONE, ZERO]])
    }

    pub const fn pauli_y() -> Self {
        Mat2([[ZERO, Cx::new(0.0, -1.0)], [Cx::new(0.0, 1.0), ZERO]])
    }

    pub const fn pauli_z() -> Self {
        Mat2([[ONE, ZERO], [ZERO, Cx::new(-1.0, 0.0)]])
    }

    /// Matrix with columns `c0` and `c1`.
    pub fn from_columns(c0: [Cx; 2], c1: [Cx; 2]) -> Self {
        Mat2([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    /// `|u><v|`.
    pub fn outer(u: [Cx; 2], v: [Cx; 2]) -> Self {
        Mat2([
            [u[0] * v[0].conj(), u[0] * v[1].conj()],
            [u[1] * v[0].conj(), u[1] * v[1].conj()],
        ])
    }

    /// `n_x σ_x + n_y σ_y + n_z σ_z` for a Bloch vector `n`.
    pub fn bloch(n: [f64; 3]) -> Self {
        Mat2([
            [Cx::new(n[2], 0.0), Cx::new(n[0], -n[1])],
            [Cx::new(n[0], n[1]), Cx::new(-n[2], 0.0)],
        ])
    }

    pub fn column(&self, j: usize) -> [Cx; 2] {
        [self.0[0][j], self.0[1][j]]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Mat2([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn scale(&self, s: Cx) -> Self {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Cx::new(s, 0.0))
    }

    pub fn trace(&self) -> Cx {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: [Cx; 2]) -> [Cx; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).max_abs_diff(&Mat2::identity()) <= tol
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = self.0[0][1];
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - r, mean + r]
    }

    /// `U self U†`.
    pub fn conjugate_by(&self, u: &Mat2) -> Mat2 {
        *u * *self * u.adjoint()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self.0;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += rhs.0[i][j];
            }
        }
        Mat2(out)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut out = self.0;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] -= rhs.0[i][j];
            }
        }
        Mat2(out)
    }
}

/// A 4×4 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4(pub [[Cx; 4]; 4]);

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = ONE;
        }
        Mat4(m)
    }

    pub fn apply(&self, v: &[Cx; 4]) -> [Cx; 4] {
        let mut out = [ZERO; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.0[i][j] * v[j]).sum();
        }
        out
    }

    pub fn scale(&self, s: Cx) -> Self {
        let mut m = self.0;
        m.iter_mut().flatten().for_each(|z| *z *= s);
        Mat4(m)
    }

    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Kronecker product `a ⊗ b` in row-major block layout.
pub fn tensor_product(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    Mat4(m)
}

/// A normalized two-qubit pure state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureBipartiteState {
    amps: [Cx; 4],
}

impl PureBipartiteState {
    /// Wraps amplitudes that are already normalized within [`ALGEBRAIC_TOL`].
    pub fn new(amps: [Cx; 4]) -> Result<Self> {
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("non-finite amplitude".into()));
        }
        let n = norm_sqr(&amps);
        if (n - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(Error::Normalization(n - 1.0));
        }
        Ok(Self { amps })
    }

    /// Rescales arbitrary amplitudes to unit norm. `None` for the zero vector.
    pub fn normalized(amps: [Cx; 4]) -> Option<Self> {
        let n = norm_sqr(&amps).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let inv = 1.0 / n;
        Some(Self {
            amps: amps.map(|z| z * inv),
        })
    }

    pub fn from_real(amps: [f64; 4]) -> Result<Self> {
        Self::new(amps.map(|a| Cx::new(a, 0.0)))
    }

    /// `|a> ⊗ |b>`.
    pub fn product(a: [Cx; 2], b: [Cx; 2]) -> Option<Self> {
        Self::normalized([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
    }

    pub fn amps(&self) -> &[Cx; 4] {
        &self.amps
    }

    /// `(u ⊗ v) |self>`.
    pub fn apply_local(&self, u: &Mat2, v: &Mat2) -> PureBipartiteState {
        let amps = tensor_product(u, v).apply(&self.amps);
        // Unitaries preserve the norm up to rounding; renormalize to keep the invariant exact.
        Self::normalized(amps).unwrap_or(*self)
    }

    /// Largest amplitude difference to `other`.
    pub fn max_abs_diff(&self, other: &PureBipartiteState) -> f64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm_sqr(v: &[Cx; 4]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `Tr_B |v><v|` for an arbitrary (possibly unnormalized) joint vector.
pub fn alice_operator(v: &[Cx; 4]) -> Mat2 {
    let mut m = [[ZERO; 2]; 2];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = (0..2).map(|k| v[2 * i + k] * v[2 * j + k].conj()).sum();
        }
    }
    Mat2(m)
}

/// Reduced density matrix of Bob, `Tr_A |s><s|`.
pub fn bob_marginal(s: &PureBipartiteState) -> Mat2 {
    let v = &s.amps;
    let mut m = [[ZERO; 2]; 2];
    for (k, row) in m.iter_mut().enumerate() {
        for (l, e) in row.iter_mut().enumerate() {
            *e = (0..2).map(|i| v[2 * i + k] * v[2 * i + l].conj()).sum();
        }
    }
    Mat2(m)
}

/// `<s| a ⊗ b |s>` for Hermitian local observables.
pub fn expectation(s: &PureBipartiteState, a: &Mat2, b: &Mat2) -> Result<f64> {
    for m in [a, b] {
        let dev = m.max_abs_diff(&m.adjoint());
        if dev > ALGEBRAIC_TOL {
            return Err(Error::NotHermitian(dev));
        }
    }
    let v = &s.amps;
    let w = tensor_product(a, b).apply(v);
    let z: Cx = v.iter().zip(w.iter()).map(|(x, y)| x.conj() * y).sum();
    Ok(z.re)
}

/// `(I ⊗ m)|s>` together with its squared norm.
pub fn apply_bob_operator(s: &PureBipartiteState, m: &Mat2) -> ([Cx; 4], f64) {
    let out = apply_bob(s.amps(), m);
    let w = norm_sqr(&out);
    (out, w)
}

pub(crate) fn apply_bob(v: &[Cx; 4], m: &Mat2) -> [Cx; 4] {
    let mut out = [ZERO; 4];
    for i in 0..2 {
        let local = m.apply([v[2 * i], v[2 * i + 1]]);
        out[2 * i] = local[0];
        out[2 * i + 1] = local[1];
    }
    out
}

/// Schmidt canonical form `(U ⊗ V)(cos θ |00> + sin θ |11>)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchmidtForm {
    pub theta: f64,
    pub u_alice: Mat2,
    pub v_bob: Mat2,
}

impl SchmidtForm {
    pub fn reconstruct(&self) -> PureBipartiteState {
        let canonical = [
            Cx::new(self.theta.cos(), 0.0),
            ZERO,
            ZERO,
            Cx::new(self.theta.sin(), 0.0),
        ];
        let amps = tensor_product(&self.u_alice, &self.v_bob).apply(&canonical);
        PureBipartiteState::normalized(amps).expect("unitary image of a unit vector")
    }
}

/// Scales `u` so that its first component of largest modulus is real and nonnegative.
fn fix_phase(u: [Cx; 2]) -> [Cx; 2] {
    let idx = if u[1].norm() > u[0].norm() { 1 } else { 0 };
    let r = u[idx].norm();
    if r == 0.0 {
        return u;
    }
    let ph = u[idx].conj() / r;
    [u[0] * ph, u[1] * ph]
}

fn normalize2(u: [Cx; 2]) -> [Cx; 2] {
    let n = (u[0].norm_sqr() + u[1].norm_sqr()).sqrt();
    [u[0] / n, u[1] / n]
}

fn orthogonal_complement(u: [Cx; 2]) -> [Cx; 2] {
    [-u[1].conj(), u[0].conj()]
}

/// Schmidt decomposition with the crate's fixed phase convention.
///
/// Singular values are sorted descending, so `theta ∈ [0, π/4]`. Each left
/// singular vector is rotated so its first component of largest modulus is
/// real and nonnegative; the right vectors follow from `C = U Σ Vᵀ` where
/// `C[i][k] = amps[2i + k]`. When the spectrum is degenerate the left basis
/// is the computational one.
pub fn schmidt_canonicalize(s: &PureBipartiteState) -> SchmidtForm {
    schmidt_canonicalize_with(s, &Tolerances::default())
}

pub fn schmidt_canonicalize_with(s: &PureBipartiteState, tol: &Tolerances) -> SchmidtForm {
    let a = s.amps();
    let c = [[a[0], a[1]], [a[2], a[3]]];

    let h00 = c[0][0].norm_sqr() + c[0][1].norm_sqr();
    let h11 = c[1][0].norm_sqr() + c[1][1].norm_sqr();
    let h01 = c[0][0] * c[1][0].conj() + c[0][1] * c[1][1].conj();
    let disc = ((h00 - h11) * (h00 - h11) + 4.0 * h01.norm_sqr()).sqrt();
    let lam_max = 0.5 * (h00 + h11 + disc);
    let sigma0 = lam_max.sqrt();
    // sigma0 * sigma1 = |det C|, which avoids cancellation in the small eigenvalue.
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let sigma1 = if sigma0 > 0.0 {
        det.norm() / sigma0
    } else {
        0.0
    };

    let (u0, u1) = if disc <= tol.algebraic * (h00 + h11) {
        ([ONE, ZERO], [ZERO, ONE])
    } else {
        let cand_a = [h01, Cx::new(lam_max - h00, 0.0)];
        let cand_b = [Cx::new(lam_max - h11, 0.0), h01.conj()];
        let na = cand_a[0].norm_sqr() + cand_a[1].norm_sqr();
        let nb = cand_b[0].norm_sqr() + cand_b[1].norm_sqr();
        let u0 = fix_phase(normalize2(if na >= nb { cand_a } else { cand_b }));
        let u1 = fix_phase(orthogonal_complement(u0));
        (u0, u1)
    };

    // v_j = Cᵀ conj(u_j) / σ_j; the second vector is built orthogonal to the first.
    let row = |u: [Cx; 2]| -> [Cx; 2] {
        [
            c[0][0] * u[0].conj() + c[1][0] * u[1].conj(),
            c[0][1] * u[0].conj() + c[1][1] * u[1].conj(),
        ]
    };
    let v0 = if sigma0 > 0.0 {
        let r = row(u0);
        normalize2(r)
    } else {
        [ONE, ZERO]
    };
    let mut v1 = orthogonal_complement(v0);
    let r1 = row(u1);
    let z = r1[0] * v1[0].conj() + r1[1] * v1[1].conj();
    if z.norm() > 0.0 {
        let ph = z / z.norm();
        v1 = [v1[0] * ph, v1[1] * ph];
    }

    SchmidtForm {
        theta: sigma1.atan2(sigma0),
        u_alice: Mat2::from_columns(u0, u1),
        v_bob: Mat2::from_columns(v0, v1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};

    fn psi(theta: f64) -> PureBipartiteState {
        PureBipartiteState::from_real([theta.cos(), 0.0, 0.0, theta.sin()]).unwrap()
    }

    fn plus() -> [Cx; 2] {
        [Cx::new(FRAC_1_SQRT_2, 0.0), Cx::new(FRAC_1_SQRT_2, 0.0)]
    }

    #[test]
    fn kronecker_examples() {
        let id = tensor_product(&Mat2::identity(), &Mat2::identity());
        assert_eq!(id.max_abs_diff(&Mat4::identity()), 0.0);

        let zx = tensor_product(&Mat2::pauli_z(), &Mat2::pauli_x());
        let mut expected = [[ZERO; 4]; 4];
        expected[0][1] = ONE;
        expected[1][0] = ONE;
        expected[2][3] = -ONE;
        expected[3][2] = -ONE;
        assert_eq!(zx.max_abs_diff(&Mat4(expected)), 0.0);
    }

    #[test]
    fn marginal_examples() {
        let t = 0.3;
        let rho = bob_marginal(&psi(t));
        let expected = Mat2::from_real([[t.cos().powi(2), 0.0], [0.0, t.sin().powi(2)]]);
        assert!(rho.max_abs_diff(&expected) < 1e-15);

        let rho = bob_marginal(&psi(FRAC_PI_4));
        assert!(rho.max_abs_diff(&Mat2::identity().scale_re(0.5)) < 1e-15);

        let s = PureBipartiteState::product([ONE, ZERO], plus()).unwrap();
        let rho = bob_marginal(&s);
        assert!(rho.max_abs_diff(&Mat2::outer(plus(), plus())) < 1e-15);
    }

    #[test]
    fn expectation_examples() {
        let z = Mat2::pauli_z();
        let x = Mat2::pauli_x();
        let id = Mat2::identity();
        assert!((expectation(&psi(FRAC_PI_4), &z, &z).unwrap() - 1.0).abs() < 1e-15);
        for t in [0.1, 0.5, 1.2] {
            assert!(expectation(&psi(t), &id, &x).unwrap().abs() < 1e-15);
            // <ψ(θ)|σx⊗σx|ψ(θ)> = 2 cos θ sin θ from the |00>,|11> cross terms.
            let oracle = 2.0 * t.cos() * t.sin();
            assert!((expectation(&psi(t), &x, &x).unwrap() - oracle).abs() < 1e-14);
            assert!((oracle - (2.0 * t).sin()).abs() < 1e-15);
        }
        let bad = Mat2::from_real([[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(
            expectation(&psi(0.2), &bad, &z),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn schmidt_examples() {
        for t in [0.0, 0.2, FRAC_PI_8, FRAC_PI_4] {
            let f = schmidt_canonicalize(&psi(t));
            assert!((f.theta - t).abs() < 1e-14, "{t} -> {}", f.theta);
            assert!(f.u_alice.max_abs_diff(&Mat2::identity()) < 1e-12);
            assert!(f.v_bob.max_abs_diff(&Mat2::identity()) < 1e-12);
        }
        let s = PureBipartiteState::product([ONE, ZERO], plus()).unwrap();
        let f = schmidt_canonicalize(&s);
        assert_eq!(f.theta, 0.0);
        assert!(f.reconstruct().max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn schmidt_of_weakly_measured_bell_state() {
        // M_+(π/8) on ψ(π/4); the SVD oracle gives sin 2θ' = sin 2θ sin 2ξ.
        let xi = FRAC_PI_8;
        let (c, s) = (xi.cos(), xi.sin());
        let m = Mat2::from_real([[c + s, c - s], [c - s, c + s]]).scale_re(0.5);
        let (v, w) = apply_bob_operator(&psi(FRAC_PI_4), &m);
        assert!((w - 0.5).abs() < 1e-15);
        let post = PureBipartiteState::normalized(v).unwrap();
        let f = schmidt_canonicalize(&post);
        assert!((f.theta - FRAC_PI_8).abs() < 1e-12);
        assert!(f.reconstruct().max_abs_diff(&post) < 1e-12);
    }

    #[test]
    fn bob_operator_examples() {
        let s = psi(0.4);
        let (v, w) = apply_bob_operator(&s, &Mat2::identity());
        assert_eq!(&v, s.amps());
        assert!((w - 1.0).abs() < 1e-15);
        let p0 = Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]);
        let (_, w) = apply_bob_operator(&s, &p0);
        assert!((w - 0.4f64.cos().powi(2)).abs() < 1e-15);
        for t in [0.05, 0.3, 0.7, 1.0, 1.5] {
            for xi in [0.0, 0.1, 0.4, 0.7, FRAC_PI_4] {
                let (c, sn) = (f64::cos(xi), f64::sin(xi));
                let m = Mat2::from_real([[c + sn, c - sn], [c - sn, c + sn]]).scale_re(0.5);
                let (_, w) = apply_bob_operator(&psi(t), &m);
                assert!((w - 0.5).abs() < 1e-14);
            }
        }
    }

    fn cx_strategy() -> impl Strategy<Value = Cx> {
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(r, i)| Cx::new(r, i))
    }

    fn state_strategy() -> impl Strategy<Value = PureBipartiteState> {
        prop::array::uniform4(cx_strategy())
            .prop_filter_map("nonzero", PureBipartiteState::normalized)
    }

    fn mat_strategy() -> impl Strategy<Value = Mat2> {
        prop::array::uniform2(prop::array::uniform2(cx_strategy())).prop_map(Mat2)
    }

    fn hermitian_strategy() -> impl Strategy<Value = Mat2> {
        mat_strategy().prop_map(|m| (m + m.adjoint()).scale_re(0.5))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn schmidt_reconstructs(s in state_strategy()) {
            let f = schmidt_canonicalize(&s);
            prop_assert!(f.theta >= 0.0 && f.theta <= FRAC_PI_4 + 1e-15);
            prop_assert!(f.theta.cos() >= f.theta.sin());
            prop_assert!(f.u_alice.is_unitary(1e-12));
            prop_assert!(f.v_bob.is_unitary(1e-12));
            prop_assert!(f.reconstruct().max_abs_diff(&s) <= DECOMPOSITION_TOL);
        }
    }

    proptest! {
        #[test]
        fn marginal_is_a_density_matrix(s in state_strategy()) {
            let rho = bob_marginal(&s);
            prop_assert!(rho.is_hermitian(1e-12));
            prop_assert!((rho.trace().re - 1.0).abs() <= 1e-12);
            prop_assert!(rho.hermitian_eigenvalues()[0] >= -1e-12);
        }

        #[test]
        fn expectation_matches_matrix_oracle(
            s in state_strategy(),
            a in hermitian_strategy(),
            b in hermitian_strategy(),
        ) {
            // Brute-force <v|M|v> with M assembled entry by entry.
            let v = s.amps();
            let mut z = ZERO;
            for r in 0..4 {
                for c in 0..4 {
                    let m = a.0[r / 2][c / 2] * b.0[r % 2][c % 2];
                    z += v[r].conj() * m * v[c];
                }
            }
            prop_assert!(z.im.abs() <= 1e-12);
            prop_assert!((expectation(&s, &a, &b).unwrap() - z.re).abs() <= 1e-12);
        }

        #[test]
        fn kronecker_is_bilinear(a in mat_strategy(), b in mat_strategy(), alpha in cx_strategy()) {
            let lhs = tensor_product(&a.scale(alpha), &b);
            let rhs = tensor_product(&a, &b).scale(alpha);
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-14);
        }
    }
}
