//! Dense complex linear algebra for operators and superoperators.
//!
//! Operators are square complex matrices. Superoperators act on operators
//! through column-stacking vectorization: the entry `X[i, j]` of a `d x d`
//! operator lands at position `i + j * d` of `vec(X)`. With this convention
//! `vec(A X B) = (B^T ⊗ A) vec(X)`, which every builder below relies on.

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::{linalg::kron as nd_kron, s, Array1, Array2, ArrayView1, Axis, ShapeBuilder};
use ndarray_linalg::{Eig, Eigh, Inverse, SVD, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative residual accepted for eigenpairs.
pub const EIG_RESIDUAL_TOL: f64 = 1e-8;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Largest eigenvector condition number for which left duals are trusted.
pub const MAX_EIGVEC_CONDITION: f64 = 1e8;

/// A square complex matrix on a finite Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: Array2<C64>,
}

impl Operator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "operator must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { mat })
    }

    /// Builds an operator from row slices. Panics on ragged or non-square input;
    /// intended for literals.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let d = rows.len();
        let mat = Array2::from_shape_fn((d, d), |(i, j)| rows[i][j]);
        Self::new(mat).expect("square literal")
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        let mat = Array2::from_shape_fn((d, d), |(i, j)| C64::new(rows[i][j], 0.0));
        Self::new(mat).expect("square literal")
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: Array2::zeros((dim, dim)) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: Array2::eye(dim) }
    }

    pub fn diag(entries: &[C64]) -> Self {
        Self { mat: Array2::from_diag(&Array1::from(entries.to_vec())) }
    }

    pub fn real_diag(entries: &[f64]) -> Self {
        let e: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&e)
    }

    /// `|i><j|` on a `dim`-dimensional space.
    pub fn ket_bra(i: usize, j: usize, dim: usize) -> Self {
        let mut mat = Array2::zeros((dim, dim));
        mat[[i, j]] = ONE;
        Self { mat }
    }

    /// `|psi><psi|` for an (unnormalized) state vector.
    pub fn projector(psi: &[C64]) -> Self {
        let d = psi.len();
        Self { mat: Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj()) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[[i, j]]
    }

    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.t().mapv(|z| z.conj()) }
    }

    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.t().to_owned() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { mat: self.mat.mapv(|z| z * c) }
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.mat[[i, j]] - self.mat[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// `(X + X†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let dag = self.dagger();
        Self { mat: (&self.mat + &dag.mat).mapv(|z| z * 0.5) }
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "operator dimension mismatch");
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Checks the density-matrix conditions with default tolerances:
    /// unit trace and Hermiticity within 1e-12, eigenvalues above -1e-10.
    pub fn check_density(&self) -> Result<()> {
        self.check_density_with(1e-12, 1e-10)
    }

    /// Density-matrix check with `tol` for trace and Hermiticity and
    /// `eig_tol` for the smallest eigenvalue.
    pub fn check_density_with(&self, tol: f64, eig_tol: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("density matrix"));
        }
        let herm = self.hermiticity_defect();
        if herm > tol {
            return Err(Error::NotDensity(format!("Hermiticity defect {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        let (vals, _) = eigh(&self.hermitian_part())?;
        if let Some(&min) = vals.first() {
            if min < -eig_tol {
                return Err(Error::NotDensity(format!("negative eigenvalue {min:.3e}")));
            }
        }
        Ok(())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { mat: self.mat.dot(&rhs.mat) }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { mat: self.mat.mapv(|z| -z) }
    }
}

pub fn pauli_x() -> Operator {
    Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> Operator {
    Operator::from_rows(&[&[ZERO, -I], &[I, ZERO]])
}

pub fn pauli_z() -> Operator {
    Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

/// `|0><1|`, taking `|1>` to `|0>`.
pub fn sigma_minus() -> Operator {
    Operator::ket_bra(0, 1, 2)
}

/// `|1><0|`, taking `|0>` to `|1>`.
pub fn sigma_plus() -> Operator {
    Operator::ket_bra(1, 0, 2)
}

/// `(|0> + |1>)(<0| + <1|) / 2`.
pub fn plus_state() -> Operator {
    let h = C64::new(0.5, 0.0);
    Operator::from_rows(&[&[h, h], &[h, h]])
}

/// A complex matrix acting on column-stacked vectorized operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    op_dim: usize,
    mat: Array2<C64>,
}

impl Superoperator {
    pub fn new(op_dim: usize, mat: Array2<C64>) -> Result<Self> {
        let n = op_dim * op_dim;
        if op_dim == 0 || mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Dimension(format!(
                "superoperator on {op_dim}-dim operators needs a {n}x{n} matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { op_dim, mat })
    }

    pub fn zeros(op_dim: usize) -> Self {
        let n = op_dim * op_dim;
        Self { op_dim, mat: Array2::zeros((n, n)) }
    }

    pub fn identity(op_dim: usize) -> Self {
        Self { op_dim, mat: Array2::eye(op_dim * op_dim) }
    }

    /// Tabulates a linear map by its action on the matrix units `|i><j|`.
    pub fn from_linear_map<F>(op_dim: usize, f: F) -> Result<Self>
    where
        F: Fn(&Operator) -> Result<Operator>,
    {
        let n = op_dim * op_dim;
        let mut mat = Array2::zeros((n, n));
        for j in 0..op_dim {
            for i in 0..op_dim {
                let image = f(&Operator::ket_bra(i, j, op_dim))?;
                if image.dim() != op_dim {
                    return Err(Error::Dimension("linear map changed the operator dimension".into()));
                }
                mat.column_mut(i + j * op_dim).assign(&vectorize(&image));
            }
        }
        Ok(Self { op_dim, mat })
    }

    pub fn op_dim(&self) -> usize {
        self.op_dim
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        if x.dim() != self.op_dim {
            return Err(Error::Dimension(format!(
                "superoperator on {}-dim operators applied to a {}-dim operator",
                self.op_dim,
                x.dim()
            )));
        }
        devectorize(&self.mat.dot(&vectorize(x)), self.op_dim)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { op_dim: self.op_dim, mat: self.mat.mapv(|z| z * c) }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Frobenius norm of the matrix representation.
    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        assert_eq!(self.op_dim, other.op_dim, "superoperator dimension mismatch");
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `[self, other]` as a superoperator.
    pub fn commutator(&self, other: &Superoperator) -> Superoperator {
        &(self * other) - &(other * self)
    }

    /// Lifts a superoperator acting on tensor factor `factor` of a composite
    /// space with factor dimensions `dims` to the whole space.
    pub fn on_factor(&self, dims: &[usize], factor: usize) -> Result<Superoperator> {
        if factor >= dims.len() || dims[factor] != self.op_dim {
            return Err(Error::Dimension(format!(
                "factor {factor} of {dims:?} does not match superoperator dimension {}",
                self.op_dim
            )));
        }
        let total: usize = dims.iter().product();
        let d = self.op_dim;
        let inner: usize = dims[factor + 1..].iter().product();
        let digit = |idx: usize| (idx / inner) % d;
        let replace = |idx: usize, a: usize| idx - digit(idx) * inner + a * inner;
        let n = total * total;
        let mut mat = Array2::zeros((n, n));
        for c in 0..total {
            for r in 0..total {
                let (a, b) = (digit(r), digit(c));
                let col = r + c * total;
                for bp in 0..d {
                    for ap in 0..d {
                        let v = self.mat[[ap + bp * d, a + b * d]];
                        if v != ZERO {
                            let row = replace(r, ap) + replace(c, bp) * total;
                            mat[[row, col]] += v;
                        }
                    }
                }
            }
        }
        Ok(Superoperator { op_dim: total, mat })
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.op_dim, rhs.op_dim, "superoperator dimension mismatch");
        Superoperator { op_dim: self.op_dim, mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.op_dim, rhs.op_dim, "superoperator dimension mismatch");
        Superoperator { op_dim: self.op_dim, mat: &self.mat - &rhs.mat }
    }
}

/// Composition: `(a * b)(X) = a(b(X))`.
impl Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.op_dim, rhs.op_dim, "superoperator dimension mismatch");
        Superoperator { op_dim: self.op_dim, mat: self.mat.dot(&rhs.mat) }
    }
}

/// Column-stacking vectorization.
pub fn vectorize(x: &Operator) -> Array1<C64> {
    // Row-major iteration over the transpose walks the columns of `x`.
    x.mat.t().iter().copied().collect()
}

pub fn devectorize(v: &Array1<C64>, dim: usize) -> Result<Operator> {
    devectorize_view(v.view(), dim)
}

pub fn devectorize_view(v: ArrayView1<'_, C64>, dim: usize) -> Result<Operator> {
    if dim == 0 || v.len() != dim * dim {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot be reshaped to {dim}x{dim}",
            v.len()
        )));
    }
    let mat = Array2::from_shape_fn((dim, dim), |(i, j)| v[i + j * dim]);
    Ok(Operator { mat })
}

/// `rho -> X rho`.
pub fn left_mult(x: &Operator) -> Superoperator {
    let d = x.dim();
    Superoperator { op_dim: d, mat: nd_kron(&Array2::eye(d), &x.mat) }
}

/// `rho -> rho X`.
pub fn right_mult(x: &Operator) -> Superoperator {
    let d = x.dim();
    Superoperator { op_dim: d, mat: nd_kron(&x.mat.t().to_owned(), &Array2::eye(d)) }
}

/// `rho -> X rho Y`.
pub fn sandwich(x: &Operator, y: &Operator) -> Result<Superoperator> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!(
            "sandwich factors have dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(Superoperator { op_dim: x.dim(), mat: nd_kron(&y.mat.t().to_owned(), &x.mat) })
}

/// `rho -> [H, rho]`.
pub fn commutator_superop(h: &Operator) -> Superoperator {
    &left_mult(h) - &right_mult(h)
}

/// `rho -> {H, rho}`.
pub fn anticommutator_superop(h: &Operator) -> Superoperator {
    &left_mult(h) + &right_mult(h)
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator { mat: nd_kron(&a.mat, &b.mat) }
}

pub fn kron_all(factors: &[Operator]) -> Operator {
    let mut it = factors.iter();
    let first = it.next().expect("at least one factor").clone();
    it.fold(first, |acc, f| kron(&acc, f))
}

/// `I ⊗ ... ⊗ op ⊗ ... ⊗ I` with `op` on factor `factor` of `dims`.
pub fn embed(op: &Operator, dims: &[usize], factor: usize) -> Result<Operator> {
    if factor >= dims.len() || dims[factor] != op.dim() {
        return Err(Error::Dimension(format!(
            "cannot place a {}-dim operator on factor {factor} of {dims:?}",
            op.dim()
        )));
    }
    let outer: usize = dims[..factor].iter().product();
    let inner: usize = dims[factor + 1..].iter().product();
    let mat = nd_kron(&Array2::eye(outer), &nd_kron(&op.mat, &Array2::eye(inner)));
    Ok(Operator { mat })
}

/// Traces out every factor of `dims` except `keep`.
pub fn partial_trace(x: &Operator, dims: &[usize], keep: usize) -> Result<Operator> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || total != x.dim() || keep >= dims.len() {
        return Err(Error::Dimension(format!(
            "factorization {dims:?} (keep {keep}) inconsistent with a {}-dim operator",
            x.dim()
        )));
    }
    let dk = dims[keep];
    let outer: usize = dims[..keep].iter().product();
    let inner: usize = dims[keep + 1..].iter().product();
    let mut out = Array2::zeros((dk, dk));
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = ZERO;
            for o in 0..outer {
                for i in 0..inner {
                    acc += x.mat[[(o * dk + a) * inner + i, (o * dk + b) * inner + i]];
                }
            }
            out[[a, b]] = acc;
        }
    }
    Ok(Operator { mat: out })
}

/// `sqrt(tr(X† X))`.
pub fn hs_norm(x: &Operator) -> f64 {
    x.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced Hilbert-Schmidt norm `sup_{|X| <= 1} |S(X)|`.
///
/// Column-stacking is an isometry between the Hilbert-Schmidt space and
/// `C^{d^2}`, so this is exactly the largest singular value of the matrix.
pub fn induced_norm(s: &Superoperator) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::NonFinite("superoperator"));
    }
    spectral_norm(&s.mat)
}

pub fn spectral_norm(m: &Array2<C64>) -> Result<f64> {
    let (_, sv, _) = m.svd(false, false)?;
    Ok(sv.iter().copied().fold(0.0, f64::max))
}

/// Hermitian eigendecomposition, eigenvalues ascending, eigenvectors as columns.
pub fn eigh(x: &Operator) -> Result<(Vec<f64>, Array2<C64>)> {
    // The LAPACK wrapper returns conjugated eigenvectors for complex
    // row-major input, so hand it a column-major copy.
    let d = x.dim();
    let mut f = Array2::<C64>::zeros((d, d).f());
    f.assign(&x.mat);
    let (vals, vecs) = f.eigh(UPLO::Lower)?;
    let mut out = Array2::<C64>::zeros((d, d));
    out.assign(&vecs);
    Ok((vals.to_vec(), out))
}

/// `|A - B|_1 / 2` for Hermitian `A`, `B`.
pub fn trace_distance(a: &Operator, b: &Operator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("trace distance of operators with different dims".into()));
    }
    let (vals, _) = eigh(&(a - b).hermitian_part())?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// How the matrix exponential is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExpmMethod {
    /// Padé scaling and squaring (orders 3, 5, 7, 9, 13).
    #[default]
    PadeScalingSquaring,
    /// Eigendecomposition when the eigenvector matrix has condition number
    /// below [`MAX_EIGVEC_CONDITION`], Padé otherwise.
    Auto,
}

/// Matrix exponential `exp(self * t)`.
pub trait MatrixExp: Sized {
    fn expm(&self, t: f64) -> Result<Self> {
        self.expm_with(t, ExpmMethod::PadeScalingSquaring)
    }

    fn expm_with(&self, t: f64, method: ExpmMethod) -> Result<Self>;
}

impl MatrixExp for Operator {
    fn expm_with(&self, t: f64, method: ExpmMethod) -> Result<Self> {
        Ok(Operator { mat: expm_matrix(&self.mat, t, method)? })
    }
}

impl MatrixExp for Superoperator {
    fn expm_with(&self, t: f64, method: ExpmMethod) -> Result<Self> {
        Ok(Superoperator { op_dim: self.op_dim, mat: expm_matrix(&self.mat, t, method)? })
    }
}

pub fn expm_matrix(a: &Array2<C64>, t: f64, method: ExpmMethod) -> Result<Array2<C64>> {
    if !t.is_finite() || a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix exponential argument"));
    }
    let at = a.mapv(|z| z * t);
    if method == ExpmMethod::Auto {
        if let Some(e) = expm_eigen(&at)? {
            return Ok(e);
        }
    }
    expm_pade(&at)
}

fn expm_eigen(a: &Array2<C64>) -> Result<Option<Array2<C64>>> {
    let (w, v) = a.eig()?;
    let (_, sv, _) = v.svd(false, false)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 || smax / smin >= MAX_EIGVEC_CONDITION {
        return Ok(None);
    }
    let vinv = v.inv()?;
    let mut scaled = v;
    for (mut col, lam) in scaled.axis_iter_mut(Axis(1)).zip(w.iter()) {
        let e = lam.exp();
        col.mapv_inplace(|z| z * e);
    }
    Ok(Some(scaled.dot(&vinv)))
}

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// 1-norm thresholds for orders 3, 5, 7, 9, 13 (Higham 2005).
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.53939833006323e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn norm1(a: &Array2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn axpy_real(acc: &mut Array2<C64>, c: f64, x: &Array2<C64>) {
    acc.zip_mut_with(x, |a, &b| *a += b * c);
}

fn pade_low(a: &Array2<C64>, b: &[f64]) -> Result<Array2<C64>> {
    let n = a.nrows();
    let m = b.len() - 1;
    let ident: Array2<C64> = Array2::eye(n);
    let a2 = a.dot(a);
    let mut u_inner = Array2::<C64>::zeros((n, n));
    let mut v = Array2::<C64>::zeros((n, n));
    let mut power = ident;
    for k in (0..=m).step_by(2) {
        axpy_real(&mut v, b[k], &power);
        if k < m {
            axpy_real(&mut u_inner, b[k + 1], &power);
        }
        power = power.dot(&a2);
    }
    let u = a.dot(&u_inner);
    pade_ratio(&u, &v)
}

fn pade_13(a: &Array2<C64>) -> Result<Array2<C64>> {
    let b = &PADE_13;
    let n = a.nrows();
    let ident: Array2<C64> = Array2::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let mut inner = Array2::<C64>::zeros((n, n));
    axpy_real(&mut inner, b[13], &a6);
    axpy_real(&mut inner, b[11], &a4);
    axpy_real(&mut inner, b[9], &a2);
    let mut u_inner = a6.dot(&inner);
    axpy_real(&mut u_inner, b[7], &a6);
    axpy_real(&mut u_inner, b[5], &a4);
    axpy_real(&mut u_inner, b[3], &a2);
    axpy_real(&mut u_inner, b[1], &ident);
    let u = a.dot(&u_inner);

    let mut inner = Array2::<C64>::zeros((n, n));
    axpy_real(&mut inner, b[12], &a6);
    axpy_real(&mut inner, b[10], &a4);
    axpy_real(&mut inner, b[8], &a2);
    let mut v = a6.dot(&inner);
    axpy_real(&mut v, b[6], &a6);
    axpy_real(&mut v, b[4], &a4);
    axpy_real(&mut v, b[2], &a2);
    axpy_real(&mut v, b[0], &ident);
    pade_ratio(&u, &v)
}

fn pade_ratio(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let q = v - u;
    let p = v + u;
    Ok(q.inv()?.dot(&p))
}

fn expm_pade(a: &Array2<C64>) -> Result<Array2<C64>> {
    let nrm = norm1(a);
    for (theta, coeffs) in [
        (THETA_3, &PADE_3[..]),
        (THETA_5, &PADE_5[..]),
        (THETA_7, &PADE_7[..]),
        (THETA_9, &PADE_9[..]),
    ] {
        if nrm <= theta {
            return pade_low(a, coeffs);
        }
    }
    let squarings = (nrm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));
    let mut r = pade_13(&scaled)?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Eigen-decomposition of a superoperator with biorthonormal duals.
///
/// Right vectors have unit norm; left vectors satisfy
/// `tr(L_mu† R_nu) = delta_{mu nu}`. Eigenvalues are ordered by ascending
/// `|Re|`, ties broken by imaginary part.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub op_dim: usize,
    pub eigenvalues: Vec<C64>,
    pub right_vectors: Vec<Array1<C64>>,
    pub left_vectors: Vec<Array1<C64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn right_operator(&self, mu: usize) -> Operator {
        devectorize(&self.right_vectors[mu], self.op_dim).expect("consistent spectrum")
    }

    pub fn left_operator(&self, mu: usize) -> Operator {
        devectorize(&self.left_vectors[mu], self.op_dim).expect("consistent spectrum")
    }

    /// `sum_mu lambda_mu R_mu tr(L_mu† X)`.
    pub fn reconstruct_apply(&self, x: &Operator) -> Result<Operator> {
        let vx = vectorize(x);
        if vx.len() != self.op_dim * self.op_dim {
            return Err(Error::Dimension("reconstruction input has wrong dimension".into()));
        }
        let mut out = Array1::<C64>::zeros(vx.len());
        for ((lam, r), l) in self.eigenvalues.iter().zip(&self.right_vectors).zip(&self.left_vectors) {
            let overlap: C64 = l.iter().zip(vx.iter()).map(|(a, b)| a.conj() * b).sum();
            out.scaled_add(lam * overlap, r);
        }
        devectorize(&out, self.op_dim)
    }

    /// Largest `|tr(L_mu† R_nu) - delta_{mu nu}|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (mu, l) in self.left_vectors.iter().enumerate() {
            for (nu, r) in self.right_vectors.iter().enumerate() {
                let ov: C64 = l.iter().zip(r.iter()).map(|(a, b)| a.conj() * b).sum();
                let target = if mu == nu { ONE } else { ZERO };
                worst = worst.max((ov - target).norm());
            }
        }
        worst
    }
}

/// Groups indices of `values` whose members lie within `tol` of a neighbour.
pub fn degenerate_clusters(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

pub fn eig(s: &Superoperator) -> Result<Spectrum> {
    if !s.is_finite() {
        return Err(Error::NonFinite("superoperator"));
    }
    let n = s.mat.nrows();
    let (w, v) = s.mat.eig()?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        w[a].re
            .abs()
            .total_cmp(&w[b].re.abs())
            .then(w[a].im.total_cmp(&w[b].im))
    });
    let eigenvalues: Vec<C64> = order.iter().map(|&k| w[k]).collect();

    let mut vs = Array2::<C64>::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        let c = v.column(k);
        let nrm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        vs.column_mut(col).assign(&c.mapv(|z| z / nrm));
    }

    let (_, sv, _) = vs.svd(false, false)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition >= MAX_EIGVEC_CONDITION {
        return Err(Error::Biorthonormalization { condition, cluster: worst_cluster(&eigenvalues) });
    }

    // Rows of V^{-1} are the biorthonormal duals; within a degenerate cluster
    // this is the blockwise biorthonormalization of the chosen right basis.
    let vinv = vs.inv()?;
    let right_vectors: Vec<Array1<C64>> = (0..n).map(|k| vs.column(k).to_owned()).collect();
    let left_vectors: Vec<Array1<C64>> = (0..n).map(|k| vinv.row(k).mapv(|z| z.conj())).collect();

    let scale = 1.0f64.max(s.frobenius_norm());
    let sh = s.mat.t().mapv(|z| z.conj());
    let mut residual = 0.0f64;
    for k in 0..n {
        let r = &right_vectors[k];
        let rr = s.mat.dot(r) - r.mapv(|z| z * eigenvalues[k]);
        residual = residual.max(rr.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        let l = &left_vectors[k];
        let lnorm = l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let lr = sh.dot(l) - l.mapv(|z| z * eigenvalues[k].conj());
        residual = residual.max(lr.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / lnorm);
    }
    let tolerance = EIG_RESIDUAL_TOL * scale;
    if residual > tolerance {
        return Err(Error::EigenResidual { residual, tolerance });
    }

    let spectrum = Spectrum { op_dim: s.op_dim, eigenvalues, right_vectors, left_vectors };
    let defect = spectrum.biorthogonality_defect();
    if defect > EIG_RESIDUAL_TOL {
        return Err(Error::Biorthonormalization {
            condition,
            cluster: worst_cluster(&spectrum.eigenvalues),
        });
    }
    Ok(spectrum)
}

/// The largest cluster at [`DEGENERACY_TOL`], or the closest pair when no
/// eigenvalues coincide at that tolerance.
fn worst_cluster(values: &[C64]) -> Vec<C64> {
    let clusters = degenerate_clusters(values, DEGENERACY_TOL);
    if let Some(big) = clusters.iter().filter(|c| c.len() > 1).max_by_key(|c| c.len()) {
        return big.iter().map(|&k| values[k]).collect();
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let d = (values[i] - values[j]).norm();
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, i, j));
            }
        }
    }
    best.map(|(_, i, j)| vec![values[i], values[j]]).unwrap_or_default()
}

/// Extracts the `(row, col)` block of size `n` from a `2n x 2n` matrix.
pub(crate) fn block(m: &Array2<C64>, n: usize, row: usize, col: usize) -> Array2<C64> {
    m.slice(s![row * n..(row + 1) * n, col * n..(col + 1) * n]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn vectorize_identity_is_column_stacked() {
        let v = vectorize(&Operator::identity(2));
        assert_eq!(v.to_vec(), vec![c(1.0), c(0.0), c(0.0), c(1.0)]);
    }

    #[test]
    fn vectorize_matrix_units_by_enumeration() {
        // Brute-force: |i><j| must land at i + j*d and nowhere else.
        for d in 1..=4 {
            for i in 0..d {
                for j in 0..d {
                    let v = vectorize(&Operator::ket_bra(i, j, d));
                    for (k, z) in v.iter().enumerate() {
                        let expected = if k == i + j * d { ONE } else { ZERO };
                        assert_eq!(*z, expected);
                    }
                }
            }
        }
        let v = vectorize(&Operator::ket_bra(0, 1, 2));
        assert_eq!(v[2], ONE);
    }

    #[test]
    fn devectorize_round_trip_and_errors() {
        let z = pauli_z();
        assert_eq!(devectorize(&vectorize(&z), 2).unwrap(), z);
        assert!(matches!(devectorize(&Array1::zeros(5), 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn multiplication_superoperators() {
        assert_eq!(left_mult(&Operator::identity(3)), Superoperator::identity(3));
        let out = sandwich(&pauli_z(), &pauli_z()).unwrap().apply(&Operator::ket_bra(0, 1, 2)).unwrap();
        assert_eq!(out, Operator::ket_bra(0, 1, 2).scale(c(-1.0)));
        let out = left_mult(&pauli_x()).apply(&Operator::ket_bra(0, 0, 2)).unwrap();
        assert_eq!(out, Operator::ket_bra(1, 0, 2));
        let out = right_mult(&pauli_x()).apply(&Operator::ket_bra(0, 0, 2)).unwrap();
        assert_eq!(out, Operator::ket_bra(0, 1, 2));
        assert!(sandwich(&pauli_z(), &Operator::identity(3)).is_err());
    }

    #[test]
    fn kron_and_partial_trace() {
        assert_eq!(kron(&Operator::identity(2), &Operator::identity(2)), Operator::identity(4));
        let rho = Operator::real_diag(&[0.7, 0.3]);
        let sigma = plus_state();
        let joint = kron(&rho, &sigma);
        let back = partial_trace(&joint, &[2, 2], 1).unwrap();
        assert!(back.max_abs_diff(&sigma) < 1e-15);
        let back = partial_trace(&joint, &[2, 2], 0).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-15);
        assert!(partial_trace(&joint, &[2, 3], 0).is_err());
    }

    #[test]
    fn bell_state_marginals_by_direct_summation() {
        let h = 1.0 / 2f64.sqrt();
        let bell = Operator::projector(&[c(h), ZERO, ZERO, c(h)]);
        for keep in 0..2 {
            let m = partial_trace(&bell, &[2, 2], keep).unwrap();
            // Direct sum over the traced index of the 4x4 entries.
            let mut expected = Operator::zeros(2);
            let mut mat = expected.mat.clone();
            for a in 0..2 {
                for b in 0..2 {
                    let mut acc = ZERO;
                    for t in 0..2 {
                        let (r, cc) = if keep == 0 { (2 * a + t, 2 * b + t) } else { (2 * t + a, 2 * t + b) };
                        acc += bell.get(r, cc);
                    }
                    mat[[a, b]] = acc;
                }
            }
            expected.mat = mat;
            assert!(m.max_abs_diff(&expected) < 1e-15);
            assert!(m.max_abs_diff(&Operator::identity(2).scale(c(0.5))) < 1e-15);
        }
    }

    #[test]
    fn partial_trace_three_factors() {
        let a = Operator::real_diag(&[0.2, 0.8]);
        let b = Operator::real_diag(&[0.1, 0.5, 0.4]);
        let cc = plus_state();
        let joint = kron_all(&[a.clone(), b.clone(), cc.clone()]);
        assert!(partial_trace(&joint, &[2, 3, 2], 1).unwrap().max_abs_diff(&b) < 1e-15);
        assert!(partial_trace(&joint, &[2, 3, 2], 2).unwrap().max_abs_diff(&cc) < 1e-15);
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = Superoperator::zeros(2).expm(3.0).unwrap();
        assert_eq!(e, Superoperator::identity(2));
    }

    #[test]
    fn expm_commutator_phase() {
        // exp(-i theta [sz, .] t) |0><1| = e^{-2 i theta t} |0><1|
        let theta = 0.7;
        let t = 1.3;
        let gen = commutator_superop(&pauli_z()).scale(C64::new(0.0, -theta));
        let out = gen.expm(t).unwrap().apply(&Operator::ket_bra(0, 1, 2)).unwrap();
        let expected = (C64::new(0.0, -2.0 * theta * t)).exp();
        assert_abs_diff_eq!(out.get(0, 1).re, expected.re, epsilon = 1e-13);
        assert_abs_diff_eq!(out.get(0, 1).im, expected.im, epsilon = 1e-13);
        assert!(out.get(0, 0).norm() < 1e-14 && out.get(1, 0).norm() < 1e-14);
    }

    #[test]
    fn expm_large_norm_against_scalar() {
        let a = Operator::diag(&[C64::new(-300.0, 40.0), C64::new(2.0, -1.0)]);
        let e = a.expm(1.0).unwrap();
        let expected = C64::new(2.0, -1.0).exp();
        assert!((e.get(1, 1) - expected).norm() / expected.norm() < 1e-13);
        assert!(e.get(0, 0).norm() < 1e-100);
    }

    #[test]
    fn expm_methods_agree() {
        let a = Operator::from_rows(&[&[c(-1.0), C64::new(0.3, 1.0)], &[c(0.5), C64::new(-2.0, 0.2)]]);
        let p = a.expm(2.0).unwrap();
        let q = a.expm_with(2.0, ExpmMethod::Auto).unwrap();
        assert!(p.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_finite() {
        let a = Operator::real_diag(&[f64::NAN, 0.0]);
        assert!(matches!(a.expm(1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn norms() {
        assert_abs_diff_eq!(hs_norm(&Operator::identity(2)), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(induced_norm(&Superoperator::identity(3)).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn induced_norm_of_zz_commutator() {
        let zz = kron(&pauli_z(), &pauli_z());
        let k = commutator_superop(&zz).scale(-I);
        // Oracle: K is diagonal in the matrix-unit basis with entries -i(z_r - z_c),
        // so its largest singular value is the largest |z_r - z_c| = 2.
        let mut oracle = 0.0f64;
        for r in 0..4 {
            for cc in 0..4 {
                oracle = oracle.max((zz.get(r, r) - zz.get(cc, cc)).norm());
            }
        }
        assert_abs_diff_eq!(induced_norm(&k).unwrap(), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 2.0, epsilon = 0.0);
    }

    #[test]
    fn eig_diagonal_and_zero() {
        let d = Array2::from_diag(&Array1::from(vec![c(-1.0), c(-2.0), c(-3.0), c(0.0)]));
        let s = Superoperator::new(2, d).unwrap();
        let sp = eig(&s).unwrap();
        let re: Vec<f64> = sp.eigenvalues.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![0.0, -1.0, -2.0, -3.0]);
        for (k, expected_pos) in [3usize, 0, 1, 2].iter().enumerate() {
            let r = &sp.right_vectors[k];
            assert!((r[*expected_pos].norm() - 1.0).abs() < 1e-14);
        }
        let z = eig(&Superoperator::zeros(2)).unwrap();
        assert!(z.eigenvalues.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn eig_reports_defective_cluster() {
        // A Jordan block has a single eigenvector; biorthonormal duals do not exist.
        let mut m = Array2::<C64>::zeros((4, 4));
        m[[0, 1]] = ONE;
        let s = Superoperator::new(2, m).unwrap();
        match eig(&s) {
            Err(Error::Biorthonormalization { cluster, .. }) => assert!(cluster.len() >= 2),
            other => panic!("expected biorthonormalization failure, got {other:?}"),
        }
    }

    #[test]
    fn on_factor_matches_kron_embedding() {
        let h = Operator::from_rows(&[&[c(0.3), C64::new(0.1, 0.4)], &[C64::new(0.1, -0.4), c(-0.2)]]);
        let local = commutator_superop(&h);
        for factor in 0..2 {
            let lifted = local.on_factor(&[2, 2], factor).unwrap();
            let direct = commutator_superop(&embed(&h, &[2, 2], factor).unwrap());
            assert!(lifted.max_abs_diff(&direct) < 1e-15);
        }
        let big = local.on_factor(&[3, 2, 2], 2).unwrap();
        assert_eq!(big.op_dim(), 12);
        assert!(local.on_factor(&[3, 2], 0).is_err());
    }

    #[test]
    fn density_checks() {
        assert!(plus_state().check_density().is_ok());
        assert!(Operator::real_diag(&[1.2, -0.2]).check_density().is_err());
        assert!(Operator::ket_bra(0, 1, 2).check_density().is_err());
    }

    #[test]
    fn eigh_complex_hermitian_residual() {
        let h = Operator::from_rows(&[
            &[c(0.5), C64::new(0.3, -0.4), C64::new(0.0, 0.2)],
            &[C64::new(0.3, 0.4), c(-0.1), C64::new(0.7, 0.1)],
            &[C64::new(0.0, -0.2), C64::new(0.7, -0.1), c(0.9)],
        ]);
        let (vals, vecs) = eigh(&h).unwrap();
        let hv = h.matrix().dot(&vecs);
        for k in 0..3 {
            for i in 0..3 {
                assert!((hv[[i, k]] - vecs[[i, k]] * vals[k]).norm() < 1e-13);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trace_distance_of_orthogonal_states() {
        let a = Operator::ket_bra(0, 0, 2);
        let b = Operator::ket_bra(1, 1, 2);
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 1.0, epsilon = 1e-14);
    }
}
