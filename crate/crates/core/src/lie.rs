//! Small dense matrices for `O(n)` and `so(n)`, `n <= 8`.
//!
//! Everything downstream (transport, holonomy, fiber group actions, frames)
//! works with the three wrappers defined here: [`SquareMatrix`] for arbitrary
//! real matrices, [`OrthogonalElement`] for fiber isometries in an orthonormal
//! gauge, and [`SkewElement`] for infinitesimal isometries. The wrappers check
//! their defining identity once at construction; operations that provably
//! preserve it (products, transposes, conjugations) skip the re-check.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported matrix size.
pub const MAX_DIM: usize = 8;
/// `‖QᵀQ − I‖_max` allowed for an orthogonal element.
pub const ORTHOGONAL_TOL: f64 = 1e-8;
/// `‖A + Aᵀ‖_max` allowed for a skew element.
pub const SKEW_TOL: f64 = 1e-12;
/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Distance of an eigenvalue to `-1` below which the logarithm is refused.
pub const LOG_BRANCH_TOL: f64 = 1e-6;
/// Smallest singular value accepted by [`polar_retract`].
pub const POLAR_MIN_SINGULAR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("unsupported matrix dimension {0} (supported: 1..=8)")]
    Dimension(usize),
    #[error("expected {expected} entries for a {n}x{n} matrix, got {got}")]
    EntryCount { n: usize, expected: usize, got: usize },
    #[error("matrix has a non-finite entry")]
    NonFinite,
    #[error("matrix is not skew-symmetric: ‖A + Aᵀ‖_max = {defect:e}")]
    NotSkew { defect: f64 },
    #[error("matrix is not orthogonal: ‖QᵀQ − I‖_max = {defect:e}")]
    NotOrthogonal { defect: f64 },
    #[error("matrix is singular: smallest singular value {sigma_min:e}, condition estimate {condition:e}")]
    Singular { sigma_min: f64, condition: f64 },
    #[error("logarithm branch is ambiguous: an eigenvalue lies within {distance:e} of -1")]
    BranchAmbiguity { distance: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, LieError>;

/// Real `n x n` matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl SquareMatrix {
    /// Builds from row-major entries.
    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        check_dim(n)?;
        if entries.len() != n * n {
            return Err(LieError::EntryCount { n, expected: n * n, got: entries.len() });
        }
        Self::from_matrix(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LieError::EntryCount { n, expected: n * n, got: flat.len() });
        }
        Self::from_row_major(n, &flat)
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(LieError::Mismatch(m.nrows(), m.ncols()));
        }
        check_dim(m.nrows())?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(LieError::NonFinite);
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        Self(&self.0 * &other.0)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.0, v)
    }

    /// Symmetric part `(M + Mᵀ)/2`.
    pub fn symmetric_part(&self) -> SquareMatrix {
        Self((&self.0 + self.0.transpose()) * 0.5)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

/// Element of `O(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalElement(SquareMatrix);

impl OrthogonalElement {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        let defect = orthogonality_defect(m.matrix());
        if defect > ORTHOGONAL_TOL {
            return Err(LieError::NotOrthogonal { defect });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    /// Wraps a matrix known to be orthogonal by construction.
    pub(crate) fn trusted(m: DMatrix<f64>) -> Self {
        debug_assert!(orthogonality_defect(&m) <= 1e-6, "defect {}", orthogonality_defect(&m));
        Self(SquareMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(SquareMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_square(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.0.matrix()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &OrthogonalElement) -> OrthogonalElement {
        Self(self.0.matmul(&other.0))
    }

    pub fn inverse(&self) -> OrthogonalElement {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.0.apply(v)
    }

    /// `self · A · self⁻¹`.
    pub fn conjugate_skew(&self, a: &SkewElement) -> SkewElement {
        let m = self.matrix() * a.matrix() * self.matrix().transpose();
        SkewElement::projected(m)
    }

    /// `self · B · self⁻¹` for an arbitrary linear map `B`.
    pub fn conjugate(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.matrix() * b * self.matrix().transpose()
    }

    pub fn defect(&self) -> f64 {
        orthogonality_defect(self.matrix())
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn max_abs_diff(&self, other: &OrthogonalElement) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    /// Smallest `k >= 1` with `selfᵏ = I` within `tol`, searching up to `max_order`.
    pub fn order(&self, max_order: usize, tol: f64) -> Option<usize> {
        let id = DMatrix::identity(self.dim(), self.dim());
        let mut power = self.matrix().clone();
        for k in 1..=max_order {
            if max_abs_diff(&power, &id) <= tol {
                return Some(k);
            }
            power = &power * self.matrix();
        }
        None
    }
}

/// Element of `so(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewElement(SquareMatrix);

impl SkewElement {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        let defect = skew_defect(m.matrix());
        if defect > SKEW_TOL {
            return Err(LieError::NotSkew { defect });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    /// Skew part `(M − Mᵀ)/2` of an arbitrary matrix.
    pub fn projected(m: DMatrix<f64>) -> Self {
        Self(SquareMatrix((&m - m.transpose()) * 0.5))
    }

    pub fn zero(n: usize) -> Self {
        Self(SquareMatrix::zeros(n))
    }

    /// `E_ij − E_ji`.
    pub fn elementary(n: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = 1.0;
        m[(j, i)] = -1.0;
        Self(SquareMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_square(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.0.matrix()
    }

    pub fn scale(&self, c: f64) -> SkewElement {
        Self(SquareMatrix(self.matrix() * c))
    }

    pub fn add(&self, other: &SkewElement) -> SkewElement {
        Self(SquareMatrix(self.matrix() + other.matrix()))
    }

    /// Commutator `[A, B] = AB − BA`.
    pub fn bracket(&self, other: &SkewElement) -> SkewElement {
        let (a, b) = (self.matrix(), other.matrix());
        Self::projected(a * b - b * a)
    }

    pub fn norm(&self) -> f64 {
        self.matrix().norm()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix().iter().all(|&x| x == 0.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    fn vectorized(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim() * self.dim(), self.matrix().iter().copied())
    }
}

/// Span of a set of skew generators closed under brackets.
#[derive(Clone, Debug)]
pub struct LieSubalgebra {
    n: usize,
    generators: Vec<SkewElement>,
    rank: usize,
    basis: Vec<SkewElement>,
}

impl LieSubalgebra {
    pub fn new(n: usize, generators: Vec<SkewElement>) -> Result<Self> {
        check_dim(n)?;
        if let Some(g) = generators.iter().find(|g| g.dim() != n) {
            return Err(LieError::Mismatch(n, g.dim()));
        }
        let basis = bracket_closure_basis(&generators);
        Ok(Self { n, rank: basis.len(), generators, basis })
    }

    pub fn trivial(n: usize) -> Self {
        Self { n, generators: Vec::new(), rank: 0, basis: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[SkewElement] {
        &self.generators
    }

    /// Dimension of the generated Lie algebra.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Frobenius-orthonormal basis of the generated algebra.
    pub fn basis(&self) -> &[SkewElement] {
        &self.basis
    }

    /// Whether `other`'s generated algebra lies inside this one.
    pub fn contains(&self, other: &LieSubalgebra) -> bool {
        let mut all: Vec<SkewElement> = self.basis.clone();
        all.extend(other.basis.iter().cloned());
        span_basis(&all).len() == self.rank
    }

    /// `exp(Σ cᵢ bᵢ)` over the orthonormal basis.
    pub fn exp_combination(&self, coefficients: &[f64]) -> OrthogonalElement {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (b, c) in self.basis.iter().zip(coefficients) {
            m += b.matrix() * *c;
        }
        OrthogonalElement::trusted(expm(&m))
    }
}

/// `exp(A)` for skew `A`; the result is orthogonal to machine precision.
pub fn exp_skew(a: &SkewElement) -> OrthogonalElement {
    if a.is_zero() {
        return OrthogonalElement::identity(a.dim());
    }
    let q = expm(a.matrix());
    OrthogonalElement::trusted(q)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub(crate) fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Orthogonal factor of the polar decomposition `M = Q·S`.
pub fn polar_retract(m: &SquareMatrix) -> Result<OrthogonalElement> {
    Ok(OrthogonalElement::trusted(polar_factor(m.matrix())?))
}

pub(crate) fn polar_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    if !(sigma_min > POLAR_MIN_SINGULAR) {
        let condition = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
        return Err(LieError::Singular { sigma_min, condition });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Principal logarithm of an orthogonal matrix with no eigenvalue at `-1`.
pub fn log_orthogonal(q: &OrthogonalElement) -> Result<SkewElement> {
    let n = q.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let shifted = q.matrix() + &id;
    // Q is normal, so the singular values of Q + I are |λ + 1|.
    let distance = shifted.singular_values().min();
    if distance <= LOG_BRANCH_TOL {
        return Err(LieError::BranchAmbiguity { distance });
    }
    if max_abs_diff(q.matrix(), &id) == 0.0 {
        return Ok(SkewElement::zero(n));
    }
    let mut y = q.matrix().clone();
    let mut roots = 0;
    while (&y - &id).norm() > 0.25 && roots < 64 {
        y = sqrt_denman_beavers(&y)?;
        roots += 1;
    }
    let x = &y - &id;
    let mut sum = DMatrix::zeros(n, n);
    let mut power = id.clone();
    for k in 1..200 {
        power = &power * &x;
        let term = &power / k as f64;
        if k % 2 == 1 {
            sum += &term;
        } else {
            sum -= &term;
        }
        if term.amax() <= 1e-18 {
            break;
        }
    }
    Ok(SkewElement::projected(sum * 2f64.powi(roots)))
}

fn sqrt_denman_beavers(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse().ok_or(LieError::Singular { sigma_min: 0.0, condition: f64::INFINITY })?;
        let z_inv = z.clone().try_inverse().ok_or(LieError::Singular { sigma_min: 0.0, condition: f64::INFINITY })?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let step = (&y_next - &y).amax();
        y = y_next;
        z = z_next;
        if step <= 1e-16 * y.amax().max(1.0) {
            break;
        }
    }
    Ok(y)
}

/// Dimension of the Lie algebra generated by `gens` (Frobenius span, iterated brackets).
pub fn bracket_closure_rank(gens: &[SkewElement]) -> Result<usize> {
    if let Some(first) = gens.first() {
        if let Some(g) = gens.iter().find(|g| g.dim() != first.dim()) {
            return Err(LieError::Mismatch(first.dim(), g.dim()));
        }
    }
    Ok(bracket_closure_basis(gens).len())
}

fn bracket_closure_basis(gens: &[SkewElement]) -> Vec<SkewElement> {
    let mut basis = span_basis(gens);
    loop {
        let mut candidates = basis.clone();
        for i in 0..basis.len() {
            for j in (i + 1)..basis.len() {
                candidates.push(basis[i].bracket(&basis[j]));
            }
        }
        let next = span_basis(&candidates);
        if next.len() <= basis.len() {
            return basis;
        }
        basis = next;
    }
}

/// Orthonormal basis (Frobenius) of the linear span, with relative cutoff [`RANK_TOL`].
pub fn span_basis(elems: &[SkewElement]) -> Vec<SkewElement> {
    let Some(first) = elems.first() else {
        return Vec::new();
    };
    let n = first.dim();
    let columns: Vec<DVector<f64>> = elems.iter().map(SkewElement::vectorized).collect();
    let stacked = DMatrix::from_columns(&columns);
    let svd = stacked.svd(true, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Vec::new();
    }
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > RANK_TOL * sigma_max)
        .map(|i| {
            let col = u.column(i);
            SkewElement::projected(DMatrix::from_column_slice(n, n, col.as_slice()))
        })
        .collect()
}

/// Numerical rank of the rows with relative singular-value cutoff `rel_tol`.
pub fn numerical_rank(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Planar rotation `[[cos θ, −sin θ], [sin θ, cos θ]] = exp(θ·J)`.
pub fn rotation2(theta: f64) -> OrthogonalElement {
    let (s, c) = theta.sin_cos();
    OrthogonalElement::trusted(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
}

/// The standard complex structure `J = [[0, −1], [1, 0]]`.
pub fn j2() -> SkewElement {
    SkewElement::elementary(2, 1, 0)
}

/// Block-diagonal sum of square matrices.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = DMatrix::zeros(n, n);
    let mut offset = 0;
    for b in blocks {
        m.view_mut((offset, offset), (b.nrows(), b.ncols())).copy_from(*b);
        offset += b.nrows();
    }
    m
}

/// Random skew matrix with independent `U(-scale, scale)` upper entries.
pub fn random_skew<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> SkewElement {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let x = rng.random_range(-scale..scale);
            m[(i, j)] = x;
            m[(j, i)] = -x;
        }
    }
    SkewElement(SquareMatrix(m))
}

/// Random element of `O(n)`: `exp` of a random skew, optionally composed with a reflection.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> OrthogonalElement {
    let q = exp_skew(&random_skew(n, std::f64::consts::PI / 2.0, rng));
    if rng.random_bool(0.5) {
        let mut r = DMatrix::identity(n, n);
        r[(0, 0)] = -1.0;
        OrthogonalElement::trusted(q.matrix() * r)
    } else {
        q
    }
}

pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    max_abs_diff(&(m.transpose() * m), &DMatrix::identity(n, n))
}

pub fn skew_defect(m: &DMatrix<f64>) -> f64 {
    (m + m.transpose()).amax()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DIM {
        Err(LieError::Dimension(n))
    } else {
        Ok(())
    }
}

/// Serialized form used in configs and reports: row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct MatrixRows(pub Vec<Vec<f64>>);
