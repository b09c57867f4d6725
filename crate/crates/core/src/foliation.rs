//! The foliations `F`, `F^τ`, `F^ℓ`, `F̂^ℓ` of a Euclidean bundle with a
//! leafwise metric connection and an infinitesimal fiber foliation.
//!
//! Leaves are sampled as ε-nets. A leaf of `F^ℓ` through `ξ = (b, v)` meets
//! the fiber over `b` in `H·K⁰(v)`, and the rest of the leaf is the transport
//! of that slice along the base leaf; the sampler builds exactly this
//! picture. Independent constructions (flows of linearized fields, groupoid
//! orbits) are compared against it by Hausdorff distance.

use crate::base::{BasePath, BaseSpace};
use crate::bundle::{parallel_transport, BundleError, ConnectionField};
use crate::cloud::{coverage_bfs, SnapSet, SpatialIndex, TotalPoint};
use crate::expr::Expr;
use crate::lie::{
    exp_skew, mat_vec, numerical_rank, orthogonality_defect, LieError, LieSubalgebra, OrthogonalElement, SkewElement,
    SquareMatrix,
};
use crate::rng;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;
use thiserror::Error;

/// Invariance tolerance for generators of the fiber group.
pub const GENERATOR_INVARIANCE_TOL: f64 = 1e-9;
/// Default tolerance for membership of a fiber isometry in the leaf-fixing group.
pub const MEMBERSHIP_TOL: f64 = 1e-6;
/// Largest number of distinct holonomy elements kept by the word search.
pub const MAX_HOLONOMY_ELEMENTS: usize = 512;
/// Largest denominator tried by the rationality self-check.
pub const MAX_DENOMINATOR: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoliationError {
    #[error("{what} does not preserve invariant '{invariant}' (defect {defect:e})")]
    InvariantViolation { what: String, invariant: String, defect: f64 },
    #[error("closure algebra does not contain the group algebra")]
    ClosureTooSmall,
    #[error("homothety factor must be positive, got {0}")]
    Domain(f64),
    #[error("linearization needs at least three decreasing factors in (0, 1]")]
    Lambdas,
    #[error("linearization does not converge at base point {base:?}: successive differences {differences:?}")]
    NonConvergent { base: Vec<f64>, differences: Vec<f64> },
    #[error("field '{name}' is not Killing: defect {defect:e}")]
    NotKilling { name: String, defect: f64 },
    #[error("flow map at t = {t} is not an isometry (defect {defect:e})")]
    NotIsometric { t: f64, defect: f64 },
    #[error("k_t at t = {t} violates invariant '{invariant}' (defect {defect:e})")]
    FlowLeavesGroup { t: f64, invariant: String, defect: f64 },
    #[error("field is not smooth: {0}")]
    NotSmooth(String),
    #[error("kind F needs at least one invariant function")]
    NoInvariants,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

pub type Result<T> = std::result::Result<T, FoliationError>;

/// Function on the fiber that is constant on the leaves of the fiber foliation.
#[derive(Clone, Debug)]
pub struct Invariant {
    pub name: String,
    expr: Expr,
}

impl Invariant {
    pub fn new(name: impl Into<String>, expr: Expr) -> Self {
        Self { name: name.into(), expr }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.expr.eval(&[], v)
    }
}

/// Declared closure of the fiber group, with rationality flags for the
/// rotation-speed ratios of a one-parameter group.
#[derive(Clone, Debug)]
pub struct GroupClosureSpec {
    pub algebra: LieSubalgebra,
    pub rational: Vec<bool>,
}

/// Rotation speeds `ω` of a skew matrix (its eigenvalues are `±iω`), largest first.
pub fn rotation_speeds(a: &SkewElement) -> Vec<f64> {
    let m = -(a.matrix() * a.matrix());
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig.chunks(2)
        .filter(|c| c.len() == 2)
        .map(|c| (0.5 * (c[0] + c[1])).max(0.0).sqrt())
        .filter(|w| *w > 1e-9)
        .collect()
}

/// Continued-fraction test: whether `x = p/q` with `q ≤ 10⁶` up to `1e-9`.
pub fn is_rational(x: f64) -> bool {
    let (mut p0, mut q0, mut p1, mut q1) = (0.0f64, 1.0f64, 1.0f64, 0.0f64);
    let mut r = x.abs();
    loop {
        let a = r.floor();
        let (p, q) = (a * p1 + p0, a * q1 + q0);
        if q > MAX_DENOMINATOR {
            return false;
        }
        if (x.abs() * q - p).abs() < 1e-9 {
            return true;
        }
        let frac = r - a;
        if frac < 1e-15 {
            return false;
        }
        r = 1.0 / frac;
        (p0, q0, p1, q1) = (p1, q1, p, q);
    }
}

impl GroupClosureSpec {
    /// Mismatches between the declared flags and the continued-fraction test on the
    /// ratios `ω_k / ω_0` of a one-parameter group.
    pub fn rationality_warnings(&self, algebra: &LieSubalgebra) -> Vec<String> {
        if algebra.rank() != 1 {
            return Vec::new();
        }
        let speeds = rotation_speeds(&algebra.basis()[0]);
        let ratios: Vec<f64> = speeds.iter().skip(1).map(|w| w / speeds[0]).collect();
        let mut warnings = Vec::new();
        if self.rational.len() != ratios.len() {
            warnings.push(format!(
                "{} rationality flags declared for {} rotation-speed ratios",
                self.rational.len(),
                ratios.len()
            ));
        }
        for (k, (ratio, declared)) in ratios.iter().zip(&self.rational).enumerate() {
            let detected = is_rational(*ratio);
            if detected != *declared {
                warnings.push(format!(
                    "ratio {k} = {ratio} declared {}, detected {}",
                    if *declared { "rational" } else { "irrational" },
                    if detected { "rational" } else { "irrational" }
                ));
            }
        }
        warnings
    }
}

/// Infinitesimal foliation of the fiber: the leaf-fixing group `K⁰` (by its
/// algebra), optional finite isometries, invariants and the declared closure.
#[derive(Clone, Debug)]
pub struct FiberFoliation {
    n: usize,
    algebra: LieSubalgebra,
    finite_part: Vec<OrthogonalElement>,
    invariants: Vec<Invariant>,
    closure: GroupClosureSpec,
    probes: Vec<Vec<f64>>,
}

impl FiberFoliation {
    pub fn new(
        algebra: LieSubalgebra,
        finite_part: Vec<OrthogonalElement>,
        invariants: Vec<Invariant>,
        closure: GroupClosureSpec,
    ) -> Result<Self> {
        let n = algebra.dim();
        if closure.algebra.dim() != n || finite_part.iter().any(|g| g.dim() != n) {
            return Err(FoliationError::Dimension("fiber group data disagree on n".into()));
        }
        if !closure.algebra.contains(&algebra) {
            return Err(FoliationError::ClosureTooSmall);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let probes = (0..16)
            .map(|_| {
                let r = rng.random_range(0.2..2.0);
                random_unit(n, &mut rng).into_iter().map(|x| x * r).collect()
            })
            .collect();
        let fib = Self { n, algebra, finite_part, invariants, closure, probes };
        let times = [0.37, 1.9, -2.6];
        let checks = fib.algebra.generators().iter().enumerate().map(|(i, g)| (format!("generator {i}"), g)).chain(
            fib.closure.algebra.generators().iter().enumerate().map(|(i, g)| (format!("closure generator {i}"), g)),
        );
        for (what, g) in checks {
            for t in times {
                fib.check_element(&what, &exp_skew(&g.scale(t)), GENERATOR_INVARIANCE_TOL)?;
            }
        }
        for (i, g) in fib.finite_part.iter().enumerate() {
            fib.check_element(&format!("finite element {i}"), g, GENERATOR_INVARIANCE_TOL)?;
        }
        Ok(fib)
    }

    fn check_element(&self, what: &str, g: &OrthogonalElement, tol: f64) -> Result<()> {
        for f in &self.invariants {
            let defect = self.invariant_defect(f, g);
            if defect > tol {
                return Err(FoliationError::InvariantViolation {
                    what: what.into(),
                    invariant: f.name.clone(),
                    defect,
                });
            }
        }
        Ok(())
    }

    fn invariant_defect(&self, f: &Invariant, g: &OrthogonalElement) -> f64 {
        self.probes
            .iter()
            .map(|v| {
                let base = f.eval(v);
                (f.eval(&g.apply(v)) - base).abs() / base.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    pub fn algebra(&self) -> &LieSubalgebra {
        &self.algebra
    }

    pub fn closure(&self) -> &GroupClosureSpec {
        &self.closure
    }

    pub fn finite_part(&self) -> &[OrthogonalElement] {
        &self.finite_part
    }

    pub fn invariants(&self) -> &[Invariant] {
        &self.invariants
    }

    /// Invariant values at a fiber vector.
    pub fn invariant_values(&self, v: &[f64]) -> Vec<f64> {
        self.invariants.iter().map(|f| f.eval(v)).collect()
    }

    /// Largest change of an invariant under `g` on the probe vectors, with its name.
    pub fn membership_defect(&self, g: &OrthogonalElement) -> (f64, String) {
        self.invariants
            .iter()
            .map(|f| (self.invariant_defect(f, g), f.name.clone()))
            .fold((0.0, String::new()), |acc, x| if x.0 > acc.0 { x } else { acc })
    }

    /// Whether `g` fixes every leaf of the fiber foliation within `tol`.
    pub fn contains(&self, g: &OrthogonalElement, tol: f64) -> bool {
        self.membership_defect(g).0 <= tol
    }
}

pub(crate) fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Fiber scaling `(b, v) ↦ (b, λv)`.
pub fn homothety(lambda: f64, point: &TotalPoint) -> Result<TotalPoint> {
    if !(lambda > 0.0) {
        return Err(FoliationError::Domain(lambda));
    }
    Ok(TotalPoint::new(point.base.clone(), point.fiber.iter().map(|x| lambda * x).collect()))
}

/// Vector field on the total space, split into base and fiber components.
pub trait VectorField: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    fn base_dim(&self) -> usize;
    fn fiber_dim(&self) -> usize;
    fn eval(&self, b: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// `M(b)` when the fiber part is exactly `v ↦ M(b) v`; such a field is its own linearization.
    fn exact_linear_part(&self, _b: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Vector field given by closed-form expressions in `x*` and `v*`.
#[derive(Clone, Debug)]
pub struct TotalVectorField {
    pub name: String,
    pub base_part: Vec<Expr>,
    pub fiber_part: Vec<Expr>,
}

impl TotalVectorField {
    /// Checks finite values and a bounded finite-difference derivative at the probes.
    pub fn check_smooth(&self, probes: &[TotalPoint], bound: f64) -> Result<()> {
        let h = 1e-5;
        for p in probes {
            let (b0, f0) = self.eval(&p.base, &p.fiber);
            if b0.iter().chain(&f0).any(|x| !x.is_finite()) {
                return Err(FoliationError::NotSmooth(format!("'{}' is not finite at {p:?}", self.name)));
            }
            let nb = p.base.len();
            for i in 0..nb + p.fiber.len() {
                let mut q = p.clone();
                if i < nb {
                    q.base[i] += h;
                } else {
                    q.fiber[i - nb] += h;
                }
                let (b1, f1) = self.eval(&q.base, &q.fiber);
                let slope = b1
                    .iter()
                    .chain(&f1)
                    .zip(b0.iter().chain(&f0))
                    .map(|(a, b)| ((a - b) / h).abs())
                    .fold(0.0, f64::max);
                if !(slope <= bound) {
                    return Err(FoliationError::NotSmooth(format!(
                        "'{}' has derivative {slope:e} along coordinate {i} at {p:?}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

impl VectorField for TotalVectorField {
    fn name(&self) -> &str {
        &self.name
    }

    fn base_dim(&self) -> usize {
        self.base_part.len()
    }

    fn fiber_dim(&self) -> usize {
        self.fiber_part.len()
    }

    fn eval(&self, b: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.base_part.iter().map(|e| e.eval(b, v)).collect(), self.fiber_part.iter().map(|e| e.eval(b, v)).collect())
    }
}

/// Horizontal lift of the coordinate field `∂/∂x_i`: its flow is parallel transport.
#[derive(Clone, Debug)]
pub struct HorizontalField {
    name: String,
    conn: ConnectionField,
    coordinate: usize,
}

impl HorizontalField {
    pub fn new(conn: ConnectionField, coordinate: usize) -> Self {
        Self { name: format!("horizontal x{coordinate}"), conn, coordinate }
    }
}

impl VectorField for HorizontalField {
    fn name(&self) -> &str {
        &self.name
    }

    fn base_dim(&self) -> usize {
        self.conn.space().dim()
    }

    fn fiber_dim(&self) -> usize {
        self.conn.fiber_dim()
    }

    fn eval(&self, b: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut e = vec![0.0; b.len()];
        e[self.coordinate] = 1.0;
        let a = self.conn.coefficient(b, &e);
        let w = mat_vec(a.matrix(), v).into_iter().map(|x| -x).collect();
        (e, w)
    }

    fn exact_linear_part(&self, b: &[f64]) -> Option<DMatrix<f64>> {
        let mut e = vec![0.0; b.len()];
        e[self.coordinate] = 1.0;
        Some(-self.conn.coefficient(b, &e).matrix())
    }
}

/// Fiber field `v ↦ A v` of a generator of the fiber group.
#[derive(Clone, Debug)]
pub struct GeneratorField {
    name: String,
    base_dim: usize,
    generator: SkewElement,
}

impl GeneratorField {
    pub fn new(name: impl Into<String>, base_dim: usize, generator: SkewElement) -> Self {
        Self { name: name.into(), base_dim, generator }
    }
}

impl VectorField for GeneratorField {
    fn name(&self) -> &str {
        &self.name
    }

    fn base_dim(&self) -> usize {
        self.base_dim
    }

    fn fiber_dim(&self) -> usize {
        self.generator.dim()
    }

    fn eval(&self, _b: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.base_dim], mat_vec(self.generator.matrix(), v))
    }

    fn exact_linear_part(&self, _b: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.generator.matrix().clone())
    }
}

/// The limit `lim_{λ→0} (h_λ⁻¹)_* X`: base part along the zero section and a
/// fiber-linear part `v ↦ M(b) v`.
#[derive(Clone, Debug)]
pub struct LinearizedField {
    source: Arc<dyn VectorField>,
    lambdas: Vec<f64>,
    /// `(b, M(b))` at the probe base points.
    pub samples: Vec<(Vec<f64>, SquareMatrix)>,
    /// Largest residual of the linear fit at the probes.
    pub residual: f64,
}

impl LinearizedField {
    pub fn source(&self) -> &dyn VectorField {
        self.source.as_ref()
    }

    /// `M(b)` with the residual of the linear fit.
    pub fn fiber_matrix(&self, b: &[f64]) -> Result<(SquareMatrix, f64)> {
        linear_part(self.source.as_ref(), &self.lambdas, b)
    }

    pub fn base_part(&self, b: &[f64]) -> Vec<f64> {
        self.source.eval(b, &vec![0.0; self.source.fiber_dim()]).0
    }
}

impl VectorField for LinearizedField {
    fn name(&self) -> &str {
        self.source.name()
    }

    fn base_dim(&self) -> usize {
        self.source.base_dim()
    }

    fn fiber_dim(&self) -> usize {
        self.source.fiber_dim()
    }

    fn eval(&self, b: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if let Some(m) = self.source.exact_linear_part(b) {
            return (self.base_part(b), mat_vec(&m, v));
        }
        let m = match self.fiber_matrix(b) {
            Ok((m, _)) => m,
            Err(_) => return (vec![f64::NAN; self.base_dim()], vec![f64::NAN; self.fiber_dim()]),
        };
        (self.base_part(b), m.apply(v))
    }
}

/// Neville extrapolation of samples `(λ_k, y_k)` to `λ = 0`.
fn extrapolate_to_zero(lambdas: &[f64], values: &[Vec<f64>]) -> Vec<f64> {
    let mut table: Vec<Vec<f64>> = values.to_vec();
    let m = lambdas.len();
    for level in 1..m {
        for i in 0..m - level {
            let (li, lj) = (lambdas[i], lambdas[i + level]);
            table[i] = table[i].iter().zip(&table[i + 1]).map(|(a, b)| (lj * a - li * b) / (lj - li)).collect();
        }
    }
    table.swap_remove(0)
}

fn frame_vectors(n: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            let mut e = vec![0.0; n];
            e[i] = s;
            e[j] = s;
            frame.push(e);
        }
    }
    frame
}

fn linear_part(field: &dyn VectorField, lambdas: &[f64], b: &[f64]) -> Result<(SquareMatrix, f64)> {
    let n = field.fiber_dim();
    let frame = frame_vectors(n);
    let mut limits = Vec::with_capacity(frame.len());
    for u in &frame {
        let values: Vec<Vec<f64>> = lambdas
            .iter()
            .map(|&l| {
                let scaled: Vec<f64> = u.iter().map(|x| l * x).collect();
                field.eval(b, &scaled).1.into_iter().map(|x| x / l).collect()
            })
            .collect();
        let differences: Vec<f64> =
            values.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max)).collect();
        if differences.windows(2).any(|d| d[1] > d[0] * (1.0 + 1e-9) + 1e-13)
            || values.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(FoliationError::NonConvergent { base: b.to_vec(), differences });
        }
        limits.push(extrapolate_to_zero(lambdas, &values));
    }
    // Least squares M minimizing Σ |M u − w(u)|² over the frame.
    let m = frame.len();
    let u = DMatrix::from_fn(n, m, |i, k| frame[k][i]);
    let w = DMatrix::from_fn(n, m, |i, k| limits[k][i]);
    let gram = &u * u.transpose();
    let inv = gram.try_inverse().expect("frame spans the fiber");
    let matrix = &w * u.transpose() * inv;
    let residual = (&matrix * &u - &w).abs().max();
    Ok((SquareMatrix::from_matrix(matrix)?, residual))
}

/// Linearizes `field` at the probe base points from the factors `lambdas`.
pub fn linearize_field(field: Arc<dyn VectorField>, lambdas: &[f64], probes: &[Vec<f64>]) -> Result<LinearizedField> {
    if lambdas.len() < 3 || lambdas.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) || lambdas.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(FoliationError::Lambdas);
    }
    let mut samples = Vec::with_capacity(probes.len());
    let mut residual: f64 = 0.0;
    for b in probes {
        let (m, r) = linear_part(field.as_ref(), lambdas, b)?;
        residual = residual.max(r);
        samples.push((b.clone(), m));
    }
    Ok(LinearizedField { source: field, lambdas: lambdas.to_vec(), samples, residual })
}

/// `max |⟨M v, v⟩|` over random unit `v`, at every probe of the linearization.
pub fn killing_check(field: &LinearizedField, samples: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, "killing", 0);
    let mut worst: f64 = 0.0;
    for (_, m) in &field.samples {
        for _ in 0..samples {
            let v = random_unit(m.dim(), &mut rng);
            let mv = m.apply(&v);
            worst = worst.max(mv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs());
        }
    }
    worst
}

/// `A ↦ Φ A Φ⁻¹` for each generator.
pub fn conjugate_group(phi: &SquareMatrix, generators: &[SkewElement]) -> Result<Vec<SkewElement>> {
    let q = OrthogonalElement::new(phi.clone())?;
    Ok(generators.iter().map(|a| q.conjugate_skew(a)).collect())
}

/// Sample `(t, b_t, φ_t)` of a fiber-isometric flow started at `b_0`.
#[derive(Clone, Debug)]
pub struct FlowSample {
    pub t: f64,
    pub base: Vec<f64>,
    pub map: SquareMatrix,
}

/// Flow of a linearized field: `ḃ = X(b)`, `Φ̇ = M(b) Φ`, sampled at `times` (increasing, from 0).
pub fn linearized_flow(field: &LinearizedField, b0: &[f64], times: &[f64], substep: f64) -> Result<Vec<FlowSample>> {
    let n = field.fiber_dim();
    let mut b = b0.to_vec();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let deriv = |b: &[f64], phi: &DMatrix<f64>| -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (m, _) = field.fiber_matrix(b)?;
        Ok((field.base_part(b), m.matrix() * phi))
    };
    let axpy = |b: &[f64], d: &[f64], h: f64| -> Vec<f64> { b.iter().zip(d).map(|(x, y)| x + h * y).collect() };
    for &target in times {
        let span = target - t;
        let count = (span / substep).ceil().max(0.0) as usize;
        if count > 0 {
            let h = span / count as f64;
            for _ in 0..count {
                let (db1, k1) = deriv(&b, &phi)?;
                let (db2, k2) = deriv(&axpy(&b, &db1, 0.5 * h), &(&phi + &k1 * (0.5 * h)))?;
                let (db3, k3) = deriv(&axpy(&b, &db2, 0.5 * h), &(&phi + &k2 * (0.5 * h)))?;
                let (db4, k4) = deriv(&axpy(&b, &db3, h), &(&phi + &k3 * h))?;
                for i in 0..b.len() {
                    b[i] += h / 6.0 * (db1[i] + 2.0 * db2[i] + 2.0 * db3[i] + db4[i]);
                }
                phi += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            }
        }
        t = target;
        out.push(FlowSample { t, base: b.clone(), map: SquareMatrix::from_matrix(phi.clone())? });
    }
    Ok(out)
}

/// `k_t = P_{γ_t} ∘ φ_t` with `γ_t` the straight path from `b_t` back to `b_0`.
pub fn factor_flow(
    flow: &[FlowSample],
    conn: &ConnectionField,
    fib: &FiberFoliation,
    step: f64,
    tol: f64,
) -> Result<Vec<(f64, OrthogonalElement)>> {
    let space = conn.space();
    let b0 = &flow.first().ok_or_else(|| FoliationError::Dimension("empty flow".into()))?.base;
    flow.iter()
        .map(|s| {
            let defect = orthogonality_defect(s.map.matrix());
            if !(defect <= crate::bundle::FLOW_ISOMETRY_TOL) {
                return Err(FoliationError::NotIsometric { t: s.t, defect });
            }
            let gamma = BasePath::polyline(space, vec![s.base.clone(), b0.clone()]).map_err(BundleError::from)?;
            let p = parallel_transport(&gamma, conn, step)?;
            let k = p.matrix() * s.map.matrix();
            let k = OrthogonalElement::new(SquareMatrix::from_matrix(k)?)?;
            let (defect, invariant) = fib.membership_defect(&k);
            if defect > tol {
                return Err(FoliationError::FlowLeavesGroup { t: s.t, invariant, defect });
            }
            Ok((s.t, k))
        })
        .collect()
}

/// Which foliation a leaf sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeafKind {
    #[serde(rename = "F")]
    F,
    #[serde(rename = "F_tau")]
    FTau,
    #[serde(rename = "F_ell")]
    FEll,
    #[serde(rename = "F_hat")]
    FHat,
}

impl LeafKind {
    pub fn label(self) -> &'static str {
        match self {
            LeafKind::F => "F",
            LeafKind::FTau => "F_tau",
            LeafKind::FEll => "F_ell",
            LeafKind::FHat => "F_hat",
        }
    }
}

/// Limits on the generating moves of a sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Group lattice shells, level-set walk steps, or flow points.
    pub group_steps: usize,
    /// Longest holonomy word.
    pub word_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Net resolution; base grid spacing is `ε/2` and merging snaps at `ε/4`.
    pub epsilon: f64,
    /// Group lattice step.
    pub tau: f64,
    pub transport_step: f64,
    pub budget: Budget,
    pub seed: u64,
    /// Transport the fiber slice over the base leaf; off gives the slice alone.
    pub include_base: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub group_steps: usize,
    pub words: Vec<String>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSample {
    pub kind: LeafKind,
    pub seed_point: TotalPoint,
    pub epsilon: f64,
    pub points: Vec<TotalPoint>,
    pub generation: Generation,
    /// Budget ran out before the net stopped growing.
    pub partial: bool,
}

fn matrix_key(m: &DMatrix<f64>) -> Vec<i64> {
    m.iter().map(|x| (x / 1e-7).round() as i64).collect()
}

/// Holonomy elements reachable by words of bounded length in the generator loops at `b`.
pub fn holonomy_words(
    b: &[f64],
    conn: &ConnectionField,
    step: f64,
    word_length: usize,
) -> Result<(Vec<(String, OrthogonalElement)>, bool)> {
    let n = conn.fiber_dim();
    let loops = conn.space().generator_loops(b);
    let gens = crate::bundle::holonomy_sample(b, &loops, conn, step)?;
    let id = OrthogonalElement::identity(n);
    let mut letters = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        if g.max_abs_diff(&id) > 1e-9 {
            let c = (b'a' + i as u8) as char;
            letters.push((c.to_string(), g.clone()));
            letters.push((c.to_ascii_uppercase().to_string(), g.inverse()));
        }
    }
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    seen.insert(matrix_key(id.matrix()));
    let mut elements = vec![(String::new(), id)];
    let mut frontier = vec![0usize];
    let mut partial = !letters.is_empty() && word_length == 0;
    for level in 0..word_length {
        let mut next = Vec::new();
        for &i in &frontier {
            for (letter, g) in &letters {
                if elements.len() >= MAX_HOLONOMY_ELEMENTS {
                    return Ok((elements, true));
                }
                let h = g.compose(&elements[i].1);
                if seen.insert(matrix_key(h.matrix())) {
                    next.push(elements.len());
                    elements.push((format!("{letter}{}", elements[i].0), h));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        if level + 1 == word_length {
            partial = true;
        }
        frontier = next;
    }
    Ok((elements, partial))
}

/// Lattice `{exp(τ Σ cᵢ Bᵢ)}` over integer vectors with `|c|₁ ≤ shells`, by shell.
fn lattice_shells(basis: &[SkewElement], tau: f64, shells: usize) -> Vec<Vec<OrthogonalElement>> {
    let m = basis.len();
    let n = basis.first().map_or(0, SkewElement::dim);
    let mut out = Vec::with_capacity(shells + 1);
    for r in 0..=shells {
        let coeffs = l1_sphere(m, r as i64);
        let elems: Vec<OrthogonalElement> = coeffs
            .par_iter()
            .map(|c| {
                let mut a = DMatrix::zeros(n, n);
                for (ci, b) in c.iter().zip(basis) {
                    a += b.matrix() * (*ci as f64 * tau);
                }
                exp_skew(&SkewElement::projected(a))
            })
            .collect();
        out.push(elems);
    }
    out
}

/// Integer vectors of length `m` with `|c|₁ = r`, in lexicographic order.
fn l1_sphere(m: usize, r: i64) -> Vec<Vec<i64>> {
    if m == 0 {
        return if r == 0 { vec![vec![]] } else { vec![] };
    }
    if r == 0 {
        return vec![vec![0; m]];
    }
    let mut out = Vec::new();
    for first in -r..=r {
        let rest = r - first.abs();
        for tail in l1_sphere(m - 1, rest) {
            let mut c = vec![first];
            c.extend(tail);
            out.push(c);
        }
    }
    out
}

fn newton_project(fib: &FiberFoliation, target: &[f64], v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len();
    let mut v = v.to_vec();
    for _ in 0..30 {
        let r: Vec<f64> = fib.invariant_values(&v).iter().zip(target).map(|(a, b)| a - b).collect();
        if r.iter().all(|x| x.abs() <= 1e-13 * target.iter().fold(1.0f64, |m, t| m.max(t.abs()))) {
            return Some(v);
        }
        let jac = invariant_jacobian(fib, &v);
        let pinv = jac.clone().pseudo_inverse(1e-12).ok()?;
        let delta = pinv * DMatrix::from_column_slice(r.len(), 1, &r);
        for i in 0..n {
            v[i] -= delta[i];
        }
    }
    let r = fib.invariant_values(&v).iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (r <= 1e-10).then_some(v)
}

fn invariant_jacobian(fib: &FiberFoliation, v: &[f64]) -> DMatrix<f64> {
    let h = 1e-6;
    let k = fib.invariants.len();
    let mut jac = DMatrix::zeros(k, v.len());
    for j in 0..v.len() {
        let mut p = v.to_vec();
        let mut q = v.to_vec();
        p[j] += h;
        q[j] -= h;
        let (fp, fq) = (fib.invariant_values(&p), fib.invariant_values(&q));
        for i in 0..k {
            jac[(i, j)] = (fp[i] - fq[i]) / (2.0 * h);
        }
    }
    jac
}

/// Projected random walk on the invariant level set through `v`, growing an ε/4-spaced net.
fn level_set_walk(
    fib: &FiberFoliation,
    v: &[f64],
    epsilon: f64,
    steps: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, bool)> {
    if fib.invariants.is_empty() {
        return Err(FoliationError::NoInvariants);
    }
    let n = v.len();
    let target = fib.invariant_values(v);
    let space = BaseSpace::new(crate::base::BaseKind::ProductBox {
        plaque_dim: 1,
        slice_dim: 0,
        lower: vec![-1.0],
        upper: vec![1.0],
    })
    .expect("valid box");
    let as_point = |w: &[f64]| TotalPoint::new(vec![0.0], w.to_vec());
    let radius = epsilon / 4.0;
    let mut index = SpatialIndex::new(&space, radius, (1..=n.min(4)).collect());
    index.insert(&as_point(v));
    let mut points = vec![v.to_vec()];
    let mut rng = rng::stream(seed, "level-set-walk", 0);
    let mut last_accept = None;
    for step in 0..steps {
        let from = points[rng.random_range(0..points.len())].clone();
        let jac = invariant_jacobian(fib, &from);
        let d = random_unit(n, &mut rng);
        // Remove the normal component, then take a step of length ε/2.
        let normal = match jac.clone().pseudo_inverse(1e-12) {
            Ok(pinv) => pinv * (&jac * DMatrix::from_column_slice(n, 1, &d)),
            Err(_) => DMatrix::zeros(n, 1),
        };
        let tangent: Vec<f64> = (0..n).map(|i| d[i] - normal[i]).collect();
        let norm = tangent.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        let trial: Vec<f64> = from.iter().zip(&tangent).map(|(x, t)| x + 0.5 * epsilon * t / norm).collect();
        if let Some(w) = newton_project(fib, &target, &trial) {
            if !index.any_within(&as_point(&w), radius) {
                index.insert(&as_point(&w));
                points.push(w);
                last_accept = Some(step);
            }
        }
    }
    let partial = steps == 0 || last_accept.is_some_and(|s| s + steps.min(50) >= steps);
    Ok((points, partial))
}

/// Fiber vectors of `L_ξ ∩ E_b` for the given kind, with the partial flag and holonomy words.
pub fn fiber_slice(
    kind: LeafKind,
    xi: &TotalPoint,
    conn: &ConnectionField,
    fib: &FiberFoliation,
    spec: &SampleSpec,
) -> Result<(Vec<Vec<f64>>, bool, Vec<String>)> {
    let (holonomy, mut partial) = holonomy_words(&xi.base, conn, spec.transport_step, spec.budget.word_length)?;
    let orbit: Vec<Vec<f64>> = match kind {
        LeafKind::FTau => vec![xi.fiber.clone()],
        LeafKind::F => {
            let (walk, p) = level_set_walk(fib, &xi.fiber, spec.epsilon, spec.budget.group_steps, spec.seed)?;
            partial |= p;
            walk
        }
        LeafKind::FEll | LeafKind::FHat => {
            let algebra = if kind == LeafKind::FEll { &fib.algebra } else { &fib.closure.algebra };
            let basis = algebra.basis();
            let shells = lattice_shells(basis, spec.tau, spec.budget.group_steps);
            let shells: Vec<Vec<Vec<f64>>> =
                shells.iter().map(|shell| shell.iter().map(|g| g.apply(&xi.fiber)).collect()).collect();
            // The orbit is closed up when the outermost shell returns near holonomy images of
            // shells at least an ε/2 displacement behind it; neighboring shells are always that close.
            let speed = basis
                .iter()
                .map(|b| mat_vec(b.matrix(), &xi.fiber).iter().map(|x| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let last = shells.len() - 1;
            if !basis.is_empty() && speed > 1e-12 {
                let gap = (0.5 * spec.epsilon / (spec.tau * speed)).ceil() as usize + 1;
                let open = if last < gap {
                    true
                } else {
                    let space = conn.space();
                    let mut index = SpatialIndex::new(
                        space,
                        spec.epsilon / 2.0,
                        (space.dim()..space.dim() + fib.n).take(4).collect(),
                    );
                    for w in shells[..=last - gap].iter().flatten() {
                        for (_, h) in &holonomy {
                            index.insert(&TotalPoint::new(xi.base.clone(), h.apply(w)));
                        }
                    }
                    shells[last]
                        .iter()
                        .any(|w| !index.any_within(&TotalPoint::new(xi.base.clone(), w.clone()), spec.epsilon / 2.0))
                };
                partial |= open;
            }
            shells.into_iter().flatten().collect()
        }
    };
    let mut set = SnapSet::new(conn.space(), spec.epsilon / 4.0);
    for (_, h) in &holonomy {
        for w in &orbit {
            set.insert(TotalPoint::new(xi.base.clone(), h.apply(w)));
        }
    }
    let words = holonomy.into_iter().map(|(w, _)| if w.is_empty() { "1".to_string() } else { w }).collect();
    Ok((set.into_points().into_iter().map(|p| p.fiber).collect(), partial, words))
}

/// Grid offsets of spacing `δ` over the base leaf through `b`, in plaque coordinates.
fn base_grid(space: &BaseSpace, b: &[f64], delta: f64) -> Vec<Vec<f64>> {
    let plaque = space.plaque_coordinates();
    let (lo, hi) = space.sampling_domain();
    let axes: Vec<Vec<f64>> = plaque
        .iter()
        .map(|&i| match space.period(i) {
            Some(t) => {
                let count = (t / delta).ceil().max(1.0) as usize;
                let h = t / count as f64;
                (0..count).map(|k| k as f64 * h).collect()
            }
            None => {
                let down = ((b[i] - lo[i]) / delta).floor() as i64;
                let up = ((hi[i] - b[i]) / delta).floor() as i64;
                let mut axis: Vec<f64> = (0..=up).map(|k| k as f64 * delta).collect();
                axis.extend((1..=down).map(|k| -(k as f64) * delta));
                axis
            }
        })
        .collect();
    let mut grid = vec![vec![0.0; plaque.len()]];
    for (a, axis) in axes.iter().enumerate() {
        grid = axis
            .iter()
            .flat_map(|&x| {
                grid.iter().map(move |g| {
                    let mut g = g.clone();
                    g[a] = x;
                    g
                })
            })
            .collect();
    }
    grid
}

/// Transports `P_{b → b + offset}` over a comb tree of short straight segments.
fn grid_transports(
    conn: &ConnectionField,
    b: &[f64],
    offsets: &[Vec<f64>],
    step: f64,
) -> Result<Vec<(Vec<f64>, OrthogonalElement)>> {
    let space = conn.space();
    let plaque = space.plaque_coordinates();
    let lift = |o: &[f64]| -> Vec<f64> {
        let mut p = b.to_vec();
        for (k, &i) in plaque.iter().enumerate() {
            p[i] += o[k];
        }
        p
    };
    // Parent: move the last nonzero offset one grid step toward zero.
    let parent_of = |o: &[f64]| -> Option<Vec<f64>> {
        let k = o.iter().rposition(|x| *x != 0.0)?;
        let mut p = o.to_vec();
        let step_k = offsets.iter().map(|q| q[k].abs()).filter(|x| *x > 0.0).fold(f64::INFINITY, f64::min);
        p[k] = if p[k] > 0.0 { (p[k] - step_k).max(0.0) } else { (p[k] + step_k).min(0.0) };
        if p[k].abs() < 1e-12 {
            p[k] = 0.0;
        }
        Some(p)
    };
    let key = |o: &[f64]| -> Vec<i64> { o.iter().map(|x| (x * 1e9).round() as i64).collect() };
    let position: std::collections::HashMap<Vec<i64>, usize> =
        offsets.iter().enumerate().map(|(i, o)| (key(o), i)).collect();
    let edges: Vec<Option<(usize, OrthogonalElement)>> = offsets
        .par_iter()
        .map(|o| -> Result<Option<(usize, OrthogonalElement)>> {
            let Some(parent) = parent_of(o) else { return Ok(None) };
            let j = *position.get(&key(&parent)).expect("grid is closed under parents");
            let path = BasePath::polyline(space, vec![lift(&parent), lift(o)]).map_err(BundleError::from)?;
            Ok(Some((j, parallel_transport(&path, conn, step)?)))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..offsets.len()).collect();
    order.sort_by(|&i, &j| {
        let li: f64 = offsets[i].iter().map(|x| x.abs()).sum();
        let lj: f64 = offsets[j].iter().map(|x| x.abs()).sum();
        li.total_cmp(&lj).then(i.cmp(&j))
    });
    let mut transports: Vec<Option<OrthogonalElement>> = vec![None; offsets.len()];
    for i in order {
        transports[i] = Some(match &edges[i] {
            None => OrthogonalElement::identity(conn.fiber_dim()),
            Some((j, p)) => p.compose(transports[*j].as_ref().expect("parent precedes child")),
        });
    }
    Ok(offsets.iter().zip(transports).map(|(o, p)| (lift(o), p.expect("all visited"))).collect())
}

/// ε-net sample of the leaf of the given kind through `ξ`.
pub fn leaf_sample(
    kind: LeafKind,
    xi: &TotalPoint,
    conn: &ConnectionField,
    fib: &FiberFoliation,
    spec: &SampleSpec,
) -> Result<LeafSample> {
    let space = conn.space();
    let (slice, partial, words) = fiber_slice(kind, xi, conn, fib, spec)?;
    let mut set = SnapSet::new(space, spec.epsilon / 4.0);
    if spec.include_base {
        let offsets = base_grid(space, &xi.base, spec.epsilon / 2.0);
        for (b, p) in grid_transports(conn, &xi.base, &offsets, spec.transport_step)? {
            for w in &slice {
                set.insert(TotalPoint::new(b.clone(), p.apply(w)));
            }
        }
    } else {
        for w in slice {
            set.insert(TotalPoint::new(xi.base.clone(), w));
        }
    }
    Ok(LeafSample {
        kind,
        seed_point: xi.clone(),
        epsilon: spec.epsilon,
        points: set.into_points(),
        generation: Generation { group_steps: spec.budget.group_steps, words, seed: spec.seed },
        partial,
    })
}

/// Largest distance, in invariant values, from a point of `small` to the invariant
/// values attained on `large`.
pub fn containment_defect(fib: &FiberFoliation, small: &LeafSample, large: &LeafSample) -> f64 {
    let mut levels: Vec<Vec<f64>> = Vec::new();
    let mut keys = HashSet::new();
    for p in &large.points {
        let vals = fib.invariant_values(&p.fiber);
        if keys.insert(vals.iter().map(|x| (x / 1e-9).round() as i64).collect::<Vec<_>>()) {
            levels.push(vals);
        }
    }
    small
        .points
        .iter()
        .map(|p| {
            let vals = fib.invariant_values(&p.fiber);
            levels
                .iter()
                .map(|l| l.iter().zip(&vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn flow_point(field: &dyn VectorField, p: &TotalPoint, time: f64, substep: f64) -> TotalPoint {
    let count = (time.abs() / substep).ceil().max(1.0) as usize;
    let h = time / count as f64;
    let (mut b, mut v) = (p.base.clone(), p.fiber.clone());
    let shift = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, c)| a + s * c).collect() };
    for _ in 0..count {
        let (b1, v1) = field.eval(&b, &v);
        let (b2, v2) = field.eval(&shift(&b, &b1, 0.5 * h), &shift(&v, &v1, 0.5 * h));
        let (b3, v3) = field.eval(&shift(&b, &b2, 0.5 * h), &shift(&v, &v2, 0.5 * h));
        let (b4, v4) = field.eval(&shift(&b, &b3, h), &shift(&v, &v3, h));
        for i in 0..b.len() {
            b[i] += h / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i]);
        }
        for i in 0..v.len() {
            v[i] += h / 6.0 * (v1[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
        }
    }
    TotalPoint::new(b, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSampleSpec {
    pub epsilon: f64,
    pub max_points: usize,
    pub substep: f64,
    /// Killing tolerance each field must meet.
    pub killing_tol: f64,
    pub seed: u64,
}

/// ε-net of the orbit of `ξ` under the flows of the linearized fields.
pub fn leaf_sample_via_flows(
    space: &BaseSpace,
    xi: &TotalPoint,
    fields: &[LinearizedField],
    spec: &FlowSampleSpec,
) -> Result<LeafSample> {
    for f in fields {
        let defect = killing_check(f, 64, spec.seed);
        if defect > spec.killing_tol {
            return Err(FoliationError::NotKilling { name: f.name().to_string(), defect });
        }
    }
    // Flow times chosen so that each move has length about ε/2 at ξ.
    let step = spec.epsilon / 2.0;
    let moves: Vec<(&LinearizedField, f64)> = fields
        .iter()
        .filter_map(|f| {
            let (db, dv) = f.eval(&xi.base, &xi.fiber);
            let speed = db.iter().chain(&dv).map(|x| x * x).sum::<f64>().sqrt();
            (speed > 1e-12).then_some((f, step / speed))
        })
        .collect();
    let coverage = coverage_bfs(space, xi.clone(), 0.75 * step, spec.max_points, |p| {
        moves
            .iter()
            .flat_map(|(f, t)| [flow_point(*f, p, *t, spec.substep), flow_point(*f, p, -*t, spec.substep)])
            .collect()
    });
    Ok(LeafSample {
        kind: LeafKind::FEll,
        seed_point: xi.clone(),
        epsilon: spec.epsilon,
        points: coverage.points,
        generation: Generation {
            group_steps: coverage.layers,
            words: fields.iter().map(|f| f.name().to_string()).collect(),
            seed: spec.seed,
        },
        partial: coverage.partial,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedDimReport {
    pub expected: usize,
    pub ranks: Vec<usize>,
    /// Whether the finite-difference step had to be refined.
    pub refined: bool,
}

impl LiftedDimReport {
    pub fn passed(&self) -> bool {
        self.ranks.iter().all(|&r| r == self.expected)
    }
}

/// Rank of sampled tangent directions of the lifted leaf at each frame, against
/// `dim(base leaf) + dim(algebra)`.
pub fn lifted_leaf_dim_check(
    conn: &ConnectionField,
    algebra: &LieSubalgebra,
    frames: &[crate::bundle::FrameElement],
    step: f64,
    seed: u64,
) -> Result<LiftedDimReport> {
    let space = conn.space();
    let plaque = space.plaque_coordinates();
    let l = plaque.len();
    let basis = algebra.basis();
    let expected = l + algebra.rank();
    let directions = |frame: &crate::bundle::FrameElement, h: f64, index: usize| -> Result<Vec<Vec<f64>>> {
        let mut rng = rng::stream(seed, "lifted-leaf", index as u64);
        let mut combos: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for i in 0..l {
            let mut c = vec![0.0; l];
            c[i] = 1.0;
            combos.push((c, vec![0.0; basis.len()]));
        }
        for j in 0..basis.len() {
            let mut c = vec![0.0; basis.len()];
            c[j] = 1.0;
            combos.push((vec![0.0; l], c));
        }
        for _ in 0..expected {
            combos.push((
                (0..l).map(|_| rng.random_range(-1.0..1.0)).collect(),
                (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            ));
        }
        // Central differences of the lifted flow (b, ξ) ↦ (b + s·c, exp(s·A) P ξ).
        let lifted = |c: &[f64], a: &[f64], s: f64| -> Result<Vec<f64>> {
            let mut end = frame.base.clone();
            for (k, &i) in plaque.iter().enumerate() {
                end[i] += s * c[k];
            }
            let path = BasePath::polyline(space, vec![frame.base.clone(), end.clone()]).map_err(BundleError::from)?;
            let p = parallel_transport(&path, conn, step)?;
            let mut gen = DMatrix::zeros(conn.fiber_dim(), conn.fiber_dim());
            for (cj, b) in a.iter().zip(basis) {
                gen += b.matrix() * (s * cj);
            }
            let g = exp_skew(&SkewElement::projected(gen));
            let m = g.matrix() * p.matrix() * frame.frame.matrix();
            Ok(end.into_iter().chain(m.iter().copied()).collect())
        };
        combos
            .iter()
            .map(|(c, a)| {
                let plus = lifted(c, a, h)?;
                let minus = lifted(c, a, -h)?;
                Ok(plus.iter().zip(&minus).map(|(x, y)| (x - y) / (2.0 * h)).collect())
            })
            .collect()
    };
    let mut refined = false;
    let mut ranks = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        let mut rank = numerical_rank(&directions(frame, 1e-4, index)?, 1e-6);
        if rank != expected {
            refined = true;
            rank = numerical_rank(&directions(frame, 1e-5, index)?, 1e-6);
        }
        ranks.push(rank);
    }
    Ok(LiftedDimReport { expected, ranks, refined })
}
