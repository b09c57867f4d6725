//! Euclidean vector bundles over a foliated base, metric connections,
//! parallel transport, holonomy and the orthonormal frame bundle.

use crate::base::{BaseError, BasePath, BaseSpace, POINT_TOL};
use crate::expr::Expr;
use crate::lie::{
    bracket_closure_rank, log_orthogonal, orthogonality_defect, polar_factor, LieError, OrthogonalElement, SkewElement,
    SquareMatrix, SKEW_TOL,
};
use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

/// Polar retraction cadence, in RK4 steps.
pub const RETRACT_EVERY: usize = 16;
/// Largest allowed transport step.
pub const MAX_STEP: f64 = 0.1;
/// Holonomy logs below this norm are integration noise.
pub const LOG_NOISE_FLOOR: f64 = 1e-10;
/// Errors below this are reported as an exact transport.
pub const EXACT_FLOOR: f64 = 1e-13;
/// Orthogonality defect accepted for a flow step.
pub const FLOW_ISOMETRY_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error("transport step {0} outside (0, {MAX_STEP}]")]
    Step(f64),
    #[error("path is not leafwise but the connection is leafwise-only")]
    Scope,
    #[error("path is not leafwise")]
    NotLeafwise,
    #[error("loop is not based at the base point (endpoint mismatch {mismatch:e})")]
    NotBased { mismatch: f64 },
    #[error("holonomy logarithm outside the principal branch, use smaller loops: {0}")]
    LoopTooLarge(LieError),
    #[error("flow step is not an isometry (defect {defect:e})")]
    NotIsometric { defect: f64 },
    #[error("frame is based {distance:e} away from the flow step start")]
    BaseMismatch { distance: f64 },
    #[error("coefficient of dx{coordinate} is not skew at entry ({row}, {col}): defect {defect:e}")]
    NotSkew { coordinate: usize, row: usize, col: usize, defect: f64 },
    #[error("invalid connection: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Base(#[from] BaseError),
}

pub type Result<T> = std::result::Result<T, BundleError>;

/// Rank-`n` bundle `E → B` in an orthonormal gauge with trivial transitions.
#[derive(Clone, Debug)]
pub struct EuclideanBundle {
    base: BaseSpace,
    n: usize,
}

impl EuclideanBundle {
    pub fn new(base: BaseSpace, n: usize) -> Result<Self> {
        if n == 0 || n > crate::lie::MAX_DIM {
            return Err(BundleError::Lie(LieError::Dimension(n)));
        }
        Ok(Self { base, n })
    }

    pub fn base(&self) -> &BaseSpace {
        &self.base
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }
}

/// Whether the connection differentiates along every direction or only along leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Leafwise,
    Full,
}

/// Coefficient of one base coordinate differential, a skew matrix field.
#[derive(Clone, Debug)]
pub enum Coefficient {
    Zero,
    Constant(SkewElement),
    /// Strictly upper entries `(i, j, a_ij)`; the lower ones are `-a_ij`.
    Field(usize, Vec<(usize, usize, Expr)>),
}

impl Coefficient {
    /// Builds from a full matrix of expressions, checking skewness at the probe points.
    pub fn from_exprs(coordinate: usize, rows: Vec<Vec<Expr>>, probes: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(BundleError::Invalid(format!("coefficient of dx{coordinate} is not square")));
        }
        let constant: Option<Vec<f64>> =
            rows.iter().flat_map(|r| r.iter().map(Expr::as_constant)).collect::<Option<Vec<f64>>>();
        if let Some(entries) = constant {
            let m = DMatrix::from_row_slice(n, n, &entries);
            check_skew(coordinate, &m)?;
            return Ok(if m.iter().all(|&x| x == 0.0) {
                Coefficient::Zero
            } else {
                Coefficient::Constant(SkewElement::projected(m))
            });
        }
        let mut upper = Vec::new();
        for p in probes {
            let m = DMatrix::from_fn(n, n, |i, j| rows[i][j].eval(p, &[]));
            check_skew(coordinate, &m)?;
        }
        for (i, row) in rows.into_iter().enumerate() {
            for (j, e) in row.into_iter().enumerate() {
                if i < j && e.as_constant() != Some(0.0) {
                    upper.push((i, j, e));
                }
            }
        }
        Ok(if upper.is_empty() { Coefficient::Zero } else { Coefficient::Field(n, upper) })
    }

    fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }

    fn accumulate(&self, p: &[f64], weight: f64, out: &mut DMatrix<f64>) {
        match self {
            Coefficient::Zero => {}
            Coefficient::Constant(a) => *out += a.matrix() * weight,
            Coefficient::Field(_, upper) => {
                for (i, j, e) in upper {
                    let v = weight * e.eval(p, &[]);
                    out[(*i, *j)] += v;
                    out[(*j, *i)] -= v;
                }
            }
        }
    }
}

fn check_skew(coordinate: usize, m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            let defect = (m[(i, j)] + m[(j, i)]).abs();
            if !(defect <= SKEW_TOL) {
                return Err(BundleError::NotSkew { coordinate, row: i, col: j, defect });
            }
        }
    }
    Ok(())
}

/// Metric connection `∇ = d + A`, with `A(p, v) = Σ vᵢ Cᵢ(p)` skew-valued.
#[derive(Clone, Debug)]
pub struct ConnectionField {
    space: BaseSpace,
    n: usize,
    scope: Scope,
    coefficients: Vec<Coefficient>,
}

impl ConnectionField {
    pub fn new(space: BaseSpace, n: usize, scope: Scope, coefficients: Vec<Coefficient>) -> Result<Self> {
        if coefficients.len() != space.dim() {
            return Err(BundleError::Invalid(format!(
                "expected {} coefficients, got {}",
                space.dim(),
                coefficients.len()
            )));
        }
        for (i, c) in coefficients.iter().enumerate() {
            let dim = match c {
                Coefficient::Zero => n,
                Coefficient::Constant(a) => a.dim(),
                Coefficient::Field(m, _) => *m,
            };
            if dim != n {
                return Err(BundleError::Invalid(format!("coefficient of dx{i} has size {dim}, fiber has {n}")));
            }
            if scope == Scope::Leafwise && !space.is_leafwise(i) && !c.is_zero() {
                return Err(BundleError::Invalid(format!(
                    "leafwise connection has a coefficient along transverse coordinate x{i}"
                )));
            }
        }
        Ok(Self { space, n, scope, coefficients })
    }

    pub fn flat(space: BaseSpace, n: usize, scope: Scope) -> Self {
        let coefficients = vec![Coefficient::Zero; space.dim()];
        Self { space, n, scope, coefficients }
    }

    /// Connection with constant coefficients `Cᵢ`.
    pub fn constant(space: BaseSpace, scope: Scope, coefficients: Vec<SkewElement>) -> Result<Self> {
        let n = coefficients.first().map(SkewElement::dim).unwrap_or(1);
        let coefficients = coefficients
            .into_iter()
            .map(|a| if a.is_zero() { Coefficient::Zero } else { Coefficient::Constant(a) })
            .collect();
        Self::new(space, n, scope, coefficients)
    }

    pub fn space(&self) -> &BaseSpace {
        &self.space
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn is_flat(&self) -> bool {
        self.coefficients.iter().all(Coefficient::is_zero)
    }

    /// The same coefficients read as a full connection; transverse coefficients of a
    /// leafwise connection are zero, so this extends it by the flat gauge across leaves.
    pub fn extended(&self) -> ConnectionField {
        Self { scope: Scope::Full, ..self.clone() }
    }

    /// `A(p, v)` for a lifted point and lifted tangent vector.
    pub fn coefficient(&self, p: &[f64], v: &[f64]) -> SkewElement {
        SkewElement::projected(self.coefficient_matrix(p, v))
    }

    fn coefficient_matrix(&self, p: &[f64], v: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        if self.is_flat() {
            return out;
        }
        let q = self.space.canonical(p);
        let w = self.space.canonical_velocity(p, v);
        for (c, &wi) in self.coefficients.iter().zip(&w) {
            if wi != 0.0 {
                c.accumulate(&q, wi, &mut out);
            }
        }
        out
    }
}

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step <= MAX_STEP {
        Ok(())
    } else {
        Err(BundleError::Step(step))
    }
}

/// Parallel transport `P_α : E_{α(0)} → E_{α(1)}`.
///
/// Each straight segment is integrated with `ceil(length / step)` RK4 steps.
pub fn parallel_transport(path: &BasePath, conn: &ConnectionField, step: f64) -> Result<OrthogonalElement> {
    check_step(step)?;
    transport_refined(path, conn, step, 1)
}

fn transport_refined(path: &BasePath, conn: &ConnectionField, step: f64, refine: usize) -> Result<OrthogonalElement> {
    if conn.scope == Scope::Leafwise && !path.is_leafwise() {
        return Err(BundleError::Scope);
    }
    let n = conn.n;
    if conn.is_flat() {
        return Ok(OrthogonalElement::identity(n));
    }
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut steps = 0usize;
    for (a, b) in path.segments() {
        let delta: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let len = crate::base::euclid(a, b);
        let count = (len / step).ceil().max(1.0) as usize * refine;
        let ds = 1.0 / count as f64;
        let at = |s: f64| -> DMatrix<f64> {
            let x: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x + s * d).collect();
            -conn.coefficient_matrix(&x, &delta)
        };
        let mut m0 = at(0.0);
        for k in 0..count {
            let s = k as f64 * ds;
            let mh = at(s + 0.5 * ds);
            let m1 = at(s + ds);
            let k1 = &m0 * &p;
            let k2 = &mh * (&p + &k1 * (0.5 * ds));
            let k3 = &mh * (&p + &k2 * (0.5 * ds));
            let k4 = &m1 * (&p + &k3 * ds);
            p += (k1 + (k2 + k3) * 2.0 + k4) * (ds / 6.0);
            m0 = m1;
            steps += 1;
            if steps.is_multiple_of(RETRACT_EVERY) {
                p = polar_factor(&p)?;
            }
        }
    }
    Ok(OrthogonalElement::trusted(polar_factor(&p)?))
}

/// Step-halving measurement of the integrator order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    /// Errors at `h, h/2, h/4` against the `h/16` reference.
    pub errors: [f64; 3],
    /// `log2(e_h / e_{h/2})`, or `None` when the transport is exact.
    pub order: Option<f64>,
}

impl ConvergenceReport {
    pub fn is_exact(&self) -> bool {
        self.order.is_none()
    }
}

/// Observed RK4 order along `path`, starting from step 0.1.
pub fn transport_convergence_order(path: &BasePath, conn: &ConnectionField) -> Result<ConvergenceReport> {
    let h = MAX_STEP;
    let reference = transport_refined(path, conn, h, 16)?;
    let mut errors = [0.0; 3];
    for (e, refine) in errors.iter_mut().zip([1, 2, 4]) {
        *e = transport_refined(path, conn, h, refine)?.max_abs_diff(&reference);
    }
    let order = (errors[0] >= EXACT_FLOOR && errors[1] >= EXACT_FLOOR).then(|| (errors[0] / errors[1]).log2());
    Ok(ConvergenceReport { errors, order })
}

/// Transports around loops based at `b`.
pub fn holonomy_sample(
    b: &[f64],
    loops: &[BasePath],
    conn: &ConnectionField,
    step: f64,
) -> Result<Vec<OrthogonalElement>> {
    check_step(step)?;
    let space = conn.space();
    loops
        .iter()
        .map(|l| {
            if !l.is_leafwise() {
                return Err(BundleError::NotLeafwise);
            }
            let mismatch = space.distance(l.start(), b).max(space.distance(l.end(), b));
            if mismatch > POINT_TOL {
                return Err(BundleError::NotBased { mismatch });
            }
            parallel_transport(l, conn, step)
        })
        .collect()
}

/// Dimension of the Lie algebra generated by the logs of the sampled holonomies
/// and of the holonomies around the given small loops.
pub fn holonomy_algebra_dim(
    samples: &[OrthogonalElement],
    small_loops: &[BasePath],
    conn: &ConnectionField,
    step: f64,
) -> Result<usize> {
    let mut logs = Vec::new();
    let small: Vec<OrthogonalElement> =
        small_loops.iter().map(|l| parallel_transport(l, conn, step)).collect::<Result<_>>()?;
    for g in samples.iter().chain(&small) {
        let a = log_orthogonal(g).map_err(BundleError::LoopTooLarge)?;
        if a.norm() > LOG_NOISE_FLOOR {
            logs.push(a);
        }
    }
    Ok(bracket_closure_rank(&logs)?)
}

/// Lasso loops at `b`: a leafwise tail to a random nearby point, a square of the
/// given side in two plaque directions, and back along the tail.
///
/// Empty when the leaves are one-dimensional, where every small loop is trivial.
pub fn small_loops<R: Rng + ?Sized>(
    space: &BaseSpace,
    b: &[f64],
    side: f64,
    count: usize,
    rng: &mut R,
) -> Vec<BasePath> {
    let plaque = space.plaque_coordinates();
    if plaque.len() < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|k| {
            let i = plaque[k % plaque.len()];
            let j = plaque[(k + 1) % plaque.len()];
            let mut tip = b.to_vec();
            for &c in &plaque {
                tip[c] += rng.random_range(-1.5..1.5);
            }
            let mut p1 = tip.clone();
            p1[i] += side;
            let mut p2 = p1.clone();
            p2[j] += side;
            let mut p3 = tip.clone();
            p3[j] += side;
            BasePath::polyline(space, vec![b.to_vec(), tip.clone(), p1, p2, p3, tip, b.to_vec()]).expect("knots")
        })
        .collect()
}

/// Orthonormal frame of the fiber over `base`; the columns of `frame` are the basis vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameElement {
    pub base: Vec<f64>,
    pub frame: OrthogonalElement,
}

impl FrameElement {
    /// Right action `ξ · Q` of the structure group.
    pub fn act_right(&self, q: &OrthogonalElement) -> FrameElement {
        Self { base: self.base.clone(), frame: self.frame.compose(q) }
    }
}

/// One step of a fiber-isometric flow covering a leafwise base displacement.
#[derive(Clone, Debug)]
pub struct FlowStep {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub isometry: SquareMatrix,
}

/// Lift of a flow step to the frame bundle: `ξ ↦ Φ ∘ ξ`.
pub fn frame_lift(space: &BaseSpace, step: &FlowStep, frame: &FrameElement) -> Result<FrameElement> {
    let distance = space.distance(&step.from, &frame.base);
    if distance > POINT_TOL {
        return Err(BundleError::BaseMismatch { distance });
    }
    let displacement: Vec<f64> = step.to.iter().zip(&step.from).map(|(a, b)| a - b).collect();
    if !space.is_leafwise_displacement(&displacement) {
        return Err(BundleError::NotLeafwise);
    }
    let defect = orthogonality_defect(step.isometry.matrix());
    if !(defect <= FLOW_ISOMETRY_TOL) {
        return Err(BundleError::NotIsometric { defect });
    }
    let m = step.isometry.matrix() * frame.frame.matrix();
    Ok(FrameElement { base: step.to.clone(), frame: OrthogonalElement::trusted(m) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeActionReport {
    /// Pairs with `Q ≠ I` that were checked.
    pub checked: usize,
    /// Pairs skipped because `Q = I`.
    pub excluded: usize,
    /// Smallest Frobenius displacement `‖ξQ − ξ‖` over checked pairs.
    pub min_displacement: f64,
}

/// Checks that `ξ · Q ≠ ξ` for every frame and every non-identity `Q`.
pub fn right_action_free_check(frames: &[FrameElement], actions: &[OrthogonalElement]) -> FreeActionReport {
    let mut report = FreeActionReport { checked: 0, excluded: 0, min_displacement: f64::INFINITY };
    for xi in frames {
        for q in actions {
            if q.max_abs_diff(&OrthogonalElement::identity(q.dim())) <= 1e-12 {
                report.excluded += 1;
                continue;
            }
            let moved = xi.act_right(q);
            let displacement = (moved.frame.matrix() - xi.frame.matrix()).norm();
            report.checked += 1;
            report.min_displacement = report.min_displacement.min(displacement);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::BaseKind;
    use crate::expr::VarScope;
    use crate::lie::{block_diag, exp_skew, j2, random_orthogonal, rotation2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn circle_rotation(c: f64) -> ConnectionField {
        ConnectionField::constant(BaseSpace::circle(), Scope::Leafwise, vec![j2().scale(c)]).unwrap()
    }

    fn full_loop() -> BasePath {
        BasePath::polyline(&BaseSpace::circle(), vec![vec![0.0], vec![TAU]]).unwrap()
    }

    #[test]
    fn constant_path_is_identity() {
        let conn = circle_rotation(0.25);
        let p = parallel_transport(&BasePath::constant(conn.space(), vec![1.0]), &conn, 1e-3).unwrap();
        assert_eq!(p, OrthogonalElement::identity(2));
    }

    #[test]
    fn loop_transport_matches_closed_form() {
        for c in [0.25, 1.0 / 3.0] {
            let p = parallel_transport(&full_loop(), &circle_rotation(c), 1e-3).unwrap();
            let oracle = rotation2(-TAU * c);
            assert!(p.max_abs_diff(&oracle) <= 1e-6, "c = {c}");
        }
    }

    #[test]
    fn step_and_scope_are_validated() {
        let conn = circle_rotation(0.25);
        assert!(matches!(parallel_transport(&full_loop(), &conn, 0.2), Err(BundleError::Step(_))));
        assert!(matches!(parallel_transport(&full_loop(), &conn, 0.0), Err(BundleError::Step(_))));
        let torus = BaseSpace::torus([true, false]);
        let conn = ConnectionField::flat(torus.clone(), 2, Scope::Leafwise);
        let across = BasePath::polyline(&torus, vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(parallel_transport(&across, &conn, 0.01), Err(BundleError::Scope));
        assert!(parallel_transport(&across, &conn.extended(), 0.01).is_ok());
    }

    #[test]
    fn leafwise_connection_rejects_transverse_coefficient() {
        let torus = BaseSpace::torus([true, false]);
        let err = ConnectionField::constant(torus, Scope::Leafwise, vec![SkewElement::zero(2), j2()]);
        assert!(matches!(err, Err(BundleError::Invalid(_))));
    }

    #[test]
    fn coefficient_is_linear_in_velocity() {
        let scope = VarScope { base: 1, fiber: 0 };
        let e = |s: &str| Expr::parse(s, scope).unwrap();
        let rows = vec![vec![e("0"), e("-0.2*sin(x0)")], vec![e("0.2*sin(x0)"), e("0")]];
        let probes = vec![vec![0.3], vec![1.7]];
        let c = Coefficient::from_exprs(0, rows, &probes).unwrap();
        let conn = ConnectionField::new(BaseSpace::circle(), 2, Scope::Leafwise, vec![c]).unwrap();
        let a = conn.coefficient(&[0.9], &[1.0]);
        let b = conn.coefficient(&[0.9], &[-2.5]);
        assert!(a.scale(-2.5).as_square().max_abs_diff(b.as_square()) < 1e-15);
        assert!((a.matrix()[(1, 0)] - 0.2 * 0.9f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn non_skew_expression_is_named() {
        let scope = VarScope { base: 1, fiber: 0 };
        let e = |s: &str| Expr::parse(s, scope).unwrap();
        let rows = vec![vec![e("0"), e("sin(x0)")], vec![e("sin(x0)"), e("0")]];
        let err = Coefficient::from_exprs(0, rows, &[vec![1.0]]).unwrap_err();
        assert!(matches!(err, BundleError::NotSkew { row: 0, col: 1, .. }));
    }

    #[test]
    fn reversal_inverts_transport() {
        let torus = BaseSpace::torus([true, true]);
        let a = SkewElement::from_rows(&[vec![0.0, 1.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let b = SkewElement::from_rows(&[vec![0.0, 0.0, 0.5], vec![0.0, 0.0, 0.0], vec![-0.5, 0.0, 0.0]]).unwrap();
        let conn = ConnectionField::constant(torus.clone(), Scope::Leafwise, vec![a, b]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let pts: Vec<Vec<f64>> =
                (0..4).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
            let alpha = BasePath::polyline(&torus, pts).unwrap();
            let p = parallel_transport(&alpha, &conn, 1e-3).unwrap();
            let q = parallel_transport(&alpha.reverse(), &conn, 1e-3).unwrap();
            assert!(q.compose(&p).max_abs_diff(&OrthogonalElement::identity(3)) <= 1e-8);
        }
    }

    #[test]
    fn convergence_order_of_rk4() {
        let report = transport_convergence_order(&full_loop(), &circle_rotation(0.25)).unwrap();
        let order = report.order.unwrap();
        assert!((3.5..=4.5).contains(&order), "order {order}, errors {:?}", report.errors);
        let flat = ConnectionField::flat(BaseSpace::circle(), 2, Scope::Leafwise);
        assert!(transport_convergence_order(&full_loop(), &flat).unwrap().is_exact());
    }

    #[test]
    fn rational_holonomy_has_finite_order() {
        let conn = circle_rotation(1.0 / 3.0);
        let g = &holonomy_sample(&[0.0], &[full_loop()], &conn, 1e-3).unwrap()[0];
        let cube = g.compose(g).compose(g);
        assert!(cube.max_abs_diff(&OrthogonalElement::identity(2)) <= 1e-6);
        assert!(g.max_abs_diff(&OrthogonalElement::identity(2)) > 0.5);
    }

    #[test]
    fn holonomy_rejects_unbased_loops() {
        let conn = circle_rotation(0.25);
        let err = holonomy_sample(&[1.0], &[full_loop()], &conn, 1e-3).unwrap_err();
        assert!(matches!(err, BundleError::NotBased { mismatch } if (mismatch - 1.0).abs() < 1e-12));
    }

    #[test]
    fn commuting_torus_holonomy() {
        let torus = BaseSpace::torus([true, true]);
        let d = block_diag(&[j2().matrix(), &(j2().matrix() * 2.0)]);
        let a = SkewElement::projected(d.clone() * 0.3);
        let b = SkewElement::projected(d * 0.7);
        let conn = ConnectionField::constant(torus.clone(), Scope::Leafwise, vec![a, b]).unwrap();
        let loops = torus.generator_loops(&[0.5, 0.5]);
        let h = holonomy_sample(&[0.5, 0.5], &loops, &conn, 1e-3).unwrap();
        let comm = h[0].compose(&h[1]).compose(&h[0].inverse()).compose(&h[1].inverse());
        assert!(comm.max_abs_diff(&OrthogonalElement::identity(4)) <= 1e-8);
    }

    #[test]
    fn holonomy_algebra_dimensions() {
        let flat = ConnectionField::flat(BaseSpace::circle(), 2, Scope::Leafwise);
        let h = holonomy_sample(&[0.0], &[full_loop()], &flat, 1e-3).unwrap();
        assert_eq!(holonomy_algebra_dim(&h, &[], &flat, 1e-3).unwrap(), 0);

        let conn = circle_rotation(0.25);
        let h = holonomy_sample(&[0.0], &[full_loop()], &conn, 1e-3).unwrap();
        assert_eq!(holonomy_algebra_dim(&h, &[], &conn, 1e-3).unwrap(), 1);

        // Non-commuting coefficients depending on position give so(3)-valued curvature.
        let torus = BaseSpace::torus([true, true]);
        let scope = VarScope { base: 2, fiber: 0 };
        let e = |s: &str| Expr::parse(s, scope).unwrap();
        let c0 = Coefficient::from_exprs(
            0,
            vec![vec![e("0"), e("-0.5"), e("0")], vec![e("0.5"), e("0"), e("0")], vec![e("0"), e("0"), e("0")]],
            &[vec![0.1, 0.2]],
        )
        .unwrap();
        let c1 = Coefficient::from_exprs(
            1,
            vec![
                vec![e("0"), e("0"), e("-0.5*cos(x0)")],
                vec![e("0"), e("0"), e("0")],
                vec![e("0.5*cos(x0)"), e("0"), e("0")],
            ],
            &[vec![0.1, 0.2]],
        )
        .unwrap();
        let conn = ConnectionField::new(torus.clone(), 3, Scope::Leafwise, vec![c0, c1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let loops = small_loops(&torus, &[0.4, 0.4], 0.07, 6, &mut rng);
        assert_eq!(holonomy_algebra_dim(&[], &loops, &conn, 1e-3).unwrap(), 3);
    }

    #[test]
    fn frame_lift_is_left_action_and_right_equivariant() {
        let space = BaseSpace::circle();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xi = FrameElement { base: vec![0.2], frame: random_orthogonal(3, &mut rng) };
        let id = FlowStep { from: vec![0.2], to: vec![0.2], isometry: SquareMatrix::identity(3) };
        assert_eq!(frame_lift(&space, &id, &xi).unwrap().frame, xi.frame);

        let r = FlowStep { from: vec![0.2], to: vec![0.5], isometry: rotation2(0.8).as_square().clone() };
        let lifted = frame_lift(&space, &r, &FrameElement { base: vec![0.2], frame: OrthogonalElement::identity(2) });
        assert_eq!(lifted.unwrap().frame, rotation2(0.8));

        let phi =
            FlowStep { from: vec![0.2], to: vec![0.9], isometry: random_orthogonal(3, &mut rng).as_square().clone() };
        for _ in 0..20 {
            let q = random_orthogonal(3, &mut rng);
            let a = frame_lift(&space, &phi, &xi.act_right(&q)).unwrap();
            let b = frame_lift(&space, &phi, &xi).unwrap().act_right(&q);
            assert!(a.frame.max_abs_diff(&b.frame) <= 1e-15);
        }
        // Signed permutations multiply exactly.
        let perm =
            OrthogonalElement::from_rows(&[vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let a = frame_lift(&space, &phi, &xi.act_right(&perm)).unwrap();
        let b = frame_lift(&space, &phi, &xi).unwrap().act_right(&perm);
        assert_eq!(a.frame, b.frame);
    }

    #[test]
    fn frame_lift_rejects_bad_steps() {
        let space = BaseSpace::torus([true, false]);
        let xi = FrameElement { base: vec![0.0, 0.0], frame: OrthogonalElement::identity(2) };
        let scaled = FlowStep {
            from: vec![0.0, 0.0],
            to: vec![0.1, 0.0],
            isometry: SquareMatrix::from_rows(&[vec![1.1, 0.0], vec![0.0, 1.0]]).unwrap(),
        };
        assert!(matches!(frame_lift(&space, &scaled, &xi), Err(BundleError::NotIsometric { .. })));
        let across = FlowStep { from: vec![0.0, 0.0], to: vec![0.0, 0.1], isometry: SquareMatrix::identity(2) };
        assert_eq!(frame_lift(&space, &across, &xi), Err(BundleError::NotLeafwise));
    }

    #[test]
    fn right_action_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames: Vec<FrameElement> =
            (0..10).map(|_| FrameElement { base: vec![0.0], frame: random_orthogonal(3, &mut rng) }).collect();
        let quarter = OrthogonalElement::trusted(block_diag(&[rotation2(PI / 2.0).matrix(), &DMatrix::identity(1, 1)]));
        let report = right_action_free_check(&frames, &[quarter]);
        assert!(report.min_displacement >= 1.0);
        let report = right_action_free_check(&frames, &[OrthogonalElement::identity(3)]);
        assert_eq!((report.checked, report.excluded), (0, 10));
        let qs: Vec<OrthogonalElement> = (0..10).map(|_| random_orthogonal(3, &mut rng)).collect();
        let report = right_action_free_check(&frames, &qs);
        assert_eq!(report.checked, 100);
        assert!(report.min_displacement > 1e-6);
    }

    #[test]
    fn mapping_torus_central_leaf_transport() {
        let space = BaseSpace::new(BaseKind::MappingTorus { rotation: 0.4 }).unwrap();
        let zero = SkewElement::zero(2);
        let conn = ConnectionField::constant(space.clone(), Scope::Leafwise, vec![j2().scale(0.5), zero.clone(), zero])
            .unwrap();
        let loops = space.generator_loops(&[0.0, 0.0, 0.0]);
        let h = holonomy_sample(&[0.0, 0.0, 0.0], &loops, &conn, 1e-3).unwrap();
        assert!(h[0].max_abs_diff(&exp_skew(&j2().scale(-0.5))) <= 1e-9);
    }
}
