//! The path-class groupoid `G(∇^τ, 𝒦)` of leafwise paths decorated by structure
//! group elements, its representation on `E`, and its frame-bundle cover.

use super::bundle_of_groups::random_group_element;
use super::{ArrowSampler, GroupAction, Groupoid, GroupoidError, Representation, Result};
use crate::base::{BasePath, BaseSpace, HomotopyKey, POINT_TOL};
use crate::bundle::{parallel_transport, ConnectionField, FrameElement};
use crate::cloud::TotalPoint;
use crate::foliation::{FiberFoliation, MEMBERSHIP_TOL};
use crate::lie::{random_orthogonal, OrthogonalElement};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Class `[α, k]` with `k ∈ 𝒦_{α(0)}` and the cached transport `P_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathClassArrow {
    path: BasePath,
    k: OrthogonalElement,
    transport: OrthogonalElement,
}

impl PathClassArrow {
    pub fn path(&self) -> &BasePath {
        &self.path
    }

    pub fn k(&self) -> &OrthogonalElement {
        &self.k
    }

    pub fn transport(&self) -> &OrthogonalElement {
        &self.transport
    }

    pub fn key(&self) -> &HomotopyKey {
        self.path.homotopy_key()
    }

    /// The fiber isometry `P_α ∘ k` that identifies equivalent representatives.
    pub fn isometry(&self) -> OrthogonalElement {
        self.transport.compose(&self.k)
    }
}

#[derive(Clone, Debug)]
pub struct PathClassGroupoid {
    conn: ConnectionField,
    fiber: FiberFoliation,
    step: f64,
    drop_conjugation: bool,
}

impl PathClassGroupoid {
    pub fn new(conn: ConnectionField, fiber: FiberFoliation, step: f64) -> Self {
        Self { conn, fiber, step, drop_conjugation: false }
    }

    /// Multiplication `[α*β, k_α ∘ k_β]` without the conjugation `C_β`, for harness tests.
    pub fn with_dropped_conjugation(mut self) -> Self {
        self.drop_conjugation = true;
        self
    }

    pub fn connection(&self) -> &ConnectionField {
        &self.conn
    }

    pub fn fiber(&self) -> &FiberFoliation {
        &self.fiber
    }

    pub fn space(&self) -> &BaseSpace {
        self.conn.space()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn check_member(&self, k: &OrthogonalElement) -> Result<()> {
        let (defect, invariant) = self.fiber.membership_defect(k);
        if defect > MEMBERSHIP_TOL {
            return Err(GroupoidError::LeavesGroup { invariant, defect });
        }
        Ok(())
    }

    /// `[α, k]`, transporting along `α`.
    pub fn arrow(&self, path: BasePath, k: OrthogonalElement) -> Result<PathClassArrow> {
        if !path.is_leafwise() {
            return Err(GroupoidError::Invalid("path is not leafwise".into()));
        }
        self.check_member(&k)?;
        let transport = parallel_transport(&path, &self.conn, self.step)?;
        Ok(PathClassArrow { path, k, transport })
    }

    /// `C_β(k) = P_β⁻¹ ∘ k ∘ P_β`.
    pub fn conjugate(&self, beta: &PathClassArrow, k: &OrthogonalElement) -> OrthogonalElement {
        beta.transport.inverse().compose(k).compose(&beta.transport)
    }
}

impl Groupoid for PathClassGroupoid {
    type Object = Vec<f64>;
    type Arrow = PathClassArrow;

    fn source(&self, g: &PathClassArrow) -> Vec<f64> {
        g.path.start().to_vec()
    }

    fn target(&self, g: &PathClassArrow) -> Vec<f64> {
        g.path.end().to_vec()
    }

    /// `1_p = [p, Id]`.
    fn unit(&self, x: &Vec<f64>) -> PathClassArrow {
        let id = OrthogonalElement::identity(self.conn.fiber_dim());
        PathClassArrow { path: BasePath::constant(self.space(), x.clone()), k: id.clone(), transport: id }
    }

    /// `[α, k_α][β, k_β] = [α*β, C_β(k_α) ∘ k_β]`.
    fn compose(&self, a: &PathClassArrow, b: &PathClassArrow) -> Result<PathClassArrow> {
        let distance = self.space().distance(a.path.start(), b.path.end());
        if distance > POINT_TOL {
            return Err(GroupoidError::NotComposable { distance });
        }
        let path = a.path.after(self.space(), &b.path)?;
        let c = if self.drop_conjugation { a.k.clone() } else { self.conjugate(b, &a.k) };
        self.check_member(&c)?;
        Ok(PathClassArrow { path, k: c.compose(&b.k), transport: a.transport.compose(&b.transport) })
    }

    /// `[α, k]⁻¹ = [α⁻¹, P_α k⁻¹ P_α⁻¹]`.
    fn inverse(&self, a: &PathClassArrow) -> Result<PathClassArrow> {
        let k = a.transport.compose(&a.k.inverse()).compose(&a.transport.inverse());
        Ok(PathClassArrow { path: a.path.reverse(), k, transport: a.transport.inverse() })
    }

    fn object_distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        self.space().distance(x, y)
    }

    /// Endpoint gaps, plus the winding difference, plus `‖P_α k_α − P_β k_β‖_max`.
    fn arrow_distance(&self, a: &PathClassArrow, b: &PathClassArrow) -> f64 {
        let space = self.space();
        let ends = space.distance(a.path.start(), b.path.start()).max(space.distance(a.path.end(), b.path.end()));
        let winding: i64 = a.key().0.iter().zip(&b.key().0).map(|(x, y)| (x - y).abs()).sum();
        ends + winding as f64 + a.isometry().max_abs_diff(&b.isometry())
    }
}

/// Random leafwise polylines with up to `segments` pieces of length at most `reach`
/// per plaque coordinate, decorated with random structure group elements.
#[derive(Clone, Debug)]
pub struct PathClassSampler {
    pub reach: f64,
    pub segments: usize,
    /// Probability of a constant path.
    pub constant: f64,
}

impl Default for PathClassSampler {
    fn default() -> Self {
        Self { reach: 4.0, segments: 3, constant: 0.15 }
    }
}

impl PathClassSampler {
    fn path_from(&self, space: &BaseSpace, x: &[f64], rng: &mut ChaCha8Rng) -> BasePath {
        let plaque = space.plaque_coordinates();
        if plaque.is_empty() || rng.random_bool(self.constant) {
            return BasePath::constant(space, x.to_vec());
        }
        let count = rng.random_range(1..=self.segments.max(1));
        let mut points = vec![x.to_vec()];
        for _ in 0..count {
            let mut p = points.last().expect("nonempty").clone();
            for &i in &plaque {
                p[i] += rng.random_range(-self.reach..self.reach);
            }
            points.push(p);
        }
        BasePath::polyline(space, points).expect("at least two knots")
    }

    pub fn arrow_from_point(&self, g: &PathClassGroupoid, x: &[f64], rng: &mut ChaCha8Rng) -> PathClassArrow {
        loop {
            let path = self.path_from(g.space(), x, rng);
            let k = random_group_element(&g.fiber, 3.0, rng);
            if let Ok(a) = g.arrow(path, k) {
                return a;
            }
        }
    }
}

impl ArrowSampler<PathClassGroupoid> for PathClassSampler {
    fn arrow(&self, g: &PathClassGroupoid, rng: &mut ChaCha8Rng) -> PathClassArrow {
        let x = g.space().random_point(rng);
        self.arrow_from_point(g, &x, rng)
    }

    fn arrow_from(&self, g: &PathClassGroupoid, source: &Vec<f64>, rng: &mut ChaCha8Rng) -> Option<PathClassArrow> {
        Some(self.arrow_from_point(g, source, rng))
    }
}

/// `[α, k] · (α(0), v) = (α(1), P_α k v)`, with the base point in canonical coordinates.
#[derive(Clone, Copy, Debug, Default)]
pub struct TransportRepresentation;

impl Representation<PathClassGroupoid> for TransportRepresentation {
    fn fiber_dim(&self, g: &PathClassGroupoid) -> usize {
        g.conn.fiber_dim()
    }

    fn projection(&self, e: &TotalPoint) -> Vec<f64> {
        e.base.clone()
    }

    fn point(&self, x: &Vec<f64>, v: Vec<f64>) -> TotalPoint {
        TotalPoint::new(x.clone(), v)
    }

    fn act(&self, g: &PathClassGroupoid, a: &PathClassArrow, e: &TotalPoint) -> Result<TotalPoint> {
        let distance = g.space().distance(a.path.start(), &e.base);
        if distance > POINT_TOL {
            return Err(GroupoidError::NotComposable { distance });
        }
        Ok(TotalPoint::new(g.space().canonical(a.path.end()), a.isometry().apply(&e.fiber)))
    }
}

/// Arrow of the frame-bundle cover: a path class with a source frame `q`, running
/// from `(α(0), q)` to `(α(1), P_α k q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameArrow {
    pub class: PathClassArrow,
    pub frame: OrthogonalElement,
}

/// Groupoid over the orthonormal frame bundle on which `O(n)` acts freely on the right;
/// its quotient is the path-class groupoid.
#[derive(Clone, Debug)]
pub struct FrameGroupoid {
    classes: PathClassGroupoid,
}

/// Frames must match to this accuracy for arrows to compose.
pub const FRAME_TOL: f64 = 1e-9;

impl FrameGroupoid {
    pub fn new(classes: PathClassGroupoid) -> Self {
        Self { classes }
    }

    pub fn classes(&self) -> &PathClassGroupoid {
        &self.classes
    }
}

impl Groupoid for FrameGroupoid {
    type Object = FrameElement;
    type Arrow = FrameArrow;

    fn source(&self, g: &FrameArrow) -> FrameElement {
        FrameElement { base: self.classes.source(&g.class), frame: g.frame.clone() }
    }

    fn target(&self, g: &FrameArrow) -> FrameElement {
        FrameElement { base: self.classes.target(&g.class), frame: g.class.isometry().compose(&g.frame) }
    }

    fn unit(&self, x: &FrameElement) -> FrameArrow {
        FrameArrow { class: self.classes.unit(&x.base), frame: x.frame.clone() }
    }

    fn compose(&self, a: &FrameArrow, b: &FrameArrow) -> Result<FrameArrow> {
        let gap = a.frame.max_abs_diff(&self.target(b).frame);
        if gap > FRAME_TOL {
            return Err(GroupoidError::NotComposable { distance: gap });
        }
        Ok(FrameArrow { class: self.classes.compose(&a.class, &b.class)?, frame: b.frame.clone() })
    }

    fn inverse(&self, a: &FrameArrow) -> Result<FrameArrow> {
        Ok(FrameArrow { class: self.classes.inverse(&a.class)?, frame: self.target(a).frame })
    }

    fn object_distance(&self, x: &FrameElement, y: &FrameElement) -> f64 {
        self.classes.space().distance(&x.base, &y.base).max(x.frame.max_abs_diff(&y.frame))
    }

    fn arrow_distance(&self, a: &FrameArrow, b: &FrameArrow) -> f64 {
        self.classes.arrow_distance(&a.class, &b.class) + a.frame.max_abs_diff(&b.frame)
    }
}

/// Right action `(α, k, q) · a = (α, k, q a)`; normal forms have source frame `I`.
#[derive(Clone, Debug)]
pub struct FrameAction {
    pub space: BaseSpace,
    /// Solve `q_x a = q_y` as `a = q_y⁻¹ q_x`.
    pub mutate_solve: bool,
}

impl FrameAction {
    pub fn new(space: BaseSpace) -> Self {
        Self { space, mutate_solve: false }
    }
}

impl GroupAction<FrameGroupoid> for FrameAction {
    type Element = OrthogonalElement;

    fn act_object(&self, x: &FrameElement, a: &OrthogonalElement) -> FrameElement {
        x.act_right(a)
    }

    fn act_arrow(&self, g: &FrameArrow, a: &OrthogonalElement) -> FrameArrow {
        FrameArrow { class: g.class.clone(), frame: g.frame.compose(a) }
    }

    fn solve(&self, x: &FrameElement, y: &FrameElement) -> Result<OrthogonalElement> {
        let distance = self.space.distance(&x.base, &y.base);
        if distance > POINT_TOL {
            return Err(GroupoidError::NoSolution { distance });
        }
        Ok(if self.mutate_solve { y.frame.inverse().compose(&x.frame) } else { x.frame.inverse().compose(&y.frame) })
    }

    fn object_normal_form(&self, x: &FrameElement) -> FrameElement {
        FrameElement { base: x.base.clone(), frame: OrthogonalElement::identity(x.frame.dim()) }
    }

    fn arrow_normal_form(&self, g: &FrameArrow) -> FrameArrow {
        FrameArrow { class: g.class.clone(), frame: OrthogonalElement::identity(g.frame.dim()) }
    }
}

/// Path classes with uniformly random source frames.
#[derive(Clone, Debug, Default)]
pub struct FrameSampler(pub PathClassSampler);

impl ArrowSampler<FrameGroupoid> for FrameSampler {
    fn arrow(&self, g: &FrameGroupoid, rng: &mut ChaCha8Rng) -> FrameArrow {
        let class = self.0.arrow(&g.classes, rng);
        FrameArrow { class, frame: random_orthogonal(g.classes.conn.fiber_dim(), rng) }
    }

    fn arrow_from(&self, g: &FrameGroupoid, source: &FrameElement, rng: &mut ChaCha8Rng) -> Option<FrameArrow> {
        Some(FrameArrow { class: self.0.arrow_from_point(&g.classes, &source.base, rng), frame: source.frame.clone() })
    }
}
