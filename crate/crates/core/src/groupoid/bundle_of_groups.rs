//! The bundle of groups `𝒦 → B` with `s = t`.

use super::{ArrowSampler, Groupoid, GroupoidError, Representation, Result};
use crate::base::BaseSpace;
use crate::cloud::TotalPoint;
use crate::foliation::FiberFoliation;
use crate::lie::{exp_skew, OrthogonalElement, SkewElement};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct BundleOfGroupsArrow {
    pub base: Vec<f64>,
    pub element: OrthogonalElement,
}

/// `𝒦_p` is the same structure group at every base point in the orthonormal gauge.
#[derive(Clone, Debug)]
pub struct BundleOfGroups {
    space: BaseSpace,
    fiber: FiberFoliation,
}

impl BundleOfGroups {
    pub fn new(space: BaseSpace, fiber: FiberFoliation) -> Self {
        Self { space, fiber }
    }

    pub fn space(&self) -> &BaseSpace {
        &self.space
    }

    pub fn fiber(&self) -> &FiberFoliation {
        &self.fiber
    }
}

impl Groupoid for BundleOfGroups {
    type Object = Vec<f64>;
    type Arrow = BundleOfGroupsArrow;

    fn source(&self, g: &BundleOfGroupsArrow) -> Vec<f64> {
        g.base.clone()
    }

    fn target(&self, g: &BundleOfGroupsArrow) -> Vec<f64> {
        g.base.clone()
    }

    fn unit(&self, x: &Vec<f64>) -> BundleOfGroupsArrow {
        BundleOfGroupsArrow { base: x.clone(), element: OrthogonalElement::identity(self.fiber.fiber_dim()) }
    }

    fn compose(&self, g: &BundleOfGroupsArrow, h: &BundleOfGroupsArrow) -> Result<BundleOfGroupsArrow> {
        let distance = self.space.distance(&g.base, &h.base);
        if distance > crate::base::POINT_TOL {
            return Err(GroupoidError::NotComposable { distance });
        }
        Ok(BundleOfGroupsArrow { base: h.base.clone(), element: g.element.compose(&h.element) })
    }

    fn inverse(&self, g: &BundleOfGroupsArrow) -> Result<BundleOfGroupsArrow> {
        Ok(BundleOfGroupsArrow { base: g.base.clone(), element: g.element.inverse() })
    }

    fn object_distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        self.space.distance(x, y)
    }

    fn arrow_distance(&self, g: &BundleOfGroupsArrow, h: &BundleOfGroupsArrow) -> f64 {
        self.space.distance(&g.base, &h.base).max(g.element.max_abs_diff(&h.element))
    }
}

/// `exp` of a random combination of the algebra basis, times a random finite element.
pub(crate) fn random_group_element(fiber: &FiberFoliation, scale: f64, rng: &mut ChaCha8Rng) -> OrthogonalElement {
    let n = fiber.fiber_dim();
    let mut a = DMatrix::zeros(n, n);
    for b in fiber.algebra().basis() {
        a += b.matrix() * rng.random_range(-scale..scale);
    }
    let k = exp_skew(&SkewElement::projected(a));
    let finite = fiber.finite_part();
    if finite.is_empty() || rng.random_bool(0.5) {
        k
    } else {
        k.compose(&finite[rng.random_range(0..finite.len())])
    }
}

pub struct BundleOfGroupsSampler;

impl ArrowSampler<BundleOfGroups> for BundleOfGroupsSampler {
    fn arrow(&self, g: &BundleOfGroups, rng: &mut ChaCha8Rng) -> BundleOfGroupsArrow {
        let base = g.space.random_point(rng);
        BundleOfGroupsArrow { base, element: random_group_element(&g.fiber, 3.0, rng) }
    }

    fn arrow_from(&self, g: &BundleOfGroups, source: &Vec<f64>, rng: &mut ChaCha8Rng) -> Option<BundleOfGroupsArrow> {
        Some(BundleOfGroupsArrow { base: source.clone(), element: random_group_element(&g.fiber, 3.0, rng) })
    }
}

/// `(p, k) · (p, v) = (p, k v)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FiberRepresentation;

impl Representation<BundleOfGroups> for FiberRepresentation {
    fn fiber_dim(&self, g: &BundleOfGroups) -> usize {
        g.fiber.fiber_dim()
    }

    fn projection(&self, e: &TotalPoint) -> Vec<f64> {
        e.base.clone()
    }

    fn point(&self, x: &Vec<f64>, v: Vec<f64>) -> TotalPoint {
        TotalPoint::new(x.clone(), v)
    }

    fn act(&self, g: &BundleOfGroups, a: &BundleOfGroupsArrow, e: &TotalPoint) -> Result<TotalPoint> {
        let distance = g.space.distance(&a.base, &e.base);
        if distance > crate::base::POINT_TOL {
            return Err(GroupoidError::NotComposable { distance });
        }
        Ok(TotalPoint::new(e.base.clone(), a.element.apply(&e.fiber)))
    }
}
