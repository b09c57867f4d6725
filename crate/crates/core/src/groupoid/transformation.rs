//! Representations on a vector bundle and the transformation groupoid `G ⋉ E`.

use super::{sample_chain, ArrowSampler, Groupoid, GroupoidError, Result};
use crate::base::BaseSpace;
use crate::cloud::{distance, TotalPoint};
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Action `e ↦ g e` of arrows on fibers, defined when `π(e) = s(g)`.
pub trait Representation<G: Groupoid>: Sync {
    fn fiber_dim(&self, groupoid: &G) -> usize;
    fn projection(&self, e: &TotalPoint) -> G::Object;
    fn point(&self, x: &G::Object, v: Vec<f64>) -> TotalPoint;
    fn act(&self, groupoid: &G, g: &G::Arrow, e: &TotalPoint) -> Result<TotalPoint>;
}

/// Arrow `(g, e)` from `e` to `g e`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformationArrow<A> {
    pub g: A,
    pub e: TotalPoint,
    target: TotalPoint,
}

impl<A> TransformationArrow<A> {
    pub fn target_point(&self) -> &TotalPoint {
        &self.target
    }
}

#[derive(Clone, Debug)]
pub struct TransformationGroupoid<G, R> {
    groupoid: G,
    representation: R,
    space: BaseSpace,
}

impl<G: Groupoid, R: Representation<G>> TransformationGroupoid<G, R> {
    pub fn new(groupoid: G, representation: R, space: BaseSpace) -> Self {
        Self { groupoid, representation, space }
    }

    pub fn acting(&self) -> &G {
        &self.groupoid
    }

    pub fn representation(&self) -> &R {
        &self.representation
    }

    pub fn space(&self) -> &BaseSpace {
        &self.space
    }

    pub fn arrow(&self, g: G::Arrow, e: TotalPoint) -> Result<TransformationArrow<G::Arrow>> {
        let target = self.representation.act(&self.groupoid, &g, &e)?;
        Ok(TransformationArrow { g, e, target })
    }
}

impl<G: Groupoid, R: Representation<G>> Groupoid for TransformationGroupoid<G, R> {
    type Object = TotalPoint;
    type Arrow = TransformationArrow<G::Arrow>;

    fn source(&self, a: &Self::Arrow) -> TotalPoint {
        a.e.clone()
    }

    fn target(&self, a: &Self::Arrow) -> TotalPoint {
        a.target.clone()
    }

    /// `1_e = (1_{π(e)}, e)`.
    fn unit(&self, e: &TotalPoint) -> Self::Arrow {
        let g = self.groupoid.unit(&self.representation.projection(e));
        TransformationArrow { g, e: e.clone(), target: e.clone() }
    }

    /// `(g, h e)(h, e) = (g h, e)`.
    fn compose(&self, a: &Self::Arrow, b: &Self::Arrow) -> Result<Self::Arrow> {
        let mismatch = distance(&self.space, &a.e, &b.target);
        if mismatch > crate::base::POINT_TOL {
            return Err(GroupoidError::NotComposable { distance: mismatch });
        }
        let gh = self.groupoid.compose(&a.g, &b.g)?;
        self.arrow(gh, b.e.clone())
    }

    /// `(g, e)⁻¹ = (g⁻¹, g e)`.
    fn inverse(&self, a: &Self::Arrow) -> Result<Self::Arrow> {
        let inv = self.groupoid.inverse(&a.g)?;
        self.arrow(inv, a.target.clone())
    }

    fn object_distance(&self, x: &TotalPoint, y: &TotalPoint) -> f64 {
        distance(&self.space, x, y)
    }

    fn arrow_distance(&self, a: &Self::Arrow, b: &Self::Arrow) -> f64 {
        self.groupoid.arrow_distance(&a.g, &b.g).max(distance(&self.space, &a.e, &b.e))
    }
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Pairs arrows of the acting groupoid with random fiber vectors at their source.
pub struct TransformationSampler<S>(pub S);

impl<G, R, S> ArrowSampler<TransformationGroupoid<G, R>> for TransformationSampler<S>
where
    G: Groupoid,
    R: Representation<G>,
    S: ArrowSampler<G>,
{
    fn arrow(&self, t: &TransformationGroupoid<G, R>, rng: &mut ChaCha8Rng) -> TransformationArrow<G::Arrow> {
        loop {
            let g = self.0.arrow(&t.groupoid, rng);
            let v = random_vector(t.representation.fiber_dim(&t.groupoid), rng);
            let e = t.representation.point(&t.groupoid.source(&g), v);
            if let Ok(a) = t.arrow(g, e) {
                return a;
            }
        }
    }

    fn arrow_from(
        &self,
        t: &TransformationGroupoid<G, R>,
        source: &TotalPoint,
        rng: &mut ChaCha8Rng,
    ) -> Option<TransformationArrow<G::Arrow>> {
        let g = self.0.arrow_from(&t.groupoid, &t.representation.projection(source), rng)?;
        t.arrow(g, source.clone()).ok()
    }
}

/// Largest defects of the representation laws.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub trials: usize,
    /// `|ψ_g(a u + b w) − a ψ_g u − b ψ_g w|`.
    pub linearity: f64,
    /// `| |ψ_g v| − |v| |`.
    pub isometry: f64,
    /// `|1_{π(e)} e − e|`.
    pub unit: f64,
    /// `|g (h e) − (g h) e|`.
    pub associativity: f64,
    pub errors: Vec<String>,
}

impl RepresentationReport {
    pub fn max_defect(&self) -> f64 {
        self.linearity.max(self.isometry).max(self.unit).max(self.associativity)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.errors.is_empty() && self.max_defect() <= tol
    }
}

fn fiber_gap(a: &TotalPoint, b: &TotalPoint) -> f64 {
    a.fiber.iter().zip(&b.fiber).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn representation_trial<G, R, S>(
    groupoid: &G,
    rep: &R,
    sampler: &S,
    rng: &mut ChaCha8Rng,
) -> Result<RepresentationReport>
where
    G: Groupoid,
    R: Representation<G>,
    S: ArrowSampler<G>,
{
    let chain = sample_chain(groupoid, sampler, 2, rng)?;
    let (g, h) = (&chain[0], &chain[1]);
    let n = rep.fiber_dim(groupoid);
    let x = groupoid.source(h);
    let (u, w) = (random_vector(n, rng), random_vector(n, rng));
    let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let mix: Vec<f64> = u.iter().zip(&w).map(|(p, q)| a * p + b * q).collect();
    let e = rep.point(&x, u.clone());
    let hu = rep.act(groupoid, h, &e)?;
    let hw = rep.act(groupoid, h, &rep.point(&x, w))?;
    let hmix = rep.act(groupoid, h, &rep.point(&x, mix))?;
    let combined: Vec<f64> = hu.fiber.iter().zip(&hw.fiber).map(|(p, q)| a * p + b * q).collect();
    let linearity = hmix.fiber.iter().zip(&combined).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let isometry = (hu.fiber_norm() - e.fiber_norm()).abs();
    let unit = fiber_gap(&rep.act(groupoid, &groupoid.unit(&x), &e)?, &e);
    let g_he = rep.act(groupoid, g, &hu)?;
    let gh_e = rep.act(groupoid, &groupoid.compose(g, h)?, &e)?;
    let base_gap = groupoid.object_distance(&rep.projection(&g_he), &rep.projection(&gh_e));
    Ok(RepresentationReport {
        trials: 1,
        linearity,
        isometry,
        unit,
        associativity: fiber_gap(&g_he, &gh_e).max(base_gap),
        errors: Vec::new(),
    })
}

/// Checks that `ψ` is a representation by fiber isometries on `trials` random draws.
pub fn representation_check<G, R, S>(
    groupoid: &G,
    rep: &R,
    sampler: &S,
    trials: usize,
    seed: u64,
) -> RepresentationReport
where
    G: Groupoid,
    R: Representation<G>,
    S: ArrowSampler<G>,
{
    let reports: Vec<RepresentationReport> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "representation", i as u64);
            representation_trial(groupoid, rep, sampler, &mut rng).unwrap_or_else(|e| RepresentationReport {
                trials: 1,
                errors: vec![e.to_string()],
                ..Default::default()
            })
        })
        .collect();
    let mut out = reports.into_iter().fold(RepresentationReport::default(), |acc, r| RepresentationReport {
        trials: acc.trials + r.trials,
        linearity: acc.linearity.max(r.linearity),
        isometry: acc.isometry.max(r.isometry),
        unit: acc.unit.max(r.unit),
        associativity: acc.associativity.max(r.associativity),
        errors: acc.errors.into_iter().chain(r.errors).collect(),
    });
    out.errors.truncate(20);
    out
}
