//! Groupoids with tolerance-based arrow equality, an axiom harness and orbits.

mod bundle_of_groups;
mod pair;
mod pathclass;
mod quotient;
mod transformation;

pub use bundle_of_groups::{BundleOfGroups, BundleOfGroupsArrow, BundleOfGroupsSampler, FiberRepresentation};
pub use pair::{PairGroupoid, PairSampler, SignAction};
pub use pathclass::{
    FrameAction, FrameArrow, FrameGroupoid, FrameSampler, PathClassArrow, PathClassGroupoid, PathClassSampler,
    TransportRepresentation,
};
pub use quotient::{GroupAction, QuotientArrow, QuotientGroupoid, QuotientSampler};
pub use transformation::{
    representation_check, Representation, RepresentationReport, TransformationArrow, TransformationGroupoid,
    TransformationSampler,
};

use crate::base::BaseError;
use crate::bundle::BundleError;
use crate::cloud::{coverage_bfs, TotalPoint};
use crate::lie::LieError;
use crate::rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupoidError {
    #[error("arrows are not composable: source and target differ by {distance:e}")]
    NotComposable { distance: f64 },
    #[error("conjugated element leaves the structure group: invariant '{invariant}' moves by {defect:e}")]
    LeavesGroup { invariant: String, defect: f64 },
    #[error("no group element relates the objects (mismatch {distance:e})")]
    NoSolution { distance: f64 },
    #[error("action is not free: {0}")]
    NotFree(String),
    #[error("sampler cannot produce composable arrows: {0}")]
    Sampler(String),
    #[error("arrow is invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

pub type Result<T> = std::result::Result<T, GroupoidError>;

/// A groupoid `G₁ ⇉ G₀` whose arrow equality is measured, not decided.
pub trait Groupoid: Sync {
    type Object: Clone + Debug + Send + Sync;
    type Arrow: Clone + Debug + Send + Sync;

    fn source(&self, g: &Self::Arrow) -> Self::Object;
    fn target(&self, g: &Self::Arrow) -> Self::Object;
    fn unit(&self, x: &Self::Object) -> Self::Arrow;
    /// `g h`, defined when `s(g) = t(h)`.
    fn compose(&self, g: &Self::Arrow, h: &Self::Arrow) -> Result<Self::Arrow>;
    fn inverse(&self, g: &Self::Arrow) -> Result<Self::Arrow>;
    fn object_distance(&self, x: &Self::Object, y: &Self::Object) -> f64;
    /// Zero exactly for equal arrows; the defect used by every axiom check.
    fn arrow_distance(&self, g: &Self::Arrow, h: &Self::Arrow) -> f64;
}

/// Random arrows, optionally with a prescribed source.
pub trait ArrowSampler<G: Groupoid>: Sync {
    fn arrow(&self, groupoid: &G, rng: &mut ChaCha8Rng) -> G::Arrow;
    fn arrow_from(&self, groupoid: &G, source: &G::Object, rng: &mut ChaCha8Rng) -> Option<G::Arrow>;
}

/// Largest defect observed for each axiom.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub pairs: usize,
    pub triples: usize,
    pub source_of_product: f64,
    pub target_of_product: f64,
    pub associativity: f64,
    pub left_unit: f64,
    pub right_unit: f64,
    pub left_inverse: f64,
    pub right_inverse: f64,
    pub inverse_ends: f64,
    /// Source/target mismatch of a sampled pair that `compose` refused, or 1 for other failures.
    pub composability: f64,
    pub errors: Vec<String>,
}

impl AxiomReport {
    pub fn defects(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("source_of_product", self.source_of_product),
            ("target_of_product", self.target_of_product),
            ("associativity", self.associativity),
            ("left_unit", self.left_unit),
            ("right_unit", self.right_unit),
            ("left_inverse", self.left_inverse),
            ("right_inverse", self.right_inverse),
            ("inverse_ends", self.inverse_ends),
            ("composability", self.composability),
        ]
    }

    pub fn max_defect(&self) -> f64 {
        self.defects().into_iter().map(|(_, d)| d).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.errors.is_empty() && self.max_defect() <= tol
    }

    fn merge(mut self, other: AxiomReport) -> AxiomReport {
        self.pairs += other.pairs;
        self.triples += other.triples;
        self.source_of_product = self.source_of_product.max(other.source_of_product);
        self.target_of_product = self.target_of_product.max(other.target_of_product);
        self.associativity = self.associativity.max(other.associativity);
        self.left_unit = self.left_unit.max(other.left_unit);
        self.right_unit = self.right_unit.max(other.right_unit);
        self.left_inverse = self.left_inverse.max(other.left_inverse);
        self.right_inverse = self.right_inverse.max(other.right_inverse);
        self.inverse_ends = self.inverse_ends.max(other.inverse_ends);
        self.composability = self.composability.max(other.composability);
        self.errors.extend(other.errors);
        self
    }

    fn failure(&mut self, context: &str, err: GroupoidError) {
        let defect = match &err {
            GroupoidError::NotComposable { distance } | GroupoidError::NoSolution { distance } => *distance,
            _ => 1.0,
        };
        self.composability = self.composability.max(defect);
        self.errors.push(format!("{context}: {err}"));
    }
}

const MAX_REPORTED_ERRORS: usize = 20;

fn sample_chain<G: Groupoid, S: ArrowSampler<G>>(
    groupoid: &G,
    sampler: &S,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<G::Arrow>> {
    // Built right to left: each new arrow starts where the previous one ends.
    let mut chain = vec![sampler.arrow(groupoid, rng)];
    while chain.len() < len {
        let t = groupoid.target(chain.last().expect("nonempty"));
        let next = sampler
            .arrow_from(groupoid, &t, rng)
            .ok_or_else(|| GroupoidError::Sampler(format!("no arrow with source {t:?}")))?;
        chain.push(next);
    }
    chain.reverse();
    Ok(chain)
}

fn check_pair<G: Groupoid>(groupoid: &G, g: &G::Arrow, h: &G::Arrow, report: &mut AxiomReport) {
    report.pairs += 1;
    match groupoid.compose(g, h) {
        Ok(gh) => {
            report.source_of_product =
                report.source_of_product.max(groupoid.object_distance(&groupoid.source(&gh), &groupoid.source(h)));
            report.target_of_product =
                report.target_of_product.max(groupoid.object_distance(&groupoid.target(&gh), &groupoid.target(g)));
        }
        Err(e) => report.failure("compose", e),
    }
    for a in [g, h] {
        let (s, t) = (groupoid.source(a), groupoid.target(a));
        match groupoid.compose(&groupoid.unit(&t), a) {
            Ok(x) => report.left_unit = report.left_unit.max(groupoid.arrow_distance(&x, a)),
            Err(e) => report.failure("left unit", e),
        }
        match groupoid.compose(a, &groupoid.unit(&s)) {
            Ok(x) => report.right_unit = report.right_unit.max(groupoid.arrow_distance(&x, a)),
            Err(e) => report.failure("right unit", e),
        }
        let inv = match groupoid.inverse(a) {
            Ok(inv) => inv,
            Err(e) => {
                report.failure("inverse", e);
                continue;
            }
        };
        report.inverse_ends = report.inverse_ends.max(
            groupoid
                .object_distance(&groupoid.source(&inv), &t)
                .max(groupoid.object_distance(&groupoid.target(&inv), &s)),
        );
        match groupoid.compose(a, &inv) {
            Ok(x) => report.right_inverse = report.right_inverse.max(groupoid.arrow_distance(&x, &groupoid.unit(&t))),
            Err(e) => report.failure("g g⁻¹", e),
        }
        match groupoid.compose(&inv, a) {
            Ok(x) => report.left_inverse = report.left_inverse.max(groupoid.arrow_distance(&x, &groupoid.unit(&s))),
            Err(e) => report.failure("g⁻¹ g", e),
        }
    }
}

fn check_triple<G: Groupoid>(groupoid: &G, f: &G::Arrow, g: &G::Arrow, h: &G::Arrow, report: &mut AxiomReport) {
    report.triples += 1;
    let left = groupoid.compose(f, g).and_then(|fg| groupoid.compose(&fg, h));
    let right = groupoid.compose(g, h).and_then(|gh| groupoid.compose(f, &gh));
    match (left, right) {
        (Ok(l), Ok(r)) => report.associativity = report.associativity.max(groupoid.arrow_distance(&l, &r)),
        (Err(e), _) | (_, Err(e)) => report.failure("associativity", e),
    }
}

/// Checks the groupoid axioms on `pairs` random composable pairs and `triples`
/// composable triples. Draws are independent streams of `seed`.
pub fn axiom_suite<G: Groupoid, S: ArrowSampler<G>>(
    groupoid: &G,
    sampler: &S,
    pairs: usize,
    triples: usize,
    seed: u64,
) -> Result<AxiomReport> {
    let pair_reports: Vec<AxiomReport> = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<AxiomReport> {
            let mut rng = rng::stream(seed, "axiom-pair", i as u64);
            let chain = sample_chain(groupoid, sampler, 2, &mut rng)?;
            let mut report = AxiomReport::default();
            check_pair(groupoid, &chain[0], &chain[1], &mut report);
            Ok(report)
        })
        .collect::<Result<_>>()?;
    let triple_reports: Vec<AxiomReport> = (0..triples)
        .into_par_iter()
        .map(|i| -> Result<AxiomReport> {
            let mut rng = rng::stream(seed, "axiom-triple", i as u64);
            let chain = sample_chain(groupoid, sampler, 3, &mut rng)?;
            let mut report = AxiomReport::default();
            check_triple(groupoid, &chain[0], &chain[1], &chain[2], &mut report);
            Ok(report)
        })
        .collect::<Result<_>>()?;
    let mut report = pair_reports.into_iter().chain(triple_reports).fold(AxiomReport::default(), AxiomReport::merge);
    report.errors.truncate(MAX_REPORTED_ERRORS);
    Ok(report)
}

/// Objects reached from `x` by targets of generating arrows.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit<O> {
    pub objects: Vec<O>,
    pub partial: bool,
}

/// Breadth-first orbit `t(s⁻¹(x))` for groupoids with exactly comparable objects.
pub fn orbit<G, F>(groupoid: &G, x: &G::Object, generators: F, budget: usize) -> Orbit<G::Object>
where
    G: Groupoid,
    G::Object: Eq + Hash,
    F: Fn(&G::Object) -> Vec<G::Arrow>,
{
    let mut seen = HashSet::from([x.clone()]);
    let mut objects = vec![x.clone()];
    let mut queue = VecDeque::from([x.clone()]);
    while let Some(y) = queue.pop_front() {
        for a in generators(&y) {
            let z = groupoid.target(&a);
            if seen.contains(&z) {
                continue;
            }
            if objects.len() >= budget {
                return Orbit { objects, partial: true };
            }
            seen.insert(z.clone());
            objects.push(z.clone());
            queue.push_back(z);
        }
    }
    Orbit { objects, partial: false }
}

/// Orbit of a total-space point as an ε-net: targets closer than `radius` to an
/// accepted point are merged.
pub fn orbit_net<G, F>(
    groupoid: &G,
    space: &crate::base::BaseSpace,
    x: &TotalPoint,
    generators: F,
    radius: f64,
    budget: usize,
) -> Orbit<TotalPoint>
where
    G: Groupoid<Object = TotalPoint>,
    F: Fn(&TotalPoint) -> Vec<G::Arrow> + Sync,
{
    let coverage =
        coverage_bfs(space, x.clone(), radius, budget, |p| generators(p).iter().map(|a| groupoid.target(a)).collect());
    Orbit { objects: coverage.points, partial: coverage.partial }
}

#[cfg(test)]
mod tests;
