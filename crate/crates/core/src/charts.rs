//! Coordinate charts on the path-class groupoid: simple neighborhoods, the
//! holonomy map of the base foliation, canonical paths, the charts
//! `Φ_α : U_α → K⁰ × U₀ × P₁` and their transition maps.

use crate::base::{BaseError, BasePath, BaseSpace, HomotopyKey};
use crate::bundle::{parallel_transport, BundleError, ConnectionField};
use crate::foliation::MEMBERSHIP_TOL;
use crate::groupoid::{Groupoid, GroupoidError, PathClassArrow, PathClassGroupoid};
use crate::lie::{exp_skew, LieError, OrthogonalElement, SkewElement};
use crate::rng;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slice points must land on the image plaque to this accuracy.
pub const SLICE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("point outside the chart domain: {0}")]
    OutOfDomain(String),
    #[error("arrow not in the chart domain: winding {got:?} differs from the canonical path's {expected:?}")]
    WindingMismatch { expected: HomotopyKey, got: HomotopyKey },
    #[error("arrow target misses the canonical endpoint by {distance:e}")]
    Endpoint { distance: f64 },
    #[error("point not in the overlap of the two charts: {0}")]
    NotInOverlap(String),
    #[error("chart value leaves the structure group: invariant '{invariant}' moves by {defect:e}")]
    Membership { invariant: String, defect: f64 },
    #[error("invalid chart: {0}")]
    Invalid(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Groupoid(#[from] GroupoidError),
}

pub type Result<T> = std::result::Result<T, ChartError>;

/// Box `Ω ⊂ R^l × R^k` containing the marked point `(0, 0)`, half-open on the upper side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseChart {
    pub plaque_dim: usize,
    pub slice_dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BaseChart {
    pub fn new(plaque_dim: usize, slice_dim: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = plaque_dim + slice_dim;
        if lower.len() != d || upper.len() != d {
            return Err(ChartError::Invalid(format!("chart box needs {d} bounds per side")));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(*a <= 0.0 && 0.0 < *b)) {
            return Err(ChartError::Invalid("chart box must contain the marked point".into()));
        }
        Ok(Self { plaque_dim, slice_dim, lower, upper })
    }

    fn contains(&self, offset: usize, z: &[f64]) -> bool {
        z.iter().enumerate().all(|(i, v)| self.lower[offset + i] <= *v && *v < self.upper[offset + i])
    }

    pub fn contains_point(&self, x: &[f64], y: &[f64]) -> bool {
        self.contains(0, x) && self.contains(self.plaque_dim, y)
    }

    pub fn contains_plaque(&self, x: &[f64]) -> bool {
        self.contains(0, x)
    }

    pub fn contains_slice(&self, y: &[f64]) -> bool {
        self.contains(self.plaque_dim, y)
    }
}

/// A chart box centered at a lifted marked point; plaques are `{y = const}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleNeighborhood {
    pub center: Vec<f64>,
    pub chart: BaseChart,
}

impl SimpleNeighborhood {
    pub fn new(space: &BaseSpace, center: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        space.check_point(&center)?;
        let chart = BaseChart::new(space.leaf_dim(), space.dim() - space.leaf_dim(), lower, upper)?;
        Ok(Self { center, chart })
    }

    /// Lifted point with chart coordinates `(x, y)`, on the sheet of the center.
    pub fn point(&self, space: &BaseSpace, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut p = self.center.clone();
        for (k, &i) in space.plaque_coordinates().iter().enumerate() {
            p[i] += x[k];
        }
        for (k, &i) in space.slice_coordinates().iter().enumerate() {
            p[i] += y[k];
        }
        p
    }

    /// Chart coordinates of a lifted point, after moving it to the sheet of the center.
    pub fn coordinates(&self, space: &BaseSpace, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let q = space.deck(p, &space.deck_shift(p, &self.center));
        let d: Vec<f64> = q.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        (
            space.plaque_coordinates().iter().map(|&i| d[i]).collect(),
            space.slice_coordinates().iter().map(|&i| d[i]).collect(),
        )
    }
}

/// A leafwise path `α` with simple neighborhoods at its ends.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartDatum {
    alpha: BasePath,
    u0: SimpleNeighborhood,
    u1: SimpleNeighborhood,
}

impl ChartDatum {
    /// `α` is moved to the sheet of `u0`'s center.
    pub fn new(space: &BaseSpace, alpha: BasePath, u0: SimpleNeighborhood, u1: SimpleNeighborhood) -> Result<Self> {
        if !alpha.is_leafwise() {
            return Err(ChartError::Invalid("α is not leafwise".into()));
        }
        for (name, end, u) in [("α(0)", alpha.start(), &u0), ("α(1)", alpha.end(), &u1)] {
            let distance = space.distance(end, &u.center);
            if distance > crate::base::POINT_TOL {
                return Err(ChartError::Invalid(format!("{name} is {distance:e} away from the marked point")));
            }
        }
        let alpha = alpha.translated(space, &space.deck_shift(alpha.start(), &u0.center));
        Ok(Self { alpha, u0, u1 })
    }

    pub fn alpha(&self) -> &BasePath {
        &self.alpha
    }

    pub fn u0(&self) -> &SimpleNeighborhood {
        &self.u0
    }

    pub fn u1(&self) -> &SimpleNeighborhood {
        &self.u1
    }
}

/// Holonomy map `φ_α : S₀ → S₁` of the base foliation, in slice coordinates.
pub fn base_holonomy_map(space: &BaseSpace, datum: &ChartDatum, y0: &[f64]) -> Result<Vec<f64>> {
    let zero = vec![0.0; datum.u0.chart.plaque_dim];
    if !datum.u0.chart.contains_slice(y0) {
        return Err(ChartError::OutOfDomain(format!("slice point {y0:?} outside S₀")));
    }
    let slid = slid_path(space, datum, y0)?;
    let (x, y) = datum.u1.coordinates(space, slid.end());
    if x.iter().zip(&zero).any(|(a, b)| (a - b).abs() > SLICE_TOL) || !datum.u1.chart.contains_slice(&y) {
        return Err(ChartError::OutOfDomain(format!("slice point {y0:?} leaves S₁ (lands at {x:?}, {y:?})")));
    }
    Ok(y)
}

/// `α_{(0, y₀)}(t) = φ_{α|[0,t]}(0, y₀)`: the plaque-parallel copy of `α` through `(0, y₀)`.
fn slid_path(space: &BaseSpace, datum: &ChartDatum, y0: &[f64]) -> Result<BasePath> {
    let slice = space.slice_coordinates();
    let (lo, hi) = space.sampling_domain();
    let points: Vec<Vec<f64>> = datum
        .alpha
        .knots()
        .iter()
        .map(|k| {
            let mut p = k.point.clone();
            for (j, &i) in slice.iter().enumerate() {
                p[i] += y0[j];
            }
            p
        })
        .collect();
    // Only boxes have slice coordinates that can run out of the base.
    if matches!(space.kind(), crate::base::BaseKind::ProductBox { .. }) {
        for p in &points {
            if slice.iter().any(|&i| p[i] < lo[i] || p[i] > hi[i]) {
                return Err(ChartError::OutOfDomain(format!("slid path leaves the base at {p:?}")));
            }
        }
    }
    Ok(BasePath::polyline(space, points)?)
}

/// `α_{x₀,y₀,x₁}`: the line to `(0, y₀)`, the slid path, then the line to `(x₁, φ_α(y₀))`.
pub fn canonical_path(space: &BaseSpace, datum: &ChartDatum, x0: &[f64], y0: &[f64], x1: &[f64]) -> Result<BasePath> {
    if !datum.u0.chart.contains_point(x0, y0) {
        return Err(ChartError::OutOfDomain(format!("({x0:?}, {y0:?}) outside U₀")));
    }
    if !datum.u1.chart.contains_plaque(x1) {
        return Err(ChartError::OutOfDomain(format!("{x1:?} outside P₁")));
    }
    base_holonomy_map(space, datum, y0)?;
    let slid = slid_path(space, datum, y0)?;
    let mut points = vec![datum.u0.point(space, x0, y0)];
    points.extend(slid.knots().iter().map(|k| k.point.clone()));
    let mut last = slid.end().to_vec();
    for (k, &i) in space.plaque_coordinates().iter().enumerate() {
        last[i] += x1[k];
    }
    points.push(last);
    Ok(BasePath::polyline(space, points)?)
}

/// Chart coordinates `(k, (x₀, y₀), x₁)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub k: OrthogonalElement,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub x1: Vec<f64>,
}

impl ChartPoint {
    pub fn distance(&self, other: &ChartPoint) -> f64 {
        let coords = self
            .x0
            .iter()
            .chain(&self.y0)
            .chain(&self.x1)
            .zip(other.x0.iter().chain(&other.y0).chain(&other.x1))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        coords.max(self.k.max_abs_diff(&other.k))
    }

    /// Coordinates as one vector: the entries of `k`, then `x₀`, `y₀`, `x₁`.
    pub fn flatten(&self) -> Vec<f64> {
        self.k
            .matrix()
            .iter()
            .copied()
            .chain(self.x0.iter().copied())
            .chain(self.y0.iter().copied())
            .chain(self.x1.iter().copied())
            .collect()
    }
}

/// Canonical paths in both charts with the target coordinates `(x₀, y₀, x₁)`.
type Matching = (BasePath, BasePath, Vec<f64>, Vec<f64>, Vec<f64>);

/// Charts of one path-class groupoid.
#[derive(Clone, Debug)]
pub struct Atlas {
    classes: PathClassGroupoid,
    full: ConnectionField,
}

impl Atlas {
    pub fn new(classes: PathClassGroupoid) -> Self {
        let full = classes.connection().extended();
        Self { classes, full }
    }

    pub fn classes(&self) -> &PathClassGroupoid {
        &self.classes
    }

    pub fn space(&self) -> &BaseSpace {
        self.classes.space()
    }

    fn transport(&self, path: &BasePath) -> Result<OrthogonalElement> {
        Ok(parallel_transport(path, &self.full, self.classes.step())?)
    }

    /// Fiber isometry `E_{(x₀,y₀)} → E_{α(0)}` whose conjugation is `ψ̂_α(x₀, y₀)`:
    /// along the plaque to `(0, y₀)`, then across the slice to `(0, 0)`.
    pub fn psi_isometry(&self, datum: &ChartDatum, x0: &[f64], y0: &[f64]) -> Result<OrthogonalElement> {
        let space = self.space();
        let zero_x = vec![0.0; x0.len()];
        let zero_y = vec![0.0; y0.len()];
        let p = datum.u0.point(space, x0, y0);
        let q = datum.u0.point(space, &zero_x, y0);
        let o = datum.u0.point(space, &zero_x, &zero_y);
        let along = self.transport(&BasePath::polyline(space, vec![p, q.clone()])?)?;
        let across = self.transport(&BasePath::polyline(space, vec![q, o])?)?;
        Ok(across.compose(&along))
    }

    fn check_member(&self, k: &OrthogonalElement) -> Result<()> {
        let (defect, invariant) = self.classes.fiber().membership_defect(k);
        if defect > MEMBERSHIP_TOL {
            return Err(ChartError::Membership { invariant, defect });
        }
        Ok(())
    }

    /// `Φ_α([P_β ∘ g_β]) = (ψ̂_α(x₀,y₀)(P_{γ⁻¹} ∘ P_β ∘ g_β), (x₀, y₀), x₁)` with `γ = α_{x₀,y₀,x₁}`.
    pub fn chart_forward(&self, datum: &ChartDatum, arrow: &PathClassArrow) -> Result<ChartPoint> {
        let space = self.space();
        let (x0, y0) = datum.u0.coordinates(space, arrow.path().start());
        let (x1, y1) = datum.u1.coordinates(space, arrow.path().end());
        let gamma = canonical_path(space, datum, &x0, &y0, &x1)?;
        let (_, target_y) = datum.u1.coordinates(space, gamma.end());
        let distance = y1.iter().zip(&target_y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if distance > SLICE_TOL {
            return Err(ChartError::Endpoint { distance });
        }
        if gamma.homotopy_key() != arrow.key() {
            return Err(ChartError::WindingMismatch {
                expected: gamma.homotopy_key().clone(),
                got: arrow.key().clone(),
            });
        }
        let p_gamma = self.transport(&gamma)?;
        let inner = p_gamma.inverse().compose(&arrow.isometry());
        let phi = self.psi_isometry(datum, &x0, &y0)?;
        let k = phi.compose(&inner).compose(&phi.inverse());
        self.check_member(&k)?;
        Ok(ChartPoint { k, x0, y0, x1 })
    }

    /// `Φ_α⁻¹(k, (x₀, y₀), x₁) = [α_{x₀,y₀,x₁}, ψ̂_α(x₀,y₀)⁻¹(k)]`.
    pub fn chart_inverse(&self, datum: &ChartDatum, point: &ChartPoint) -> Result<PathClassArrow> {
        self.check_member(&point.k)?;
        let gamma = canonical_path(self.space(), datum, &point.x0, &point.y0, &point.x1)?;
        let phi = self.psi_isometry(datum, &point.x0, &point.y0)?;
        let g = phi.inverse().compose(&point.k).compose(&phi);
        Ok(self.classes.arrow(gamma, g)?)
    }

    /// Coordinates in `other` of the canonical path of `point` in `datum`.
    fn matching_coordinates(&self, datum: &ChartDatum, other: &ChartDatum, point: &ChartPoint) -> Result<Matching> {
        let space = self.space();
        let gamma = canonical_path(space, datum, &point.x0, &point.y0, &point.x1)?;
        let (tx0, ty0) = other.u0.coordinates(space, gamma.start());
        let (tx1, ty1) = other.u1.coordinates(space, gamma.end());
        let tilde =
            canonical_path(space, other, &tx0, &ty0, &tx1).map_err(|e| ChartError::NotInOverlap(e.to_string()))?;
        let (_, landing) = other.u1.coordinates(space, tilde.end());
        let gap = landing.iter().zip(&ty1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > SLICE_TOL {
            return Err(ChartError::NotInOverlap(format!("canonical endpoints differ by {gap:e}")));
        }
        if tilde.homotopy_key() != gamma.homotopy_key() {
            return Err(ChartError::NotInOverlap(format!(
                "canonical paths wind {:?} and {:?}",
                gamma.homotopy_key(),
                tilde.homotopy_key()
            )));
        }
        Ok((gamma, tilde, tx0, ty0, tx1))
    }

    /// `Φ_α̃ ∘ Φ_α⁻¹`, with `F = ψ̂_α̃(x̃₀,ỹ₀)(P_{γ̃⁻¹} ∘ P_γ ∘ ψ̂_α(x₀,y₀)⁻¹(k))`.
    pub fn transition(&self, datum: &ChartDatum, other: &ChartDatum, point: &ChartPoint) -> Result<ChartPoint> {
        self.check_member(&point.k)?;
        let (gamma, tilde, x0, y0, x1) = self.matching_coordinates(datum, other, point)?;
        let phi = self.psi_isometry(datum, &point.x0, &point.y0)?;
        let phi_tilde = self.psi_isometry(other, &x0, &y0)?;
        let g = phi.inverse().compose(&point.k).compose(&phi);
        let inner = self.transport(&tilde)?.inverse().compose(&self.transport(&gamma)?).compose(&g);
        let k = phi_tilde.compose(&inner).compose(&phi_tilde.inverse());
        self.check_member(&k)?;
        Ok(ChartPoint { k, x0, y0, x1 })
    }

    /// Random structure group element and chart point in `datum`'s domain.
    pub fn random_point<R: Rng + ?Sized>(&self, datum: &ChartDatum, shrink: f64, rng: &mut R) -> ChartPoint {
        let fiber = self.classes.fiber();
        let n = fiber.fiber_dim();
        let mut a = DMatrix::zeros(n, n);
        for b in fiber.algebra().basis() {
            a += b.matrix() * rng.random_range(-3.0..3.0);
        }
        let k = exp_skew(&SkewElement::projected(a));
        let chart = &datum.u0.chart;
        let l = chart.plaque_dim;
        let draw = |lo: f64, hi: f64, rng: &mut R| rng.random_range(lo * shrink..hi * shrink);
        let x0 = (0..l).map(|i| draw(chart.lower[i], chart.upper[i], rng)).collect();
        // Slice points whose holonomy image leaves S₁ are redrawn.
        let mut y0: Vec<f64> = Vec::new();
        for _ in 0..64 {
            y0 = (l..l + chart.slice_dim).map(|i| draw(chart.lower[i], chart.upper[i], rng)).collect();
            if base_holonomy_map(self.space(), datum, &y0).is_ok() {
                break;
            }
        }
        let c1 = &datum.u1.chart;
        let x1 = (0..l).map(|i| draw(c1.lower[i], c1.upper[i], rng)).collect();
        ChartPoint { k, x0, y0, x1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChartCheckReport {
    pub samples: usize,
    /// Samples outside the domain or overlap under test.
    pub skipped: usize,
    pub max_defect: f64,
    pub errors: Vec<String>,
}

impl ChartCheckReport {
    pub fn evaluated(&self) -> usize {
        self.samples - self.skipped - self.errors.len()
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.errors.is_empty() && self.evaluated() > 0 && self.max_defect <= tol
    }

    fn from_results(results: Vec<Result<f64>>) -> Self {
        let mut report = ChartCheckReport { samples: results.len(), ..Default::default() };
        for r in results {
            match r {
                Ok(d) => report.max_defect = report.max_defect.max(d),
                Err(ChartError::OutOfDomain(_) | ChartError::NotInOverlap(_) | ChartError::WindingMismatch { .. }) => {
                    report.skipped += 1
                }
                Err(e) => report.errors.push(e.to_string()),
            }
        }
        report
    }
}

/// `Φ ∘ Φ⁻¹` and `Φ⁻¹ ∘ Φ` on random chart points.
pub fn round_trip_check(atlas: &Atlas, datum: &ChartDatum, samples: usize, seed: u64) -> ChartCheckReport {
    let results = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "chart-round-trip", i as u64);
            let p = atlas.random_point(datum, 0.95, &mut rng);
            let arrow = atlas.chart_inverse(datum, &p)?;
            let back = atlas.chart_forward(datum, &arrow)?;
            let again = atlas.chart_inverse(datum, &back)?;
            let arrow_gap = atlas.classes().arrow_distance(&arrow, &again);
            Ok(back.distance(&p).max(arrow_gap))
        })
        .collect();
    ChartCheckReport::from_results(results)
}

/// Transition maps against the composition `Φ_α̃ ∘ Φ_α⁻¹` computed through arrows.
pub fn transition_oracle_check(
    atlas: &Atlas,
    datum: &ChartDatum,
    other: &ChartDatum,
    samples: usize,
    shrink: f64,
    seed: u64,
) -> ChartCheckReport {
    let results = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "chart-transition", i as u64);
            let p = atlas.random_point(datum, shrink, &mut rng);
            let direct = atlas.transition(datum, other, &p)?;
            let composed = atlas.chart_forward(other, &atlas.chart_inverse(datum, &p)?)?;
            Ok(direct.distance(&composed))
        })
        .collect();
    ChartCheckReport::from_results(results)
}

/// Cocycle identity `F_{α̂α̃} ∘ F_{α̃α} = F_{α̂α}` on points of a triple overlap.
pub fn cocycle_check(
    atlas: &Atlas,
    charts: [&ChartDatum; 3],
    samples: usize,
    shrink: f64,
    seed: u64,
) -> ChartCheckReport {
    let [a, b, c] = charts;
    let results = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "chart-cocycle", i as u64);
            let p = atlas.random_point(a, shrink, &mut rng);
            let two_step = atlas.transition(b, c, &atlas.transition(a, b, &p)?)?;
            let direct = atlas.transition(a, c, &p)?;
            Ok(two_step.distance(&direct))
        })
        .collect();
    ChartCheckReport::from_results(results)
}

/// Finite-difference evidence that a transition map is `C¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Largest central-difference derivative at the coarsest step.
    pub derivative_bound: f64,
    /// Changes of the derivative estimate between successive step halvings.
    pub refinement_changes: Vec<f64>,
    /// Largest partial derivative that the coordinate pattern forces to vanish:
    /// `∂x̃₀/∂x₁`, `∂ỹ₀/∂x₀`, `∂ỹ₀/∂x₁`, `∂x̃₁/∂x₀`.
    pub excluded_partials: f64,
}

impl SmoothnessReport {
    /// Bounded derivatives whose estimates settle under refinement.
    pub fn consistent(&self, bound: f64, noise: f64) -> bool {
        let settled = self.refinement_changes.windows(2).all(|w| w[1] <= w[0].max(noise));
        self.derivative_bound <= bound && settled && self.excluded_partials <= 1e-7
    }
}

/// Central differences of the transition map in every chart coordinate at steps `h, h/2, h/4`.
pub fn transition_smoothness(
    atlas: &Atlas,
    datum: &ChartDatum,
    other: &ChartDatum,
    point: &ChartPoint,
    h: f64,
) -> Result<SmoothnessReport> {
    let l = point.x0.len();
    let k = point.y0.len();
    let vars = 2 * l + k;
    let nudge = |var: usize, s: f64| -> ChartPoint {
        let mut q = point.clone();
        if var < l {
            q.x0[var] += s;
        } else if var < l + k {
            q.y0[var - l] += s;
        } else {
            q.x1[var - l - k] += s;
        }
        q
    };
    let derivative = |var: usize, s: f64| -> Result<Vec<f64>> {
        let plus = atlas.transition(datum, other, &nudge(var, s))?.flatten();
        let minus = atlas.transition(datum, other, &nudge(var, -s))?.flatten();
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * s)).collect())
    };
    let nk = point.k.dim() * point.k.dim();
    let mut bound: f64 = 0.0;
    let mut changes = vec![0.0f64; 2];
    let mut excluded: f64 = 0.0;
    for var in 0..vars {
        let d: Vec<Vec<f64>> = [h, h / 2.0, h / 4.0].iter().map(|s| derivative(var, *s)).collect::<Result<_>>()?;
        bound = bound.max(d[0].iter().fold(0.0, |m, x| m.max(x.abs())));
        for (c, w) in changes.iter_mut().zip(d.windows(2)) {
            *c = c.max(w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        let out = &d[2];
        let (tx0, ty0, tx1) = (&out[nk..nk + l], &out[nk + l..nk + l + k], &out[nk + l + k..]);
        let is_x0 = var < l;
        let is_x1 = var >= l + k;
        let mut forced = Vec::new();
        if is_x1 {
            forced.extend_from_slice(tx0);
            forced.extend_from_slice(ty0);
        }
        if is_x0 {
            forced.extend_from_slice(ty0);
            forced.extend_from_slice(tx1);
        }
        excluded = excluded.max(forced.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    Ok(SmoothnessReport { derivative_bound: bound, refinement_changes: changes, excluded_partials: excluded })
}

/// Largest `‖ψ̂(p + h eᵢ) − ψ̂(p)‖_max / h` over random points of `U₀`.
pub fn psi_continuity(atlas: &Atlas, datum: &ChartDatum, samples: usize, h: f64, seed: u64) -> Result<f64> {
    let mut rng = rng::stream(seed, "psi-continuity", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let p = atlas.random_point(datum, 0.9, &mut rng);
        let base = atlas.psi_isometry(datum, &p.x0, &p.y0)?;
        for var in 0..p.x0.len() + p.y0.len() {
            let (mut x0, mut y0) = (p.x0.clone(), p.y0.clone());
            if var < x0.len() {
                x0[var] += h;
            } else {
                y0[var - x0.len()] += h;
            }
            let moved = atlas.psi_isometry(datum, &x0, &y0)?;
            worst = worst.max(moved.max_abs_diff(&base) / h);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::BaseKind;
    use crate::bundle::{Coefficient, Scope};
    use crate::expr::{Expr, VarScope};
    use crate::foliation::{FiberFoliation, GroupClosureSpec, Invariant};

    use crate::lie::{j2, rotation2, LieSubalgebra};
    use std::f64::consts::TAU;

    fn circles() -> FiberFoliation {
        let algebra = LieSubalgebra::new(2, vec![j2()]).unwrap();
        let r2 = Invariant::new("r2", Expr::parse("v0*v0 + v1*v1", VarScope { base: 0, fiber: 2 }).unwrap());
        FiberFoliation::new(algebra.clone(), vec![], vec![r2], GroupClosureSpec { algebra, rational: vec![] }).unwrap()
    }

    fn spheres() -> FiberFoliation {
        let gens = vec![SkewElement::elementary(3, 0, 1), SkewElement::elementary(3, 1, 2)];
        let algebra = LieSubalgebra::new(3, gens).unwrap();
        let r2 = Invariant::new("r2", Expr::parse("v0*v0 + v1*v1 + v2*v2", VarScope { base: 0, fiber: 3 }).unwrap());
        FiberFoliation::new(algebra.clone(), vec![], vec![r2], GroupClosureSpec { algebra, rational: vec![] }).unwrap()
    }

    /// Mapping torus of a rotation with an so(3) connection that is non-flat across slices.
    fn mapping_torus_atlas(rho: f64) -> Atlas {
        let space = BaseSpace::new(BaseKind::MappingTorus { rotation: rho }).unwrap();
        let vs = VarScope { base: 3, fiber: 0 };
        let e = |s: &str| Expr::parse(s, vs).unwrap();
        let z = || e("0");
        let probes: Vec<Vec<f64>> = vec![vec![0.2, 0.1, -0.3], vec![0.7, -0.4, 0.2]];
        let cx = Coefficient::from_exprs(
            0,
            vec![
                vec![z(), e("-(0.3 + 0.2*(x1*x1 + x2*x2))"), e("0.1")],
                vec![e("0.3 + 0.2*(x1*x1 + x2*x2)"), z(), e("-0.25")],
                vec![e("-0.1"), e("0.25"), z()],
            ],
            &probes,
        )
        .unwrap();
        let c1 = Coefficient::Constant(SkewElement::elementary(3, 1, 2).scale(0.4));
        let c2 = Coefficient::Constant(SkewElement::elementary(3, 0, 2).scale(-0.3));
        let conn = ConnectionField::new(space, 3, Scope::Full, vec![cx, c1, c2]).unwrap();
        Atlas::new(PathClassGroupoid::new(conn, spheres(), 1e-3))
    }

    fn circuit(atlas: &Atlas, start: f64) -> ChartDatum {
        let space = atlas.space();
        let alpha = BasePath::polyline(space, vec![vec![start, 0.0, 0.0], vec![start + 1.0, 0.0, 0.0]]).unwrap();
        let box_u = |c: f64| {
            SimpleNeighborhood::new(space, vec![c, 0.0, 0.0], vec![-0.2, -0.4, -0.4], vec![0.2, 0.4, 0.4]).unwrap()
        };
        ChartDatum::new(space, alpha, box_u(start), box_u(start)).unwrap()
    }

    #[test]
    fn holonomy_maps() {
        let atlas = mapping_torus_atlas(0.7);
        let space = atlas.space();
        let d = circuit(&atlas, 0.3);
        let y = base_holonomy_map(space, &d, &[0.2, 0.1]).unwrap();
        let r = rotation2(0.7).apply(&[0.2, 0.1]);
        assert!((y[0] - r[0]).abs() < 1e-12 && (y[1] - r[1]).abs() < 1e-12);
        // Reverse circuit undoes it.
        let back = ChartDatum::new(space, d.alpha().reverse(), d.u1().clone(), d.u0().clone()).unwrap();
        let z = base_holonomy_map(space, &back, &y).unwrap();
        assert!((z[0] - 0.2).abs() < 1e-9 && (z[1] - 0.1).abs() < 1e-9);
        assert!(matches!(base_holonomy_map(space, &d, &[0.39, 0.39]), Err(ChartError::OutOfDomain(_))));

        let product = BaseSpace::torus([true, false]);
        let alpha = BasePath::polyline(&product, vec![vec![0.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let u = |c: f64| SimpleNeighborhood::new(&product, vec![c, 1.0], vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
        let d = ChartDatum::new(&product, alpha, u(0.0), u(2.0)).unwrap();
        assert!((base_holonomy_map(&product, &d, &[0.3]).unwrap()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn canonical_paths() {
        let atlas = mapping_torus_atlas(0.7);
        let space = atlas.space();
        let d = circuit(&atlas, 0.3);
        let g = canonical_path(space, &d, &[0.0], &[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(g.start(), d.alpha().start());
        assert_eq!(g.end(), d.alpha().end());
        assert_eq!(g.homotopy_key(), d.alpha().homotopy_key());
        let g = canonical_path(space, &d, &[0.1], &[0.2, -0.1], &[-0.15]).unwrap();
        assert!(g.is_leafwise());
        assert_eq!(g.start(), d.u0().point(space, &[0.1], &[0.2, -0.1]).as_slice());
        let (x1, y1) = d.u1().coordinates(space, g.end());
        assert!((x1[0] + 0.15).abs() < 1e-12);
        let phi = base_holonomy_map(space, &d, &[0.2, -0.1]).unwrap();
        assert!(y1.iter().zip(&phi).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(canonical_path(space, &d, &[0.2], &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn chart_examples() {
        let atlas = mapping_torus_atlas(0.7);
        let space = atlas.space().clone();
        let d = circuit(&atlas, 0.3);
        let id = OrthogonalElement::identity(3);
        let p = ChartPoint { k: id.clone(), x0: vec![0.1], y0: vec![0.2, -0.1], x1: vec![0.05] };
        let gamma = canonical_path(&space, &d, &p.x0, &p.y0, &p.x1).unwrap();
        let arrow = atlas.classes().arrow(gamma, id.clone()).unwrap();
        assert!(atlas.chart_forward(&d, &arrow).unwrap().distance(&p) <= 1e-12);

        let k = crate::lie::exp_skew(&SkewElement::elementary(3, 0, 1).scale(0.8));
        let at_origin = atlas.classes().arrow(d.alpha().clone(), k.clone()).unwrap();
        let c = atlas.chart_forward(&d, &at_origin).unwrap();
        assert!(c.k.max_abs_diff(&k) <= 1e-12 && c.x0 == vec![0.0] && c.y0 == vec![0.0, 0.0]);

        let origin = ChartPoint { k: id.clone(), x0: vec![0.0], y0: vec![0.0, 0.0], x1: vec![0.0] };
        let a = atlas.chart_inverse(&d, &origin).unwrap();
        assert!(a.k().max_abs_diff(&id) <= 1e-15);

        // An extra circuit changes the winding and leaves the domain.
        let extra = BasePath::polyline(&space, vec![d.alpha().end().to_vec(), vec![2.3, 0.0, 0.0]]).unwrap();
        let looped = atlas.classes().arrow(extra, id.clone()).unwrap();
        let longer = atlas.classes().compose(&looped, &at_origin).unwrap();
        assert!(matches!(atlas.chart_forward(&d, &longer), Err(ChartError::WindingMismatch { .. })));
    }

    #[test]
    fn round_trips_and_transitions() {
        let atlas = mapping_torus_atlas(0.7);
        let d = circuit(&atlas, 0.3);
        let r = round_trip_check(&atlas, &d, 40, 1);
        assert!(r.passed(1e-8), "{r:?}");
        let same = transition_oracle_check(&atlas, &d, &d, 10, 0.9, 2);
        assert!(same.passed(1e-9), "{same:?}");
        let p = atlas.random_point(&d, 0.5, &mut rng::stream(0, "t", 0));
        assert!(atlas.transition(&d, &d, &p).unwrap().distance(&p) <= 1e-9);

        let d2 = circuit(&atlas, 0.4);
        let d3 = circuit(&atlas, 0.35);
        let t = transition_oracle_check(&atlas, &d, &d2, 30, 0.4, 3);
        assert!(t.passed(1e-7), "{t:?}");
        let c = cocycle_check(&atlas, [&d, &d2, &d3], 30, 0.4, 4);
        assert!(c.passed(1e-7), "{c:?}");

        let s = transition_smoothness(&atlas, &d, &d2, &p, 1e-3).unwrap();
        assert!(s.consistent(100.0, 1e-6), "{s:?}");
        assert!(psi_continuity(&atlas, &d, 5, 1e-4, 0).unwrap() < 10.0);
    }

    #[test]
    fn flat_circle_charts_shift_coordinates() {
        let space = BaseSpace::circle();
        let conn = ConnectionField::flat(space.clone(), 2, Scope::Leafwise);
        let atlas = Atlas::new(PathClassGroupoid::new(conn, circles(), 1e-2));
        let datum = |c: f64| {
            let alpha = BasePath::polyline(&space, vec![vec![c], vec![c + TAU]]).unwrap();
            let u = SimpleNeighborhood::new(&space, vec![c], vec![-0.5], vec![0.5]).unwrap();
            ChartDatum::new(&space, alpha, u.clone(), u).unwrap()
        };
        let (d, e) = (datum(1.0), datum(1.2));
        let p = ChartPoint { k: rotation2(0.4), x0: vec![0.3], y0: vec![], x1: vec![-0.1] };
        let q = atlas.transition(&d, &e, &p).unwrap();
        assert!(q.k.max_abs_diff(&p.k) <= 1e-15);
        assert!((q.x0[0] - 0.1).abs() < 1e-12 && (q.x1[0] + 0.3).abs() < 1e-12);
        // The canonical path of a point near the seam of `e` winds differently.
        let far = ChartPoint { k: rotation2(0.4), x0: vec![-0.45], y0: vec![], x1: vec![0.0] };
        assert!(atlas.transition(&d, &e, &far).is_err());
    }
}
