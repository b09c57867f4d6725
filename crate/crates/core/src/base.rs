//! Base manifolds with a coordinate-aligned regular foliation, and leafwise paths.
//!
//! Points are stored in *lifted* coordinates: the universal-cover coordinates
//! of the periodic directions. [`BaseSpace::canonical`] folds a lifted point
//! into the fundamental domain. Homotopy classes of paths inside a leaf are
//! tracked as integer sheet differences ([`HomotopyKey`]), which is exact for
//! the supported bases because every leaf has a free abelian (or trivial)
//! fundamental group.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Maximum transverse velocity component still counted as leafwise.
pub const LEAFWISE_TOL: f64 = 1e-10;
/// Distance below which two base points are the same point.
pub const POINT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaseError {
    #[error("point has {got} coordinates, base has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("paths are not composable: end of first traversed path is {distance:e} away from the start of the next")]
    NotComposable { distance: f64 },
    #[error("path needs at least two knots")]
    TooShort,
    #[error("invalid base description: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKind {
    /// Angle coordinate `x0 ∈ [0, 2π)`, foliated by the single leaf.
    Circle,
    /// Angles `(x0, x1)`; `leafwise[i]` marks the plaque directions.
    Torus2 { leafwise: [bool; 2] },
    /// Box `[lower, upper]` in `R^l × R^k`; the first `plaque_dim` coordinates are leafwise.
    ProductBox { plaque_dim: usize, slice_dim: usize, lower: Vec<f64>, upper: Vec<f64> },
    /// `([0,1] × R²) / (1, y) ~ (0, R(rotation)·y)`, foliated by the `x0` direction.
    MappingTorus { rotation: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseSpace {
    kind: BaseKind,
    leafwise: Vec<bool>,
    periods: Vec<Option<f64>>,
}

impl BaseSpace {
    pub fn new(kind: BaseKind) -> Result<Self, BaseError> {
        let (leafwise, periods) = match &kind {
            BaseKind::Circle => (vec![true], vec![Some(TAU)]),
            BaseKind::Torus2 { leafwise } => (leafwise.to_vec(), vec![Some(TAU); 2]),
            BaseKind::ProductBox { plaque_dim, slice_dim, lower, upper } => {
                let d = plaque_dim + slice_dim;
                if d == 0 || lower.len() != d || upper.len() != d {
                    return Err(BaseError::Invalid(format!("box bounds must have {d} > 0 entries")));
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(BaseError::Invalid("box must be nonempty".into()));
                }
                if lower.iter().zip(upper).any(|(a, b)| *a > 0.0 || *b < 0.0) {
                    return Err(BaseError::Invalid("box must contain the marked point 0".into()));
                }
                let mut mask = vec![true; *plaque_dim];
                mask.extend(std::iter::repeat_n(false, *slice_dim));
                (mask, vec![None; d])
            }
            BaseKind::MappingTorus { rotation } => {
                if !rotation.is_finite() {
                    return Err(BaseError::Invalid("rotation must be finite".into()));
                }
                (vec![true, false, false], vec![Some(1.0), None, None])
            }
        };
        Ok(Self { kind, leafwise, periods })
    }

    pub fn circle() -> Self {
        Self::new(BaseKind::Circle).expect("valid")
    }

    pub fn torus(leafwise: [bool; 2]) -> Self {
        Self::new(BaseKind::Torus2 { leafwise }).expect("valid")
    }

    pub fn kind(&self) -> &BaseKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.leafwise.len()
    }

    /// Dimension of the leaves of the base foliation.
    pub fn leaf_dim(&self) -> usize {
        self.leafwise.iter().filter(|&&b| b).count()
    }

    pub fn is_leafwise(&self, coordinate: usize) -> bool {
        self.leafwise[coordinate]
    }

    pub fn leafwise_mask(&self) -> &[bool] {
        &self.leafwise
    }

    pub fn plaque_coordinates(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.leafwise[i]).collect()
    }

    pub fn slice_coordinates(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.leafwise[i]).collect()
    }

    pub fn period(&self, coordinate: usize) -> Option<f64> {
        self.periods[coordinate]
    }

    /// Indices of periodic coordinates; these index the entries of a [`HomotopyKey`].
    pub fn periodic_coordinates(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.periods[i].is_some()).collect()
    }

    pub fn check_point(&self, p: &[f64]) -> Result<(), BaseError> {
        if p.len() != self.dim() {
            return Err(BaseError::Dimension { expected: self.dim(), got: p.len() });
        }
        Ok(())
    }

    /// Sheet index of a lifted point along each periodic coordinate.
    pub fn sheet(&self, p: &[f64]) -> Vec<i64> {
        self.periodic_coordinates().iter().map(|&i| (p[i] / self.periods[i].unwrap()).floor() as i64).collect()
    }

    /// Folds a lifted point into the fundamental domain.
    pub fn canonical(&self, p: &[f64]) -> Vec<f64> {
        match &self.kind {
            BaseKind::MappingTorus { rotation } => {
                let m = p[0].floor();
                let (y1, y2) = rotate(p[1], p[2], rotation * m);
                vec![p[0] - m, y1, y2]
            }
            _ => p
                .iter()
                .zip(&self.periods)
                .map(|(&x, period)| match period {
                    Some(t) => x.rem_euclid(*t),
                    None => x,
                })
                .collect(),
        }
    }

    /// Pushes a lifted velocity at `p` to canonical coordinates.
    pub fn canonical_velocity(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.kind {
            BaseKind::MappingTorus { rotation } => {
                let m = p[0].floor();
                let (w1, w2) = rotate(v[1], v[2], rotation * m);
                vec![v[0], w1, w2]
            }
            _ => v.to_vec(),
        }
    }

    /// Applies the deck transformation with the given sheet shift.
    pub fn deck(&self, p: &[f64], shift: &[i64]) -> Vec<f64> {
        let mut q = p.to_vec();
        match &self.kind {
            BaseKind::MappingTorus { rotation } => {
                let m = shift[0] as f64;
                q[0] += m;
                let (y1, y2) = rotate(p[1], p[2], -rotation * m);
                q[1] = y1;
                q[2] = y2;
            }
            _ => {
                for (k, &i) in self.periodic_coordinates().iter().enumerate() {
                    q[i] += shift[k] as f64 * self.periods[i].unwrap();
                }
            }
        }
        q
    }

    /// Deck shift taking the lift `from` to the lift `to` of the same base point.
    pub fn deck_shift(&self, from: &[f64], to: &[f64]) -> Vec<i64> {
        self.periodic_coordinates()
            .iter()
            .map(|&i| ((to[i] - from[i]) / self.periods[i].unwrap()).round() as i64)
            .collect()
    }

    /// Distance between the projections of two (lifted or canonical) points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let a = self.canonical(a);
        let b = self.canonical(b);
        let p = self.periodic_coordinates().len();
        let mut best = f64::INFINITY;
        let mut shift = vec![-1i64; p];
        loop {
            let shifted = self.deck(&b, &shift);
            best = best.min(euclid(&a, &shifted));
            // Odometer over {-1, 0, 1}^p.
            let mut k = 0;
            while k < p {
                shift[k] += 1;
                if shift[k] <= 1 {
                    break;
                }
                shift[k] = -1;
                k += 1;
            }
            if k == p {
                return best;
            }
        }
    }

    pub fn same_point(&self, a: &[f64], b: &[f64]) -> bool {
        self.distance(a, b) <= POINT_TOL
    }

    /// Lower and upper corners of the fundamental domain used for sampling.
    pub fn sampling_domain(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            BaseKind::Circle => (vec![0.0], vec![TAU]),
            BaseKind::Torus2 { .. } => (vec![0.0; 2], vec![TAU; 2]),
            BaseKind::ProductBox { lower, upper, .. } => (lower.clone(), upper.clone()),
            BaseKind::MappingTorus { .. } => (vec![0.0, -1.0, -1.0], vec![1.0, 1.0, 1.0]),
        }
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.sampling_domain();
        lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect()
    }

    /// Whether a lifted displacement only moves plaque coordinates.
    pub fn is_leafwise_displacement(&self, d: &[f64]) -> bool {
        let scale = d.iter().map(|x| x.abs()).fold(1.0, f64::max);
        d.iter().zip(&self.leafwise).all(|(x, &leaf)| leaf || x.abs() <= LEAFWISE_TOL * scale)
    }

    /// Leafwise loops through `b` along each periodic plaque coordinate that closes up.
    pub fn generator_loops(&self, b: &[f64]) -> Vec<BasePath> {
        self.periodic_coordinates()
            .into_iter()
            .filter(|&i| self.leafwise[i])
            .filter_map(|i| {
                let mut end = b.to_vec();
                end[i] += self.periods[i].unwrap();
                self.same_point(b, &end).then(|| BasePath::polyline(self, vec![b.to_vec(), end]).expect("two knots"))
            })
            .collect()
    }
}

fn rotate(y1: f64, y2: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * y1 - s * y2, s * y1 + c * y2)
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Winding vector of a path: sheet difference along each periodic coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HomotopyKey(pub Vec<i64>);

impl HomotopyKey {
    pub fn zero(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn add(&self, other: &HomotopyKey) -> HomotopyKey {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn neg(&self) -> HomotopyKey {
        Self(self.0.iter().map(|a| -a).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathKnot {
    pub t: f64,
    pub point: Vec<f64>,
}

/// Piecewise-linear path in lifted coordinates, parameterized proportionally to length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePath {
    knots: Vec<PathKnot>,
    leafwise: bool,
    key: HomotopyKey,
}

impl BasePath {
    pub fn constant(space: &BaseSpace, point: Vec<f64>) -> Self {
        Self::polyline(space, vec![point.clone(), point]).expect("two knots")
    }

    /// Path through the given lifted points, joined by straight segments.
    pub fn polyline(space: &BaseSpace, points: Vec<Vec<f64>>) -> Result<Self, BaseError> {
        if points.len() < 2 {
            return Err(BaseError::TooShort);
        }
        for p in &points {
            space.check_point(p)?;
        }
        let lengths: Vec<f64> = points.windows(2).map(|w| euclid(&w[0], &w[1])).collect();
        let total: f64 = lengths.iter().sum();
        let mut knots = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        let last = points.len() - 1;
        for (i, point) in points.into_iter().enumerate() {
            let t = if i == 0 {
                0.0
            } else if i == last {
                1.0
            } else if total > 0.0 {
                acc / total
            } else {
                i as f64 / last as f64
            };
            if i < last {
                acc += lengths[i];
            }
            knots.push(PathKnot { t, point });
        }
        // Zero-length knots would break strict monotonicity; spread them evenly.
        for i in 1..knots.len() {
            if knots[i].t <= knots[i - 1].t {
                knots[i].t = knots[i - 1].t + 1e-12;
            }
        }
        knots.last_mut().unwrap().t = 1.0;
        let leafwise = knots.windows(2).all(|w| {
            let d: Vec<f64> = w[1].point.iter().zip(&w[0].point).map(|(a, b)| a - b).collect();
            space.is_leafwise_displacement(&d)
        });
        let start = space.sheet(&knots[0].point);
        let end = space.sheet(&knots[last].point);
        let key = HomotopyKey(end.iter().zip(&start).map(|(a, b)| a - b).collect());
        Ok(Self { knots, leafwise, key })
    }

    pub fn knots(&self) -> &[PathKnot] {
        &self.knots
    }

    pub fn start(&self) -> &[f64] {
        &self.knots[0].point
    }

    pub fn end(&self) -> &[f64] {
        &self.knots[self.knots.len() - 1].point
    }

    pub fn is_leafwise(&self) -> bool {
        self.leafwise
    }

    pub fn homotopy_key(&self) -> &HomotopyKey {
        &self.key
    }

    pub fn is_constant(&self) -> bool {
        self.knots.windows(2).all(|w| w[0].point == w[1].point)
    }

    /// Straight segments `(from, to)` in lifted coordinates, skipping zero-length ones.
    pub fn segments(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.knots
            .windows(2)
            .filter(|w| w[0].point != w[1].point)
            .map(|w| (w[0].point.as_slice(), w[1].point.as_slice()))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| euclid(a, b)).sum()
    }

    /// `(t, point, velocity)` at each knot; the velocity is that of the outgoing segment.
    pub fn samples(&self) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        let n = self.knots.len();
        (0..n)
            .map(|i| {
                let j = if i + 1 < n { i } else { i - 1 };
                let (a, b) = (&self.knots[j], &self.knots[j + 1]);
                let dt = b.t - a.t;
                let v = b.point.iter().zip(&a.point).map(|(p, q)| (p - q) / dt).collect();
                (self.knots[i].t, self.knots[i].point.clone(), v)
            })
            .collect()
    }

    /// Point at parameter `t ∈ [0, 1]`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, 1.0);
        let i = self.knots.partition_point(|k| k.t <= t).clamp(1, self.knots.len() - 1);
        let (a, b) = (&self.knots[i - 1], &self.knots[i]);
        let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        a.point.iter().zip(&b.point).map(|(p, q)| p + s * (q - p)).collect()
    }

    /// Restriction to `[0, t]`, reparameterized to `[0, 1]`.
    pub fn restricted(&self, space: &BaseSpace, t: f64) -> BasePath {
        let mut points: Vec<Vec<f64>> = self.knots.iter().take_while(|k| k.t < t).map(|k| k.point.clone()).collect();
        points.push(self.at(t));
        if points.len() < 2 {
            points.insert(0, self.start().to_vec());
        }
        Self::polyline(space, points).expect("at least two knots")
    }

    /// The reversed path `α⁻¹(t) = α(1 − t)`.
    pub fn reverse(&self) -> BasePath {
        let knots = self.knots.iter().rev().map(|k| PathKnot { t: 1.0 - k.t, point: k.point.clone() }).collect();
        Self { knots, leafwise: self.leafwise, key: self.key.neg() }
    }

    /// `self * first`: traverse `first`, then `self` (read right to left).
    pub fn after(&self, space: &BaseSpace, first: &BasePath) -> Result<BasePath, BaseError> {
        let distance = space.distance(first.end(), self.start());
        if distance > POINT_TOL {
            return Err(BaseError::NotComposable { distance });
        }
        let shift = space.deck_shift(self.start(), first.end());
        let mut points: Vec<Vec<f64>> = first.knots.iter().map(|k| k.point.clone()).collect();
        points.extend(self.knots.iter().skip(1).map(|k| space.deck(&k.point, &shift)));
        Self::polyline(space, points)
    }

    /// Same path moved to another lift of its start point.
    pub fn translated(&self, space: &BaseSpace, shift: &[i64]) -> BasePath {
        let points = self.knots.iter().map(|k| space.deck(&k.point, shift)).collect();
        Self::polyline(space, points).expect("same knots")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_and_sheets_on_circle() {
        let s = BaseSpace::circle();
        assert!((s.canonical(&[TAU + 0.5])[0] - 0.5).abs() < 1e-15);
        assert!((s.canonical(&[-0.5])[0] - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(s.sheet(&[TAU + 0.5]), vec![1]);
        assert!(s.distance(&[0.01], &[TAU - 0.01]) < 0.0200001);
    }

    #[test]
    fn loop_keys_count_windings() {
        let s = BaseSpace::circle();
        let once = BasePath::polyline(&s, vec![vec![0.3], vec![0.3 + TAU]]).unwrap();
        assert_eq!(once.homotopy_key(), &HomotopyKey(vec![1]));
        let twice = once.after(&s, &once).unwrap();
        assert_eq!(twice.homotopy_key(), &HomotopyKey(vec![2]));
        assert_eq!(twice.reverse().homotopy_key(), &HomotopyKey(vec![-2]));
        assert!((twice.end()[0] - (0.3 + 2.0 * TAU)).abs() < 1e-12);
    }

    #[test]
    fn concatenation_requires_matching_endpoints() {
        let s = BaseSpace::circle();
        let a = BasePath::polyline(&s, vec![vec![0.0], vec![1.0]]).unwrap();
        let b = BasePath::polyline(&s, vec![vec![2.0], vec![3.0]]).unwrap();
        assert!(matches!(b.after(&s, &a), Err(BaseError::NotComposable { .. })));
        // Endpoint equal modulo 2π is fine.
        let c = BasePath::polyline(&s, vec![vec![1.0 + TAU], vec![2.0 + TAU]]).unwrap();
        let ca = c.after(&s, &a).unwrap();
        assert!((ca.end()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn leafwise_flag_and_samples() {
        let s = BaseSpace::torus([true, false]);
        let along = BasePath::polyline(&s, vec![vec![0.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let across = BasePath::polyline(&s, vec![vec![0.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(along.is_leafwise());
        assert!(!across.is_leafwise());
        let samples = along.samples();
        assert_eq!(samples.first().unwrap().0, 0.0);
        assert_eq!(samples.last().unwrap().0, 1.0);
        assert!((samples[0].2[0] - 2.0).abs() < 1e-15 && samples[0].2[1] == 0.0);
    }

    #[test]
    fn mapping_torus_monodromy() {
        let s = BaseSpace::new(BaseKind::MappingTorus { rotation: 0.7 }).unwrap();
        let c = s.canonical(&[1.25, 1.0, 0.0]);
        assert!((c[0] - 0.25).abs() < 1e-15);
        assert!((c[1] - 0.7f64.cos()).abs() < 1e-15 && (c[2] - 0.7f64.sin()).abs() < 1e-15);
        let shifted = s.deck(&[0.25, 0.3, -0.2], &[1]);
        assert!(s.same_point(&shifted, &[0.25, 0.3, -0.2]));
        // The central leaf y = 0 closes after one circuit; others do not.
        assert_eq!(s.generator_loops(&[0.1, 0.0, 0.0]).len(), 1);
        assert!(s.generator_loops(&[0.1, 0.5, 0.0]).is_empty());
    }

    #[test]
    fn restriction_and_evaluation() {
        let s = BaseSpace::circle();
        let p = BasePath::polyline(&s, vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert!((p.at(0.5)[0] - 1.5).abs() < 1e-15);
        let r = p.restricted(&s, 0.5);
        assert!((r.end()[0] - 1.5).abs() < 1e-15);
        assert_eq!(r.knots().len(), 3);
    }

    #[test]
    fn box_validation() {
        let bad = BaseKind::ProductBox { plaque_dim: 1, slice_dim: 1, lower: vec![1.0, -1.0], upper: vec![2.0, 1.0] };
        assert!(BaseSpace::new(bad).is_err());
        let ok = BaseKind::ProductBox { plaque_dim: 1, slice_dim: 1, lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] };
        let s = BaseSpace::new(ok).unwrap();
        assert_eq!(s.leaf_dim(), 1);
        assert!(s.periodic_coordinates().is_empty());
    }
}
