//! Finite point clouds in the total space: nearest-neighbour queries,
//! Hausdorff distance and grid-snapped merging.

use crate::base::BaseSpace;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Largest number of coordinates used as hash keys.
const HASHED_DIMS: usize = 4;

/// Point `(b, v)` of the total space, with `b` in canonical base coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalPoint {
    pub base: Vec<f64>,
    pub fiber: Vec<f64>,
}

impl TotalPoint {
    pub fn new(base: Vec<f64>, fiber: Vec<f64>) -> Self {
        Self { base, fiber }
    }

    pub fn canonical(&self, space: &BaseSpace) -> TotalPoint {
        Self { base: space.canonical(&self.base), fiber: self.fiber.clone() }
    }

    pub fn fiber_norm(&self) -> f64 {
        self.fiber.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn flat(&self) -> Vec<f64> {
        self.base.iter().chain(&self.fiber).copied().collect()
    }
}

/// Product distance: base distance on the quotient, Euclidean in the fiber.
pub fn distance(space: &BaseSpace, a: &TotalPoint, b: &TotalPoint) -> f64 {
    let db = space.distance(&a.base, &b.base);
    let df: f64 = a.fiber.iter().zip(&b.fiber).map(|(x, y)| (x - y) * (x - y)).sum();
    (db * db + df).sqrt()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Uniform grid over canonical coordinates, aware of the deck group of the base.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    space: BaseSpace,
    cell: f64,
    dims: Vec<usize>,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<Vec<f64>>,
    shifts: Vec<Vec<i64>>,
}

impl SpatialIndex {
    /// Empty index hashing the given flattened coordinates (base first, then fiber).
    pub fn new(space: &BaseSpace, cell: f64, dims: Vec<usize>) -> Self {
        let p = space.periodic_coordinates().len();
        let mut shifts = vec![vec![0i64; p]];
        let mut odometer = vec![-1i64; p];
        if p > 0 {
            loop {
                if odometer.iter().any(|&s| s != 0) {
                    shifts.push(odometer.clone());
                }
                let mut k = 0;
                while k < p {
                    odometer[k] += 1;
                    if odometer[k] <= 1 {
                        break;
                    }
                    odometer[k] = -1;
                    k += 1;
                }
                if k == p {
                    break;
                }
            }
        }
        Self { space: space.clone(), cell, dims, cells: HashMap::new(), points: Vec::new(), shifts }
    }

    /// Index over `points`, hashing the coordinates with the largest spread.
    pub fn build(space: &BaseSpace, cell: f64, points: &[TotalPoint]) -> Self {
        let flat: Vec<Vec<f64>> = points.iter().map(|p| p.canonical(space).flat()).collect();
        let d = flat.first().map_or(0, Vec::len);
        let mut spread: Vec<(usize, f64)> = (0..d)
            .map(|i| {
                let (lo, hi) =
                    flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])));
                (i, hi - lo)
            })
            .collect();
        spread.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut dims: Vec<usize> = spread.iter().take(HASHED_DIMS).filter(|(_, s)| *s > 0.0).map(|(i, _)| *i).collect();
        dims.sort_unstable();
        let mut index = Self::new(space, cell, dims);
        for p in flat {
            index.insert_flat(p);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        self.dims.iter().map(|&i| (p[i] / self.cell).floor() as i64).collect()
    }

    fn insert_flat(&mut self, p: Vec<f64>) {
        let key = self.key(&p);
        self.cells.entry(key).or_default().push(self.points.len());
        self.points.push(p);
    }

    pub fn insert(&mut self, point: &TotalPoint) {
        self.insert_flat(point.canonical(&self.space).flat());
    }

    fn images(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let nb = self.space.dim();
        self.shifts
            .iter()
            .map(|s| {
                let mut q = self.space.deck(&p[..nb], s);
                q.extend_from_slice(&p[nb..]);
                q
            })
            .collect()
    }

    fn for_ring(&self, center: &[i64], m: i64, mut f: impl FnMut(&[usize])) {
        let k = center.len();
        if k == 0 {
            if m == 0 {
                if let Some(ids) = self.cells.get(&Vec::new()) {
                    f(ids);
                }
            }
            return;
        }
        let mut offset = vec![-m; k];
        loop {
            if offset.iter().any(|o| o.abs() == m) {
                let key: Vec<i64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
                if let Some(ids) = self.cells.get(&key) {
                    f(ids);
                }
            }
            let mut i = 0;
            while i < k {
                offset[i] += 1;
                if offset[i] <= m {
                    break;
                }
                offset[i] = -m;
                i += 1;
            }
            if i == k {
                return;
            }
        }
    }

    fn nearest_flat(&self, q: &[f64]) -> f64 {
        if self.points.is_empty() {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        let k = self.dims.len() as i32;
        for image in self.images(q) {
            let center = self.key(&image);
            let mut visited = 0usize;
            let mut cells = 0usize;
            let mut m = 0i64;
            loop {
                // Points in ring m are at least (m - 1) cells away in the hashed coordinates.
                if best <= (m - 1).max(0) as f64 * self.cell {
                    break;
                }
                let ring_cells = (2 * m + 1).pow(k as u32) - if m > 0 { (2 * m - 1).pow(k as u32) } else { 0 };
                if visited >= self.points.len() {
                    break;
                }
                cells += ring_cells as usize;
                if cells > self.points.len() {
                    // Sparse far field: finish by brute force.
                    for p in &self.points {
                        best = best.min(euclid(&image, p));
                    }
                    break;
                }
                self.for_ring(&center, m, |ids| {
                    visited += ids.len();
                    for &i in ids {
                        best = best.min(euclid(&image, &self.points[i]));
                    }
                });
                m += 1;
            }
        }
        best
    }

    /// Distance from `point` to the closest indexed point.
    pub fn nearest_distance(&self, point: &TotalPoint) -> f64 {
        self.nearest_flat(&point.canonical(&self.space).flat())
    }

    /// Whether some indexed point lies within `radius` of `point`.
    pub fn any_within(&self, point: &TotalPoint, radius: f64) -> bool {
        let q = point.canonical(&self.space).flat();
        let reach = (radius / self.cell).ceil() as i64;
        for image in self.images(&q) {
            let center = self.key(&image);
            for m in 0..=reach {
                let mut hit = false;
                self.for_ring(&center, m, |ids| {
                    hit = hit || ids.iter().any(|&i| euclid(&image, &self.points[i]) <= radius);
                });
                if hit {
                    return true;
                }
            }
        }
        false
    }
}

/// Largest distance from a point of `a` to the set `b`.
pub fn directed_hausdorff(space: &BaseSpace, a: &[TotalPoint], b: &[TotalPoint], cell: f64) -> f64 {
    use rayon::prelude::*;
    let index = SpatialIndex::build(space, cell, b);
    a.par_iter().map(|p| index.nearest_distance(p)).reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two finite samples.
pub fn hausdorff(space: &BaseSpace, a: &[TotalPoint], b: &[TotalPoint], cell: f64) -> f64 {
    directed_hausdorff(space, a, b, cell).max(directed_hausdorff(space, b, a, cell))
}

/// Brute-force symmetric Hausdorff distance, used as a cross-check.
pub fn hausdorff_brute(space: &BaseSpace, a: &[TotalPoint], b: &[TotalPoint]) -> f64 {
    let directed = |x: &[TotalPoint], y: &[TotalPoint]| {
        x.iter().map(|p| y.iter().map(|q| distance(space, p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Set of points deduplicated on a grid of the given resolution.
///
/// The first point inserted into a grid cell is kept, so the result only
/// depends on the insertion order.
#[derive(Clone, Debug)]
pub struct SnapSet {
    space: BaseSpace,
    resolution: f64,
    keys: HashSet<Vec<i64>>,
    points: Vec<TotalPoint>,
}

impl SnapSet {
    pub fn new(space: &BaseSpace, resolution: f64) -> Self {
        Self { space: space.clone(), resolution, keys: HashSet::new(), points: Vec::new() }
    }

    fn key(&self, p: &TotalPoint) -> Vec<i64> {
        p.flat().iter().map(|x| (x / self.resolution).round() as i64).collect()
    }

    /// Inserts the canonical form of `p`; returns whether its cell was new.
    pub fn insert(&mut self, p: TotalPoint) -> bool {
        let p = p.canonical(&self.space);
        let fresh = self.keys.insert(self.key(&p));
        if fresh {
            self.points.push(p);
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[TotalPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<TotalPoint> {
        self.points
    }
}

/// Outcome of a coverage-pruned breadth-first expansion.
#[derive(Clone, Debug)]
pub struct Coverage {
    pub points: Vec<TotalPoint>,
    /// Whether the point budget ran out while the frontier was nonempty.
    pub partial: bool,
    pub layers: usize,
}

/// Breadth-first closure of `seed` under `moves`, keeping a candidate only if no
/// accepted point lies within `radius`.
///
/// Moves of a whole layer are evaluated in parallel and then accepted in
/// order, so the result does not depend on the thread count.
pub fn coverage_bfs<F>(space: &BaseSpace, seed: TotalPoint, radius: f64, max_points: usize, moves: F) -> Coverage
where
    F: Fn(&TotalPoint) -> Vec<TotalPoint> + Sync,
{
    use rayon::prelude::*;
    let seed = seed.canonical(space);
    let nb = space.dim();
    let d = nb + seed.fiber.len();
    let dims: Vec<usize> = (0..nb).filter(|&i| space.is_leafwise(i)).chain(nb..d).take(HASHED_DIMS).collect();
    let mut index = SpatialIndex::new(space, radius, dims);
    index.insert(&seed);
    let mut points = vec![seed.clone()];
    let mut frontier = vec![seed];
    let mut layers = 0;
    while !frontier.is_empty() {
        if points.len() >= max_points {
            return Coverage { points, partial: true, layers };
        }
        let candidates: Vec<Vec<TotalPoint>> = frontier.par_iter().map(&moves).collect();
        let mut next = Vec::new();
        'outer: for c in candidates.into_iter().flatten() {
            let c = c.canonical(space);
            if index.any_within(&c, radius) {
                continue;
            }
            index.insert(&c);
            points.push(c.clone());
            next.push(c);
            if points.len() >= max_points {
                break 'outer;
            }
        }
        frontier = next;
        layers += 1;
    }
    Coverage { points, partial: false, layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<TotalPoint> {
        (0..n)
            .map(|_| {
                TotalPoint::new(
                    vec![rng.random_range(0.0..TAU)],
                    vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                )
            })
            .collect()
    }

    #[test]
    fn indexed_hausdorff_matches_brute_force() {
        let space = BaseSpace::circle();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for cell in [0.05, 0.3, 2.0] {
            let a = random_cloud(&mut rng, 200);
            let b = random_cloud(&mut rng, 150);
            let fast = hausdorff(&space, &a, &b, cell);
            let slow = hausdorff_brute(&space, &a, &b);
            assert!((fast - slow).abs() < 1e-14, "{fast} vs {slow}");
        }
    }

    #[test]
    fn seam_neighbours_are_found() {
        let space = BaseSpace::circle();
        let a = vec![TotalPoint::new(vec![0.001], vec![0.0])];
        let b = vec![TotalPoint::new(vec![TAU - 0.001], vec![0.0])];
        assert!(hausdorff(&space, &a, &b, 0.1) < 0.0021);
        let index = SpatialIndex::build(&space, 0.1, &b);
        assert!(index.any_within(&a[0], 0.003));
        assert!(!index.any_within(&a[0], 0.001));
    }

    #[test]
    fn snapping_dedupes_in_insertion_order() {
        let space = BaseSpace::circle();
        let mut set = SnapSet::new(&space, 0.1);
        assert!(set.insert(TotalPoint::new(vec![0.5], vec![1.0])));
        assert!(!set.insert(TotalPoint::new(vec![0.51], vec![1.01])));
        assert!(!set.insert(TotalPoint::new(vec![0.5 + TAU], vec![1.0])));
        assert!(set.insert(TotalPoint::new(vec![0.7], vec![1.0])));
        assert_eq!(set.points()[0].base, vec![0.5]);
        assert_eq!(set.len(), 2);
    }
}
