//! The pair groupoid of a finite set and the antipodal `Z/2` action on it.

use super::{ArrowSampler, GroupAction, Groupoid, GroupoidError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Pair groupoid `X × X ⇉ X` on finitely many labelled points; `(t, s)` is the arrow `s → t`.
#[derive(Clone, Debug)]
pub struct PairGroupoid {
    objects: Vec<i64>,
}

impl PairGroupoid {
    pub fn new(objects: Vec<i64>) -> Self {
        Self { objects }
    }

    pub fn objects(&self) -> &[i64] {
        &self.objects
    }

    /// All arrows, target-major.
    pub fn arrows(&self) -> Vec<(i64, i64)> {
        self.objects.iter().flat_map(|&t| self.objects.iter().map(move |&s| (t, s))).collect()
    }
}

impl Groupoid for PairGroupoid {
    type Object = i64;
    type Arrow = (i64, i64);

    fn source(&self, g: &(i64, i64)) -> i64 {
        g.1
    }

    fn target(&self, g: &(i64, i64)) -> i64 {
        g.0
    }

    fn unit(&self, x: &i64) -> (i64, i64) {
        (*x, *x)
    }

    fn compose(&self, g: &(i64, i64), h: &(i64, i64)) -> Result<(i64, i64)> {
        if g.1 != h.0 {
            return Err(GroupoidError::NotComposable { distance: 1.0 });
        }
        Ok((g.0, h.1))
    }

    fn inverse(&self, g: &(i64, i64)) -> Result<(i64, i64)> {
        Ok((g.1, g.0))
    }

    fn object_distance(&self, x: &i64, y: &i64) -> f64 {
        if x == y {
            0.0
        } else {
            1.0
        }
    }

    fn arrow_distance(&self, g: &(i64, i64), h: &(i64, i64)) -> f64 {
        if g == h {
            0.0
        } else {
            1.0
        }
    }
}

pub struct PairSampler;

impl ArrowSampler<PairGroupoid> for PairSampler {
    fn arrow(&self, g: &PairGroupoid, rng: &mut ChaCha8Rng) -> (i64, i64) {
        let pick = |rng: &mut ChaCha8Rng| g.objects[rng.random_range(0..g.objects.len())];
        (pick(rng), pick(rng))
    }

    fn arrow_from(&self, g: &PairGroupoid, source: &i64, rng: &mut ChaCha8Rng) -> Option<(i64, i64)> {
        g.objects.contains(source).then(|| (g.objects[rng.random_range(0..g.objects.len())], *source))
    }
}

/// `x · a = a x` for `a ∈ {1, −1}`; normal forms take the larger representative.
#[derive(Clone, Copy, Debug, Default)]
pub struct SignAction {
    /// Solve `x a = y` as `a = x / y` with the roles of the objects swapped.
    pub mutate_solve: bool,
}

impl GroupAction<PairGroupoid> for SignAction {
    type Element = i64;

    fn act_object(&self, x: &i64, a: &i64) -> i64 {
        x * a
    }

    fn act_arrow(&self, g: &(i64, i64), a: &i64) -> (i64, i64) {
        (g.0 * a, g.1 * a)
    }

    fn solve(&self, x: &i64, y: &i64) -> Result<i64> {
        if *x == 0 {
            return Err(GroupoidError::NotFree("0 is fixed by -1".into()));
        }
        if x.abs() != y.abs() {
            return Err(GroupoidError::NoSolution { distance: (x.abs() - y.abs()).abs() as f64 });
        }
        Ok(if self.mutate_solve { -(y / x) } else { y / x })
    }

    fn object_normal_form(&self, x: &i64) -> i64 {
        *[*x, -x].iter().max().expect("two elements")
    }

    fn arrow_normal_form(&self, g: &(i64, i64)) -> (i64, i64) {
        *[*g, (-g.0, -g.1)].iter().max().expect("two elements")
    }
}
