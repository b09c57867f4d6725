//! Quotient `G₁/K ⇉ G₀/K` by a free right action through automorphisms.

use super::{ArrowSampler, Groupoid, Result};
use rand_chacha::ChaCha8Rng;

/// Free right action of a group `K` on a groupoid, with a normal form per orbit.
pub trait GroupAction<G: Groupoid>: Sync {
    type Element: Clone + std::fmt::Debug + Send + Sync;

    fn act_object(&self, x: &G::Object, a: &Self::Element) -> G::Object;
    fn act_arrow(&self, g: &G::Arrow, a: &Self::Element) -> G::Arrow;
    /// The unique `a` with `x · a = y`.
    fn solve(&self, x: &G::Object, y: &G::Object) -> Result<Self::Element>;
    fn object_normal_form(&self, x: &G::Object) -> G::Object;
    fn arrow_normal_form(&self, g: &G::Arrow) -> G::Arrow;
}

/// Orbit `[g]`, stored as its normal-form representative.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientArrow<A> {
    pub representative: A,
}

#[derive(Clone, Debug)]
pub struct QuotientGroupoid<G, K> {
    upstairs: G,
    action: K,
}

impl<G: Groupoid, K: GroupAction<G>> QuotientGroupoid<G, K> {
    pub fn new(upstairs: G, action: K) -> Self {
        Self { upstairs, action }
    }

    pub fn upstairs(&self) -> &G {
        &self.upstairs
    }

    pub fn action(&self) -> &K {
        &self.action
    }

    /// The class of an upstairs arrow.
    pub fn class(&self, g: &G::Arrow) -> QuotientArrow<G::Arrow> {
        QuotientArrow { representative: self.action.arrow_normal_form(g) }
    }
}

impl<G: Groupoid, K: GroupAction<G>> Groupoid for QuotientGroupoid<G, K> {
    type Object = G::Object;
    type Arrow = QuotientArrow<G::Arrow>;

    fn source(&self, g: &Self::Arrow) -> G::Object {
        self.action.object_normal_form(&self.upstairs.source(&g.representative))
    }

    fn target(&self, g: &Self::Arrow) -> G::Object {
        self.action.object_normal_form(&self.upstairs.target(&g.representative))
    }

    fn unit(&self, x: &G::Object) -> Self::Arrow {
        self.class(&self.upstairs.unit(x))
    }

    /// `[g][h] = [g (h a)]` with `s(g) = t(h) a`.
    fn compose(&self, g: &Self::Arrow, h: &Self::Arrow) -> Result<Self::Arrow> {
        let (g, h) = (&g.representative, &h.representative);
        let a = self.action.solve(&self.upstairs.target(h), &self.upstairs.source(g))?;
        let ha = self.action.act_arrow(h, &a);
        Ok(self.class(&self.upstairs.compose(g, &ha)?))
    }

    fn inverse(&self, g: &Self::Arrow) -> Result<Self::Arrow> {
        Ok(self.class(&self.upstairs.inverse(&g.representative)?))
    }

    fn object_distance(&self, x: &G::Object, y: &G::Object) -> f64 {
        self.upstairs.object_distance(&self.action.object_normal_form(x), &self.action.object_normal_form(y))
    }

    fn arrow_distance(&self, g: &Self::Arrow, h: &Self::Arrow) -> f64 {
        self.upstairs.arrow_distance(
            &self.action.arrow_normal_form(&g.representative),
            &self.action.arrow_normal_form(&h.representative),
        )
    }
}

/// Samples classes of upstairs arrows.
pub struct QuotientSampler<S>(pub S);

impl<G, K, S> ArrowSampler<QuotientGroupoid<G, K>> for QuotientSampler<S>
where
    G: Groupoid,
    K: GroupAction<G>,
    S: ArrowSampler<G>,
{
    fn arrow(&self, q: &QuotientGroupoid<G, K>, rng: &mut ChaCha8Rng) -> QuotientArrow<G::Arrow> {
        q.class(&self.0.arrow(&q.upstairs, rng))
    }

    fn arrow_from(
        &self,
        q: &QuotientGroupoid<G, K>,
        source: &G::Object,
        rng: &mut ChaCha8Rng,
    ) -> Option<QuotientArrow<G::Arrow>> {
        self.0.arrow_from(&q.upstairs, source, rng).map(|g| q.class(&g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupoid::{axiom_suite, PairGroupoid, PairSampler, SignAction};
    use std::collections::HashSet;

    fn z2() -> QuotientGroupoid<PairGroupoid, SignAction> {
        QuotientGroupoid::new(PairGroupoid::new(vec![-2, -1, 1, 2]), SignAction::default())
    }

    #[test]
    fn antipodal_quotient_matches_enumeration() {
        let q = z2();
        let up = q.upstairs().clone();
        let arrows = up.arrows();
        assert_eq!(arrows.len(), 16);
        let classes: HashSet<(i64, i64)> = arrows.iter().map(|g| q.class(g).representative).collect();
        assert_eq!(classes.len(), 8);
        let objects: HashSet<i64> = up.objects().iter().map(|x| q.action().object_normal_form(x)).collect();
        assert_eq!(objects, HashSet::from([1, 2]));
        // Brute force: multiply every composable pair of representatives.
        let mut checked = 0;
        for g in &classes {
            for h in &classes {
                let gq = QuotientArrow { representative: *g };
                let hq = QuotientArrow { representative: *h };
                let mut products = HashSet::new();
                for g1 in arrows.iter().filter(|x| q.class(x).representative == *g) {
                    for h1 in arrows.iter().filter(|x| q.class(x).representative == *h) {
                        if let Ok(gh) = up.compose(g1, h1) {
                            products.insert(q.class(&gh).representative);
                        }
                    }
                }
                match q.compose(&gq, &hq) {
                    Ok(p) => {
                        assert_eq!(products, HashSet::from([p.representative]));
                        checked += 1;
                    }
                    Err(_) => assert!(products.is_empty()),
                }
            }
        }
        assert_eq!(checked, 32);
    }

    #[test]
    fn antipodal_quotient_axioms_and_mutation() {
        let report = axiom_suite(&z2(), &QuotientSampler(PairSampler), 200, 100, 5).unwrap();
        assert!(report.passed(0.0), "{report:?}");
        let broken = QuotientGroupoid::new(PairGroupoid::new(vec![-2, -1, 1, 2]), SignAction { mutate_solve: true });
        let report = axiom_suite(&broken, &QuotientSampler(PairSampler), 200, 100, 5).unwrap();
        assert!(report.max_defect() > 1e-3);
    }

    #[test]
    fn representative_independence() {
        let q = z2();
        let g = (2, -1);
        let h = (1, 2);
        let base = q.compose(&q.class(&g), &q.class(&h)).unwrap();
        for a0 in [1, -1] {
            for a1 in [1, -1] {
                let g1 = q.class(&q.action().act_arrow(&g, &a0));
                let h1 = q.class(&q.action().act_arrow(&h, &a1));
                assert_eq!(q.compose(&g1, &h1).unwrap(), base);
            }
        }
    }
}
