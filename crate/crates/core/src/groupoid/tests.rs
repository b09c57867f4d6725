use super::*;
use crate::base::{BaseKind, BasePath, BaseSpace};
use crate::bundle::{ConnectionField, Scope};
use crate::cloud::hausdorff;
use crate::expr::{Expr, VarScope};
use crate::foliation::{leaf_sample, Budget, FiberFoliation, GroupClosureSpec, Invariant, LeafKind, SampleSpec};
use crate::lie::{exp_skew, j2, rotation2, LieSubalgebra, OrthogonalElement, SkewElement};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI, TAU};

fn circles() -> FiberFoliation {
    let algebra = LieSubalgebra::new(2, vec![j2()]).unwrap();
    let r2 = Invariant::new("r2", Expr::parse("v0*v0 + v1*v1", VarScope { base: 0, fiber: 2 }).unwrap());
    FiberFoliation::new(algebra.clone(), vec![], vec![r2], GroupClosureSpec { algebra, rational: vec![] }).unwrap()
}

fn sphere_fibers() -> FiberFoliation {
    let gens: Vec<SkewElement> =
        (0..3).flat_map(|i| (i + 1..3).map(move |j| SkewElement::elementary(3, i, j))).collect();
    let algebra = LieSubalgebra::new(3, gens).unwrap();
    let r2 = Invariant::new("r2", Expr::parse("v0*v0 + v1*v1 + v2*v2", VarScope { base: 0, fiber: 3 }).unwrap());
    FiberFoliation::new(algebra.clone(), vec![], vec![r2], GroupClosureSpec { algebra, rational: vec![] }).unwrap()
}

fn circle_classes(c: f64) -> PathClassGroupoid {
    let conn = ConnectionField::constant(BaseSpace::circle(), Scope::Leafwise, vec![j2().scale(c)]).unwrap();
    PathClassGroupoid::new(conn, circles(), 1e-2)
}

/// Torus with non-commuting so(3) coefficients, so conjugation matters.
fn torus_so3_classes() -> PathClassGroupoid {
    let a0 = SkewElement::elementary(3, 0, 1).scale(0.4);
    let a1 = SkewElement::elementary(3, 1, 2).scale(0.7);
    let conn = ConnectionField::constant(BaseSpace::torus([true, true]), Scope::Leafwise, vec![a0, a1]).unwrap();
    PathClassGroupoid::new(conn, sphere_fibers(), 1e-2)
}

#[test]
fn pair_groupoid_is_exact() {
    let g = PairGroupoid::new((0..5).collect());
    let report = axiom_suite(&g, &PairSampler, 1000, 300, 1).unwrap();
    assert_eq!(report.max_defect(), 0.0);
    assert!(report.passed(0.0));
    let orbit = orbit(&g, &2, |x| g.objects().iter().map(|&t| (t, *x)).collect(), 100);
    assert_eq!(orbit.objects.len(), 5);
    assert!(!orbit.partial);
    let cut = super::orbit(&g, &2, |x| g.objects().iter().map(|&t| (t, *x)).collect(), 3);
    assert!(cut.partial);
}

#[test]
fn sampler_without_composable_arrows_is_diagnosed() {
    struct Stuck;
    impl ArrowSampler<PairGroupoid> for Stuck {
        fn arrow(&self, _: &PairGroupoid, _: &mut ChaCha8Rng) -> (i64, i64) {
            (0, 1)
        }
        fn arrow_from(&self, _: &PairGroupoid, _: &i64, _: &mut ChaCha8Rng) -> Option<(i64, i64)> {
            None
        }
    }
    let g = PairGroupoid::new(vec![0, 1]);
    assert!(matches!(axiom_suite(&g, &Stuck, 10, 0, 0), Err(GroupoidError::Sampler(_))));
}

fn point_groupoid() -> BundleOfGroups {
    let space =
        BaseSpace::new(BaseKind::ProductBox { plaque_dim: 0, slice_dim: 1, lower: vec![-1.0], upper: vec![1.0] })
            .unwrap();
    BundleOfGroups::new(space, circles())
}

#[test]
fn rotation_transformation_groupoid_over_a_point() {
    let bog = point_groupoid();
    let space = bog.space().clone();
    let t = TransformationGroupoid::new(bog, FiberRepresentation, space);
    let arrow = |theta: f64, e: &TotalPoint| {
        let g = BundleOfGroupsArrow { base: vec![0.0], element: rotation2(theta) };
        t.arrow(g, e.clone()).unwrap()
    };
    let e = TotalPoint::new(vec![0.0], vec![1.0, 0.0]);
    let h = arrow(FRAC_PI_6, &e);
    let g = arrow(FRAC_PI_3, h.target_point());
    let gh = t.compose(&g, &h).unwrap();
    assert!(gh.g.element.max_abs_diff(&rotation2(FRAC_PI_2)) <= 1e-15);
    assert_eq!(gh.e, e);
    let unit = t.unit(&e);
    assert_eq!(t.compose(&unit, &unit).unwrap(), unit);
    assert!(matches!(t.compose(&h, &h), Err(GroupoidError::NotComposable { .. })));

    let report = axiom_suite(&t, &TransformationSampler(BundleOfGroupsSampler), 1000, 300, 2).unwrap();
    assert!(report.passed(1e-12), "{report:?}");
}

#[test]
fn bundle_of_groups_orbits_stay_in_the_fiber() {
    let bog = BundleOfGroups::new(BaseSpace::circle(), circles());
    let report = axiom_suite(&bog, &BundleOfGroupsSampler, 1000, 300, 3).unwrap();
    assert!(report.passed(1e-12), "{report:?}");
    let space = bog.space().clone();
    let t = TransformationGroupoid::new(bog.clone(), FiberRepresentation, space.clone());
    let e = TotalPoint::new(vec![1.0], vec![0.6, 0.8]);
    let tau = 0.1;
    let gens = |p: &TotalPoint| -> Vec<TransformationArrow<BundleOfGroupsArrow>> {
        [tau, -tau]
            .iter()
            .map(|s| {
                let g = BundleOfGroupsArrow { base: p.base.clone(), element: exp_skew(&j2().scale(*s)) };
                t.arrow(g, p.clone()).unwrap()
            })
            .collect()
    };
    let orbit = orbit_net(&t, &space, &e, gens, 0.075, 10_000);
    assert!(!orbit.partial);
    assert!(orbit.objects.len() > 40);
    assert!(orbit.objects.iter().all(|p| p.base == e.base && (p.fiber_norm() - 1.0).abs() < 1e-12));
}

#[test]
fn representation_laws() {
    let bog = point_groupoid();
    let r = representation_check(&bog, &FiberRepresentation, &BundleOfGroupsSampler, 200, 1);
    assert!(r.passed(1e-13), "{r:?}");

    struct Identity;
    impl Representation<BundleOfGroups> for Identity {
        fn fiber_dim(&self, _: &BundleOfGroups) -> usize {
            2
        }
        fn projection(&self, e: &TotalPoint) -> Vec<f64> {
            e.base.clone()
        }
        fn point(&self, x: &Vec<f64>, v: Vec<f64>) -> TotalPoint {
            TotalPoint::new(x.clone(), v)
        }
        fn act(&self, _: &BundleOfGroups, _: &BundleOfGroupsArrow, e: &TotalPoint) -> Result<TotalPoint> {
            Ok(e.clone())
        }
    }
    let r = representation_check(&bog, &Identity, &BundleOfGroupsSampler, 50, 1);
    assert_eq!(r.max_defect(), 0.0);

    struct Bent;
    impl Representation<BundleOfGroups> for Bent {
        fn fiber_dim(&self, _: &BundleOfGroups) -> usize {
            2
        }
        fn projection(&self, e: &TotalPoint) -> Vec<f64> {
            e.base.clone()
        }
        fn point(&self, x: &Vec<f64>, v: Vec<f64>) -> TotalPoint {
            TotalPoint::new(x.clone(), v)
        }
        fn act(&self, _: &BundleOfGroups, g: &BundleOfGroupsArrow, e: &TotalPoint) -> Result<TotalPoint> {
            let mut w = g.element.apply(&e.fiber);
            w[0] += 0.1 * e.fiber[1] * e.fiber[1];
            Ok(TotalPoint::new(e.base.clone(), w))
        }
    }
    let r = representation_check(&bog, &Bent, &BundleOfGroupsSampler, 50, 1);
    assert!(r.linearity > 1e-3);
}

#[test]
fn pathclass_examples() {
    let g = circle_classes(0.25);
    let space = g.space().clone();
    // Constant paths multiply the group elements.
    let p = vec![0.5];
    let a = g.arrow(BasePath::constant(&space, p.clone()), rotation2(0.3)).unwrap();
    let b = g.arrow(BasePath::constant(&space, p.clone()), rotation2(0.9)).unwrap();
    assert!(g.compose(&a, &b).unwrap().k().max_abs_diff(&rotation2(1.2)) <= 1e-15);
    let inv = g.inverse(&a).unwrap();
    assert!(inv.k().max_abs_diff(&rotation2(-0.3)) <= 1e-15);

    // Two loops with c = 1/4: transport R(-π/2) twice is R(-π).
    let lp = BasePath::polyline(&space, vec![vec![0.0], vec![TAU]]).unwrap();
    let l = g.arrow(lp, OrthogonalElement::identity(2)).unwrap();
    let ll = g.compose(&l, &l).unwrap();
    assert!(ll.transport().max_abs_diff(&rotation2(-PI)) <= 1e-6);
    assert_eq!(ll.key().0, vec![2]);
    let linv = g.inverse(&l).unwrap();
    assert!(linv.transport().max_abs_diff(&rotation2(FRAC_PI_2)) <= 1e-6);
    assert!(g.arrow_distance(&g.inverse(&linv).unwrap(), &l) <= 1e-12);

    // Unit laws.
    let one = g.unit(&vec![0.0]);
    assert!(g.arrow_distance(&g.compose(&l, &one).unwrap(), &l) <= 1e-9);
    assert!(g.arrow_distance(&g.compose(&one, &l).unwrap(), &l) <= 1e-9);
}

#[test]
fn cached_transports_match_recomputed_ones() {
    let g = torus_so3_classes();
    let sampler = PathClassSampler::default();
    let mut rng = crate::rng::stream(4, "test", 0);
    for _ in 0..10 {
        let b = sampler.arrow(&g, &mut rng);
        let a = sampler.arrow_from(&g, &g.target(&b), &mut rng).unwrap();
        let ab = g.compose(&a, &b).unwrap();
        let direct = crate::bundle::parallel_transport(ab.path(), g.connection(), g.step()).unwrap();
        assert!(direct.max_abs_diff(ab.transport()) <= 1e-7);
    }
}

#[test]
fn pathclass_axioms_and_dropped_conjugation() {
    for g in [circle_classes(1.0 / 3.0), torus_so3_classes()] {
        let report = axiom_suite(&g, &PathClassSampler::default(), 300, 100, 9).unwrap();
        assert!(report.passed(1e-9), "{report:?}");
    }
    let broken = torus_so3_classes().with_dropped_conjugation();
    let report = axiom_suite(&broken, &PathClassSampler::default(), 300, 100, 9).unwrap();
    assert!(report.max_defect() > 1e-3, "{report:?}");
}

#[test]
fn transport_representation_and_transformation_axioms() {
    let g = torus_so3_classes();
    let r = representation_check(&g, &TransportRepresentation, &PathClassSampler::default(), 200, 3);
    assert!(r.passed(1e-7), "{r:?}");
    let space = g.space().clone();
    let t = TransformationGroupoid::new(g, TransportRepresentation, space);
    let report = axiom_suite(&t, &TransformationSampler(PathClassSampler::default()), 200, 60, 3).unwrap();
    assert!(report.passed(1e-9), "{report:?}");
}

#[test]
fn frame_quotient_recovers_path_classes() {
    let classes = torus_so3_classes();
    let space = classes.space().clone();
    let q = QuotientGroupoid::new(FrameGroupoid::new(classes.clone()), FrameAction::new(space.clone()));
    let report = axiom_suite(&q, &QuotientSampler(FrameSampler::default()), 300, 100, 6).unwrap();
    assert!(report.passed(1e-9), "{report:?}");

    let mut rng = crate::rng::stream(6, "test", 0);
    let sampler = FrameSampler::default();
    for _ in 0..20 {
        let h = sampler.arrow(q.upstairs(), &mut rng);
        let g = sampler.arrow(q.upstairs(), &mut rng);
        // Move g so that its source base is the target base of h.
        let g = FrameArrow {
            class: PathClassSampler::default().arrow_from_point(&classes, &classes.target(&h.class), &mut rng),
            frame: g.frame,
        };
        let down = q.compose(&q.class(&g), &q.class(&h)).unwrap();
        let direct = classes.compose(&g.class, &h.class).unwrap();
        assert!(classes.arrow_distance(&down.representative.class, &direct) <= 1e-12);
        // Representatives moved by the action give the same normal form.
        let a0 = crate::lie::random_orthogonal(3, &mut rng);
        let a1 = crate::lie::random_orthogonal(3, &mut rng);
        let moved =
            q.compose(&q.class(&q.action().act_arrow(&g, &a0)), &q.class(&q.action().act_arrow(&h, &a1))).unwrap();
        assert_eq!(moved, down);
    }

    let broken = QuotientGroupoid::new(FrameGroupoid::new(classes), FrameAction { space, mutate_solve: true });
    let report = axiom_suite(&broken, &QuotientSampler(FrameSampler::default()), 300, 100, 6).unwrap();
    assert!(report.max_defect() > 1e-3);
}

#[test]
fn transformation_orbit_is_the_ell_leaf_on_the_circle() {
    let g = circle_classes(0.25);
    let space = g.space().clone();
    let t = TransformationGroupoid::new(g.clone(), TransportRepresentation, space.clone());
    let eps = 0.25;
    let tau = eps / 2.0;
    let xi = TotalPoint::new(vec![0.0], vec![1.0, 0.0]);
    let gens = |p: &TotalPoint| -> Vec<TransformationArrow<PathClassArrow>> {
        let mut out = Vec::new();
        for s in [tau, -tau] {
            let path = BasePath::polyline(&space, vec![p.base.clone(), vec![p.base[0] + s]]).unwrap();
            out.push(g.arrow(path, OrthogonalElement::identity(2)).unwrap());
            let k = exp_skew(&j2().scale(s));
            out.push(g.arrow(BasePath::constant(&space, p.base.clone()), k).unwrap());
        }
        out.into_iter().map(|a| t.arrow(a, p.clone()).unwrap()).collect()
    };
    let orbit = orbit_net(&t, &space, &xi, gens, 0.75 * tau, 100_000);
    assert!(!orbit.partial);
    let spec = SampleSpec {
        epsilon: eps,
        tau,
        transport_step: 1e-2,
        budget: Budget { group_steps: 40, word_length: 4 },
        seed: 0,
        include_base: true,
    };
    let leaf = leaf_sample(LeafKind::FEll, &xi, g.connection(), g.fiber(), &spec).unwrap();
    let d = hausdorff(&space, &orbit.objects, &leaf.points, eps);
    assert!(d <= 2.0 * eps, "{d}");
}
