//! Verification suites over a built scenario.

use super::build::Scenario;
use super::config::{Mutation, PlotSpec};
use super::report::{CheckRecord, RunReport, Status};
use super::svg::SampleFile;
use crate::base::BasePath;
use crate::bundle::{
    holonomy_algebra_dim, holonomy_sample, parallel_transport, small_loops, transport_convergence_order, FrameElement,
};
use crate::charts::{
    cocycle_check, psi_continuity, round_trip_check, transition_oracle_check, transition_smoothness, Atlas,
    ChartCheckReport,
};
use crate::cloud::{hausdorff, TotalPoint};
use crate::foliation::{
    containment_defect, factor_flow, fiber_slice, killing_check, leaf_sample, leaf_sample_via_flows,
    lifted_leaf_dim_check, linearize_field, linearized_flow, Budget, FlowSampleSpec, GeneratorField, HorizontalField,
    LeafKind, LeafSample, LinearizedField, SampleSpec, VectorField,
};
use crate::groupoid::{
    axiom_suite, orbit_net, representation_check, ArrowSampler, AxiomReport, BundleOfGroups, BundleOfGroupsSampler,
    FrameAction, FrameGroupoid, FrameSampler, Groupoid, PairGroupoid, PairSampler, PathClassArrow, PathClassGroupoid,
    PathClassSampler, QuotientGroupoid, QuotientSampler, TransformationArrow, TransformationGroupoid,
    TransformationSampler, TransportRepresentation,
};
use crate::lie::{exp_skew, orthogonality_defect, random_orthogonal, LieSubalgebra, OrthogonalElement};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Axioms,
    Transport,
    Leaves,
    Linearize,
    Charts,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["axioms", "transport", "leaves", "linearize", "charts", "all"];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Axioms => "axioms",
            Suite::Transport => "transport",
            Suite::Leaves => "leaves",
            Suite::Linearize => "linearize",
            Suite::Charts => "charts",
            Suite::All => "all",
        }
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "axioms" => Ok(Suite::Axioms),
            "transport" => Ok(Suite::Transport),
            "leaves" => Ok(Suite::Leaves),
            "linearize" => Ok(Suite::Linearize),
            "charts" => Ok(Suite::Charts),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite '{s}', expected one of {}", Suite::NAMES.join(", "))),
        }
    }
}

/// A finished run: the report, wall times per task, and samples for plotting.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub timings: Vec<(String, Duration)>,
    pub plots: Vec<(PlotSpec, SampleFile)>,
}

mod anchor {
    pub const PAIR: &str = "pair groupoid X×X: associativity, units, inverses, s/t compatibility";
    pub const BUNDLE: &str = "bundle of groups over B: groupoid laws";
    pub const TRANSFORMATION: &str = "transformation groupoid G(∇^τ,K) ⋉ E: groupoid laws";
    pub const REPRESENTATION: &str = "transport representation of G(∇^τ,K) on E: linear, isometric, functorial";
    pub const QUOTIENT: &str = "quotient of the frame groupoid by O(n): [g][h] = [g(ha)] well defined, groupoid laws";
    pub const PATHCLASS: &str =
        "path-class groupoid G(∇^τ,K): groupoid laws with composition [α,k][β,h] = [α*β, C_β(k)h]";
    pub const ISOMETRY: &str = "parallel transport of a metric connection is a fiber isometry";
    pub const ORDER: &str = "transport integrator converges at fourth order";
    pub const LOOP: &str = "holonomy around the loop matches the closed-form transport";
    pub const LOOP_ORDER: &str = "holonomy around the loop has the declared finite order";
    pub const HOLONOMY_DIM: &str = "dimension of the holonomy algebra h_b";
    pub const INVARIANTS: &str = "leaves of F^ℓ stay on level sets of the fiber invariants";
    pub const CONTAINMENT: &str = "inclusions F^τ ⊂ F^ℓ ⊂ F";
    pub const ORBIT: &str = "orbits of G(∇^τ,K) ⋉ E are the leaves of F^ℓ";
    pub const CLOSURE: &str = "F^ℓ leaves accumulate on the F̂^ℓ leaf of the closure group";
    pub const LIFTED: &str = "lifted leaf dimension = dim(base leaf) + dim K⁰ at every frame";
    pub const LINEAR: &str = "fiber-linear part of the linearized field";
    pub const KILLING: &str = "linearized fields tangent to the foliation are Killing";
    pub const NON_KILLING: &str = "a fiber field that is not tangent to the foliation has non-skew linearization";
    pub const FLOWS: &str = "leaves generated by linearized flows equal the leaves of F^ℓ";
    pub const FACTOR: &str = "linearized flows factor as transport composed with k_t in K⁰";
    pub const FACTOR_GROUP: &str = "factor k_t of a linearized flow preserves the fiber invariants";
    pub const ROUND_TRIP: &str = "chart Φ_α and its inverse are mutually inverse";
    pub const PSI: &str = "ψ̂_α is the identity at the marked point and varies continuously";
    pub const TRANSITION: &str = "transition map F matches the composition of charts";
    pub const SMOOTH: &str = "transition map is C¹ with the stated coordinate dependencies";
    pub const COCYCLE: &str = "transition maps satisfy the cocycle identity";
}

type Task<'a> = (String, Box<dyn Fn() -> Vec<CheckRecord> + Send + Sync + 'a>);

/// Shared, lazily computed samples.
struct Context<'a> {
    scenario: &'a Scenario,
    ell: OnceLock<Result<LeafSample, String>>,
}

impl<'a> Context<'a> {
    fn spec(&self) -> SampleSpec {
        let c = &self.scenario.config;
        SampleSpec {
            epsilon: c.run.epsilon,
            tau: c.tau(),
            transport_step: c.run.groupoid_step,
            budget: Budget { group_steps: c.run.budget.group_steps, word_length: c.run.budget.word_length },
            seed: c.run.seed,
            include_base: true,
        }
    }

    fn sample(&self, kind: LeafKind) -> Result<LeafSample, String> {
        let s = self.scenario;
        let mut spec = self.spec();
        if kind == LeafKind::F {
            spec.budget.group_steps = s.config.run.walk_steps;
        }
        leaf_sample(kind, &s.seed_point, &s.connection, &s.fiber, &spec).map_err(|e| e.to_string())
    }

    fn ell(&self) -> &Result<LeafSample, String> {
        self.ell.get_or_init(|| self.sample(LeafKind::FEll))
    }

    fn classes(&self) -> PathClassGroupoid {
        let s = self.scenario;
        PathClassGroupoid::new(s.connection.clone(), s.fiber.clone(), s.config.run.groupoid_step)
    }

    fn seed(&self) -> u64 {
        self.scenario.config.run.seed
    }
}

fn worst_law(r: &AxiomReport) -> String {
    let (name, value) = r.defects().into_iter().fold(("none", 0.0), |w, d| if d.1 > w.1 { d } else { w });
    format!("{} pairs, {} triples; worst law {name} ({value:.2e})", r.pairs, r.triples)
}

fn axioms_record<G: Groupoid, S: ArrowSampler<G>>(
    id: &str,
    anchor: &str,
    g: &G,
    sampler: &S,
    ctx: &Context,
) -> CheckRecord {
    let run = &ctx.scenario.config.run;
    let tol = run.tolerances.axioms;
    match axiom_suite(g, sampler, run.pairs, run.triples, ctx.seed()) {
        Ok(r) => CheckRecord::at_most(id, anchor, r.max_defect(), tol, worst_law(&r)).with_replay(format!(
            "seed {}, {} pairs, {} triples; errors: {:?}",
            ctx.seed(),
            run.pairs,
            run.triples,
            r.errors
        )),
        Err(e) => CheckRecord::error(id, anchor, tol, e),
    }
}

fn axiom_tasks<'a>(ctx: &'a Context<'a>) -> Vec<Task<'a>> {
    let mutation = ctx.scenario.config.run.mutation;
    let mut tasks: Vec<Task<'a>> = Vec::new();
    tasks.push((
        "axioms.pair".into(),
        Box::new(move || {
            let g = PairGroupoid::new((0..6).collect());
            vec![axioms_record("axioms.pair", anchor::PAIR, &g, &PairSampler, ctx)]
        }),
    ));
    tasks.push((
        "axioms.bundle_of_groups".into(),
        Box::new(move || {
            let s = ctx.scenario;
            let g = BundleOfGroups::new(s.space.clone(), s.fiber.clone());
            vec![axioms_record("axioms.bundle_of_groups", anchor::BUNDLE, &g, &BundleOfGroupsSampler, ctx)]
        }),
    ));
    tasks.push((
        "axioms.transformation".into(),
        Box::new(move || {
            let run = &ctx.scenario.config.run;
            let classes = ctx.classes();
            let rep = representation_check(
                &classes,
                &TransportRepresentation,
                &PathClassSampler::default(),
                run.pairs / 4,
                ctx.seed(),
            );
            let rep_record = CheckRecord::at_most(
                "axioms.representation",
                anchor::REPRESENTATION,
                rep.max_defect(),
                run.tolerances.arrow,
                format!("{} trials", rep.trials),
            )
            .with_replay(format!("seed {}; errors: {:?}", ctx.seed(), rep.errors));
            let rep_record = if rep.errors.is_empty() { rep_record } else { rep_record.with_status(Status::Fail) };
            let t = TransformationGroupoid::new(classes, TransportRepresentation, ctx.scenario.space.clone());
            let sampler = TransformationSampler(PathClassSampler::default());
            vec![axioms_record("axioms.transformation", anchor::TRANSFORMATION, &t, &sampler, ctx), rep_record]
        }),
    ));
    tasks.push((
        "axioms.quotient".into(),
        Box::new(move || {
            let mut action = FrameAction::new(ctx.scenario.space.clone());
            action.mutate_solve = mutation == Some(Mutation::WrongQuotientSolve);
            let q = QuotientGroupoid::new(FrameGroupoid::new(ctx.classes()), action);
            vec![axioms_record("axioms.quotient", anchor::QUOTIENT, &q, &QuotientSampler(FrameSampler::default()), ctx)]
        }),
    ));
    tasks.push((
        "axioms.pathclass".into(),
        Box::new(move || {
            let mut g = ctx.classes();
            if mutation == Some(Mutation::DroppedConjugation) {
                g = g.with_dropped_conjugation();
            }
            vec![axioms_record("axioms.pathclass", anchor::PATHCLASS, &g, &PathClassSampler::default(), ctx)]
        }),
    ));
    tasks
}

/// Random leafwise polyline from a random base point.
fn random_leaf_path<R: Rng>(scenario: &Scenario, rng: &mut R) -> Option<BasePath> {
    let space = &scenario.space;
    let plaque = space.plaque_coordinates();
    if plaque.is_empty() {
        return None;
    }
    for _ in 0..64 {
        let mut points = vec![space.random_point(rng)];
        for _ in 0..2 {
            let mut p = points.last().expect("nonempty").clone();
            for &i in &plaque {
                p[i] += rng.random_range(-2.0..2.0);
            }
            points.push(p);
        }
        if let Ok(path) = BasePath::polyline(space, points) {
            return Some(path);
        }
    }
    None
}

fn transport_tasks<'a>(ctx: &'a Context<'a>) -> Vec<Task<'a>> {
    let s = ctx.scenario;
    let run = &s.config.run;
    let tol = &run.tolerances;
    let mut tasks: Vec<Task<'a>> = Vec::new();
    tasks.push((
        "transport.isometry".into(),
        Box::new(move || {
            let id = "transport.isometry";
            let results: Vec<Result<Option<f64>, String>> = (0..run.transport_paths)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng::stream(ctx.seed(), "transport-paths", i as u64);
                    let Some(path) = random_leaf_path(s, &mut rng) else {
                        return Ok(None);
                    };
                    let p = parallel_transport(&path, &s.connection, run.transport_step)
                        .map_err(|e| format!("path {i}: {e}"))?;
                    let mut worst = orthogonality_defect(p.matrix());
                    for _ in 0..8 {
                        let v: Vec<f64> = (0..s.fiber.fiber_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let norm = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>().sqrt();
                        worst = worst.max((norm(&p.apply(&v)) - norm(&v)).abs());
                    }
                    Ok(Some(worst))
                })
                .collect();
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for r in results {
                match r {
                    Ok(Some(d)) => {
                        worst = worst.max(d);
                        count += 1;
                    }
                    Ok(None) => {}
                    Err(e) => return vec![CheckRecord::error(id, anchor::ISOMETRY, tol.transport, e)],
                }
            }
            if count == 0 {
                return vec![CheckRecord::at_most(id, anchor::ISOMETRY, 0.0, tol.transport, "no leafwise directions")
                    .with_status(Status::Inconclusive)];
            }
            vec![CheckRecord::at_most(
                id,
                anchor::ISOMETRY,
                worst,
                tol.transport,
                format!("{count} paths at step {:e}", run.transport_step),
            )
            .with_replay(format!("seed {}, label transport-paths", ctx.seed()))]
        }),
    ));
    tasks.push((
        "transport.order".into(),
        Box::new(move || {
            let id = "transport.order";
            let path = s
                .loop_path
                .clone()
                .or_else(|| s.space.generator_loops(&s.seed_point.base).into_iter().next())
                .or_else(|| random_leaf_path(s, &mut rng::stream(ctx.seed(), "order-path", 0)));
            let Some(path) = path else {
                return vec![CheckRecord::at_most(id, anchor::ORDER, 0.0, tol.order_high, "no leafwise directions")
                    .with_status(Status::Inconclusive)];
            };
            match transport_convergence_order(&path, &s.connection) {
                Err(e) => vec![CheckRecord::error(id, anchor::ORDER, tol.order_high, e)],
                Ok(r) => match r.order {
                    None => vec![CheckRecord::at_most(
                        id,
                        anchor::ORDER,
                        0.0,
                        tol.order_high,
                        "transport exact at every step",
                    )],
                    Some(order) => {
                        let ok = (tol.order_low..=tol.order_high).contains(&order);
                        let mut c = CheckRecord::at_most(
                            id,
                            anchor::ORDER,
                            order,
                            tol.order_high,
                            format!(
                                "observed order {order:.3}, accepted [{}, {}]; errors {:?}",
                                tol.order_low, tol.order_high, r.errors
                            ),
                        );
                        c.status = if ok { Status::Pass } else { Status::Fail };
                        vec![c.with_replay(format!(
                            "path knots {:?}",
                            path.knots().iter().map(|k| &k.point).collect::<Vec<_>>()
                        ))]
                    }
                },
            }
        }),
    ));
    if let Some(path) = &s.loop_path {
        tasks.push((
            "transport.loop".into(),
            Box::new(move || {
                let g = match parallel_transport(path, &s.connection, run.transport_step) {
                    Ok(g) => g,
                    Err(e) => return vec![CheckRecord::error("transport.loop", anchor::LOOP, tol.holonomy, e)],
                };
                let mut out = Vec::new();
                if let Some(m) = &s.loop_matrix {
                    out.push(CheckRecord::at_most(
                        "transport.loop.closed_form",
                        anchor::LOOP,
                        g.max_abs_diff(m),
                        tol.holonomy,
                        format!("step {:e}", run.transport_step),
                    ));
                }
                if let Some(k) = s.config.expect.holonomy_loop.as_ref().and_then(|l| l.order) {
                    let id = OrthogonalElement::identity(g.dim());
                    let power = (0..k).fold(id.clone(), |acc, _| acc.compose(&g));
                    let defect = power.max_abs_diff(&id);
                    // Every proper power must stay away from the identity.
                    let mut proper = id.clone();
                    let mut nearest = f64::INFINITY;
                    for _ in 1..k {
                        proper = proper.compose(&g);
                        nearest = nearest.min(proper.max_abs_diff(&id));
                    }
                    let mut c = CheckRecord::at_most(
                        "transport.loop.order",
                        anchor::LOOP_ORDER,
                        defect,
                        tol.holonomy,
                        format!("‖g^{k} − I‖ = {defect:.2e}, min proper ‖g^j − I‖ = {nearest:.2e}"),
                    );
                    if k > 1 && nearest <= tol.holonomy {
                        c.status = Status::Fail;
                    }
                    out.push(c);
                }
                out
            }),
        ));
    }
    if let Some(expected) = s.config.expect.holonomy_dim {
        tasks.push((
            "transport.holonomy_dim".into(),
            Box::new(move || {
                let id = "transport.holonomy_dim";
                let b = &s.seed_point.base;
                let loops = s.space.generator_loops(b);
                let mut rng = rng::stream(ctx.seed(), "small-loops", 0);
                let small = small_loops(&s.space, b, 0.07, 6, &mut rng);
                let dim = holonomy_sample(b, &loops, &s.connection, run.transport_step)
                    .and_then(|h| holonomy_algebra_dim(&h, &small, &s.connection, run.transport_step));
                match dim {
                    Ok(d) => vec![CheckRecord::at_most(
                        id,
                        anchor::HOLONOMY_DIM,
                        (d as f64 - expected as f64).abs(),
                        0.0,
                        format!("dim h_b = {d}, expected {expected}"),
                    )],
                    Err(e) => vec![CheckRecord::error(id, anchor::HOLONOMY_DIM, 0.0, e)],
                }
            }),
        ));
    }
    tasks
}

fn hausdorff_record(id: &str, anchor: &str, ctx: &Context, a: &LeafSample, b: &LeafSample, what: &str) -> CheckRecord {
    let run = &ctx.scenario.config.run;
    let eps = run.epsilon;
    let tol = run.tolerances.hausdorff_factor * eps;
    let d = hausdorff(&ctx.scenario.space, &a.points, &b.points, eps);
    let mut record = CheckRecord::at_most(
        id,
        anchor,
        d,
        tol,
        format!("{what}: {} vs {} points, ε = {eps}", a.points.len(), b.points.len()),
    );
    // A truncated sample can neither confirm nor refute equality of the leaves.
    if a.partial || b.partial {
        record.status = Status::Inconclusive;
        record.detail.push_str("; a sampler ran out of budget");
    }
    record.with_replay(format!("seed {}, seed point {:?}", run.seed, ctx.scenario.seed_point))
}

fn leaf_tasks<'a>(ctx: &'a Context<'a>) -> Vec<Task<'a>> {
    let s = ctx.scenario;
    let run = &s.config.run;
    let tol = &run.tolerances;
    let mut tasks: Vec<Task<'a>> = Vec::new();
    tasks.push((
        "leaves.invariants".into(),
        Box::new(move || {
            let id = "leaves.invariants";
            let ell = match ctx.ell() {
                Ok(l) => l,
                Err(e) => return vec![CheckRecord::error(id, anchor::INVARIANTS, tol.invariant, e)],
            };
            let target = s.fiber.invariant_values(&s.seed_point.fiber);
            let defect = ell
                .points
                .iter()
                .flat_map(|p| {
                    s.fiber
                        .invariant_values(&p.fiber)
                        .into_iter()
                        .zip(&target)
                        .map(|(a, b)| (a - b).abs())
                        .collect::<Vec<_>>()
                })
                .fold(0.0, f64::max);
            vec![CheckRecord::at_most(
                id,
                anchor::INVARIANTS,
                defect,
                tol.invariant,
                format!("{} points", ell.points.len()),
            )
            .inconclusive_if(ell.partial, "F_ell sample is partial")]
        }),
    ));
    tasks.push((
        "leaves.containment".into(),
        Box::new(move || {
            let id = "leaves.containment";
            let ell = match ctx.ell() {
                Ok(l) => l,
                Err(e) => return vec![CheckRecord::error(id, anchor::CONTAINMENT, tol.invariant, e)],
            };
            let tau = match ctx.sample(LeafKind::FTau) {
                Ok(t) => t,
                Err(e) => return vec![CheckRecord::error(id, anchor::CONTAINMENT, tol.invariant, e)],
            };
            let mut defect = containment_defect(&s.fiber, &tau, ell);
            let mut partial = tau.partial || ell.partial;
            let mut detail = format!("F_tau {} ⊂ F_ell {} points", tau.points.len(), ell.points.len());
            if !s.fiber.invariants().is_empty() {
                match ctx.sample(LeafKind::F) {
                    Ok(full) => {
                        defect = defect.max(containment_defect(&s.fiber, ell, &full));
                        partial |= full.partial;
                        detail.push_str(&format!(" ⊂ F {} points", full.points.len()));
                    }
                    Err(e) => return vec![CheckRecord::error(id, anchor::CONTAINMENT, tol.invariant, e)],
                }
            }
            vec![CheckRecord::at_most(id, anchor::CONTAINMENT, defect, tol.invariant, detail)
                .inconclusive_if(partial, "a sampler ran out of budget")]
        }),
    ));
    tasks.push((
        "leaves.orbit".into(),
        Box::new(move || {
            let id = "leaves.orbit";
            let ell = match ctx.ell() {
                Ok(l) => l,
                Err(e) => return vec![CheckRecord::error(id, anchor::ORBIT, tol.hausdorff_factor * run.epsilon, e)],
            };
            let g = ctx.classes();
            let space = s.space.clone();
            let t = TransformationGroupoid::new(g.clone(), TransportRepresentation, space.clone());
            let tau = s.config.tau();
            let plaque = space.plaque_coordinates();
            // Unit top speed, so one lattice step moves a unit fiber vector by at most τ.
            let basis: Vec<_> = s
                .fiber
                .algebra()
                .basis()
                .iter()
                .map(|b| b.scale(1.0 / crate::foliation::rotation_speeds(b).into_iter().fold(0.0, f64::max)))
                .collect();
            let n = s.fiber.fiber_dim();
            let gens = |p: &TotalPoint| -> Vec<TransformationArrow<PathClassArrow>> {
                let mut out = Vec::new();
                for sign in [tau, -tau] {
                    for &i in &plaque {
                        let mut q = p.base.clone();
                        q[i] += sign;
                        if let Ok(path) = BasePath::polyline(&space, vec![p.base.clone(), q]) {
                            if let Ok(a) = g.arrow(path, OrthogonalElement::identity(n)) {
                                out.push(a);
                            }
                        }
                    }
                    for b in &basis {
                        if let Ok(a) = g.arrow(BasePath::constant(&space, p.base.clone()), exp_skew(&b.scale(sign))) {
                            out.push(a);
                        }
                    }
                }
                for f in s.fiber.finite_part() {
                    if let Ok(a) = g.arrow(BasePath::constant(&space, p.base.clone()), f.clone()) {
                        out.push(a);
                    }
                }
                out.into_iter().filter_map(|a| t.arrow(a, p.clone()).ok()).collect()
            };
            let orbit = orbit_net(&t, &space, &s.seed_point, gens, 0.75 * tau, run.orbit_budget);
            let sample = LeafSample { points: orbit.objects, partial: orbit.partial, ..ell.clone() };
            vec![hausdorff_record(id, anchor::ORBIT, ctx, &sample, ell, "transformation groupoid orbit vs F_ell")]
        }),
    ));
    if s.fiber.closure().algebra.rank() > s.fiber.algebra().rank() {
        tasks.push(("leaves.closure".into(), Box::new(move || vec![closure_record(ctx)])));
    }
    let algebras: Vec<(&'static str, &'a LieSubalgebra)> =
        if s.fiber.closure().algebra.rank() > s.fiber.algebra().rank() {
            vec![("leaves.lifted_dim", s.fiber.algebra()), ("leaves.lifted_dim.closure", &s.fiber.closure().algebra)]
        } else {
            vec![("leaves.lifted_dim", s.fiber.algebra())]
        };
    for (id, algebra) in algebras {
        tasks.push((
            id.into(),
            Box::new(move || {
                let mut rng = rng::stream(ctx.seed(), "frames", 0);
                let frames: Vec<FrameElement> = (0..run.frames)
                    .map(|_| FrameElement {
                        base: s.space.random_point(&mut rng),
                        frame: random_orthogonal(s.fiber.fiber_dim(), &mut rng),
                    })
                    .collect();
                match lifted_leaf_dim_check(&s.connection, algebra, &frames, run.transport_step, ctx.seed()) {
                    Ok(r) => {
                        let defect = r.ranks.iter().map(|&k| (k as f64 - r.expected as f64).abs()).fold(0.0, f64::max);
                        vec![CheckRecord::at_most(
                            id,
                            anchor::LIFTED,
                            defect,
                            0.0,
                            format!("expected {}, ranks {:?}", r.expected, r.ranks),
                        )
                        .with_replay(format!("seed {}, label frames", ctx.seed()))]
                    }
                    Err(e) => vec![CheckRecord::error(id, anchor::LIFTED, 0.0, e)],
                }
            }),
        ));
    }
    tasks
}

/// `F_ell` fiber slices of growing budget against the `F_hat` slice, all at the seed base point.
fn closure_record(ctx: &Context) -> CheckRecord {
    let id = "leaves.closure";
    let s = ctx.scenario;
    let run = &s.config.run;
    let c = &run.closure;
    let tol = run.tolerances.closure;
    let base = &s.seed_point.base;
    let slice = |kind: LeafKind, steps: usize, tau: f64, epsilon: f64| -> Result<Vec<TotalPoint>, String> {
        let spec = SampleSpec {
            epsilon,
            tau,
            transport_step: run.groupoid_step,
            budget: Budget { group_steps: steps, word_length: run.budget.word_length },
            seed: run.seed,
            include_base: false,
        };
        let (points, _, _) =
            fiber_slice(kind, &s.seed_point, &s.connection, &s.fiber, &spec).map_err(|e| e.to_string())?;
        Ok(points.into_iter().map(|v| TotalPoint::new(base.clone(), v)).collect())
    };
    // Lattice step moving the seed vector by about ε, and enough shells to cover a period of every basis direction.
    let closure_basis = s.fiber.closure().algebra.basis();
    let fastest = closure_basis
        .iter()
        .map(|b| b.matrix() * nalgebra::DVector::from_column_slice(&s.seed_point.fiber))
        .map(|w| w.norm())
        .fold(0.0, f64::max);
    let hat_tau = c.epsilon / fastest.max(1e-12);
    let hat_steps = closure_basis
        .iter()
        .map(|b| {
            let slowest = crate::foliation::rotation_speeds(b).into_iter().fold(f64::INFINITY, f64::min);
            (std::f64::consts::PI / slowest / hat_tau).ceil() as usize
        })
        .sum::<usize>();
    let hat = match slice(LeafKind::FHat, hat_steps, hat_tau, c.epsilon) {
        Ok(h) => h,
        Err(e) => return CheckRecord::error(id, anchor::CLOSURE, tol, e),
    };
    let distances: Result<Vec<f64>, String> = c
        .steps
        .iter()
        .map(|&n| Ok(hausdorff(&s.space, &slice(LeafKind::FEll, n, c.tau, c.epsilon)?, &hat, c.epsilon)))
        .collect();
    let distances = match distances {
        Ok(d) => d,
        Err(e) => return CheckRecord::error(id, anchor::CLOSURE, tol, e),
    };
    let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
    let last = distances.last().copied().unwrap_or(f64::INFINITY);
    let mut r = CheckRecord::at_most(
        id,
        anchor::CLOSURE,
        last,
        tol,
        format!(
            "budgets {:?} give Hausdorff {:?} to {} F_hat points; monotone: {monotone}",
            c.steps,
            distances,
            hat.len()
        ),
    );
    if !monotone {
        r.status = Status::Fail;
    }
    r.with_replay(format!("seed point {:?}, τ = {}", s.seed_point, c.tau))
}

/// `X + Y` for two fields on the same total space.
#[derive(Debug)]
struct SumField {
    name: String,
    parts: Vec<Arc<dyn VectorField>>,
}

impl VectorField for SumField {
    fn name(&self) -> &str {
        &self.name
    }

    fn base_dim(&self) -> usize {
        self.parts[0].base_dim()
    }

    fn fiber_dim(&self) -> usize {
        self.parts[0].fiber_dim()
    }

    fn eval(&self, b: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut db = vec![0.0; self.base_dim()];
        let mut dv = vec![0.0; self.fiber_dim()];
        for p in &self.parts {
            let (x, y) = p.eval(b, v);
            db.iter_mut().zip(x).for_each(|(a, c)| *a += c);
            dv.iter_mut().zip(y).for_each(|(a, c)| *a += c);
        }
        (db, dv)
    }

    fn exact_linear_part(&self, b: &[f64]) -> Option<nalgebra::DMatrix<f64>> {
        let mut total = nalgebra::DMatrix::zeros(self.fiber_dim(), self.fiber_dim());
        for p in &self.parts {
            total += p.exact_linear_part(b)?;
        }
        Some(total)
    }
}

fn linearize_probes(s: &Scenario) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(s.config.run.seed, "linearize-probes", 0);
    let mut probes = vec![s.seed_point.base.clone()];
    probes.extend((0..2).map(|_| s.space.random_point(&mut rng)));
    probes
}

/// Horizontal lifts of the plaque directions and the generators of K⁰.
fn leaf_fields(s: &Scenario) -> Vec<Arc<dyn VectorField>> {
    let mut fields: Vec<Arc<dyn VectorField>> = s
        .space
        .plaque_coordinates()
        .into_iter()
        .map(|i| Arc::new(HorizontalField::new(s.connection.clone(), i)) as Arc<dyn VectorField>)
        .collect();
    for (k, b) in s.fiber.algebra().basis().iter().enumerate() {
        fields.push(Arc::new(GeneratorField::new(format!("K{k}"), s.space.dim(), b.clone())));
    }
    fields
}

fn linearize_tasks<'a>(ctx: &'a Context<'a>) -> Vec<Task<'a>> {
    let s = ctx.scenario;
    let run = &s.config.run;
    let tol = &run.tolerances;
    let mut tasks: Vec<Task<'a>> = Vec::new();
    for f in &s.fields {
        let name = f.name.clone();
        tasks.push((
            format!("linearize.{name}"),
            Box::new(move || {
                let mut out = Vec::new();
                let lin = match linearize_field(f.field.clone(), &run.lambdas, &linearize_probes(s)) {
                    Ok(l) => l,
                    Err(e) => {
                        return vec![CheckRecord::error(format!("linearize.{name}"), anchor::LINEAR, tol.linear, e)]
                    }
                };
                if let Some(m) = &f.linear_part {
                    let defect = lin.samples.iter().map(|(_, a)| a.max_abs_diff(m)).fold(0.0, f64::max);
                    out.push(CheckRecord::at_most(
                        format!("linearize.{name}.linear_part"),
                        anchor::LINEAR,
                        defect,
                        tol.linear,
                        format!("λ = {:?}, fit residual {:.1e}", run.lambdas, lin.residual),
                    ));
                }
                if let Some(expect) = f.killing {
                    let defect = killing_check(&lin, 64, ctx.seed());
                    let id = format!("linearize.{name}.killing");
                    out.push(if expect {
                        CheckRecord::at_most(id, anchor::KILLING, defect, tol.killing, "max |⟨M v, v⟩| over unit v")
                    } else {
                        CheckRecord::at_least(
                            id,
                            anchor::NON_KILLING,
                            defect,
                            tol.non_killing,
                            "max |⟨M v, v⟩| over unit v",
                        )
                    });
                }
                out
            }),
        ));
    }
    tasks.push((
        "linearize.flows".into(),
        Box::new(move || {
            let id = "linearize.flows";
            let factor = tol.hausdorff_factor * run.epsilon;
            let ell = match ctx.ell() {
                Ok(l) => l,
                Err(e) => return vec![CheckRecord::error(id, anchor::FLOWS, factor, e)],
            };
            let probes = linearize_probes(s);
            let fields: Result<Vec<LinearizedField>, _> =
                leaf_fields(s).into_iter().map(|f| linearize_field(f, &run.lambdas, &probes)).collect();
            let spec = FlowSampleSpec {
                epsilon: run.epsilon,
                max_points: run.orbit_budget,
                substep: run.sample_substep,
                killing_tol: tol.killing,
                seed: run.seed,
            };
            match fields.and_then(|f| leaf_sample_via_flows(&s.space, &s.seed_point, &f, &spec)) {
                Ok(via) => vec![hausdorff_record(id, anchor::FLOWS, ctx, &via, ell, "linearized flows vs F_ell")],
                Err(e) => vec![CheckRecord::error(id, anchor::FLOWS, factor, e)],
            }
        }),
    ));
    tasks.push(("linearize.factor_flow".into(), Box::new(move || factor_flow_records(ctx))));
    tasks
}

fn factor_flow_records(ctx: &Context) -> Vec<CheckRecord> {
    let s = ctx.scenario;
    let run = &s.config.run;
    let tol = &run.tolerances;
    let id = "linearize.factor_flow";
    let mut parts: Vec<Arc<dyn VectorField>> = Vec::new();
    if let Some(&i) = s.space.plaque_coordinates().first() {
        parts.push(Arc::new(HorizontalField::new(s.connection.clone(), i)));
    }
    if let Some(b) = s.fiber.algebra().basis().first() {
        parts.push(Arc::new(GeneratorField::new("K0", s.space.dim(), b.clone())));
    }
    if parts.is_empty() {
        return vec![CheckRecord::at_most(
            id,
            anchor::FACTOR,
            0.0,
            tol.transport,
            "no leafwise directions or generators",
        )
        .with_status(Status::Inconclusive)];
    }
    let field: Arc<dyn VectorField> = Arc::new(SumField { name: "horizontal + K0".into(), parts });
    let result = linearize_field(field, &run.lambdas, &linearize_probes(s))
        .and_then(|lin| linearized_flow(&lin, &s.seed_point.base, &run.flow_times, run.flow_substep))
        .and_then(|flow| factor_flow(&flow, &s.connection, &s.fiber, run.transport_step, f64::INFINITY));
    let ks = match result {
        Ok(ks) => ks,
        Err(e) => return vec![CheckRecord::error(id, anchor::FACTOR, tol.transport, e)],
    };
    let n = s.fiber.fiber_dim();
    let start = ks.first().map_or(0.0, |(_, k)| k.max_abs_diff(&OrthogonalElement::identity(n)));
    let orth = ks.iter().map(|(_, k)| orthogonality_defect(k.matrix())).fold(0.0, f64::max);
    let (member, invariant) = ks
        .iter()
        .map(|(_, k)| s.fiber.membership_defect(k))
        .fold((0.0, String::new()), |w, d| if d.0 > w.0 { d } else { w });
    vec![
        CheckRecord::at_most(
            id,
            anchor::FACTOR,
            orth.max(start),
            tol.transport,
            format!("{} times; orthogonality {orth:.1e}, ‖k_0 − I‖ = {start:.1e}", ks.len()),
        ),
        CheckRecord::at_most(
            "linearize.factor_flow.invariants",
            anchor::FACTOR_GROUP,
            member,
            tol.invariant,
            if invariant.is_empty() {
                "no invariants declared".to_string()
            } else {
                format!("worst invariant '{invariant}'")
            },
        ),
    ]
}

fn chart_record(id: String, anchor: &str, r: ChartCheckReport, tol: f64, seed: u64) -> CheckRecord {
    let mut c = CheckRecord::at_most(
        id,
        anchor,
        r.max_defect,
        tol,
        format!("{} samples, {} outside the domain", r.samples, r.skipped),
    );
    if !r.passed(tol) {
        c.status = Status::Fail;
    }
    let errors: Vec<&String> = r.errors.iter().take(5).collect();
    c.with_replay(format!("seed {seed}; errors: {errors:?}"))
}

fn chart_tasks<'a>(ctx: &'a Context<'a>, atlas: &'a OnceLock<Atlas>) -> Vec<Task<'a>> {
    let s = ctx.scenario;
    let run = &s.config.run;
    let tol = &run.tolerances;
    let atlas = move || {
        atlas.get_or_init(|| {
            Atlas::new(PathClassGroupoid::new(s.connection.clone(), s.fiber.clone(), run.transport_step))
        })
    };
    let mut tasks: Vec<Task<'a>> = Vec::new();
    for c in &s.charts {
        tasks.push((
            format!("charts.{}", c.name),
            Box::new(move || {
                let a = atlas();
                let seed = ctx.seed();
                let mut out = vec![chart_record(
                    format!("charts.{}.round_trip", c.name),
                    anchor::ROUND_TRIP,
                    round_trip_check(a, &c.datum, run.chart_samples, seed),
                    tol.chart_round_trip,
                    seed,
                )];
                let l = c.datum.u0().chart.plaque_dim;
                let k = c.datum.u0().chart.slice_dim;
                let id = format!("charts.{}.psi", c.name);
                let origin = a.psi_isometry(&c.datum, &vec![0.0; l], &vec![0.0; k]);
                let lipschitz = psi_continuity(a, &c.datum, 8, 1e-4, seed);
                out.push(match (origin, lipschitz) {
                    (Ok(o), Ok(lip)) => {
                        let at_origin = o.max_abs_diff(&OrthogonalElement::identity(o.dim()));
                        let mut r = CheckRecord::at_most(
                            id,
                            anchor::PSI,
                            at_origin,
                            tol.chart_round_trip,
                            format!("‖ψ̂(0,0) − I‖ = {at_origin:.1e}, difference quotient ≤ {lip:.3}"),
                        );
                        if !(lip <= tol.chart_derivative_bound) {
                            r.status = Status::Fail;
                        }
                        r
                    }
                    (Err(e), _) | (_, Err(e)) => CheckRecord::error(id, anchor::PSI, tol.chart_round_trip, e),
                });
                out
            }),
        ));
    }
    for pair in s.charts.windows(2) {
        let (c0, c1) = (&pair[0], &pair[1]);
        tasks.push((
            format!("charts.{}-{}", c0.name, c1.name),
            Box::new(move || {
                let a = atlas();
                let seed = ctx.seed();
                let mut out = vec![chart_record(
                    format!("charts.{}-{}.transition", c0.name, c1.name),
                    anchor::TRANSITION,
                    transition_oracle_check(a, &c0.datum, &c1.datum, run.chart_samples, run.chart_shrink, seed),
                    tol.chart_transition,
                    seed,
                )];
                let id = format!("charts.{}-{}.smoothness", c0.name, c1.name);
                let mut rng = rng::stream(seed, "chart-smoothness", 0);
                let point = (0..64)
                    .map(|_| a.random_point(&c0.datum, run.chart_shrink, &mut rng))
                    .find(|p| a.transition(&c0.datum, &c1.datum, p).is_ok());
                out.push(match point {
                    None => CheckRecord::error(
                        id,
                        anchor::SMOOTH,
                        tol.chart_excluded_partials,
                        "no sample point in the overlap",
                    ),
                    Some(p) => match transition_smoothness(a, &c0.datum, &c1.datum, &p, 1e-3) {
                        Ok(r) => {
                            let mut c = CheckRecord::at_most(
                                id,
                                anchor::SMOOTH,
                                r.excluded_partials,
                                tol.chart_excluded_partials,
                                format!(
                                    "derivative bound {:.3}, refinement changes {:?}",
                                    r.derivative_bound, r.refinement_changes
                                ),
                            );
                            if !r.consistent(tol.chart_derivative_bound, 1e-6) {
                                c.status = Status::Fail;
                            }
                            c.with_replay(format!(
                                "point k = {:?}, x0 = {:?}, y0 = {:?}, x1 = {:?}",
                                p.k.to_rows(),
                                p.x0,
                                p.y0,
                                p.x1
                            ))
                        }
                        Err(e) => CheckRecord::error(id, anchor::SMOOTH, tol.chart_excluded_partials, e),
                    },
                });
                out
            }),
        ));
    }
    if s.charts.len() >= 3 {
        tasks.push((
            "charts.cocycle".into(),
            Box::new(move || {
                let c = &s.charts;
                let r = cocycle_check(
                    atlas(),
                    [&c[0].datum, &c[1].datum, &c[2].datum],
                    run.chart_samples,
                    run.chart_shrink,
                    ctx.seed(),
                );
                vec![chart_record("charts.cocycle".into(), anchor::COCYCLE, r, tol.chart_transition, ctx.seed())]
            }),
        ));
    }
    tasks
}

/// Runs the selected checks; module errors are recorded and the run continues.
pub fn run_suite(scenario: &Scenario, suite: Suite) -> RunOutput {
    run_filtered(scenario, suite, &[])
}

/// Like [`run_suite`], restricted to tasks whose id starts with one of `prefixes` (all when empty).
pub fn run_filtered(scenario: &Scenario, suite: Suite, prefixes: &[&str]) -> RunOutput {
    let ctx = Context { scenario, ell: OnceLock::new() };
    let atlas = OnceLock::new();
    let mut tasks: Vec<Task> = Vec::new();
    if suite.includes(Suite::Axioms) {
        tasks.extend(axiom_tasks(&ctx));
    }
    if suite.includes(Suite::Transport) {
        tasks.extend(transport_tasks(&ctx));
    }
    if suite.includes(Suite::Leaves) {
        tasks.extend(leaf_tasks(&ctx));
    }
    if suite.includes(Suite::Linearize) {
        tasks.extend(linearize_tasks(&ctx));
    }
    if suite.includes(Suite::Charts) {
        tasks.extend(chart_tasks(&ctx, &atlas));
    }
    tasks.retain(|(name, _)| prefixes.is_empty() || prefixes.iter().any(|p| name.starts_with(p)));
    let results: Vec<(String, Vec<CheckRecord>, Duration)> = tasks
        .par_iter()
        .map(|(name, task)| {
            let start = Instant::now();
            let records = task();
            (name.clone(), records, start.elapsed())
        })
        .collect();

    let config = &scenario.config;
    let mut warnings: Vec<String> = scenario.fiber.closure().rationality_warnings(scenario.fiber.algebra());
    let mut checks = Vec::new();
    let mut timings = Vec::new();
    for (name, records, elapsed) in results {
        for r in &records {
            if r.status == Status::Inconclusive {
                warnings.push(format!("{}: inconclusive ({})", r.id, r.detail));
            }
        }
        checks.extend(records);
        timings.push((name, elapsed));
    }
    if let Some(m) = config.run.mutation {
        warnings.push(format!("mutation {m:?} is active; the affected laws are expected to fail"));
    }

    let hash = config.hash();
    let mut plots = Vec::new();
    for p in config.output.plots.iter().filter(|_| prefixes.is_empty()) {
        let sample = if p.kind == LeafKind::FEll { ctx.ell().clone() } else { ctx.sample(p.kind) };
        match sample {
            Ok(sample) => plots.push((
                p.clone(),
                SampleFile { scenario: config.name.clone(), config_hash: hash.clone(), seed: config.run.seed, sample },
            )),
            Err(e) => warnings.push(format!("plot of {}: {e}", p.kind.label())),
        }
    }
    let report = RunReport::new(&config.name, suite.name(), config.run.seed, hash, checks, warnings);
    RunOutput { report, timings, plots }
}
