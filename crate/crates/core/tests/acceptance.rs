//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the verdict lines are always printed.

use foliation_core::bundle::FrameElement;
use foliation_core::charts::{cocycle_check, round_trip_check, transition_oracle_check, Atlas, ChartCheckReport};
use foliation_core::foliation::lifted_leaf_dim_check;
use foliation_core::groupoid::PathClassGroupoid;
use foliation_core::lie::{bracket_closure_rank, random_orthogonal, SkewElement};
use foliation_core::rng;
use foliation_core::scenario::{load_config, run_filtered, run_suite, CheckRecord, RunOutput, Scenario, Status, Suite};
use std::path::Path;
use std::time::{Duration, Instant};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict, u64);

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    Scenario::build(load_config(&path).unwrap_or_else(|e| panic!("{name}: {e}")))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn check<'a>(out: &'a RunOutput, id: &str) -> Result<&'a CheckRecord, String> {
    out.report.checks.iter().find(|c| c.id == id).ok_or_else(|| format!("{}: no check {id}", out.report.scenario))
}

fn defect(c: &CheckRecord) -> Result<f64, String> {
    c.defect.ok_or_else(|| format!("{}: {}", c.id, c.detail))
}

/// The check passed outright; inconclusive does not count.
fn passed(out: &RunOutput, id: &str) -> Result<f64, String> {
    let c = check(out, id)?;
    if c.status != Status::Pass {
        return Err(format!("{} / {id}: {:?}, {}", out.report.scenario, c.status, c.detail));
    }
    defect(c)
}

fn within(what: &str, value: f64, tol: f64) -> Result<(), String> {
    if value <= tol {
        Ok(())
    } else {
        Err(format!("{what} = {value:e} exceeds {tol:e}"))
    }
}

fn c1_groupoid_axioms() -> Verdict {
    let laws =
        ["axioms.pair", "axioms.bundle_of_groups", "axioms.transformation", "axioms.quotient", "axioms.pathclass"];
    let mut worst: f64 = 0.0;
    for name in ["circle_quarter", "torus_so3"] {
        let s = scenario(name);
        if s.config.run.pairs < 1000 || s.config.run.triples < 300 {
            return Err(format!("{name}: fewer than 1000 pairs or 300 triples"));
        }
        let out = run_suite(&s, Suite::Axioms);
        for id in laws {
            let d = passed(&out, id)?;
            within(&format!("{name} {id}"), d, 1e-9)?;
            worst = worst.max(d);
        }
    }
    let mut detected = Vec::new();
    for (name, id) in [("mutated_conjugation", "axioms.pathclass"), ("mutated_quotient", "axioms.quotient")] {
        let out = run_suite(&scenario(name), Suite::Axioms);
        let c = check(&out, id)?;
        let d = defect(c)?;
        if c.status != Status::Fail || d <= 1e-3 {
            return Err(format!("{name}: mutation not detected ({id} defect {d:e})"));
        }
        if out.report.exit_code() != 1 {
            return Err(format!("{name}: exit code {}", out.report.exit_code()));
        }
        detected.push(format!("{id} {d:.2}"));
    }
    Ok(format!("worst law defect {worst:.1e} over 5 constructions; mutations detected: {}", detected.join(", ")))
}

fn c2_transport() -> Verdict {
    let names = [
        "flat_circle",
        "circle_quarter",
        "circle_third",
        "torus_commuting",
        "torus_so3",
        "closure_torus",
        "mapping_torus_charts",
    ];
    let mut iso: f64 = 0.0;
    let mut orders = Vec::new();
    for name in names {
        let s = scenario(name);
        if s.config.run.transport_step != 1e-3 {
            return Err(format!("{name}: transport step {}", s.config.run.transport_step));
        }
        let out = run_filtered(&s, Suite::Transport, &["transport.isometry", "transport.order", "transport.loop"]);
        iso = iso.max(passed(&out, "transport.isometry")?);
        let order = check(&out, "transport.order")?;
        if order.status != Status::Pass {
            return Err(format!("{name}: {}", order.detail));
        }
        if !order.detail.contains("exact") {
            let p = defect(order)?;
            if !(3.5..=4.5).contains(&p) {
                return Err(format!("{name}: observed order {p}"));
            }
            orders.push(format!("{p:.2}"));
        }
    }
    within("isometry defect", iso, 1e-8)?;
    let mut loops = Vec::new();
    for name in ["circle_quarter", "circle_third"] {
        let out = run_filtered(&scenario(name), Suite::Transport, &["transport.loop"]);
        let d = passed(&out, "transport.loop.closed_form")?;
        within(&format!("{name} closed form"), d, 1e-6)?;
        loops.push(format!("{d:.1e}"));
    }
    Ok(format!(
        "isometry {iso:.1e} on {} scenarios; closed form c=1/4, 1/3: {}; orders {}",
        names.len(),
        loops.join(", "),
        orders.join(", ")
    ))
}

fn c3_holonomy() -> Verdict {
    let out = run_filtered(&scenario("circle_third"), Suite::Transport, &["transport.loop"]);
    let cube = passed(&out, "transport.loop.order")?;
    within("‖g³ − I‖", cube, 1e-6)?;
    let mut dims = Vec::new();
    for (name, expected) in [("flat_circle", 0), ("circle_quarter", 1), ("torus_so3", 3)] {
        let s = scenario(name);
        if s.config.expect.holonomy_dim != Some(expected) {
            return Err(format!("{name}: expected dimension not declared as {expected}"));
        }
        let out = run_filtered(&s, Suite::Transport, &["transport.holonomy_dim"]);
        passed(&out, "transport.holonomy_dim")?;
        dims.push(format!("{name} {expected}"));
    }
    // Independent oracle: the constant coefficients of the so(3) scenario bracket-generate so(3).
    let s = scenario("torus_so3");
    let coefficients: Vec<SkewElement> = (0..2)
        .map(|i| {
            let mut e = vec![0.0; 2];
            e[i] = 1.0;
            s.connection.coefficient(&[0.3, 0.2], &e)
        })
        .collect();
    let rank = bracket_closure_rank(&coefficients).map_err(|e| e.to_string())?;
    if rank != 3 {
        return Err(format!("bracket closure rank {rank}"));
    }
    Ok(format!("‖g³ − I‖ = {cube:.1e} with g ≠ I; dim h_b: {}; bracket oracle rank {rank}", dims.join(", ")))
}

fn c4_linearization() -> Verdict {
    let out = run_suite(&scenario("circle_quarter"), Suite::Linearize);
    let linear = passed(&out, "linearize.rotation_plus_quadratic.linear_part")?;
    within("linear part of J·v + ‖v‖²e₁", linear, 1e-6)?;
    let tangent =
        passed(&out, "linearize.rotation_plus_quadratic.killing")?.max(passed(&out, "linearize.horizontal.killing")?);
    within("Killing defect", tangent, 1e-6)?;
    let squeeze = passed(&out, "linearize.squeeze.killing")?;
    if squeeze < 0.9 {
        return Err(format!("diag(1,−1) defect {squeeze}"));
    }
    Ok(format!("‖X^ℓ − J‖ = {linear:.1e}; Killing defect {tangent:.1e}; diag(1,−1) defect {squeeze:.2}"))
}

fn c5_model_equality() -> Verdict {
    let mut parts = Vec::new();
    for name in ["circle_quarter", "torus_commuting"] {
        let s = scenario(name);
        let out = run_filtered(&s, Suite::Linearize, &["linearize.flows", "linearize.factor_flow"]);
        let d = passed(&out, "linearize.flows")?;
        within(&format!("{name} Hausdorff"), d, 2.0 * s.config.run.epsilon)?;
        let orth = passed(&out, "linearize.factor_flow")?;
        within(&format!("{name} k_t orthogonality and k_0"), orth, 1e-8)?;
        let inv = passed(&out, "linearize.factor_flow.invariants")?;
        within(&format!("{name} k_t invariants"), inv, 1e-6)?;
        parts.push(format!("{name}: Hausdorff {d:.3} ≤ {}, k_t {orth:.1e}/{inv:.1e}", 2.0 * s.config.run.epsilon));
    }
    Ok(parts.join("; "))
}

fn c6_orbits() -> Verdict {
    let mut parts = Vec::new();
    for name in ["circle_quarter", "torus_commuting"] {
        let s = scenario(name);
        let out = run_filtered(&s, Suite::Leaves, &["leaves.orbit"]);
        let d = passed(&out, "leaves.orbit")?;
        within(&format!("{name} orbit Hausdorff"), d, 2.0 * s.config.run.epsilon)?;
        parts.push(format!("{name} {d:.3} ≤ {}", 2.0 * s.config.run.epsilon));
    }
    Ok(parts.join("; "))
}

fn c7_closure() -> Verdict {
    let s = scenario("closure_torus");
    let norm = s.seed_point.fiber.iter().map(|x| x * x).sum::<f64>().sqrt();
    within("|radius − 1|", (norm - 1.0).abs(), 1e-12)?;
    if s.config.run.closure.steps != [100, 1000, 10000] {
        return Err(format!("budgets {:?}", s.config.run.closure.steps));
    }
    let out = run_filtered(&s, Suite::Leaves, &["leaves.closure"]);
    let d = passed(&out, "leaves.closure")?;
    within("Hausdorff at N = 10⁴", d, 0.05)?;
    Ok(check(&out, "leaves.closure")?.detail.clone())
}

fn c8_dimensions() -> Verdict {
    let mut parts = Vec::new();
    let cases = [("circle_quarter", false, 2), ("closure_torus", false, 2), ("closure_torus", true, 3)];
    for (name, closure, expected) in cases {
        let s = scenario(name);
        let algebra = if closure { &s.fiber.closure().algebra } else { s.fiber.algebra() };
        let mut r = rng::stream(5, "acceptance-frames", 0);
        let frames: Vec<FrameElement> = (0..6)
            .map(|_| FrameElement {
                base: s.space.random_point(&mut r),
                frame: random_orthogonal(s.fiber.fiber_dim(), &mut r),
            })
            .collect();
        let report = lifted_leaf_dim_check(&s.connection, algebra, &frames, 1e-3, 5).map_err(|e| e.to_string())?;
        if report.expected != expected || !report.passed() {
            return Err(format!("{name}: expected {expected}, oracle {}, ranks {:?}", report.expected, report.ranks));
        }
        parts.push(format!("{name}{} {:?}", if closure { " (closure)" } else { "" }, report.ranks));
    }
    Ok(parts.join("; "))
}

fn chart_ok(what: &str, r: &ChartCheckReport, tol: f64) -> Result<String, String> {
    if !r.passed(tol) {
        return Err(format!("{what}: {r:?}"));
    }
    Ok(format!("{what} {:.1e} ({}/{})", r.max_defect, r.evaluated(), r.samples))
}

fn c9_charts() -> Verdict {
    let s = scenario("mapping_torus_charts");
    let atlas = Atlas::new(PathClassGroupoid::new(s.connection.clone(), s.fiber.clone(), s.config.run.transport_step));
    let d: Vec<_> = s.charts.iter().map(|c| &c.datum).collect();
    let rt = round_trip_check(&atlas, d[0], 200, 1);
    if rt.evaluated() < 200 {
        return Err(format!("round trip evaluated {} of 200", rt.evaluated()));
    }
    let shrink = s.config.run.chart_shrink;
    Ok([
        chart_ok("round trip", &rt, 1e-8)?,
        chart_ok("transition", &transition_oracle_check(&atlas, d[0], d[1], 200, shrink, 2), 1e-7)?,
        chart_ok("cocycle", &cocycle_check(&atlas, [d[0], d[1], d[2]], 200, shrink, 3), 1e-7)?,
    ]
    .join("; "))
}

fn c10_determinism() -> Verdict {
    let s = scenario("circle_quarter");
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
        pool.install(|| run_suite(&s, Suite::All))
    };
    let one = run(1);
    let again = run(1);
    let four = run(4);
    let json = one.report.to_json();
    if json != again.report.to_json() || json != four.report.to_json() {
        return Err("report JSON differs between runs".into());
    }
    let svgs = |o: &RunOutput| -> Vec<String> {
        o.plots
            .iter()
            .map(|(spec, file)| {
                let axes = foliation_core::scenario::parse_projection(&spec.proj).expect("projection");
                foliation_core::scenario::leaf_plot(file, &axes).expect("plot")
            })
            .collect()
    };
    if svgs(&one) != svgs(&four) {
        return Err("SVG output differs between thread counts".into());
    }
    Ok(format!("{} bytes of report JSON identical across 1, 1 and 4 threads", json.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("groupoid axioms and mutations", c1_groupoid_axioms, 30),
        ("transport isometry, closed form, order", c2_transport, 10),
        ("holonomy structure", c3_holonomy, 10),
        ("linearization and Killing fields", c4_linearization, 5),
        ("linearized flows equal F_ell leaves", c5_model_equality, 60),
        ("groupoid orbits equal F_ell leaves", c6_orbits, 60),
        ("closure density", c7_closure, 120),
        ("lifted leaf dimensions", c8_dimensions, 30),
        ("charts, transitions, cocycle", c9_charts, 30),
        ("determinism across thread counts", c10_determinism, u64::MAX),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Ok(_) if elapsed > Duration::from_secs(budget) => {
                Err(format!("took {:.1} s, budget {budget} s", elapsed.as_secs_f64()))
            }
            v => v,
        };
        let (mark, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {mark} [{:.1} s] {name}: {detail}", i + 1, elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
