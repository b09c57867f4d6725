//! Validated scenario objects built from a config.

use super::config::{ConfigError, FieldSource, Matrix, Scalar, ScenarioConfig, ScopeSpec};
use crate::base::{BasePath, BaseSpace};
use crate::bundle::{Coefficient, ConnectionField, Scope};
use crate::charts::{ChartDatum, SimpleNeighborhood};
use crate::cloud::TotalPoint;
use crate::expr::{Expr, VarScope};
use crate::foliation::{
    FiberFoliation, GeneratorField, GroupClosureSpec, HorizontalField, Invariant, TotalVectorField, VectorField,
};
use crate::lie::{LieSubalgebra, OrthogonalElement, SkewElement, SquareMatrix};
use std::sync::Arc;

/// A field of the scenario with its expectations.
#[derive(Clone, Debug)]
pub struct ScenarioField {
    pub name: String,
    pub field: Arc<dyn VectorField>,
    pub linear_part: Option<SquareMatrix>,
    pub killing: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct NamedChart {
    pub name: String,
    pub datum: ChartDatum,
}

/// Everything a suite needs, checked against the config invariants.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub space: BaseSpace,
    pub connection: ConnectionField,
    pub fiber: FiberFoliation,
    pub fields: Vec<ScenarioField>,
    pub charts: Vec<NamedChart>,
    pub seed_point: TotalPoint,
    pub loop_path: Option<BasePath>,
    pub loop_matrix: Option<OrthogonalElement>,
}

fn square(pointer: &str, rows: &Matrix, n: usize) -> Result<SquareMatrix, ConfigError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ConfigError::new(pointer, format!("expected a {n}×{n} matrix")));
    }
    SquareMatrix::from_rows(rows).map_err(|e| ConfigError::new(pointer, e.to_string()))
}

fn skew(pointer: &str, rows: &Matrix, n: usize) -> Result<SkewElement, ConfigError> {
    let m = square(pointer, rows, n)?;
    SkewElement::new(m).map_err(|e| ConfigError::new(pointer, format!("matrix is not skew-symmetric: {e}")))
}

fn orthogonal(pointer: &str, rows: &Matrix, n: usize) -> Result<OrthogonalElement, ConfigError> {
    let m = square(pointer, rows, n)?;
    OrthogonalElement::new(m).map_err(|e| ConfigError::new(pointer, format!("matrix is not orthogonal: {e}")))
}

fn expr(pointer: &str, source: &str, scope: VarScope) -> Result<Expr, ConfigError> {
    Expr::parse(source, scope).map_err(|e| ConfigError::new(pointer, e.to_string()))
}

fn check_point(space: &BaseSpace, pointer: &str, p: &[f64]) -> Result<(), ConfigError> {
    space.check_point(p).map_err(|e| ConfigError::new(pointer, e.to_string()))
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self, ConfigError> {
        let space = BaseSpace::new(config.base.clone()).map_err(|e| ConfigError::new("/base", e.to_string()))?;
        let d = space.dim();
        let n = config.fiber.n;
        if !(2..=8).contains(&n) {
            return Err(ConfigError::new("/fiber/n", format!("fiber dimension {n} outside 2..=8")));
        }
        let run = &config.run;
        if !(run.transport_step > 0.0 && run.transport_step <= 0.1) {
            return Err(ConfigError::new("/run/transport_step", "step must lie in (0, 0.1]"));
        }
        if !(run.groupoid_step > 0.0 && run.groupoid_step <= 0.1) {
            return Err(ConfigError::new("/run/groupoid_step", "step must lie in (0, 0.1]"));
        }
        if !(run.epsilon > 0.0) {
            return Err(ConfigError::new("/run/epsilon", "ε must be positive"));
        }
        if !(config.tau() > 0.0) {
            return Err(ConfigError::new("/run/tau", "τ must be positive"));
        }
        for (pointer, value) in [
            ("/run/flow_substep", run.flow_substep),
            ("/run/sample_substep", run.sample_substep),
            ("/run/chart_shrink", run.chart_shrink),
            ("/run/closure/tau", run.closure.tau),
            ("/run/closure/epsilon", run.closure.epsilon),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::new(pointer, "must be positive"));
            }
        }
        if run.chart_shrink > 1.0 {
            return Err(ConfigError::new("/run/chart_shrink", "must lie in (0, 1]"));
        }
        let lambdas_ok = run.lambdas.len() >= 3
            && run.lambdas.iter().all(|l| *l > 0.0 && *l <= 1.0)
            && run.lambdas.windows(2).all(|w| w[1] < w[0]);
        if !lambdas_ok {
            return Err(ConfigError::new("/run/lambdas", "need at least 3 strictly decreasing factors in (0, 1]"));
        }
        if run.flow_times.first() != Some(&0.0) || run.flow_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::new("/run/flow_times", "times must start at 0 and increase"));
        }

        let connection = build_connection(&config, &space, n)?;

        let generators = config
            .fiber
            .generators
            .iter()
            .enumerate()
            .map(|(i, m)| skew(&format!("/fiber/generators/{i}"), m, n))
            .collect::<Result<Vec<_>, _>>()?;
        let algebra =
            LieSubalgebra::new(n, generators).map_err(|e| ConfigError::new("/fiber/generators", e.to_string()))?;
        let finite = config
            .fiber
            .finite_part
            .iter()
            .enumerate()
            .map(|(i, m)| orthogonal(&format!("/fiber/finite_part/{i}"), m, n))
            .collect::<Result<Vec<_>, _>>()?;
        let invariants = config
            .fiber
            .invariants
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(Invariant::new(
                    s.name.clone(),
                    expr(&format!("/fiber/invariants/{i}/expr"), &s.expr, VarScope { base: 0, fiber: n })?,
                ))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let closure = match &config.fiber.closure {
            None => GroupClosureSpec { algebra: algebra.clone(), rational: vec![] },
            Some(c) => {
                let gens = c
                    .generators
                    .iter()
                    .enumerate()
                    .map(|(i, m)| skew(&format!("/fiber/closure/generators/{i}"), m, n))
                    .collect::<Result<Vec<_>, _>>()?;
                let closure_algebra = LieSubalgebra::new(n, gens)
                    .map_err(|e| ConfigError::new("/fiber/closure/generators", e.to_string()))?;
                GroupClosureSpec { algebra: closure_algebra, rational: c.rational.clone() }
            }
        };
        let fiber = FiberFoliation::new(algebra, finite, invariants, closure).map_err(|e| {
            let pointer = match e {
                crate::foliation::FoliationError::ClosureTooSmall => "/fiber/closure",
                crate::foliation::FoliationError::InvariantViolation { .. } => "/fiber/invariants",
                _ => "/fiber",
            };
            ConfigError::new(pointer, e.to_string())
        })?;

        let fields = config
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| build_field(&format!("/fields/{i}"), f, &connection, d, n))
            .collect::<Result<Vec<_>, _>>()?;

        let mut charts = Vec::new();
        for (i, c) in config.charts.iter().enumerate() {
            let at = format!("/charts/{i}");
            for (j, p) in c.alpha.iter().enumerate() {
                check_point(&space, &format!("{at}/alpha/{j}"), p)?;
            }
            let alpha = BasePath::polyline(&space, c.alpha.clone())
                .map_err(|e| ConfigError::new(format!("{at}/alpha"), e.to_string()))?;
            let hood = |name: &str, b: &super::config::BoxSpec| {
                SimpleNeighborhood::new(&space, b.center.clone(), b.lower.clone(), b.upper.clone())
                    .map_err(|e| ConfigError::new(format!("{at}/{name}"), e.to_string()))
            };
            let datum = ChartDatum::new(&space, alpha, hood("u0", &c.u0)?, hood("u1", &c.u1)?)
                .map_err(|e| ConfigError::new(at.clone(), e.to_string()))?;
            charts.push(NamedChart { name: c.name.clone(), datum });
        }

        let seed_point = match &run.seed_point {
            Some((b, v)) => {
                check_point(&space, "/run/seed_point/0", b)?;
                if v.len() != n {
                    return Err(ConfigError::new("/run/seed_point/1", format!("fiber vector needs {n} entries")));
                }
                TotalPoint::new(b.clone(), v.clone())
            }
            None => {
                let mut v = vec![0.0; n];
                v[0] = 1.0;
                let (lo, hi) = space.sampling_domain();
                let b =
                    lo.iter().zip(&hi).map(|(l, h)| if *l <= 0.0 && 0.0 <= *h { 0.0 } else { 0.5 * (l + h) }).collect();
                TotalPoint::new(b, v)
            }
        };

        let (loop_path, loop_matrix) = match &config.expect.holonomy_loop {
            None => (None, None),
            Some(l) => {
                for (j, p) in l.path.iter().enumerate() {
                    check_point(&space, &format!("/expect/holonomy_loop/path/{j}"), p)?;
                }
                let path = BasePath::polyline(&space, l.path.clone())
                    .map_err(|e| ConfigError::new("/expect/holonomy_loop/path", e.to_string()))?;
                if !path.is_leafwise() || !space.same_point(path.start(), path.end()) {
                    return Err(ConfigError::new("/expect/holonomy_loop/path", "expected a leafwise loop"));
                }
                let m = l.matrix.as_ref().map(|m| orthogonal("/expect/holonomy_loop/matrix", m, n)).transpose()?;
                (Some(path), m)
            }
        };

        Ok(Self { config, space, connection, fiber, fields, charts, seed_point, loop_path, loop_matrix })
    }
}

fn build_connection(config: &ScenarioConfig, space: &BaseSpace, n: usize) -> Result<ConnectionField, ConfigError> {
    let scope = match config.connection.scope {
        ScopeSpec::Leafwise => Scope::Leafwise,
        ScopeSpec::Full => Scope::Full,
    };
    let d = space.dim();
    let coefficients = &config.connection.coefficients;
    if coefficients.is_empty() {
        return Ok(ConnectionField::flat(space.clone(), n, scope));
    }
    if coefficients.len() != d {
        return Err(ConfigError::new(
            "/connection/coefficients",
            format!("expected {d} matrices, one per base coordinate"),
        ));
    }
    let vars = VarScope { base: d, fiber: 0 };
    let mut rng = crate::rng::stream(0, "config-probes", 0);
    let probes: Vec<Vec<f64>> = (0..8).map(|_| space.random_point(&mut rng)).collect();
    let mut built = Vec::with_capacity(d);
    for (i, rows) in coefficients.iter().enumerate() {
        let at = format!("/connection/coefficients/{i}");
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(ConfigError::new(at, format!("expected a {n}×{n} matrix")));
        }
        let exprs = rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .map(|(c, s)| match s {
                        Scalar::Number(x) => Ok(Expr::constant(*x)),
                        Scalar::Expr(e) => expr(&format!("{at}/{r}/{c}"), e, vars),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        built.push(Coefficient::from_exprs(i, exprs, &probes).map_err(|e| ConfigError::new(at, e.to_string()))?);
    }
    ConnectionField::new(space.clone(), n, scope, built).map_err(|e| ConfigError::new("/connection", e.to_string()))
}

fn build_field(
    at: &str,
    spec: &super::config::FieldSpec,
    connection: &ConnectionField,
    d: usize,
    n: usize,
) -> Result<ScenarioField, ConfigError> {
    let field: Arc<dyn VectorField> = match &spec.source {
        FieldSource::Horizontal { coordinate } => {
            if *coordinate >= d {
                return Err(ConfigError::new(
                    format!("{at}/source/horizontal/coordinate"),
                    format!("base has {d} coordinates"),
                ));
            }
            Arc::new(HorizontalField::new(connection.clone(), *coordinate))
        }
        FieldSource::Generator { matrix } => Arc::new(GeneratorField::new(
            spec.name.clone(),
            d,
            skew(&format!("{at}/source/generator/matrix"), matrix, n)?,
        )),
        FieldSource::Expression { base, fiber } => {
            if base.len() != d || fiber.len() != n {
                return Err(ConfigError::new(
                    format!("{at}/source/expression"),
                    format!("expected {d} base and {n} fiber components"),
                ));
            }
            let vars = VarScope { base: d, fiber: n };
            let parse = |kind: &str, list: &[String]| {
                list.iter()
                    .enumerate()
                    .map(|(k, s)| expr(&format!("{at}/source/expression/{kind}/{k}"), s, vars))
                    .collect::<Result<Vec<_>, _>>()
            };
            Arc::new(TotalVectorField {
                name: spec.name.clone(),
                base_part: parse("base", base)?,
                fiber_part: parse("fiber", fiber)?,
            })
        }
    };
    let linear_part = spec.linear_part.as_ref().map(|m| square(&format!("{at}/linear_part"), m, n)).transpose()?;
    Ok(ScenarioField { name: spec.name.clone(), field, linear_part, killing: spec.killing })
}
