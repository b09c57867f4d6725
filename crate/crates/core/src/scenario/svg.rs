//! Orthographic SVG projections of leaf samples.

use crate::foliation::LeafSample;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const CANVAS: f64 = 800.0;
const MARGIN: f64 = 60.0;
const POINT_RADIUS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PlotError {
    #[error("cannot plot an empty sample")]
    Empty,
    #[error("bad projection '{0}': expected 2 or 3 comma-separated coordinates such as x0,v0,v1")]
    Projection(String),
    #[error("coordinate '{name}' out of range for a sample with {base} base and {fiber} fiber coordinates")]
    Coordinate { name: String, base: usize, fiber: usize },
}

/// A coordinate of the total space: `x<i>` on the base or `v<i>` in the fiber.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Base(usize),
    Fiber(usize),
}

impl Axis {
    fn label(self) -> String {
        match self {
            Axis::Base(i) => format!("x{i}"),
            Axis::Fiber(i) => format!("v{i}"),
        }
    }
}

pub fn parse_projection(spec: &str) -> Result<Vec<Axis>, PlotError> {
    let axes: Vec<Axis> = spec
        .split(',')
        .map(|s| {
            let s = s.trim();
            let index = s.get(1..).and_then(|i| i.parse::<usize>().ok());
            match (s.chars().next(), index) {
                (Some('x'), Some(i)) => Ok(Axis::Base(i)),
                (Some('v'), Some(i)) => Ok(Axis::Fiber(i)),
                _ => Err(PlotError::Projection(spec.to_string())),
            }
        })
        .collect::<Result<_, _>>()?;
    if !(2..=3).contains(&axes.len()) {
        return Err(PlotError::Projection(spec.to_string()));
    }
    Ok(axes)
}

/// A leaf sample with the provenance stamped into its plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFile {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub sample: LeafSample,
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Projection `(x, y, z) ↦` screen plane for a fixed oblique view.
fn view3(p: [f64; 3]) -> [f64; 2] {
    let (az, el) = (0.6f64, 0.35f64);
    let (ca, sa, ce, se) = (az.cos(), az.sin(), el.cos(), el.sin());
    let x = ca * p[0] - sa * p[1];
    let depth = sa * p[0] + ca * p[1];
    [x, ce * p[2] - se * depth]
}

/// Deterministic 800×800 SVG of the sample projected on `axes`, one 2px circle per point.
pub fn leaf_plot(file: &SampleFile, axes: &[Axis]) -> Result<String, PlotError> {
    let sample = &file.sample;
    let first = sample.points.first().ok_or(PlotError::Empty)?;
    let (nb, nf) = (first.base.len(), first.fiber.len());
    for a in axes {
        let ok = match *a {
            Axis::Base(i) => i < nb,
            Axis::Fiber(i) => i < nf,
        };
        if !ok {
            return Err(PlotError::Coordinate { name: a.label(), base: nb, fiber: nf });
        }
    }
    let coord = |p: &crate::cloud::TotalPoint, a: Axis| match a {
        Axis::Base(i) => p.base[i],
        Axis::Fiber(i) => p.fiber[i],
    };
    let projected: Vec<[f64; 2]> = sample
        .points
        .iter()
        .map(|p| match axes.len() {
            2 => [coord(p, axes[0]), coord(p, axes[1])],
            _ => view3([coord(p, axes[0]), coord(p, axes[1]), coord(p, axes[2])]),
        })
        .collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for q in &projected {
        for k in 0..2 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if span > 1e-12 { (CANVAS - 2.0 * MARGIN) / span } else { 1.0 };
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let screen = |q: [f64; 2]| [CANVAS / 2.0 + (q[0] - mid[0]) * scale, CANVAS / 2.0 - (q[1] - mid[1]) * scale];

    let labels: Vec<String> = axes.iter().map(|a| a.label()).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">"
    );
    let _ = writeln!(
        svg,
        "<!-- scenario: {} | config sha256: {} | seed: {} | kind: {} | points: {} -->",
        file.scenario.replace("--", "- -"),
        file.config_hash,
        file.seed,
        sample.kind.label(),
        sample.points.len()
    );
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\"/>");
    let edge = CANVAS - MARGIN / 2.0;
    let _ = writeln!(svg, "<g stroke=\"black\" stroke-width=\"1\">");
    let _ = writeln!(svg, "<line x1=\"{m}\" y1=\"{edge}\" x2=\"{edge}\" y2=\"{edge}\"/>", m = MARGIN / 2.0);
    let _ = writeln!(svg, "<line x1=\"{m}\" y1=\"{edge}\" x2=\"{m}\" y2=\"{m}\"/>", m = MARGIN / 2.0);
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "<g font-family=\"monospace\" font-size=\"14\">");
    let (horizontal, vertical) = match axes.len() {
        2 => (labels[0].clone(), labels[1].clone()),
        _ => (format!("{} / {} (oblique)", labels[0], labels[1]), labels[2].clone()),
    };
    let _ =
        writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{horizontal}</text>", fmt(edge), fmt(CANVAS - 6.0));
    let _ = writeln!(svg, "<text x=\"6\" y=\"{}\">{vertical}</text>", fmt(MARGIN / 2.0 - 8.0));
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "<g fill=\"black\">");
    for q in projected {
        let s = screen(q);
        let _ = writeln!(svg, "<circle cx=\"{}\" cy=\"{}\" r=\"{POINT_RADIUS}\"/>", fmt(s[0]), fmt(s[1]));
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::TotalPoint;
    use crate::foliation::{Generation, LeafKind};

    fn file(points: Vec<TotalPoint>) -> SampleFile {
        SampleFile {
            scenario: "t".into(),
            config_hash: "abc".into(),
            seed: 3,
            sample: LeafSample {
                kind: LeafKind::FEll,
                seed_point: points.first().cloned().unwrap_or_else(|| TotalPoint::new(vec![0.0], vec![1.0, 0.0])),
                epsilon: 0.1,
                points,
                generation: Generation { group_steps: 0, words: vec![], seed: 3 },
                partial: false,
            },
        }
    }

    #[test]
    fn single_point_is_centered() {
        let f = file(vec![TotalPoint::new(vec![0.3], vec![1.0, 2.0])]);
        let svg = leaf_plot(&f, &parse_projection("v0,v1").unwrap()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("<circle cx=\"400.00\" cy=\"400.00\" r=\"1\"/>"));
        assert!(svg.contains("config sha256: abc | seed: 3"));
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\""));
    }

    #[test]
    fn circle_points_lie_on_a_circle() {
        let pts: Vec<TotalPoint> = (0..64)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 64.0;
                TotalPoint::new(vec![0.0], vec![0.7 * t.cos(), 0.7 * t.sin()])
            })
            .collect();
        let svg = leaf_plot(&file(pts), &parse_projection("v0,v1").unwrap()).unwrap();
        let radii: Vec<f64> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| {
                let nums: Vec<f64> = l.split('"').filter_map(|s| s.parse().ok()).collect();
                ((nums[0] - 400.0).powi(2) + (nums[1] - 400.0).powi(2)).sqrt()
            })
            .collect();
        let (min, max) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        assert!(max - min < 0.02, "{min} {max}");
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(leaf_plot(&file(vec![]), &[Axis::Fiber(0), Axis::Fiber(1)]), Err(PlotError::Empty));
        assert!(parse_projection("v0").is_err());
        assert!(parse_projection("v0,y1").is_err());
        let f = file(vec![TotalPoint::new(vec![0.0], vec![1.0, 0.0])]);
        assert!(matches!(leaf_plot(&f, &parse_projection("v0,v5").unwrap()), Err(PlotError::Coordinate { .. })));
        let three = leaf_plot(&f, &parse_projection("x0,v0,v1").unwrap()).unwrap();
        assert!(three.contains("x0 / v0 (oblique)"));
    }
}
