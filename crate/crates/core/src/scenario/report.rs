//! Run reports and their JSON, CSV and text renderings.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The sampler ran out of budget, so the comparison says nothing.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    /// The claim the check tests.
    pub anchor: String,
    /// `None` when the check could not be evaluated.
    pub defect: Option<f64>,
    pub tol: f64,
    pub status: Status,
    pub detail: String,
    /// Seed, sample indices and inputs needed to replay a failure.
    pub replay: Option<String>,
}

impl CheckRecord {
    /// A check that passes when `defect ≤ tol`.
    pub fn at_most(id: impl Into<String>, anchor: &str, defect: f64, tol: f64, detail: impl Into<String>) -> Self {
        let status = if defect <= tol { Status::Pass } else { Status::Fail };
        Self {
            id: id.into(),
            anchor: anchor.into(),
            defect: Some(defect),
            tol,
            status,
            detail: detail.into(),
            replay: None,
        }
    }

    /// A check that passes when `defect ≥ tol`, for detected mutations and counterexamples.
    pub fn at_least(id: impl Into<String>, anchor: &str, defect: f64, tol: f64, detail: impl Into<String>) -> Self {
        let status = if defect >= tol { Status::Pass } else { Status::Fail };
        Self {
            id: id.into(),
            anchor: anchor.into(),
            defect: Some(defect),
            tol,
            status,
            detail: detail.into(),
            replay: None,
        }
    }

    pub fn error(id: impl Into<String>, anchor: &str, tol: f64, error: impl std::fmt::Display) -> Self {
        Self {
            id: id.into(),
            anchor: anchor.into(),
            defect: None,
            tol,
            status: Status::Fail,
            detail: format!("error: {error}"),
            replay: None,
        }
    }

    pub fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self
    }

    /// Marks the check inconclusive unless it already failed outright.
    pub fn inconclusive_if(mut self, partial: bool, why: &str) -> Self {
        if partial && self.status == Status::Pass {
            self.status = Status::Inconclusive;
            self.detail = format!("{}; {why}", self.detail);
        }
        self
    }

    pub fn with_replay(mut self, replay: impl Into<String>) -> Self {
        if self.status != Status::Pass {
            self.replay = Some(replay.into());
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tool_version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub suite: String,
    pub seed: u64,
    pub config_hash: String,
    pub environment: Environment,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub tally: Tally,
}

impl RunReport {
    pub fn new(
        scenario: &str,
        suite: &str,
        seed: u64,
        config_hash: String,
        mut checks: Vec<CheckRecord>,
        warnings: Vec<String>,
    ) -> Self {
        checks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut tally = Tally::default();
        for c in &checks {
            match c.status {
                Status::Pass => tally.pass += 1,
                Status::Fail => tally.fail += 1,
                Status::Inconclusive => tally.inconclusive += 1,
            }
        }
        Self {
            schema_version: super::config::SCHEMA_VERSION,
            scenario: scenario.to_string(),
            suite: suite.to_string(),
            seed,
            config_hash,
            environment: Environment::current(),
            warnings,
            checks,
            tally,
        }
    }

    /// No check failed; inconclusive checks only warn.
    pub fn passed(&self) -> bool {
        self.tally.fail == 0
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Columns `check_id, anchor, defect, tol, pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check_id,anchor,defect,tol,pass\n");
        for c in &self.checks {
            let defect = c.defect.map_or(String::new(), |d| format!("{d:e}"));
            let pass = match c.status {
                Status::Pass => "true",
                Status::Fail => "false",
                Status::Inconclusive => "inconclusive",
            };
            let _ = writeln!(out, "{},{},{},{:e},{}", csv_field(&c.id), csv_field(&c.anchor), defect, c.tol, pass);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} / suite {} / seed {}", self.scenario, self.suite, self.seed);
        for c in &self.checks {
            let mark = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Inconclusive => "INCONCLUSIVE",
            };
            let defect = c.defect.map_or("-".to_string(), |d| format!("{d:.3e}"));
            let _ = writeln!(out, "{mark:<12} {:<44} defect {defect:<10} tol {:.1e}  {}", c.id, c.tol, c.detail);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(
            out,
            "{} passed, {} failed, {} inconclusive",
            self.tally.pass, self.tally.fail, self.tally.inconclusive
        );
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_ordering() {
        let checks =
            vec![CheckRecord::at_most("b", "x, y", 0.5, 1.0, ""), CheckRecord::at_most("a", "plain", 2.0, 1.0, "")];
        let r = RunReport::new("s", "all", 1, "h".into(), checks, vec![]);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "check_id,anchor,defect,tol,pass");
        assert!(lines[1].starts_with("a,plain,2e0,1e0,false"));
        assert!(lines[2].starts_with("b,\"x, y\","));
        assert_eq!(r.exit_code(), 1);
    }

    #[test]
    fn inconclusive_does_not_fail() {
        let c = CheckRecord::at_most("a", "", 0.0, 1.0, "").inconclusive_if(true, "budget");
        let r = RunReport::new("s", "all", 1, "h".into(), vec![c], vec![]);
        assert_eq!(r.tally.inconclusive, 1);
        assert_eq!(r.exit_code(), 0);
    }
}
