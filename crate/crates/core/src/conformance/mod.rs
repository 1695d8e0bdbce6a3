//! Pillar conformance checks.
//!
//! A node is probed for pillars 1–5 over its public API; a mesh deployment
//! (DMMS, hub and the nodes it lists) for pillars 6–10. Each pillar is a
//! fixed list of machine-checkable probes, a strict subset of what the
//! pillar asks for in prose.

mod mesh;
mod node;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use mesh::{check_mesh, MeshDescriptor};
pub use node::check_node;

use crate::node::Credentials;

pub const REPORT_VERSION: &str = "1";

pub fn pillar_name(pillar: u8) -> &'static str {
    match pillar {
        1 => "Persistent identifiers",
        2 => "Metadata by PID",
        3 => "Data by PID",
        4 => "Authentication and authorization",
        5 => "Access via analysis environments",
        6 => "Shared governance manifest",
        7 => "Minimum metadata",
        8 => "Mesh PIDs and resolution",
        9 => "Usage statistics",
        10 => "Public FAIR metadata API",
        _ => "unknown",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "N/A",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub probe: String,
    pub passed: bool,
    pub observed: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PillarCheck {
    pub pillar: u8,
    pub status: CheckStatus,
    pub evidence: Vec<Evidence>,
}

impl PillarCheck {
    fn from_probes(pillar: u8, probes: Probes) -> Self {
        let mut evidence = probes.0;
        evidence.sort_by(|a, b| a.probe.cmp(&b.probe));
        let status = if evidence.iter().all(|e| e.passed) {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            pillar,
            status,
            evidence,
        }
    }

    fn not_applicable(pillar: u8, probes: Probes) -> Self {
        let mut check = Self::from_probes(pillar, probes);
        check.status = CheckStatus::NotApplicable;
        check
    }

    pub fn failures(&self) -> impl Iterator<Item = &Evidence> {
        self.evidence.iter().filter(|e| !e.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Node { endpoint: String },
    Mesh { dmms: String, hub: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Pass,
    Fail,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub report_version: String,
    pub target: Target,
    pub checks: Vec<PillarCheck>,
    pub overall: Overall,
}

impl ConformanceReport {
    fn new(target: Target, mut checks: Vec<PillarCheck>) -> Self {
        checks.sort_by_key(|c| c.pillar);
        let overall = if checks.iter().all(|c| c.status != CheckStatus::Fail) {
            Overall::Pass
        } else {
            Overall::Fail
        };
        Self {
            report_version: REPORT_VERSION.into(),
            target,
            checks,
            overall,
        }
    }

    /// Every pillar fails with the connection error as evidence.
    fn unreachable(
        target: Target,
        pillars: std::ops::RangeInclusive<u8>,
        what: &str,
        error: &str,
    ) -> Self {
        let checks = pillars
            .map(|pillar| {
                let mut p = Probes::default();
                p.record(
                    "reachability",
                    false,
                    format!("{what}: {error}"),
                    "reachable endpoint",
                );
                PillarCheck::from_probes(pillar, p)
            })
            .collect();
        let mut report = Self::new(target, checks);
        report.overall = Overall::Unreachable;
        report
    }

    pub fn check(&self, pillar: u8) -> Option<&PillarCheck> {
        self.checks.iter().find(|c| c.pillar == pillar)
    }

    pub fn status(&self, pillar: u8) -> Option<CheckStatus> {
        self.check(pillar).map(|c| c.status)
    }

    /// Pillars that failed, ascending.
    pub fn failing(&self) -> Vec<u8> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.pillar)
            .collect()
    }

    /// `(passed, applicable)`.
    pub fn score(&self) -> (usize, usize) {
        let applicable = self
            .checks
            .iter()
            .filter(|c| c.status != CheckStatus::NotApplicable);
        let total = applicable.clone().count();
        (
            applicable.filter(|c| c.status == CheckStatus::Pass).count(),
            total,
        )
    }

    pub fn exit_code(&self) -> i32 {
        match self.overall {
            Overall::Pass => 0,
            Overall::Fail => 1,
            Overall::Unreachable => 2,
        }
    }
}

/// Credentials and AAE identifiers the probes use against a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// A registered user with no visas.
    pub registered: Option<Credentials>,
    /// A registered user whose visas cover the node's controlled objects.
    pub visa_holder: Option<Credentials>,
    /// An AAE the node is expected to trust.
    pub aae_id: String,
    /// An AAE the node must refuse.
    pub unlisted_aae_id: String,
}

impl Default for ProbeConfig {
    /// Matches the users and AAE in the shipped demo fixtures.
    fn default() -> Self {
        Self {
            registered: Some(Credentials::new("rita", "rita-secret")),
            visa_holder: Some(Credentials::new("u1", "u1-secret")),
            aae_id: "aae-1".into(),
            unlisted_aae_id: "aae-unlisted".into(),
        }
    }
}

#[derive(Debug, Default)]
struct Probes(Vec<Evidence>);

impl Probes {
    fn record(
        &mut self,
        probe: impl Into<String>,
        passed: bool,
        observed: impl Into<String>,
        expected: impl Into<String>,
    ) {
        self.0.push(Evidence {
            probe: probe.into(),
            passed,
            observed: observed.into(),
            expected: expected.into(),
        });
    }

    fn pass(
        &mut self,
        probe: impl Into<String>,
        observed: impl Into<String>,
        expected: impl Into<String>,
    ) {
        self.record(probe, true, observed, expected);
    }

    fn fail(
        &mut self,
        probe: impl Into<String>,
        observed: impl Into<String>,
        expected: impl Into<String>,
    ) {
        self.record(probe, false, observed, expected);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(crate::Error::BadRequest(format!(
                "unknown format `{other}`"
            ))),
        }
    }
}

pub fn render_report(report: &ConformanceReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(report: &ConformanceReport) -> String {
    let mut out = String::new();
    match &report.target {
        Target::Node { endpoint } => writeln!(out, "Conformance report (node {endpoint})"),
        Target::Mesh { dmms, hub } => {
            writeln!(out, "Conformance report (mesh: dmms {dmms}, hub {hub})")
        }
    }
    .unwrap();
    writeln!(out, "{:<8} {:<36} STATUS", "PILLAR", "NAME").unwrap();
    for pillar in 1..=10u8 {
        let status = report.status(pillar).map_or("-", CheckStatus::label);
        writeln!(out, "{:<8} {:<36} {}", pillar, pillar_name(pillar), status).unwrap();
    }
    let (passed, total) = report.score();
    writeln!(out, "Score: {passed}/{total} ({:?})", report.overall).unwrap();
    for check in report
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
    {
        writeln!(out, "Pillar {} failed:", check.pillar).unwrap();
        for e in check.failures() {
            writeln!(
                out,
                "  {}: observed {}; expected {}",
                e.probe, e.observed, e.expected
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(fail: Option<u8>) -> ConformanceReport {
        let checks = (1..=5)
            .map(|p| {
                let mut probes = Probes::default();
                probes.record(format!("p{p}.probe"), Some(p) != fail, "seen", "wanted");
                PillarCheck::from_probes(p, probes)
            })
            .collect();
        ConformanceReport::new(
            Target::Node {
                endpoint: "local://n".into(),
            },
            checks,
        )
    }

    #[test]
    fn text_has_ten_rows_and_score() {
        let text = render_report(&report(None), ReportFormat::Text);
        assert!(text.contains("5/5"));
        let rows = text.lines().filter(|l| {
            l.split_whitespace()
                .next()
                .is_some_and(|w| w.parse::<u8>().is_ok())
        });
        assert_eq!(rows.count(), 10);
    }

    #[test]
    fn failures_listed_with_evidence() {
        let r = report(Some(3));
        assert_eq!(r.failing(), vec![3]);
        assert_eq!(r.exit_code(), 1);
        let text = render_report(&r, ReportFormat::Text);
        assert!(text.contains("Pillar 3 failed:"));
        assert!(text.contains("p3.probe: observed seen; expected wanted"));
    }

    #[test]
    fn json_round_trip() {
        let r = report(Some(2));
        let back: ConformanceReport =
            serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.report_version, "1");
    }

    #[test]
    fn unreachable_fails_everything() {
        let r = ConformanceReport::unreachable(
            Target::Node {
                endpoint: "x".into(),
            },
            1..=5,
            "node",
            "refused",
        );
        assert_eq!(r.exit_code(), 2);
        assert_eq!(r.failing(), vec![1, 2, 3, 4, 5]);
        assert!(r.checks.iter().all(|c| !c.evidence.is_empty()));
    }
}
