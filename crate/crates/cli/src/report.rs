//! Human-readable and JSON renderings of scores and fix simulations.

use std::fmt::Write as _;
use std::str::FromStr;

use ctxvuln_core::fixsim::PlanComparison;
use ctxvuln_core::scoring::VulnerabilityScore;
use ctxvuln_core::vulnmatch::MatchReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub fn render_report(
    scores: &[VulnerabilityScore],
    matches: Option<&MatchReport>,
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(scores).expect("scores serialize") + "\n"
        }
        ReportFormat::Text => render_table(scores, matches),
    }
}

fn render_table(scores: &[VulnerabilityScore], matches: Option<&MatchReport>) -> String {
    let id_width = scores
        .iter()
        .map(|s| s.vuln_id.len())
        .max()
        .unwrap_or(0)
        .max("id".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<id_width$}  {:>10}  {:>8}",
        "rank", "id", "severity", "affected"
    );
    for (i, s) in scores.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<id_width$}  {:>10.4}  {:>8}",
            i + 1,
            s.vuln_id,
            s.severity,
            s.affected_nodes.len()
        );
    }
    if let Some(m) = matches.filter(|m| !m.unmatched.is_empty()) {
        let _ = writeln!(out, "\nunmatched: {}", m.unmatched.join(", "));
    }
    out
}

/// One bar row per step and plan, scaled to `width` columns at the server count.
pub fn render_step_plot(
    cmp: &PlanComparison,
    label_a: &str,
    label_b: &str,
    width: usize,
) -> String {
    let peak = cmp
        .a
        .alive_counts
        .iter()
        .chain(&cmp.b.alive_counts)
        .copied()
        .max()
        .unwrap_or(0)
        .max(1);
    let label_width = label_a.len().max(label_b.len());
    let mut out = String::new();
    for t in 0..cmp.a.alive_counts.len().max(cmp.b.alive_counts.len()) {
        for (label, counts) in [
            (label_a, &cmp.a.alive_counts),
            (label_b, &cmp.b.alive_counts),
        ] {
            let Some(&c) = counts.get(t) else { continue };
            let bar = "#".repeat(c * width / peak);
            let _ = writeln!(out, "t={t:<3} {label:<label_width$} |{bar:<width$}| {c}");
        }
    }
    let _ = writeln!(out, "auc {label_a}={} {label_b}={}", cmp.a.auc, cmp.b.auc);
    out
}
