//! Vulnerability database loading and keyword matching onto software nodes.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cdg::{Cdg, CdgNode};
use crate::error::{Error, Locator, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityRecord {
    pub id: String,
    #[serde(default)]
    pub summary: String,
    pub products: Vec<String>,
    pub base_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnMatch {
    pub vuln_id: String,
    pub affected_nodes: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub matches: Vec<VulnMatch>,
    /// Records that matched no software node.
    pub unmatched: Vec<String>,
}

fn cve_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").expect("valid pattern"))
}

fn check_record(r: &VulnerabilityRecord) -> std::result::Result<(), (&'static str, String)> {
    if !cve_pattern().is_match(&r.id) {
        return Err((
            "id",
            format!("`{}` is not a CVE-YYYY-NNNN identifier", r.id),
        ));
    }
    if !(0.0..=10.0).contains(&r.base_score) {
        return Err(("base_score", format!("{} is outside [0, 10]", r.base_score)));
    }
    if r.products.is_empty() || r.products.iter().any(|p| tokens(p).is_empty()) {
        return Err(("products", "needs at least one non-blank keyword".into()));
    }
    Ok(())
}

/// JSON array of `{id, summary, products, base_score}`.
pub fn load_vulndb(text: &str) -> Result<Vec<VulnerabilityRecord>> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(raw.len());
    let mut ids = HashSet::new();
    for (i, value) in raw.into_iter().enumerate() {
        let rec: VulnerabilityRecord = serde_json::from_value(value)
            .map_err(|e| Error::parse(Locator::Record(i), e.to_string()))?;
        check_record(&rec)
            .map_err(|(field, msg)| Error::parse(Locator::RecordField(i, field.into()), msg))?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate vulnerability id `{}`",
                rec.id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Lower-cased alphanumeric runs.
pub fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Decides whether a record applies to a software node.
pub trait Matcher: Sync {
    fn matches(&self, record: &VulnerabilityRecord, node: &CdgNode) -> bool;
}

/// A keyword matches when its tokens appear as a contiguous run of the
/// node name's tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordMatcher;

impl Matcher for KeywordMatcher {
    fn matches(&self, record: &VulnerabilityRecord, node: &CdgNode) -> bool {
        let name = tokens(&node.name);
        record.products.iter().any(|p| {
            let kw = tokens(p);
            !kw.is_empty() && name.windows(kw.len()).any(|w| w == kw.as_slice())
        })
    }
}

pub fn match_vulnerabilities(db: &[VulnerabilityRecord], cdg: &Cdg) -> MatchReport {
    match_vulnerabilities_with(db, cdg, &KeywordMatcher, Exec::default())
}

pub fn match_vulnerabilities_with(
    db: &[VulnerabilityRecord],
    cdg: &Cdg,
    matcher: &dyn Matcher,
    exec: Exec,
) -> MatchReport {
    let software: Vec<&CdgNode> = cdg.software_nodes().collect();
    let affected = exec.map(db, |rec| {
        software
            .iter()
            .filter(|n| matcher.matches(rec, n))
            .map(|n| n.id.clone())
            .collect::<BTreeSet<_>>()
    });
    let mut report = MatchReport::default();
    for (rec, nodes) in db.iter().zip(affected) {
        if nodes.is_empty() {
            report.unmatched.push(rec.id.clone());
        } else {
            report.matches.push(VulnMatch {
                vuln_id: rec.id.clone(),
                affected_nodes: nodes,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdg::{CdgEdge, EdgeKind};
    use crate::topology::NodeKind;

    fn cdg(names: &[(&str, &str)]) -> Cdg {
        let mut hosts: Vec<&str> = names.iter().map(|&(_, h)| h).collect();
        hosts.sort();
        hosts.dedup();
        let mut nodes: Vec<CdgNode> = hosts
            .iter()
            .map(|h| CdgNode::hardware(*h, NodeKind::Server))
            .collect();
        let mut edges = Vec::new();
        for &(c, h) in names {
            let n = CdgNode::software(c, h);
            edges.push(CdgEdge::new(&n.id, h, EdgeKind::HostedOn));
            nodes.push(n);
        }
        Cdg::from_parts(nodes, edges).unwrap()
    }

    fn rec(id: &str, products: &[&str]) -> VulnerabilityRecord {
        VulnerabilityRecord {
            id: id.into(),
            summary: String::new(),
            products: products.iter().map(|s| s.to_string()).collect(),
            base_score: 5.0,
        }
    }

    #[test]
    fn load_single_record() {
        let db = load_vulndb(r#"[{"id":"CVE-2015-7430","products":["hadoop"],"base_score":8.4}]"#)
            .unwrap();
        assert_eq!(db.len(), 1);
        assert_eq!(db[0].base_score, 8.4);
        assert!(load_vulndb("[]").unwrap().is_empty());
    }

    #[test]
    fn load_rejects_bad_records() {
        let err = load_vulndb(
            r#"[{"id":"CVE-2015-7430","products":["a"],"base_score":1},
                                 {"id":"CVE-2015-7431","products":["a"],"base_score":11}]"#,
        )
        .unwrap_err();
        match err {
            Error::Parse { at, .. } => assert_eq!(at, Locator::RecordField(1, "base_score".into())),
            other => panic!("{other:?}"),
        }
        assert!(load_vulndb(r#"[{"id":"BUG-1","products":["a"],"base_score":1}]"#).is_err());
        assert!(load_vulndb(r#"[{"id":"CVE-2015-1234","products":[],"base_score":1}]"#).is_err());
        assert!(load_vulndb(r#"[{"id":"CVE-2015-1234","base_score":1}]"#).is_err());
        let dup = r#"[{"id":"CVE-2015-1234","products":["a"],"base_score":1},
                      {"id":"CVE-2015-1234","products":["b"],"base_score":2}]"#;
        assert!(matches!(load_vulndb(dup), Err(Error::Validation(_))));
    }

    #[test]
    fn keyword_matches_by_token() {
        let c = cdg(&[("hadoop-namenode", "s1"), ("mysql", "s2")]);
        let r = match_vulnerabilities(&[rec("CVE-2015-7430", &["Hadoop"])], &c);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(
            r.matches[0].affected_nodes.iter().collect::<Vec<_>>(),
            vec!["hadoop-namenode@s1"]
        );
    }

    #[test]
    fn token_boundary() {
        let c = cdg(&[("switch-os-ios", "core1"), ("postgres", "s1")]);
        let r = match_vulnerabilities(
            &[
                rec("CVE-2016-1392", &["ios"]),
                rec("CVE-2016-0001", &["os"]),
            ],
            &c,
        );
        assert_eq!(r.matches[0].affected_nodes.len(), 1);
        assert!(r.matches[0].affected_nodes.contains("switch-os-ios@core1"));
        // "os" is a token of the switch os, never a substring match on postgres
        assert!(!r.matches[1].affected_nodes.contains("postgres@s1"));
    }

    #[test]
    fn multi_token_keyword_must_be_contiguous() {
        let c = cdg(&[("hadoop-hdfs-namenode", "s1"), ("hadoop-namenode", "s2")]);
        let r = match_vulnerabilities(&[rec("CVE-2015-7430", &["hadoop namenode"])], &c);
        assert_eq!(
            r.matches[0].affected_nodes.iter().collect::<Vec<_>>(),
            vec!["hadoop-namenode@s2"]
        );
    }

    #[test]
    fn unmatched_reported() {
        let c = cdg(&[("mysql", "s2")]);
        let r = match_vulnerabilities(&[rec("CVE-2015-7430", &["hadoop"])], &c);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched, vec!["CVE-2015-7430"]);
    }
}
