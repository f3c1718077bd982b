//! Software dependency mining from service logs.
//!
//! Events are bucketed per host into fixed windows anchored at the host's
//! first event, each bucket becomes a transaction, and pairwise association
//! rules `A -> B` mined with Apriori turn into "B depends on A".

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Locator, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub timestamp_ms: u64,
    pub node: String,
    pub component: String,
}

impl LogEvent {
    pub fn new(timestamp_ms: u64, node: impl Into<String>, component: impl Into<String>) -> Self {
        Self {
            timestamp_ms,
            node: node.into(),
            component: component.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub node: String,
    pub window_start: u64,
    /// Distinct components in order of first occurrence.
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: String,
    pub consequent: String,
    pub support: f64,
    pub confidence: f64,
}

/// `sw` on `node` depends on every component in `dep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareDependency {
    pub node: String,
    pub sw: String,
    pub dep: Vec<String>,
    /// Rule confidence per entry of `dep`; empty when unknown (treated as 1).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confidence: Vec<f64>,
}

impl SoftwareDependency {
    pub fn new<S: Into<String>>(
        node: impl Into<String>,
        sw: impl Into<String>,
        dep: Vec<S>,
    ) -> Self {
        Self {
            node: node.into(),
            sw: sw.into(),
            dep: dep.into_iter().map(Into::into).collect(),
            confidence: Vec::new(),
        }
    }

    pub fn confidence_of(&self, i: usize) -> f64 {
        self.confidence.get(i).copied().unwrap_or(1.0)
    }

    /// `<node="M" sw="S" dep="x,y,z"/>`
    pub fn to_line(&self) -> String {
        format!(
            "<node=\"{}\" sw=\"{}\" dep=\"{}\"/>",
            self.node,
            self.sw,
            self.dep.join(",")
        )
    }
}

pub fn render_dependency_lines(deps: &[SoftwareDependency]) -> String {
    let mut out = String::new();
    for d in deps {
        let _ = writeln!(out, "{}", d.to_line());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningParams {
    pub window_ms: u64,
    pub min_support: f64,
    pub min_confidence: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        Self {
            window_ms: 1000,
            min_support: 0.1,
            min_confidence: 0.7,
        }
    }
}

fn check_thresholds(min_support: f64, min_confidence: f64) -> Result<()> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(Error::Argument(format!(
            "min_support must be in (0, 1], got {min_support}"
        )));
    }
    if !(min_confidence > 0.0 && min_confidence <= 1.0) {
        return Err(Error::Argument(format!(
            "min_confidence must be in (0, 1], got {min_confidence}"
        )));
    }
    Ok(())
}

/// Load events from CSV (`timestamp_ms,node,component`, header optional)
/// or a JSON array of objects with those keys.
pub fn load_events(text: &str, json: bool) -> Result<Vec<LogEvent>> {
    let events: Vec<LogEvent> = if json {
        serde_json::from_str(text)?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut out = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::parse(Locator::Line(line), e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let ts = rec.get(0).unwrap_or("");
            if i == 0 && ts == "timestamp_ms" {
                continue;
            }
            let ts = ts.parse::<u64>().map_err(|e| {
                Error::parse(
                    Locator::LineField(line, "timestamp_ms".into()),
                    e.to_string(),
                )
            })?;
            let get = |idx: usize, name: &str| {
                rec.get(idx)
                    .map(str::to_string)
                    .ok_or_else(|| Error::parse(Locator::LineField(line, name.into()), "missing"))
            };
            out.push(LogEvent::new(ts, get(1, "node")?, get(2, "component")?));
        }
        out
    };
    for (i, e) in events.iter().enumerate() {
        if e.component.is_empty() {
            return Err(Error::parse(
                Locator::RecordField(i, "component".into()),
                "empty",
            ));
        }
        if e.node.is_empty() {
            return Err(Error::parse(
                Locator::RecordField(i, "node".into()),
                "empty",
            ));
        }
    }
    Ok(events)
}

/// Pull `(timestamp, node, component)` out of raw log lines with a
/// user-supplied regex. The pattern needs named groups `ts` and `component`;
/// `node` is optional and falls back to `default_node`. Lines that do not
/// match are skipped.
pub fn extract_events(
    text: &str,
    pattern: &Regex,
    default_node: Option<&str>,
) -> Result<Vec<LogEvent>> {
    let names: Vec<&str> = pattern.capture_names().flatten().collect();
    for required in ["ts", "component"] {
        if !names.contains(&required) {
            return Err(Error::Argument(format!(
                "pattern lacks named group `{required}`"
            )));
        }
    }
    if !names.contains(&"node") && default_node.is_none() {
        return Err(Error::Argument(
            "pattern lacks a `node` group and no default node was given".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(caps) = pattern.captures(line) else {
            continue;
        };
        let ts = caps["ts"].parse::<u64>().map_err(|e| {
            Error::parse(Locator::LineField(i as u64 + 1, "ts".into()), e.to_string())
        })?;
        let node = caps
            .name("node")
            .map(|m| m.as_str())
            .or(default_node)
            .unwrap_or_default();
        let component = &caps["component"];
        if component.is_empty() || node.is_empty() {
            continue;
        }
        out.push(LogEvent::new(ts, node, component));
    }
    Ok(out)
}

/// Bucket events per node into fixed windows `[t0 + i*w, t0 + (i+1)*w)`.
/// Output is ordered by node, then window start.
pub fn group_transactions(events: &[LogEvent], window_ms: u64) -> Result<Vec<Transaction>> {
    if window_ms == 0 {
        return Err(Error::Argument("window_ms must be positive".into()));
    }
    let mut by_node: BTreeMap<&str, Vec<&LogEvent>> = BTreeMap::new();
    for e in events {
        by_node.entry(&e.node).or_default().push(e);
    }
    let mut out = Vec::new();
    for (node, evs) in by_node {
        out.extend(node_transactions(node, evs, window_ms));
    }
    Ok(out)
}

fn node_transactions(node: &str, mut evs: Vec<&LogEvent>, window_ms: u64) -> Vec<Transaction> {
    evs.sort_by_key(|e| e.timestamp_ms);
    let Some(t0) = evs.first().map(|e| e.timestamp_ms) else {
        return Vec::new();
    };
    let mut out: Vec<Transaction> = Vec::new();
    let mut current: Option<u64> = None;
    for e in evs {
        let slot = (e.timestamp_ms - t0) / window_ms;
        if current != Some(slot) {
            current = Some(slot);
            out.push(Transaction {
                node: node.to_string(),
                window_start: t0 + slot * window_ms,
                items: Vec::new(),
            });
        }
        let tx = out.last_mut().expect("pushed above");
        if !tx.items.contains(&e.component) {
            tx.items.push(e.component.clone());
        }
    }
    out
}

fn cmp_rules(a: &AssociationRule, b: &AssociationRule) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(b.support.total_cmp(&a.support))
        .then_with(|| a.antecedent.cmp(&b.antecedent))
        .then_with(|| a.consequent.cmp(&b.consequent))
}

/// Pairwise rules `X -> Y` meeting both thresholds where X precedes Y in a
/// strict majority of the transactions containing both.
pub fn apriori_rules(
    transactions: &[Transaction],
    min_support: f64,
    min_confidence: f64,
) -> Result<Vec<AssociationRule>> {
    check_thresholds(min_support, min_confidence)?;
    let total = transactions.len();
    if total == 0 {
        return Ok(Vec::new());
    }
    let frac = |count: usize| count as f64 / total as f64;

    // level 1
    let mut item_count: BTreeMap<&str, usize> = BTreeMap::new();
    for tx in transactions {
        for item in &tx.items {
            *item_count.entry(item).or_default() += 1;
        }
    }
    let frequent: Vec<&str> = item_count
        .iter()
        .filter(|&(_, &c)| frac(c) >= min_support)
        .map(|(&i, _)| i)
        .collect();
    let rank: HashMap<&str, usize> = frequent.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    // level 2: only pairs of frequent items are candidates
    // (both, first-before-second) keyed by (lo, hi) rank
    let mut pairs: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for tx in transactions {
        let present: Vec<(usize, usize)> = tx
            .items
            .iter()
            .enumerate()
            .filter_map(|(pos, item)| rank.get(item.as_str()).map(|&r| (r, pos)))
            .collect();
        for (i, &(ra, pa)) in present.iter().enumerate() {
            for &(rb, pb) in &present[i + 1..] {
                let (key, lo_first) = if ra < rb {
                    ((ra, rb), pa < pb)
                } else {
                    ((rb, ra), pb < pa)
                };
                let entry = pairs.entry(key).or_default();
                entry.0 += 1;
                if lo_first {
                    entry.1 += 1;
                }
            }
        }
    }

    let mut rules = Vec::new();
    for (&(lo, hi), &(both, lo_first)) in &pairs {
        let support = frac(both);
        if support < min_support {
            continue;
        }
        for (x, y, x_first) in [(lo, hi, lo_first), (hi, lo, both - lo_first)] {
            let confidence = both as f64 / item_count[frequent[x]] as f64;
            if confidence >= min_confidence && 2 * x_first > both {
                rules.push(AssociationRule {
                    antecedent: frequent[x].to_string(),
                    consequent: frequent[y].to_string(),
                    support,
                    confidence,
                });
            }
        }
    }
    rules.sort_by(cmp_rules);
    Ok(rules)
}

/// Fold rules `A -> B` into `B depends on [A, ...]`, deps sorted by name.
pub fn rules_to_dependencies(node: &str, rules: &[AssociationRule]) -> Vec<SoftwareDependency> {
    let mut folded: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rules {
        folded
            .entry(&r.consequent)
            .or_default()
            .insert(&r.antecedent, r.confidence);
    }
    folded
        .into_iter()
        .map(|(sw, deps)| SoftwareDependency {
            node: node.to_string(),
            sw: sw.to_string(),
            dep: deps.keys().map(|s| s.to_string()).collect(),
            confidence: deps.values().copied().collect(),
        })
        .collect()
}

pub fn mine_software_dependencies(
    events: &[LogEvent],
    params: &MiningParams,
) -> Result<Vec<SoftwareDependency>> {
    mine_software_dependencies_with(events, params, Exec::default())
}

pub fn mine_software_dependencies_with(
    events: &[LogEvent],
    params: &MiningParams,
    exec: Exec,
) -> Result<Vec<SoftwareDependency>> {
    check_thresholds(params.min_support, params.min_confidence)?;
    if params.window_ms == 0 {
        return Err(Error::Argument("window_ms must be positive".into()));
    }
    let mut by_node: BTreeMap<&str, Vec<&LogEvent>> = BTreeMap::new();
    for e in events {
        by_node.entry(&e.node).or_default().push(e);
    }
    let nodes: Vec<(&str, Vec<&LogEvent>)> = by_node.into_iter().collect();
    let per_node = exec.map(&nodes, |(node, evs)| {
        let txs = node_transactions(node, evs.clone(), params.window_ms);
        apriori_rules(&txs, params.min_support, params.min_confidence)
            .map(|rules| rules_to_dependencies(node, &rules))
    });
    let mut out = Vec::new();
    for deps in per_node {
        out.extend(deps?);
    }
    Ok(out)
}
