//! Node ranking and contextual severity aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cdg::{Cdg, Projection};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::DiGraph;
use crate::vulnmatch::{VulnMatch, VulnerabilityRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub damping: f64,
    pub max_iterations: usize,
    /// Stop once the L1 change between consecutive iterates drops below this.
    pub tolerance: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            max_iterations: 100,
            tolerance: 0.001,
        }
    }
}

impl RankConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Argument(format!(
                "damping must be in (0, 1), got {}",
                self.damping
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Argument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// A graph node ranking function; scores are aligned with `graph.ids()`.
pub trait Ranker: Sync {
    fn rank(&self, graph: &DiGraph) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Power-iteration PageRank with uniform teleport; dangling mass is spread
/// uniformly.
#[derive(Debug, Clone, Copy, Default)]
pub struct PageRank {
    pub config: RankConfig,
    pub exec: Exec,
}

impl PageRank {
    pub fn new(config: RankConfig) -> Self {
        Self {
            config,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn run(&self, graph: &DiGraph) -> Result<(Vec<f64>, PageRankOutcome)> {
        self.config.check()?;
        let n = graph.node_count();
        if n == 0 {
            return Err(Error::Argument("cannot rank an empty graph".into()));
        }
        let d = self.config.damping;
        let nf = n as f64;
        let out_deg = graph.out_degrees();
        let inv_out: Vec<f64> = out_deg
            .iter()
            .map(|&k| if k == 0 { 0.0 } else { 1.0 / k as f64 })
            .collect();
        let (offsets, preds) = graph.predecessors_csr();

        let mut rank = vec![1.0 / nf; n];
        let mut next = vec![0.0; n];
        let mut share = vec![0.0; n];
        let mut outcome = PageRankOutcome {
            iterations: 0,
            converged: false,
        };
        for _ in 0..self.config.max_iterations {
            let dangling: f64 = (0..n).filter(|&v| out_deg[v] == 0).map(|v| rank[v]).sum();
            let base = (1.0 - d) / nf + d * dangling / nf;
            {
                let rank = &rank;
                let inv_out = &inv_out;
                self.exec.fill(&mut share, |v| rank[v] * inv_out[v]);
            }
            {
                let share = &share;
                let (offsets, preds) = (&offsets, &preds);
                self.exec.fill(&mut next, |v| {
                    let inflow: f64 = preds[offsets[v]..offsets[v + 1]]
                        .iter()
                        .map(|&u| share[u])
                        .sum();
                    base + d * inflow
                });
            }
            let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut rank, &mut next);
            outcome.iterations += 1;
            if delta < self.config.tolerance {
                outcome.converged = true;
                break;
            }
        }
        let total: f64 = rank.iter().sum();
        for r in &mut rank {
            *r /= total;
        }
        Ok((rank, outcome))
    }
}

impl Ranker for PageRank {
    fn rank(&self, graph: &DiGraph) -> Result<Vec<f64>> {
        self.run(graph).map(|(scores, _)| scores)
    }
}

/// PageRank scores aligned with `graph.ids()`.
pub fn pagerank(graph: &DiGraph, config: &RankConfig) -> Result<Vec<f64>> {
    PageRank::new(*config).rank(graph)
}

pub fn pagerank_map(graph: &DiGraph, config: &RankConfig) -> Result<BTreeMap<String, f64>> {
    let scores = pagerank(graph, config)?;
    Ok(graph.ids().iter().cloned().zip(scores).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTriple {
    pub node: String,
    pub ti: f64,
    pub si: f64,
    pub ni: f64,
}

fn rank_or_empty(ranker: &dyn Ranker, graph: &DiGraph) -> Result<HashMap<String, f64>> {
    if graph.is_empty() {
        return Ok(HashMap::new());
    }
    let scores = ranker.rank(graph)?;
    Ok(graph.ids().iter().cloned().zip(scores).collect())
}

/// Topology-, software- and network-aware importance of every software
/// node. `ti` is the hardware score of the node's host.
pub fn compute_importances(cdg: &Cdg, config: &RankConfig) -> Result<Vec<ImportanceTriple>> {
    compute_importances_with(cdg, &PageRank::new(*config), Exec::default())
}

pub fn compute_importances_with(
    cdg: &Cdg,
    ranker: &dyn Ranker,
    exec: Exec,
) -> Result<Vec<ImportanceTriple>> {
    let (hw, (sw, net)) = exec.join(
        || rank_or_empty(ranker, &cdg.project(Projection::Hardware)),
        || {
            exec.join(
                || rank_or_empty(ranker, &cdg.project(Projection::Software)),
                || rank_or_empty(ranker, &cdg.project(Projection::Network)),
            )
        },
    );
    let (hw, sw, net) = (hw?, sw?, net?);
    Ok(cdg
        .software_nodes()
        .map(|n| {
            let host = n.host.as_deref().unwrap_or_default();
            ImportanceTriple {
                node: n.id.clone(),
                ti: hw.get(host).copied().unwrap_or(0.0),
                si: sw.get(&n.id).copied().unwrap_or(0.0),
                ni: net.get(&n.id).copied().unwrap_or(0.0),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_ti: f64,
    pub w_ni: f64,
    pub w_si: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }
}

impl Weights {
    pub fn new(w_ti: f64, w_ni: f64, w_si: f64) -> Self {
        Self { w_ti, w_ni, w_si }
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.w_ti, self.w_ni, self.w_si];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Argument(format!(
                "weights must be finite and non-negative: {all:?}"
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Argument("weights must not all be zero".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.w_ti * c, self.w_ni * c, self.w_si * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    #[default]
    WeightedSum,
    CvssProduct,
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::WeightedSum => "weighted-sum",
            Aggregator::CvssProduct => "cvss-product",
        })
    }
}

impl FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "weighted-sum" => Ok(Aggregator::WeightedSum),
            "cvss-product" => Ok(Aggregator::CvssProduct),
            _ => Err(format!("unknown aggregator `{s}`")),
        }
    }
}

/// Sums of each importance over the affected nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Breakdown {
    pub ti: f64,
    pub ni: f64,
    pub si: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityScore {
    #[serde(rename = "id")]
    pub vuln_id: String,
    pub severity: f64,
    pub breakdown: Breakdown,
    pub aggregator: Aggregator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_score: Option<f64>,
    pub affected_nodes: Vec<String>,
}

impl VulnerabilityScore {
    /// Weighted-sum severity recomputed from the stored breakdown.
    pub fn weighted_sum(&self, w: &Weights) -> f64 {
        w.w_ti * self.breakdown.ti + w.w_ni * self.breakdown.ni + w.w_si * self.breakdown.si
    }
}

/// Severity desc, then base score desc, then id.
pub fn order_scores(scores: &mut [VulnerabilityScore]) {
    scores.sort_by(|a, b| {
        b.severity
            .total_cmp(&a.severity)
            .then_with(|| {
                let base = |s: &VulnerabilityScore| s.base_score.unwrap_or(f64::NEG_INFINITY);
                base(b).total_cmp(&base(a))
            })
            .then_with(|| a.vuln_id.cmp(&b.vuln_id))
    });
}

pub fn score_vulnerabilities(
    matches: &[VulnMatch],
    importances: &[ImportanceTriple],
    weights: &Weights,
    aggregator: Aggregator,
    vulndb: &[VulnerabilityRecord],
) -> Result<Vec<VulnerabilityScore>> {
    weights.check()?;
    let imp: HashMap<&str, &ImportanceTriple> =
        importances.iter().map(|t| (t.node.as_str(), t)).collect();
    let base: HashMap<&str, f64> = vulndb
        .iter()
        .map(|r| (r.id.as_str(), r.base_score))
        .collect();
    let mut out = Vec::with_capacity(matches.len());
    for m in matches {
        let mut bd = Breakdown::default();
        let mut product_sum = 0.0;
        for node in &m.affected_nodes {
            let t = imp
                .get(node.as_str())
                .ok_or_else(|| Error::unknown("importance for node", node))?;
            bd.ti += t.ti;
            bd.ni += t.ni;
            bd.si += t.si;
            product_sum += t.ti * t.ni * t.si;
        }
        let base_score = base.get(m.vuln_id.as_str()).copied();
        let severity = match aggregator {
            Aggregator::WeightedSum => {
                weights.w_ti * bd.ti + weights.w_ni * bd.ni + weights.w_si * bd.si
            }
            Aggregator::CvssProduct => {
                product_sum
                    * base_score.ok_or_else(|| Error::unknown("vulnerability", &m.vuln_id))?
            }
        };
        out.push(VulnerabilityScore {
            vuln_id: m.vuln_id.clone(),
            severity,
            breakdown: bd,
            aggregator,
            base_score,
            affected_nodes: m.affected_nodes.iter().cloned().collect(),
        });
    }
    order_scores(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub weights: Weights,
    pub ranking: Vec<String>,
    pub severities: Vec<f64>,
}

/// Every combination of `levels` for the three weights, skipping all-zero.
pub fn weight_grid(levels: &[f64]) -> Vec<Weights> {
    let mut out = Vec::new();
    for &t in levels {
        for &n in levels {
            for &s in levels {
                let w = Weights::new(t, n, s);
                if w.check().is_ok() {
                    out.push(w);
                }
            }
        }
    }
    out
}

/// Rankings under each weight setting, in grid order.
pub fn sweep_weights(
    matches: &[VulnMatch],
    importances: &[ImportanceTriple],
    vulndb: &[VulnerabilityRecord],
    grid: &[Weights],
    exec: Exec,
) -> Result<Vec<SweepEntry>> {
    exec.map(grid, |w| {
        let scores =
            score_vulnerabilities(matches, importances, w, Aggregator::WeightedSum, vulndb)?;
        Ok(SweepEntry {
            weights: *w,
            ranking: scores.iter().map(|s| s.vuln_id.clone()).collect(),
            severities: scores.iter().map(|s| s.severity).collect(),
        })
    })
    .into_iter()
    .collect()
}
