//! Remediation simulation.
//!
//! A hardware node is compromised while any software it hosts is affected by
//! an unfixed vulnerability. A server is alive when it is not compromised
//! and the gateway reaches it through uncompromised hardware only (the
//! gateway included).

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cdg::{Cdg, EdgeKind, Layer};
use crate::error::{Error, Result};
use crate::scoring::VulnerabilityScore;
use crate::topology::NodeKind;
use crate::vulnmatch::{VulnMatch, VulnerabilityRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixPlan {
    pub ordering: Vec<String>,
}

impl FixPlan {
    pub fn new<S: Into<String>>(ordering: impl IntoIterator<Item = S>) -> Self {
        Self {
            ordering: ordering.into_iter().map(Into::into).collect(),
        }
    }

    /// Fix order following a contextual ranking.
    pub fn from_scores(scores: &[VulnerabilityScore]) -> Self {
        Self::new(scores.iter().map(|s| s.vuln_id.clone()))
    }

    /// Fix order by base score desc, then id, over the matched set.
    pub fn by_base_score(matches: &[VulnMatch], vulndb: &[VulnerabilityRecord]) -> Result<Self> {
        let base: HashMap<&str, f64> = vulndb
            .iter()
            .map(|r| (r.id.as_str(), r.base_score))
            .collect();
        let mut ids = Vec::with_capacity(matches.len());
        for m in matches {
            let b = base
                .get(m.vuln_id.as_str())
                .ok_or_else(|| Error::unknown("vulnerability", &m.vuln_id))?;
            ids.push((m.vuln_id.clone(), *b));
        }
        ids.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::new(ids.into_iter().map(|(id, _)| id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixPlanResult {
    pub plan: FixPlan,
    /// Alive servers after fixing the first `t` vulnerabilities.
    pub alive_counts: Vec<usize>,
    pub auc: usize,
}

/// Precomputed reachability state shared by every plan on one scenario.
#[derive(Debug)]
pub struct FixSimulator {
    hw_ids: Vec<String>,
    is_server: Vec<bool>,
    adj: Vec<Vec<usize>>,
    gateway: usize,
    /// Hardware indices each vulnerability compromises.
    compromises: HashMap<String, Vec<usize>>,
}

impl FixSimulator {
    pub fn new(cdg: &Cdg, matches: &[VulnMatch], gateway: &str) -> Result<Self> {
        let hw_ids: Vec<String> = cdg.hardware_nodes().map(|n| n.id.clone()).collect();
        let index: HashMap<&str, usize> = hw_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let gateway = match cdg.node(gateway) {
            Some(n) if n.layer == Layer::Hardware => index[gateway],
            _ => {
                return Err(Error::Argument(format!(
                    "gateway `{gateway}` is not a hardware node"
                )))
            }
        };
        let is_server = cdg
            .hardware_nodes()
            .map(|n| n.kind == Some(NodeKind::Server))
            .collect();
        let mut adj = vec![Vec::new(); hw_ids.len()];
        for e in cdg.edges_of(EdgeKind::HwLink) {
            adj[index[e.from.as_str()]].push(index[e.to.as_str()]);
        }
        let mut compromises = HashMap::new();
        for m in matches {
            let mut hosts = Vec::new();
            for id in &m.affected_nodes {
                let node = cdg.node(id).ok_or_else(|| Error::unknown("node", id))?;
                let host = node
                    .host
                    .as_deref()
                    .ok_or_else(|| Error::Argument(format!("`{id}` is not a software node")))?;
                hosts.push(index[host]);
            }
            hosts.sort_unstable();
            hosts.dedup();
            if compromises.insert(m.vuln_id.clone(), hosts).is_some() {
                return Err(Error::Argument(format!("`{}` matched twice", m.vuln_id)));
            }
        }
        Ok(Self {
            hw_ids,
            is_server,
            adj,
            gateway,
            compromises,
        })
    }

    pub fn server_count(&self) -> usize {
        self.is_server.iter().filter(|&&s| s).count()
    }

    pub fn hardware_ids(&self) -> &[String] {
        &self.hw_ids
    }

    fn check_plan(&self, plan: &FixPlan) -> Result<()> {
        let mut seen = HashSet::new();
        for id in &plan.ordering {
            if !self.compromises.contains_key(id) {
                return Err(Error::Argument(format!(
                    "plan fixes unmatched vulnerability `{id}`"
                )));
            }
            if !seen.insert(id) {
                return Err(Error::Argument(format!("plan lists `{id}` twice")));
            }
        }
        if seen.len() != self.compromises.len() {
            let mut missing: Vec<&String> = self
                .compromises
                .keys()
                .filter(|k| !seen.contains(k))
                .collect();
            missing.sort();
            return Err(Error::Argument(format!("plan omits {missing:?}")));
        }
        Ok(())
    }

    /// Alive servers given per-node counts of active compromising vulns.
    pub fn alive(&self, active_hits: &[usize]) -> usize {
        if active_hits[self.gateway] > 0 {
            return 0;
        }
        let mut seen = vec![false; self.hw_ids.len()];
        seen[self.gateway] = true;
        let mut queue = VecDeque::from([self.gateway]);
        let mut alive = 0;
        while let Some(v) = queue.pop_front() {
            if self.is_server[v] {
                alive += 1;
            }
            for &w in &self.adj[v] {
                if !seen[w] && active_hits[w] == 0 {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        alive
    }

    pub fn simulate(&self, plan: &FixPlan) -> Result<FixPlanResult> {
        self.check_plan(plan)?;
        let mut hits = vec![0usize; self.hw_ids.len()];
        for hosts in self.compromises.values() {
            for &h in hosts {
                hits[h] += 1;
            }
        }
        let mut alive_counts = vec![self.alive(&hits)];
        for id in &plan.ordering {
            for &h in &self.compromises[id] {
                hits[h] -= 1;
            }
            alive_counts.push(self.alive(&hits));
        }
        Ok(FixPlanResult {
            plan: plan.clone(),
            auc: alive_counts.iter().sum(),
            alive_counts,
        })
    }
}

pub fn simulate_fix(
    cdg: &Cdg,
    matches: &[VulnMatch],
    plan: &FixPlan,
    gateway: &str,
) -> Result<FixPlanResult> {
    FixSimulator::new(cdg, matches, gateway)?.simulate(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanComparison {
    pub a: FixPlanResult,
    pub b: FixPlanResult,
    pub winner: Winner,
}

impl PlanComparison {
    /// `step,alive_<label_a>,alive_<label_b>` rows.
    pub fn steps_csv(&self, label_a: &str, label_b: &str) -> String {
        let mut out = format!("step,alive_{label_a},alive_{label_b}\n");
        let steps = self.a.alive_counts.len().max(self.b.alive_counts.len());
        for t in 0..steps {
            let cell = |r: &FixPlanResult| {
                r.alive_counts
                    .get(t)
                    .map(|c| c.to_string())
                    .unwrap_or_default()
            };
            let _ = writeln!(out, "{t},{},{}", cell(&self.a), cell(&self.b));
        }
        out
    }
}

pub fn compare_plans(
    cdg: &Cdg,
    matches: &[VulnMatch],
    plan_a: &FixPlan,
    plan_b: &FixPlan,
    gateway: &str,
) -> Result<PlanComparison> {
    let sim = FixSimulator::new(cdg, matches, gateway)?;
    let a = sim.simulate(plan_a)?;
    let b = sim.simulate(plan_b)?;
    let winner = match a.auc.cmp(&b.auc) {
        std::cmp::Ordering::Greater => Winner::A,
        std::cmp::Ordering::Less => Winner::B,
        std::cmp::Ordering::Equal => Winner::Tie,
    };
    Ok(PlanComparison { a, b, winner })
}
