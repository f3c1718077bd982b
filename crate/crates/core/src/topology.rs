//! Hardware topology: parsing, serialization, validation and canonical
//! data-center generators.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Locator, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Server,
    EdgeSwitch,
    AggregationSwitch,
    CoreSwitch,
    Gateway,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Server,
        NodeKind::EdgeSwitch,
        NodeKind::AggregationSwitch,
        NodeKind::CoreSwitch,
        NodeKind::Gateway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Server => "server",
            NodeKind::EdgeSwitch => "edge_switch",
            NodeKind::AggregationSwitch => "aggregation_switch",
            NodeKind::CoreSwitch => "core_switch",
            NodeKind::Gateway => "gateway",
        }
    }

    pub fn is_switch(self) -> bool {
        matches!(
            self,
            NodeKind::EdgeSwitch | NodeKind::AggregationSwitch | NodeKind::CoreSwitch
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

impl TopologyNode {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
            labels: BTreeSet::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.labels.insert(label.into());
        self
    }
}

/// Undirected physical link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyLink {
    pub a: String,
    pub b: String,
}

impl TopologyLink {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
        }
    }

    /// Orientation-free key.
    pub fn key(&self) -> (&str, &str) {
        if self.a <= self.b {
            (&self.a, &self.b)
        } else {
            (&self.b, &self.a)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyGraph {
    pub nodes: Vec<TopologyNode>,
    pub links: Vec<TopologyLink>,
}

impl TopologyGraph {
    pub fn node(&self, id: &str) -> Option<&TopologyNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn servers(&self) -> impl Iterator<Item = &TopologyNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Server)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Add a gateway node linked to each of `targets`.
    pub fn attach_gateway<S: AsRef<str>>(&mut self, id: &str, targets: &[S]) -> Result<()> {
        if self.node(id).is_some() {
            return Err(Error::Validation(format!("duplicate node id `{id}`")));
        }
        for t in targets {
            if self.node(t.as_ref()).is_none() {
                return Err(Error::unknown("node", t.as_ref()));
            }
        }
        self.nodes.push(TopologyNode::new(id, NodeKind::Gateway));
        for t in targets {
            self.links.push(TopologyLink::new(id, t.as_ref()));
        }
        Ok(())
    }

    /// Structural invariants only (ids, links); connectivity is left to
    /// [`validate_topology`].
    fn check_structure(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return Err(Error::Validation("node with empty id".into()));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(Error::Validation(format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut seen = HashSet::new();
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::Validation(format!(
                        "link {}-{} references unknown node `{end}`",
                        l.a, l.b
                    )));
                }
            }
            if l.a == l.b {
                return Err(Error::Validation(format!("self-link on `{}`", l.a)));
            }
            if !seen.insert(l.key()) {
                return Err(Error::Validation(format!("duplicate link {}-{}", l.a, l.b)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopologyFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for TopologyFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(TopologyFormat::Json),
            "csv" => Ok(TopologyFormat::Csv),
            other => Err(format!("unknown topology format `{other}`")),
        }
    }
}

pub fn parse_topology(input: &str, format: TopologyFormat) -> Result<TopologyGraph> {
    let graph = match format {
        TopologyFormat::Json => serde_json::from_str(input)?,
        TopologyFormat::Csv => parse_csv(input)?,
    };
    graph.check_structure()?;
    Ok(graph)
}

fn parse_csv(input: &str) -> Result<TopologyGraph> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut graph = TopologyGraph::default();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(Locator::Line(line), e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            match record.get(i) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::parse(
                    Locator::LineField(line, name.into()),
                    "missing value",
                )),
            }
        };
        match record.get(0).unwrap_or("") {
            "node" => {
                let id = field(1, "id")?;
                let kind = field(2, "kind")?
                    .parse::<NodeKind>()
                    .map_err(|m| Error::parse(Locator::LineField(line, "kind".into()), m))?;
                let labels = record
                    .get(3)
                    .unwrap_or("")
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
                graph.nodes.push(TopologyNode {
                    id: id.to_string(),
                    kind,
                    labels,
                });
            }
            "link" => {
                let a = field(1, "a")?;
                let b = field(2, "b")?;
                graph.links.push(TopologyLink::new(a, b));
            }
            // header row
            _ if first => {}
            other => {
                return Err(Error::parse(
                    Locator::LineField(line, "type".into()),
                    format!("expected `node` or `link`, found `{other}`"),
                ))
            }
        }
        first = false;
    }
    Ok(graph)
}

pub fn serialize_topology(graph: &TopologyGraph, format: TopologyFormat) -> String {
    match format {
        TopologyFormat::Json => {
            serde_json::to_string_pretty(graph).expect("topology serializes") + "\n"
        }
        TopologyFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .flexible(true)
                .from_writer(Vec::new());
            for n in &graph.nodes {
                let labels = n.labels.iter().cloned().collect::<Vec<_>>().join(";");
                w.write_record(["node", &n.id, n.kind.as_str(), &labels])
                    .expect("in-memory write");
            }
            for l in &graph.links {
                w.write_record(["link", &l.a, &l.b])
                    .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
    }
}

/// Every invariant violation plus connectivity; empty means valid.
pub fn validate_topology(graph: &TopologyGraph) -> Vec<String> {
    let mut violations = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if n.id.is_empty() {
            violations.push(format!("node #{i} has an empty id"));
            continue;
        }
        if index.insert(n.id.as_str(), i).is_some() {
            violations.push(format!("duplicate node id `{}`", n.id));
        }
    }

    let mut adj = vec![Vec::new(); graph.nodes.len()];
    let mut seen = HashSet::new();
    for l in &graph.links {
        let mut ok = true;
        for end in [&l.a, &l.b] {
            if !index.contains_key(end.as_str()) {
                violations.push(format!(
                    "link {}-{} references unknown node `{end}`",
                    l.a, l.b
                ));
                ok = false;
            }
        }
        if l.a == l.b {
            violations.push(format!("self-link on `{}`", l.a));
            ok = false;
        }
        if !seen.insert(l.key()) {
            violations.push(format!("duplicate link {}-{}", l.a, l.b));
            ok = false;
        }
        if ok {
            let (a, b) = (index[l.a.as_str()], index[l.b.as_str()]);
            adj[a].push(b);
            adj[b].push(a);
        }
    }

    if let Some(start) = (0..graph.nodes.len()).find(|&i| !graph.nodes[i].id.is_empty()) {
        let mut reached = vec![false; graph.nodes.len()];
        let mut queue = VecDeque::from([start]);
        reached[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        for (i, n) in graph.nodes.iter().enumerate() {
            // duplicates share the first occurrence's reachability
            if !n.id.is_empty() && index[n.id.as_str()] == i && !reached[i] {
                violations.push(format!(
                    "node `{}` is unreachable from `{}`",
                    n.id, graph.nodes[start].id
                ));
            }
        }
    }
    violations
}

/// Pluggable topology generation rule.
pub trait TopologyGenerator {
    fn name(&self) -> &'static str;
    fn generate(&self) -> Result<TopologyGraph>;
}

/// Standard k-ary fat-tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FatTree {
    pub k: usize,
    /// Servers under each edge switch; `None` means the canonical k/2.
    pub hosts_per_edge: Option<usize>,
    /// When set, a gateway with this id is linked to every core switch.
    pub gateway: Option<String>,
}

impl FatTree {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            hosts_per_edge: None,
            gateway: None,
        }
    }
}

impl TopologyGenerator for FatTree {
    fn name(&self) -> &'static str {
        "fat-tree"
    }

    fn generate(&self) -> Result<TopologyGraph> {
        let k = self.k;
        if k < 2 || !k.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "fat-tree arity must be even and >= 2, got {k}"
            )));
        }
        let half = k / 2;
        let hosts = self.hosts_per_edge.unwrap_or(half);
        if hosts == 0 {
            return Err(Error::Argument(
                "hosts per edge switch must be positive".into(),
            ));
        }
        let mut g = TopologyGraph::default();
        let core = |i: usize| format!("core{i}");
        let agg = |p: usize, j: usize| format!("agg{p}-{j}");
        let edge = |p: usize, j: usize| format!("edge{p}-{j}");

        for i in 0..half * half {
            g.nodes
                .push(TopologyNode::new(core(i), NodeKind::CoreSwitch));
        }
        for p in 0..k {
            for j in 0..half {
                g.nodes.push(
                    TopologyNode::new(agg(p, j), NodeKind::AggregationSwitch)
                        .with_label(format!("pod={p}")),
                );
            }
            for j in 0..half {
                g.nodes.push(
                    TopologyNode::new(edge(p, j), NodeKind::EdgeSwitch)
                        .with_label(format!("pod={p}")),
                );
            }
            for e in 0..half {
                for h in 0..hosts {
                    let id = format!("srv{p}-{e}-{h}");
                    g.nodes.push(
                        TopologyNode::new(id.clone(), NodeKind::Server)
                            .with_label(format!("pod={p}"))
                            .with_label(format!("rack={p}-{e}")),
                    );
                    g.links.push(TopologyLink::new(id, edge(p, e)));
                }
            }
            for e in 0..half {
                for j in 0..half {
                    g.links.push(TopologyLink::new(edge(p, e), agg(p, j)));
                }
            }
            for j in 0..half {
                for m in 0..half {
                    g.links
                        .push(TopologyLink::new(agg(p, j), core(j * half + m)));
                }
            }
        }
        if let Some(gw) = &self.gateway {
            let cores: Vec<String> = (0..half * half).map(core).collect();
            g.attach_gateway(gw, &cores)?;
        }
        Ok(g)
    }
}

/// BCube(n, k): servers addressed by k+1 base-n digits, one switch per
/// (level, remaining k digits).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BCube {
    pub n: usize,
    pub levels: usize,
    /// When set, a gateway with this id is linked to every top-level switch.
    pub gateway: Option<String>,
}

impl BCube {
    pub fn new(n: usize, levels: usize) -> Self {
        Self {
            n,
            levels,
            gateway: None,
        }
    }
}

fn digits(mut value: usize, base: usize, len: usize) -> Vec<usize> {
    // least significant first
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(value % base);
        value /= base;
    }
    out
}

fn join_digits(ds: impl DoubleEndedIterator<Item = usize>) -> String {
    ds.rev()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(".")
}

impl TopologyGenerator for BCube {
    fn name(&self) -> &'static str {
        "bcube"
    }

    fn generate(&self) -> Result<TopologyGraph> {
        let (n, k) = (self.n, self.levels);
        if n < 2 {
            return Err(Error::Argument(format!(
                "BCube needs n >= 2 ports, got {n}"
            )));
        }
        let servers = n
            .checked_pow(k as u32 + 1)
            .filter(|&s| s <= 1 << 24)
            .ok_or_else(|| Error::Argument(format!("BCube({n},{k}) is too large")))?;
        let per_level = servers / n;
        let mut g = TopologyGraph::default();
        let switch_id = |level: usize, rest: &[usize]| {
            if rest.is_empty() {
                format!("sw{level}")
            } else {
                format!("sw{level}-{}", join_digits(rest.iter().copied()))
            }
        };

        for s in 0..servers {
            let d = digits(s, n, k + 1);
            g.nodes.push(TopologyNode::new(
                format!("srv{}", join_digits(d.iter().copied())),
                NodeKind::Server,
            ));
        }
        for level in 0..=k {
            for i in 0..per_level {
                let rest = digits(i, n, k);
                let kind = if level == 0 {
                    NodeKind::EdgeSwitch
                } else {
                    NodeKind::AggregationSwitch
                };
                g.nodes.push(
                    TopologyNode::new(switch_id(level, &rest), kind)
                        .with_label(format!("level={level}")),
                );
            }
        }
        for s in 0..servers {
            let d = digits(s, n, k + 1);
            let server = format!("srv{}", join_digits(d.iter().copied()));
            for level in 0..=k {
                let rest: Vec<usize> = d
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != level)
                    .map(|(_, &v)| v)
                    .collect();
                g.links
                    .push(TopologyLink::new(server.clone(), switch_id(level, &rest)));
            }
        }
        if let Some(gw) = &self.gateway {
            let top: Vec<String> = (0..per_level)
                .map(|i| switch_id(k, &digits(i, n, k)))
                .collect();
            g.attach_gateway(gw, &top)?;
        }
        Ok(g)
    }
}

pub fn generate_fat_tree(k: usize) -> Result<TopologyGraph> {
    FatTree::new(k).generate()
}

pub fn generate_bcube(n: usize, levels: usize) -> Result<TopologyGraph> {
    BCube::new(n, levels).generate()
}
