//! Contextual dependency graph: a hardware layer of physical nodes and a
//! software layer of components, joined by `hosted_on` edges.
//!
//! Every edge `a -> b` reads "a depends on b".

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::net::Ipv4Addr;

use petgraph::algo::tarjan_scc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DiGraph;
use crate::logmine::SoftwareDependency;
use crate::netdep::{NetworkDependency, Proto, ServiceEndpoint};
use crate::topology::{NodeKind, TopologyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Hardware,
    Software,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdgNode {
    pub id: String,
    pub layer: Layer,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<NodeKind>,
}

impl CdgNode {
    pub fn hardware(id: impl Into<String>, kind: NodeKind) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            layer: Layer::Hardware,
            host: None,
            kind: Some(kind),
        }
    }

    pub fn software(component: &str, host: &str) -> Self {
        Self {
            id: software_id(component, host),
            layer: Layer::Software,
            name: component.to_string(),
            host: Some(host.to_string()),
            kind: None,
        }
    }

    pub fn is_software(&self) -> bool {
        self.layer == Layer::Software
    }
}

/// Id of the software node for `component` on `host`.
pub fn software_id(component: &str, host: &str) -> String {
    format!("{component}@{host}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    HwLink,
    SoftwareDep,
    NetworkDep,
    HostedOn,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CdgEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

impl CdgEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, kind: EdgeKind) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            kind,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CdgDoc {
    nodes: Vec<CdgNode>,
    edges: Vec<CdgEdge>,
}

/// Validated, immutable dependency graph.
#[derive(Debug, Clone)]
pub struct Cdg {
    nodes: Vec<CdgNode>,
    edges: Vec<CdgEdge>,
    index: HashMap<String, usize>,
}

impl PartialEq for Cdg {
    fn eq(&self, other: &Self) -> bool {
        let set = |c: &Cdg| c.edges.iter().cloned().collect::<HashSet<_>>();
        let nodes = |c: &Cdg| {
            let mut v = c.nodes.clone();
            v.sort_by(|a, b| a.id.cmp(&b.id));
            v
        };
        nodes(self) == nodes(other) && set(self) == set(other)
    }
}

impl Cdg {
    /// Assemble and validate.
    pub fn from_parts(nodes: Vec<CdgNode>, edges: Vec<CdgEdge>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(Error::Validation(format!("node #{i} has an empty id")));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate node id `{}`", n.id)));
            }
        }
        let cdg = Self {
            nodes,
            edges,
            index,
        };
        cdg.validate()?;
        Ok(cdg)
    }

    fn validate(&self) -> Result<()> {
        for n in &self.nodes {
            match n.layer {
                Layer::Hardware => {
                    if n.kind.is_none() {
                        return Err(Error::Validation(format!(
                            "hardware node `{}` has no kind",
                            n.id
                        )));
                    }
                }
                Layer::Software => {
                    let host = n.host.as_deref().unwrap_or("");
                    if host.is_empty() {
                        return Err(Error::Validation(format!(
                            "software node `{}` has no host",
                            n.id
                        )));
                    }
                    if self.node(host).map(|h| h.layer) != Some(Layer::Hardware) {
                        return Err(Error::unknown("host", host));
                    }
                }
            }
        }

        let mut seen = HashSet::new();
        let mut hosted: HashMap<&str, usize> = HashMap::new();
        for e in &self.edges {
            let from = self
                .node(&e.from)
                .ok_or_else(|| Error::unknown("node", &e.from))?;
            let to = self
                .node(&e.to)
                .ok_or_else(|| Error::unknown("node", &e.to))?;
            if !seen.insert((&e.from, &e.to, e.kind)) {
                return Err(Error::Validation(format!(
                    "duplicate {:?} edge {} -> {}",
                    e.kind, e.from, e.to
                )));
            }
            let ok = match e.kind {
                EdgeKind::HwLink => {
                    from.layer == Layer::Hardware && to.layer == Layer::Hardware && e.from != e.to
                }
                EdgeKind::SoftwareDep => {
                    from.is_software() && to.is_software() && from.host == to.host
                }
                EdgeKind::NetworkDep => from.is_software() && to.is_software(),
                EdgeKind::HostedOn => {
                    *hosted.entry(&e.from).or_default() += 1;
                    from.is_software()
                        && to.layer == Layer::Hardware
                        && from.host.as_deref() == Some(e.to.as_str())
                }
            };
            if !ok {
                return Err(Error::Validation(format!(
                    "{:?} edge {} -> {} violates its layer constraint",
                    e.kind, e.from, e.to
                )));
            }
        }
        for n in self.nodes.iter().filter(|n| n.is_software()) {
            let count = hosted.get(n.id.as_str()).copied().unwrap_or(0);
            if count != 1 {
                return Err(Error::Validation(format!(
                    "software node `{}` has {count} hosted_on edges",
                    n.id
                )));
            }
        }
        for kind in [EdgeKind::SoftwareDep, EdgeKind::NetworkDep] {
            if let Some(node) = self.find_cycle(kind) {
                return Err(Error::Validation(format!(
                    "{kind:?} edges form a cycle through `{node}`"
                )));
            }
        }
        Ok(())
    }

    fn find_cycle(&self, kind: EdgeKind) -> Option<&str> {
        let g = self.project_kind(kind);
        // Kahn: anything left over sits on or behind a cycle
        let n = g.node_count();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in g.edges() {
            indeg[b] += 1;
            succ[a].push(b);
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut done = 0;
        while let Some(v) = queue.pop_front() {
            done += 1;
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if done == n {
            return None;
        }
        let v = (0..n).find(|&v| indeg[v] > 0)?;
        self.index
            .get_key_value(g.ids()[v].as_str())
            .map(|(k, _)| k.as_str())
    }

    pub fn nodes(&self) -> &[CdgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[CdgEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&CdgNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn software_nodes(&self) -> impl Iterator<Item = &CdgNode> {
        self.nodes.iter().filter(|n| n.is_software())
    }

    pub fn hardware_nodes(&self) -> impl Iterator<Item = &CdgNode> {
        self.nodes.iter().filter(|n| n.layer == Layer::Hardware)
    }

    pub fn edges_of(&self, kind: EdgeKind) -> impl Iterator<Item = &CdgEdge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    /// Graph restricted to one edge kind, over the nodes that kind may touch.
    fn project_kind(&self, kind: EdgeKind) -> DiGraph {
        let ids: Vec<String> = match kind {
            EdgeKind::HwLink => self.hardware_nodes().map(|n| n.id.clone()).collect(),
            EdgeKind::SoftwareDep => self.software_nodes().map(|n| n.id.clone()).collect(),
            EdgeKind::NetworkDep => {
                let touched: HashSet<&str> = self
                    .edges_of(kind)
                    .flat_map(|e| [e.from.as_str(), e.to.as_str()])
                    .collect();
                self.software_nodes()
                    .filter(|n| touched.contains(n.id.as_str()))
                    .map(|n| n.id.clone())
                    .collect()
            }
            EdgeKind::HostedOn => self.nodes.iter().map(|n| n.id.clone()).collect(),
        };
        let local: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let edges = self
            .edges_of(kind)
            .map(|e| (local[e.from.as_str()], local[e.to.as_str()]))
            .collect();
        DiGraph::from_indexed(ids, edges)
    }

    pub fn project(&self, which: Projection) -> DiGraph {
        self.project_kind(match which {
            Projection::Hardware => EdgeKind::HwLink,
            Projection::Software => EdgeKind::SoftwareDep,
            Projection::Network => EdgeKind::NetworkDep,
        })
    }
}

/// The three per-layer views the scorer ranks over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Hardware nodes and physical links.
    Hardware,
    /// Software nodes and intra-host dependencies.
    Software,
    /// Software nodes touched by network dependencies.
    Network,
}

pub fn project(cdg: &Cdg, which: Projection) -> DiGraph {
    cdg.project(which)
}

pub fn serialize_cdg(cdg: &Cdg) -> String {
    let doc = CdgDoc {
        nodes: cdg.nodes.clone(),
        edges: cdg.edges.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("cdg serializes") + "\n"
}

pub fn parse_cdg(text: &str) -> Result<Cdg> {
    let doc: CdgDoc = serde_json::from_str(text)?;
    Cdg::from_parts(doc.nodes, doc.edges)
}

/// Where a service endpoint runs and which component serves it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointBinding {
    pub ip: Ipv4Addr,
    pub port: u16,
    pub proto: Proto,
    pub host: String,
    pub component: String,
}

impl EndpointBinding {
    pub fn endpoint(&self) -> ServiceEndpoint {
        ServiceEndpoint::new(self.ip, self.port, self.proto)
    }
}

pub type EndpointMap = BTreeMap<ServiceEndpoint, (String, String)>;

/// JSON array of `{ip, port, proto, host, component}`.
pub fn load_endpoint_map(text: &str) -> Result<EndpointMap> {
    let bindings: Vec<EndpointBinding> = serde_json::from_str(text)?;
    let mut map = EndpointMap::new();
    for b in bindings {
        let ep = b.endpoint();
        if map.insert(ep, (b.host, b.component)).is_some() {
            return Err(Error::Validation(format!("endpoint {ep} bound twice")));
        }
    }
    Ok(map)
}

/// A mined edge removed because it closed a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct CdgBuild {
    pub cdg: Cdg,
    pub dropped: Vec<DroppedEdge>,
}

type WeightedEdges = BTreeMap<(String, String), f64>;

fn add_weighted(edges: &mut WeightedEdges, from: String, to: String, w: f64) {
    let slot = edges.entry((from, to)).or_insert(w);
    if w > *slot {
        *slot = w;
    }
}

/// Keep a maximal acyclic subset: only edges inside a strongly connected
/// component can close a cycle, and those are re-admitted by weight
/// (desc, then id pair asc), skipping any that would close one.
fn break_cycles(
    edges: &WeightedEdges,
    kind: EdgeKind,
) -> (Vec<(String, String)>, Vec<DroppedEdge>) {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for (a, b) in edges.keys() {
        let next = ids.len();
        ids.entry(a).or_insert(next);
        let next = ids.len();
        ids.entry(b).or_insert(next);
    }
    let mut g = petgraph::graph::DiGraph::<(), ()>::with_capacity(ids.len(), edges.len());
    let handles: Vec<_> = (0..ids.len()).map(|_| g.add_node(())).collect();
    for (a, b) in edges.keys() {
        g.add_edge(handles[ids[a.as_str()]], handles[ids[b.as_str()]], ());
    }
    let mut component = vec![usize::MAX; ids.len()];
    for (c, scc) in tarjan_scc(&g).into_iter().enumerate() {
        if scc.len() > 1 {
            for v in scc {
                component[v.index()] = c;
            }
        }
    }

    let mut kept = Vec::new();
    let mut contested = Vec::new();
    let mut dropped = Vec::new();
    for ((a, b), &w) in edges {
        let (ia, ib) = (ids[a.as_str()], ids[b.as_str()]);
        if a == b {
            dropped.push(DroppedEdge {
                from: a.clone(),
                to: b.clone(),
                kind,
                weight: w,
            });
        } else if component[ia] != usize::MAX && component[ia] == component[ib] {
            contested.push((a, b, w, ia, ib));
        } else {
            kept.push((a.clone(), b.clone()));
        }
    }
    contested.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
    });
    let mut succ: HashMap<usize, Vec<usize>> = HashMap::new();
    for (a, b, w, ia, ib) in contested {
        if reaches(&succ, ib, ia) {
            dropped.push(DroppedEdge {
                from: a.clone(),
                to: b.clone(),
                kind,
                weight: w,
            });
        } else {
            succ.entry(ia).or_default().push(ib);
            kept.push((a.clone(), b.clone()));
        }
    }
    kept.sort();
    (kept, dropped)
}

fn reaches(succ: &HashMap<usize, Vec<usize>>, from: usize, target: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = HashSet::from([from]);
    while let Some(v) = stack.pop() {
        if v == target {
            return true;
        }
        for &w in succ.get(&v).into_iter().flatten() {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    false
}

pub fn build_cdg(
    topo: &TopologyGraph,
    sw_deps: &[SoftwareDependency],
    net_deps: &[NetworkDependency],
    endpoints: &EndpointMap,
) -> Result<CdgBuild> {
    let mut nodes: Vec<CdgNode> = topo
        .nodes
        .iter()
        .map(|n| CdgNode::hardware(&n.id, n.kind))
        .collect();
    let hw: HashSet<&str> = topo.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut edges: Vec<CdgEdge> = Vec::new();
    for l in &topo.links {
        edges.push(CdgEdge::new(&l.a, &l.b, EdgeKind::HwLink));
        edges.push(CdgEdge::new(&l.b, &l.a, EdgeKind::HwLink));
    }

    let mut software: BTreeMap<String, (String, String)> = BTreeMap::new();
    let mut sw_node = |component: &str, host: &str| -> Result<String> {
        if !hw.contains(host) {
            return Err(Error::unknown("host", host));
        }
        let id = software_id(component, host);
        software
            .entry(id.clone())
            .or_insert_with(|| (component.to_string(), host.to_string()));
        Ok(id)
    };

    let mut sw_edges = WeightedEdges::new();
    for d in sw_deps {
        let from = sw_node(&d.sw, &d.node)?;
        for (i, dep) in d.dep.iter().enumerate() {
            let to = sw_node(dep, &d.node)?;
            add_weighted(&mut sw_edges, from.clone(), to, d.confidence_of(i));
        }
    }
    let mut net_edges = WeightedEdges::new();
    for d in net_deps {
        let mut resolve = |ep: &ServiceEndpoint| -> Result<String> {
            let (host, component) = endpoints
                .get(ep)
                .ok_or_else(|| Error::unknown("endpoint", ep.to_string()))?;
            sw_node(component, host)
        };
        let from = resolve(&d.upstream)?;
        let to = resolve(&d.downstream)?;
        add_weighted(&mut net_edges, from, to, d.weight);
    }

    for id in software.keys() {
        if hw.contains(id.as_str()) {
            return Err(Error::Validation(format!(
                "software node id `{id}` collides with a hardware node"
            )));
        }
    }
    for (id, (component, host)) in &software {
        nodes.push(CdgNode::software(component, host));
        edges.push(CdgEdge::new(id, host, EdgeKind::HostedOn));
    }

    let (sw_kept, mut dropped) = break_cycles(&sw_edges, EdgeKind::SoftwareDep);
    let (net_kept, net_dropped) = break_cycles(&net_edges, EdgeKind::NetworkDep);
    dropped.extend(net_dropped);
    edges.extend(
        sw_kept
            .into_iter()
            .map(|(a, b)| CdgEdge::new(a, b, EdgeKind::SoftwareDep)),
    );
    edges.extend(
        net_kept
            .into_iter()
            .map(|(a, b)| CdgEdge::new(a, b, EdgeKind::NetworkDep)),
    );

    Ok(CdgBuild {
        cdg: Cdg::from_parts(nodes, edges)?,
        dropped,
    })
}
