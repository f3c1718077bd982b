//! Brute-force reference implementations and random scenario builders
//! shared by the integration and acceptance tests. Nothing here reuses the
//! library's algorithms; only its data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use ctxvuln_core::cdg::{build_cdg, Cdg, EndpointMap};
use ctxvuln_core::logmine::{AssociationRule, SoftwareDependency, Transaction};
use ctxvuln_core::netdep::{FlowRecord, HostMap, NetworkDependency, Proto, ServiceEndpoint};
use ctxvuln_core::topology::{NodeKind, TopologyGraph, TopologyLink, TopologyNode};
use ctxvuln_core::vulnmatch::VulnerabilityRecord;
use rand::seq::IndexedRandom;
use rand::Rng;

// ---- apriori

/// Every ordered item pair checked directly against its definition.
pub fn brute_force_rules(
    txs: &[Transaction],
    min_support: f64,
    min_confidence: f64,
) -> Vec<AssociationRule> {
    let n = txs.len();
    if n == 0 {
        return Vec::new();
    }
    let items: BTreeSet<&str> = txs
        .iter()
        .flat_map(|t| t.items.iter().map(String::as_str))
        .collect();
    let pos = |t: &Transaction, item: &str| t.items.iter().position(|i| i == item);
    let mut out = Vec::new();
    for &x in &items {
        for &y in &items {
            if x == y {
                continue;
            }
            let count_x = txs.iter().filter(|t| pos(t, x).is_some()).count();
            let count_y = txs.iter().filter(|t| pos(t, y).is_some()).count();
            let mut both = 0;
            let mut x_first = 0;
            for t in txs {
                if let (Some(px), Some(py)) = (pos(t, x), pos(t, y)) {
                    both += 1;
                    if px < py {
                        x_first += 1;
                    }
                }
            }
            let sup = |c: usize| c as f64 / n as f64;
            if sup(count_x) < min_support || sup(count_y) < min_support || sup(both) < min_support {
                continue;
            }
            let confidence = both as f64 / count_x as f64;
            if confidence < min_confidence || x_first * 2 <= both {
                continue;
            }
            out.push(AssociationRule {
                antecedent: x.to_string(),
                consequent: y.to_string(),
                support: sup(both),
                confidence,
            });
        }
    }
    out
}

pub fn rule_set(rules: &[AssociationRule]) -> BTreeSet<(String, String, u64, u64)> {
    rules
        .iter()
        .map(|r| {
            (
                r.antecedent.clone(),
                r.consequent.clone(),
                r.support.to_bits(),
                r.confidence.to_bits(),
            )
        })
        .collect()
}

fn tx(items: Vec<String>) -> Transaction {
    Transaction {
        node: "n".into(),
        window_start: 0,
        items,
    }
}

/// Every ordered arrangement of distinct items drawn from `alphabet`.
fn arrangements(alphabet: &[&str]) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..alphabet.len() {
        let mut next = Vec::new();
        for seq in &frontier {
            for &a in alphabet {
                if !seq.iter().any(|s| s == a) {
                    let mut s = seq.clone();
                    s.push(a.to_string());
                    next.push(s);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// All transaction lists of length 1..=`max_txs` over the ordered
/// arrangements of `alphabet`, without repeats in the list order
/// (lists are multisets).
pub fn exhaustive_transaction_sets(alphabet: &[&str], max_txs: usize) -> Vec<Vec<Transaction>> {
    let arr = arrangements(alphabet);
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), 0)];
    while let Some((picked, from)) = stack.pop() {
        if !picked.is_empty() {
            out.push(picked.iter().map(|&i| tx(arr[i].clone())).collect());
        }
        if picked.len() == max_txs {
            continue;
        }
        for i in from..arr.len() {
            let mut p = picked.clone();
            p.push(i);
            stack.push((p, i));
        }
    }
    out
}

pub fn random_transactions<R: Rng>(
    rng: &mut R,
    max_txs: usize,
    max_items: usize,
) -> Vec<Transaction> {
    let alphabet: Vec<String> = (0..rng.random_range(1..=max_items))
        .map(|i| format!("i{i}"))
        .collect();
    (0..rng.random_range(1..=max_txs))
        .map(|_| {
            let mut items = alphabet.clone();
            // shuffle, then keep a random prefix
            for i in (1..items.len()).rev() {
                items.swap(i, rng.random_range(0..=i));
            }
            items.truncate(rng.random_range(0..=alphabet.len()));
            tx(items)
        })
        .collect()
}

// ---- flow nesting

/// All-pairs check of every flow against every other flow.
pub fn brute_force_nesting(
    flows: &[FlowRecord],
    host_of: &HostMap,
    threshold: f64,
) -> Vec<NetworkDependency> {
    let endpoint = |f: &FlowRecord| ServiceEndpoint {
        ip: f.dst_ip,
        port: f.dst_port,
        proto: f.proto,
    };
    let upstreams: BTreeSet<ServiceEndpoint> = flows.iter().map(endpoint).collect();
    let mut out = Vec::new();
    for up in &upstreams {
        let members: Vec<&FlowRecord> = flows.iter().filter(|f| endpoint(f) == *up).collect();
        for down in &upstreams {
            if down == up {
                continue;
            }
            let hits = members
                .iter()
                .filter(|f| {
                    flows.iter().any(|g| {
                        endpoint(g) == *down
                            && host_of[&g.src_ip] == host_of[&f.dst_ip]
                            && g.start_ms >= f.start_ms
                            && g.end_ms <= f.end_ms
                    })
                })
                .count();
            let weight = hits as f64 / members.len() as f64;
            if hits > 0 && weight >= threshold {
                out.push(NetworkDependency {
                    upstream: *up,
                    downstream: *down,
                    weight,
                });
            }
        }
    }
    out
}

/// Up to `max_flows` flows among a handful of hosts, some sharing a host
/// across two addresses.
pub fn random_flows<R: Rng>(rng: &mut R, max_flows: usize) -> (Vec<FlowRecord>, HostMap) {
    let n_ips = rng.random_range(2..=6u8);
    let ips: Vec<Ipv4Addr> = (1..=n_ips).map(|i| Ipv4Addr::new(10, 0, 0, i)).collect();
    let n_hosts = rng.random_range(1..=n_ips as usize);
    let host_of: HostMap = ips
        .iter()
        .map(|ip| (*ip, format!("h{}", rng.random_range(0..n_hosts))))
        .collect();
    let ports = [80u16, 53, 8020];
    let flows = (0..rng.random_range(1..=max_flows))
        .map(|_| {
            let start = rng.random_range(0..200u64);
            FlowRecord {
                src_ip: *ips.choose(rng).unwrap(),
                src_port: rng.random_range(30000..30010),
                dst_ip: *ips.choose(rng).unwrap(),
                dst_port: *ports.choose(rng).unwrap(),
                proto: if rng.random_bool(0.8) {
                    Proto::Tcp
                } else {
                    Proto::Udp
                },
                start_ms: start,
                end_ms: start + rng.random_range(0..120u64),
            }
        })
        .collect();
    (flows, host_of)
}

// ---- pagerank

/// Dense power iteration with an explicit column-stochastic matrix.
pub fn dense_pagerank(n: usize, edges: &[(usize, usize)], damping: f64) -> Vec<f64> {
    let mut m = vec![vec![0.0f64; n]; n];
    let mut out_deg = vec![0usize; n];
    for &(u, _) in edges {
        out_deg[u] += 1;
    }
    for &(u, v) in edges {
        m[v][u] += 1.0 / out_deg[u] as f64;
    }
    for (u, &d) in out_deg.iter().enumerate() {
        if d == 0 {
            for row in m.iter_mut() {
                row[u] = 1.0 / n as f64;
            }
        }
    }
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n)
            .map(|v| {
                (1.0 - damping) / n as f64 + damping * (0..n).map(|u| m[v][u] * x[u]).sum::<f64>()
            })
            .collect();
        let delta: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if delta < 1e-14 {
            break;
        }
    }
    x
}

pub fn random_digraph<R: Rng>(rng: &mut R, max_nodes: usize) -> (usize, Vec<(usize, usize)>) {
    let n = rng.random_range(1..=max_nodes);
    let p = rng.random_range(0.0..0.5);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    (n, edges)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

// ---- whole deployments

const COMPONENTS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];

/// A small random deployment (tree-shaped network behind `gw0`) plus a
/// vulnerability db whose records often share products, and so node sets.
pub fn random_scenario<R: Rng>(rng: &mut R) -> (Cdg, Vec<VulnerabilityRecord>) {
    let mut topo = TopologyGraph {
        nodes: vec![TopologyNode::new("gw0", NodeKind::Gateway)],
        links: Vec::new(),
    };
    let n_switches = rng.random_range(1..=3);
    let mut switches = Vec::new();
    for i in 0..n_switches {
        let id = format!("sw{i}");
        let kind = if i == 0 {
            NodeKind::CoreSwitch
        } else {
            NodeKind::EdgeSwitch
        };
        topo.nodes.push(TopologyNode::new(&id, kind));
        let parent = if i == 0 {
            "gw0".to_string()
        } else {
            switches.choose(rng).cloned().unwrap()
        };
        topo.links.push(TopologyLink::new(parent, &id));
        switches.push(id);
    }
    let n_servers = rng.random_range(1..=6);
    for i in 0..n_servers {
        let id = format!("s{i}");
        topo.nodes.push(TopologyNode::new(&id, NodeKind::Server));
        topo.links.push(TopologyLink::new(
            switches.choose(rng).cloned().unwrap(),
            &id,
        ));
    }

    let hosts: Vec<String> = topo.nodes.iter().skip(1).map(|n| n.id.clone()).collect();
    let mut sw_deps = Vec::new();
    let mut placed: Vec<(String, String)> = Vec::new();
    for host in &hosts {
        let mut comps: Vec<&str> = COMPONENTS
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.4))
            .collect();
        if comps.is_empty() {
            comps.push(COMPONENTS.choose(rng).unwrap());
        }
        for (j, &c) in comps.iter().enumerate() {
            let deps: Vec<&str> = comps[..j]
                .iter()
                .copied()
                .filter(|_| rng.random_bool(0.4))
                .collect();
            placed.push((host.clone(), c.to_string()));
            sw_deps.push(SoftwareDependency::new(host.clone(), c, deps));
        }
    }

    let mut endpoints = EndpointMap::new();
    let services: Vec<ServiceEndpoint> = placed
        .iter()
        .enumerate()
        .filter(|_| rng.random_bool(0.5))
        .map(|(i, (h, c))| {
            let ep = ServiceEndpoint::new(Ipv4Addr::new(10, 1, 0, i as u8 + 1), 9000, Proto::Tcp);
            endpoints.insert(ep, (h.clone(), c.clone()));
            ep
        })
        .collect();
    let mut net_deps = Vec::new();
    for &u in &services {
        for &d in &services {
            if u != d && rng.random_bool(0.3) {
                net_deps.push(NetworkDependency {
                    upstream: u,
                    downstream: d,
                    weight: rng.random_range(0.5..=1.0),
                });
            }
        }
    }
    let cdg = build_cdg(&topo, &sw_deps, &net_deps, &endpoints)
        .expect("scenario builds")
        .cdg;

    let vulndb = (0..rng.random_range(2..=8))
        .map(|i| VulnerabilityRecord {
            id: format!("CVE-2020-{:04}", 1000 + i),
            summary: String::new(),
            products: vec![COMPONENTS.choose(rng).unwrap().to_string()],
            base_score: (rng.random_range(0..=100) as f64) / 10.0,
        })
        .collect();
    (cdg, vulndb)
}

pub fn by_id<T, F: Fn(&T) -> &str>(items: &[T], key: F) -> BTreeMap<String, usize> {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| (key(t).to_string(), i))
        .collect()
}
