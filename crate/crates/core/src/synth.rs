//! Seeded synthetic deployments for benchmarking and scale tests.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cdg::{build_cdg, Cdg, EndpointMap};
use crate::error::{Error, Result};
use crate::logmine::SoftwareDependency;
use crate::netdep::{NetworkDependency, Proto, ServiceEndpoint};
use crate::topology::{FatTree, TopologyGenerator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    /// Fat-tree arity of the hardware layer.
    pub k: usize,
    /// Total CDG nodes, hardware included.
    pub total_nodes: usize,
    /// Library dependencies drawn per component (same host, acyclic).
    pub deps_per_component: usize,
    /// Every `service_stride`-th component serves a network endpoint.
    pub service_stride: usize,
    /// Downstream services drawn per service.
    pub calls_per_service: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            k: 16,
            total_nodes: 100_000,
            deps_per_component: 2,
            service_stride: 5,
            calls_per_service: 3,
            seed: 7,
        }
    }
}

fn service_ip(i: usize) -> Ipv4Addr {
    let i = i as u32;
    Ipv4Addr::new(10, (i >> 16) as u8, (i >> 8) as u8, i as u8)
}

/// Fat-tree hardware plus random acyclic software and network layers.
pub fn synthetic_cdg(params: &SynthParams) -> Result<Cdg> {
    let topo = FatTree {
        k: params.k,
        hosts_per_edge: None,
        gateway: Some("gw0".into()),
    }
    .generate()?;
    let servers: Vec<String> = topo.servers().map(|s| s.id.clone()).collect();
    let hw = topo.nodes.len();
    // the first tier of components is only materialized through the second
    // tier's mandatory library dependency
    let min_total = hw + 2 * servers.len();
    if params.total_nodes < min_total
        || params.service_stride == 0
        || params.deps_per_component == 0
    {
        return Err(Error::Argument(format!(
            "need at least {min_total} total nodes, a positive service stride and dependency count"
        )));
    }
    let components = params.total_nodes - hw;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // component j lives on servers[j % servers.len()]
    let host_of = |j: usize| servers[j % servers.len()].as_str();
    let mut sw_deps = Vec::new();
    for j in servers.len()..components {
        let local_earlier = j / servers.len();
        let mut deps = BTreeMap::new();
        for _ in 0..params.deps_per_component.min(local_earlier) {
            let slot = rng.random_range(0..local_earlier);
            let dep = slot * servers.len() + j % servers.len();
            deps.insert(format!("c{dep}"), ());
        }
        if !deps.is_empty() {
            sw_deps.push(SoftwareDependency::new(
                host_of(j),
                format!("c{j}"),
                deps.into_keys().collect::<Vec<_>>(),
            ));
        }
    }

    let services: Vec<usize> = (0..components).step_by(params.service_stride).collect();
    let mut endpoints = EndpointMap::new();
    for (i, &j) in services.iter().enumerate() {
        endpoints.insert(
            ServiceEndpoint::new(service_ip(i), 8000, Proto::Tcp),
            (host_of(j).to_string(), format!("c{j}")),
        );
    }
    let mut net_deps = Vec::new();
    for i in 1..services.len() {
        for _ in 0..params.calls_per_service.min(i) {
            let callee = rng.random_range(0..i);
            net_deps.push(NetworkDependency {
                upstream: ServiceEndpoint::new(service_ip(i), 8000, Proto::Tcp),
                downstream: ServiceEndpoint::new(service_ip(callee), 8000, Proto::Tcp),
                weight: 1.0,
            });
        }
    }
    let built = build_cdg(&topo, &sw_deps, &net_deps, &endpoints)?;
    debug_assert!(built.dropped.is_empty());
    Ok(built.cdg)
}
