//! Network dependency mining from flow records.
//!
//! Flow `g` is nested in flow `f` when `g` leaves the host that `f` arrives
//! at and `g`'s interval lies inside `f`'s. An upstream endpoint (the serving
//! side of `f`) depends on a downstream endpoint when enough of its inbound
//! flows contain a nested flow to it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Locator, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Proto {
    #[serde(rename = "TCP", alias = "tcp")]
    Tcp,
    #[serde(rename = "UDP", alias = "udp")]
    Udp,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Tcp => "TCP",
            Proto::Udp => "UDP",
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Proto {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TCP" => Ok(Proto::Tcp),
            "UDP" => Ok(Proto::Udp),
            _ => Err(format!("unknown protocol `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub proto: Proto,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl FlowRecord {
    pub fn upstream(&self) -> ServiceEndpoint {
        ServiceEndpoint {
            ip: self.dst_ip,
            port: self.dst_port,
            proto: self.proto,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.src_port == 0 || self.dst_port == 0 {
            return Err("port 0 is out of range".into());
        }
        if self.start_ms > self.end_ms {
            return Err(format!(
                "start_ms {} after end_ms {}",
                self.start_ms, self.end_ms
            ));
        }
        Ok(())
    }
}

/// `ip:port` served over `proto`. Ordered by (ip, port, proto).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceEndpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
    pub proto: Proto,
}

impl ServiceEndpoint {
    pub fn new(ip: Ipv4Addr, port: u16, proto: Proto) -> Self {
        Self { ip, port, proto }
    }
}

impl fmt::Display for ServiceEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:[{}]", self.ip, self.port, self.proto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkDependency {
    pub upstream: ServiceEndpoint,
    pub downstream: ServiceEndpoint,
    pub weight: f64,
}

pub type HostMap = BTreeMap<Ipv4Addr, String>;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// CSV `src_ip,src_port,dst_ip,dst_port,proto,start_ms,end_ms` (header
/// optional) or a JSON array with the same keys.
pub fn load_flows(text: &str, json: bool) -> Result<Vec<FlowRecord>> {
    let flows: Vec<FlowRecord> = if json {
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
            if i == 0 && rec.get(0) == Some("src_ip") {
                continue;
            }
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            out.push(flow_from_csv(&rec, line)?);
        }
        out
    };
    for (i, f) in flows.iter().enumerate() {
        f.check().map_err(|m| Error::parse(Locator::Record(i), m))?;
    }
    Ok(flows)
}

fn flow_from_csv(rec: &csv::StringRecord, line: u64) -> Result<FlowRecord> {
    fn field<T: FromStr>(rec: &csv::StringRecord, line: u64, idx: usize, name: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = rec
            .get(idx)
            .ok_or_else(|| Error::parse(Locator::LineField(line, name.into()), "missing"))?;
        raw.parse::<T>()
            .map_err(|e| Error::parse(Locator::LineField(line, name.into()), e.to_string()))
    }
    Ok(FlowRecord {
        src_ip: field(rec, line, 0, "src_ip")?,
        src_port: field(rec, line, 1, "src_port")?,
        dst_ip: field(rec, line, 2, "dst_ip")?,
        dst_port: field(rec, line, 3, "dst_port")?,
        proto: field(rec, line, 4, "proto")?,
        start_ms: field(rec, line, 5, "start_ms")?,
        end_ms: field(rec, line, 6, "end_ms")?,
    })
}

/// JSON object mapping ip -> host id.
pub fn load_host_map(text: &str) -> Result<HostMap> {
    Ok(serde_json::from_str(text)?)
}

pub fn mine_network_dependencies(
    flows: &[FlowRecord],
    host_of: &HostMap,
    threshold: f64,
) -> Result<Vec<NetworkDependency>> {
    mine_network_dependencies_with(flows, host_of, threshold, Exec::default())
}

pub fn mine_network_dependencies_with(
    flows: &[FlowRecord],
    host_of: &HostMap,
    threshold: f64,
    exec: Exec,
) -> Result<Vec<NetworkDependency>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Argument(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }
    let host = |ip: &Ipv4Addr| {
        host_of
            .get(ip)
            .map(String::as_str)
            .ok_or_else(|| Error::unknown("ip", ip.to_string()))
    };
    let mut src_host = Vec::with_capacity(flows.len());
    let mut dst_host = Vec::with_capacity(flows.len());
    for f in flows {
        src_host.push(host(&f.src_ip)?);
        dst_host.push(host(&f.dst_ip)?);
    }

    // outbound flows per originating host, by start time
    let mut outbound: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, h) in src_host.iter().enumerate() {
        outbound.entry(h).or_default().push(i);
    }
    for list in outbound.values_mut() {
        list.sort_by_key(|&i| (flows[i].start_ms, i));
    }

    let mut by_upstream: BTreeMap<ServiceEndpoint, Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        by_upstream.entry(f.upstream()).or_default().push(i);
    }
    let groups: Vec<(ServiceEndpoint, Vec<usize>)> = by_upstream.into_iter().collect();

    let per_upstream = exec.map(&groups, |(up, members)| {
        let mut hits: BTreeMap<ServiceEndpoint, usize> = BTreeMap::new();
        for &fi in members {
            let f = &flows[fi];
            let Some(candidates) = outbound.get(dst_host[fi]) else {
                continue;
            };
            let first = candidates.partition_point(|&g| flows[g].start_ms < f.start_ms);
            let mut nested = BTreeSet::new();
            for &gi in &candidates[first..] {
                let g = &flows[gi];
                if g.start_ms > f.end_ms {
                    break;
                }
                let down = g.upstream();
                if g.end_ms <= f.end_ms && down != *up {
                    nested.insert(down);
                }
            }
            for d in nested {
                *hits.entry(d).or_default() += 1;
            }
        }
        let total = members.len() as f64;
        hits.into_iter()
            .map(|(down, n)| NetworkDependency {
                upstream: *up,
                downstream: down,
                weight: n as f64 / total,
            })
            .filter(|d| d.weight >= threshold)
            .collect::<Vec<_>>()
    });
    Ok(per_upstream.into_iter().flatten().collect())
}

/// Indented listing: one `ip:port:[PROTO]` header per upstream, then one
/// `  ip  port  [PROTO]` line per downstream.
pub fn render_dependency_listing(deps: &[NetworkDependency]) -> String {
    let mut grouped: BTreeMap<ServiceEndpoint, BTreeSet<ServiceEndpoint>> = BTreeMap::new();
    for d in deps {
        grouped.entry(d.upstream).or_default().insert(d.downstream);
    }
    let mut out = String::new();
    for (up, downs) in grouped {
        let _ = writeln!(out, "{up}");
        for d in downs {
            let _ = writeln!(out, "  {}  {}  [{}]", d.ip, d.port, d.proto);
        }
    }
    out
}
