//! End-to-end batch run with every intermediate artifact written to disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ctxvuln_core::cdg::{build_cdg, load_endpoint_map, serialize_cdg, EndpointMap};
use ctxvuln_core::fixsim::{compare_plans, FixPlan, PlanComparison};
use ctxvuln_core::logmine::{
    load_events, mine_software_dependencies, render_dependency_lines, LogEvent,
};
use ctxvuln_core::netdep::{
    load_flows, load_host_map, mine_network_dependencies, render_dependency_listing, FlowRecord,
};
use ctxvuln_core::scoring::{compute_importances, score_vulnerabilities, VulnerabilityScore};
use ctxvuln_core::topology::{
    parse_topology, serialize_topology, validate_topology, BCube, FatTree, NodeKind,
    TopologyFormat, TopologyGenerator, TopologyGraph,
};
use ctxvuln_core::vulnmatch::{load_vulndb, match_vulnerabilities, VulnerabilityRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{PipelineConfig, TopologySpec};
use crate::report::{render_report, render_step_plot, ReportFormat};

/// Marker left in the output directory when a stage fails.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// Topology file, format picked by extension (`.csv` or JSON otherwise).
pub fn load_topology(path: &Path) -> Result<TopologyGraph> {
    let format = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        TopologyFormat::Csv
    } else {
        TopologyFormat::Json
    };
    parse_topology(&read(path)?, format)
        .with_context(|| format!("loading topology {}", path.display()))
}

pub fn load_event_file(path: &Path) -> Result<Vec<LogEvent>> {
    load_events(&read(path)?, is_json(path))
        .with_context(|| format!("loading events {}", path.display()))
}

pub fn load_flow_file(path: &Path) -> Result<Vec<FlowRecord>> {
    load_flows(&read(path)?, is_json(path))
        .with_context(|| format!("loading flows {}", path.display()))
}

pub fn load_vulndb_file(path: &Path) -> Result<Vec<VulnerabilityRecord>> {
    load_vulndb(&read(path)?)
        .with_context(|| format!("loading vulnerability db {}", path.display()))
}

pub fn load_endpoint_file(path: &Path) -> Result<EndpointMap> {
    load_endpoint_map(&read(path)?).with_context(|| format!("loading endpoints {}", path.display()))
}

pub fn generate_topology(spec: &TopologySpec, gateway: Option<&str>) -> Result<TopologyGraph> {
    let gateway = gateway.map(String::from);
    Ok(match *spec {
        TopologySpec::FatTree { k, hosts_per_edge } => FatTree {
            k,
            hosts_per_edge,
            gateway,
        }
        .generate()?,
        TopologySpec::Bcube { n, levels } => BCube { n, levels, gateway }.generate()?,
    })
}

/// The topology's gateway when exactly one exists.
pub fn sole_gateway(
    topo_nodes: impl Iterator<Item = (String, Option<NodeKind>)>,
) -> Result<String> {
    let gateways: Vec<String> = topo_nodes
        .filter(|(_, k)| *k == Some(NodeKind::Gateway))
        .map(|(id, _)| id)
        .collect();
    match gateways.as_slice() {
        [one] => Ok(one.clone()),
        [] => bail!("no gateway node; pass one explicitly"),
        many => bail!("several gateway nodes {many:?}; pass one explicitly"),
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub scores: Vec<VulnerabilityScore>,
    pub comparison: Option<PlanComparison>,
    pub artifacts: Vec<PathBuf>,
}

struct Run<'a> {
    out_dir: &'a Path,
    artifacts: Vec<PathBuf>,
    verbose: bool,
}

impl Run<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        if self.verbose {
            eprintln!("[{name}]");
        }
        f(self).with_context(|| format!("stage `{name}` failed"))
    }
}

pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: &Path,
    verbose: bool,
) -> Result<PipelineOutcome> {
    config.validate().context("invalid configuration")?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let mut run = Run {
        out_dir,
        artifacts: Vec::new(),
        verbose,
    };
    match stages(config, &mut run) {
        Ok((scores, comparison)) => Ok(PipelineOutcome {
            scores,
            comparison,
            artifacts: run.artifacts,
        }),
        Err(e) => {
            let written: Vec<String> = run
                .artifacts
                .iter()
                .map(|p| p.display().to_string())
                .collect();
            let note = format!("{e:#}\npartial artifacts:\n{}\n", written.join("\n"));
            let _ = fs::write(&marker, note);
            Err(e)
        }
    }
}

fn stages(
    config: &PipelineConfig,
    run: &mut Run<'_>,
) -> Result<(Vec<VulnerabilityScore>, Option<PlanComparison>)> {
    let topo = run.stage("topo", |run| {
        let topo = match (&config.topology, &config.topology_gen) {
            (Some(path), _) => load_topology(path)?,
            (None, Some(spec)) => {
                generate_topology(spec, Some(config.gateway.as_deref().unwrap_or("gw0")))?
            }
            (None, None) => unreachable!("validated"),
        };
        let violations = validate_topology(&topo);
        if !violations.is_empty() {
            bail!("topology is invalid: {}", violations.join("; "));
        }
        run.write(
            "topology.json",
            &serialize_topology(&topo, TopologyFormat::Json),
        )?;
        Ok(topo)
    })?;

    let sw_deps = run.stage("mine-sw", |run| {
        let deps = match &config.events {
            Some(path) => mine_software_dependencies(&load_event_file(path)?, &config.mining())?,
            None => Vec::new(),
        };
        run.write("sw_deps.json", &to_json(&deps))?;
        run.write("sw_deps.txt", &render_dependency_lines(&deps))?;
        Ok(deps)
    })?;

    let (net_deps, endpoints) = run.stage("mine-net", |run| {
        let (deps, endpoints) = match (&config.flows, &config.hosts, &config.endpoints) {
            (Some(flows), Some(hosts), Some(endpoints)) => {
                let host_map = load_host_map(&read(hosts)?)?;
                let deps = mine_network_dependencies(
                    &load_flow_file(flows)?,
                    &host_map,
                    config.threshold,
                )?;
                (deps, load_endpoint_file(endpoints)?)
            }
            (None, _, Some(endpoints)) => (Vec::new(), load_endpoint_file(endpoints)?),
            _ => (Vec::new(), EndpointMap::new()),
        };
        run.write("net_deps.json", &to_json(&deps))?;
        run.write("net_deps.txt", &render_dependency_listing(&deps))?;
        Ok((deps, endpoints))
    })?;

    let cdg = run.stage("build", |run| {
        let built = build_cdg(&topo, &sw_deps, &net_deps, &endpoints)?;
        run.write("cdg.json", &serialize_cdg(&built.cdg))?;
        run.write("dropped_edges.json", &to_json(&built.dropped))?;
        if run.verbose && !built.dropped.is_empty() {
            eprintln!("  dropped {} cycle-closing edges", built.dropped.len());
        }
        Ok(built.cdg)
    })?;

    let vulndb_path = config.vulndb.as_deref().expect("validated");
    let (vulndb, matches) = run.stage("match", |run| {
        let db = load_vulndb_file(vulndb_path)?;
        let report = match_vulnerabilities(&db, &cdg);
        run.write("matches.json", &to_json(&report))?;
        Ok((db, report))
    })?;

    let scores = run.stage("score", |run| {
        let importances = compute_importances(&cdg, &config.rank())?;
        run.write("importances.json", &to_json(&importances))?;
        let scores = score_vulnerabilities(
            &matches.matches,
            &importances,
            &config.weights,
            config.aggregator,
            &vulndb,
        )?;
        run.write(
            "report.json",
            &render_report(&scores, Some(&matches), ReportFormat::Json),
        )?;
        run.write(
            "report.txt",
            &render_report(&scores, Some(&matches), ReportFormat::Text),
        )?;
        Ok(scores)
    })?;

    let comparison = if config.simulate {
        Some(run.stage("simulate", |run| {
            let gateway = match &config.gateway {
                Some(g) => g.clone(),
                None => sole_gateway(topo.nodes.iter().map(|n| (n.id.clone(), Some(n.kind))))?,
            };
            let contextual = FixPlan::from_scores(&scores);
            let base = FixPlan::by_base_score(&matches.matches, &vulndb)?;
            let cmp = compare_plans(&cdg, &matches.matches, &contextual, &base, &gateway)
                .map_err(|e| anyhow!(e))?;
            run.write("steps.csv", &cmp.steps_csv("ncvs", "cvss"))?;
            run.write("steps.txt", &render_step_plot(&cmp, "ncvs", "cvss", 40))?;
            Ok(cmp)
        })?)
    } else {
        None
    };
    Ok((scores, comparison))
}
