//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctxvuln_core::logmine::MiningParams;
use ctxvuln_core::netdep::DEFAULT_THRESHOLD;
use ctxvuln_core::scoring::{Aggregator, RankConfig, Weights};
use serde::{Deserialize, Serialize};

/// Generator settings used when no topology file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    FatTree {
        k: usize,
        #[serde(default)]
        hosts_per_edge: Option<usize>,
    },
    Bcube {
        n: usize,
        levels: usize,
    },
}

/// Every input path and parameter of a full run. Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub topology: Option<PathBuf>,
    pub topology_gen: Option<TopologySpec>,
    pub events: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    pub hosts: Option<PathBuf>,
    pub endpoints: Option<PathBuf>,
    pub vulndb: Option<PathBuf>,

    pub window_ms: u64,
    pub min_support: f64,
    pub min_confidence: f64,
    pub threshold: f64,

    pub damping: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub weights: Weights,
    pub aggregator: Aggregator,

    pub simulate: bool,
    /// Defaults to the topology's only gateway node.
    pub gateway: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mining = MiningParams::default();
        let rank = RankConfig::default();
        Self {
            topology: None,
            topology_gen: None,
            events: None,
            flows: None,
            hosts: None,
            endpoints: None,
            vulndb: None,
            window_ms: mining.window_ms,
            min_support: mining.min_support,
            min_confidence: mining.min_confidence,
            threshold: DEFAULT_THRESHOLD,
            damping: rank.damping,
            max_iterations: rank.max_iterations,
            tolerance: rank.tolerance,
            weights: Weights::default(),
            aggregator: Aggregator::default(),
            simulate: false,
            gateway: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.topology,
            &mut self.events,
            &mut self.flows,
            &mut self.hosts,
            &mut self.endpoints,
            &mut self.vulndb,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn mining(&self) -> MiningParams {
        MiningParams {
            window_ms: self.window_ms,
            min_support: self.min_support,
            min_confidence: self.min_confidence,
        }
    }

    pub fn rank(&self) -> RankConfig {
        RankConfig {
            damping: self.damping,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }

    /// Everything checkable before any stage runs.
    pub fn validate(&self) -> Result<()> {
        match (&self.topology, &self.topology_gen) {
            (None, None) => bail!("config needs `topology` or `topology_gen`"),
            (Some(_), Some(_)) => bail!("config sets both `topology` and `topology_gen`"),
            _ => {}
        }
        if self.vulndb.is_none() {
            bail!("config is missing `vulndb`");
        }
        if self.flows.is_some() && (self.hosts.is_none() || self.endpoints.is_none()) {
            bail!("`flows` needs both `hosts` and `endpoints`");
        }
        for (name, path) in [
            ("topology", &self.topology),
            ("events", &self.events),
            ("flows", &self.flows),
            ("hosts", &self.hosts),
            ("endpoints", &self.endpoints),
            ("vulndb", &self.vulndb),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    bail!("`{name}` file {} does not exist", p.display());
                }
            }
        }
        if self.window_ms == 0 {
            bail!("window_ms must be positive");
        }
        for (name, v) in [
            ("min_support", self.min_support),
            ("min_confidence", self.min_confidence),
            ("threshold", self.threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                bail!("{name} must be in (0, 1], got {v}");
            }
        }
        self.rank().check()?;
        self.weights.check()?;
        Ok(())
    }
}
