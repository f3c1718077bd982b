use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxvuln::config::{PipelineConfig, TopologySpec};
use ctxvuln::pipeline::{
    generate_topology, load_endpoint_file, load_event_file, load_flow_file, load_topology,
    load_vulndb_file, read_json, run_pipeline, sole_gateway, to_json,
};
use ctxvuln::report::{render_report, render_step_plot, ReportFormat};
use ctxvuln_core::cdg::{build_cdg, parse_cdg, serialize_cdg, Cdg};
use ctxvuln_core::fixsim::{compare_plans, FixPlan};
use ctxvuln_core::logmine::{
    extract_events, mine_software_dependencies, render_dependency_lines, MiningParams,
};
use ctxvuln_core::netdep::{load_host_map, mine_network_dependencies, render_dependency_listing};
use ctxvuln_core::scoring::{
    compute_importances, score_vulnerabilities, sweep_weights, weight_grid, Aggregator, RankConfig,
    VulnerabilityScore, Weights,
};
use ctxvuln_core::topology::{serialize_topology, validate_topology, TopologyFormat};
use ctxvuln_core::vulnmatch::{match_vulnerabilities, MatchReport, VulnerabilityRecord};
use ctxvuln_core::Exec;

#[derive(Parser)]
#[command(
    name = "ctxvuln",
    version,
    about = "Contextual vulnerability severity for cloud deployments"
)]
struct Cli {
    /// Pipeline config (JSON). Flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for `run` artifacts; relative `--out` paths resolve under it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, generate or validate topologies.
    #[command(subcommand)]
    Topo(TopoCommand),
    /// Mine software dependencies from component log events.
    MineSw(MineSwArgs),
    /// Mine network service dependencies from flow records.
    MineNet(MineNetArgs),
    /// Assemble the contextual dependency graph.
    Build(BuildArgs),
    /// Match vulnerability records against software nodes.
    Match(MatchArgs),
    /// Contextual severity ranking.
    Score(ScoreArgs),
    /// Rankings over a grid of weight settings.
    SweepWeights(SweepArgs),
    /// Compare two fix orders by alive servers per step.
    Simulate(SimulateArgs),
    /// Full pipeline from a config file.
    Run(RunArgs),
    /// Render a saved score file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for TopologyFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => TopologyFormat::Json,
            FormatArg::Csv => TopologyFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    FatTree,
    Bcube,
}

#[derive(Subcommand)]
enum TopoCommand {
    /// Parse a topology file and re-emit it.
    Parse {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Generate a data-center topology.
    Gen {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, required_if_eq("model", "fat-tree"))]
        k: Option<usize>,
        #[arg(long, required_if_eq("model", "bcube"))]
        n: Option<usize>,
        #[arg(long, required_if_eq("model", "bcube"))]
        levels: Option<usize>,
        #[arg(long)]
        hosts_per_edge: Option<usize>,
        #[arg(long, default_value = "gw0")]
        gateway: String,
        /// Leave out the gateway node.
        #[arg(long)]
        no_gateway: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Report structural problems; exits non-zero if any.
    Validate { file: PathBuf },
}

#[derive(Args)]
struct MineSwArgs {
    /// CSV/JSON events, or raw log lines with `--pattern`.
    events: PathBuf,
    #[arg(long)]
    window_ms: Option<u64>,
    #[arg(long)]
    min_support: Option<f64>,
    #[arg(long)]
    min_confidence: Option<f64>,
    /// Regex with named groups `ts`, `component` and optionally `node`.
    #[arg(long)]
    pattern: Option<String>,
    /// Node for lines the pattern gives no node for.
    #[arg(long)]
    node: Option<String>,
    /// Emit `<node=.. sw=.. dep=../>` lines instead of JSON.
    #[arg(long)]
    lines: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MineNetArgs {
    flows: PathBuf,
    #[arg(long)]
    hosts: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Emit the indented text listing instead of JSON.
    #[arg(long)]
    listing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    topo: PathBuf,
    #[arg(long)]
    sw_deps: Option<PathBuf>,
    #[arg(long)]
    net_deps: Option<PathBuf>,
    #[arg(long)]
    endpoints: Option<PathBuf>,
    /// Also write the cycle-closing edges that were dropped.
    #[arg(long)]
    dropped: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    cdg: PathBuf,
    #[arg(long)]
    vulndb: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    cdg: PathBuf,
    #[arg(long)]
    matches: PathBuf,
    #[arg(long)]
    vulndb: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long)]
    aggregator: Option<Aggregator>,
    #[arg(long)]
    w_ti: Option<f64>,
    #[arg(long)]
    w_ni: Option<f64>,
    #[arg(long)]
    w_si: Option<f64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    rank: RankArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, value_parser = parse_report_format, default_value = "json")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    rank: RankArgs,
    /// Values tried for each weight.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
    levels: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    rank: RankArgs,
    #[command(flatten)]
    weights: WeightArgs,
    /// `ncvs`, `cvss`, or a file of vulnerability ids (one per line or a JSON array).
    #[arg(long, default_value = "ncvs")]
    plan_a: String,
    #[arg(long, default_value = "cvss")]
    plan_b: String,
    /// Defaults to the graph's only gateway node.
    #[arg(long)]
    gateway: Option<String>,
    /// Print an ASCII plot of both curves to stderr.
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    hosts: Option<PathBuf>,
    #[arg(long)]
    endpoints: Option<PathBuf>,
    #[arg(long)]
    vulndb: Option<PathBuf>,
    #[arg(long)]
    window_ms: Option<u64>,
    #[arg(long)]
    min_support: Option<f64>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    rank: RankArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long)]
    simulate: bool,
    #[arg(long)]
    gateway: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Adds the unmatched-records footer to text output.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long, value_parser = parse_report_format, default_value = "text")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_report_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

struct Ctx {
    config: PipelineConfig,
    out_dir: Option<PathBuf>,
    verbose: bool,
}

impl Ctx {
    fn emit(&self, out: Option<&Path>, contents: &str) -> Result<()> {
        match out {
            Some(path) => {
                let path = match &self.out_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.to_path_buf(),
                };
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, contents)
                    .with_context(|| format!("writing {}", path.display()))?;
                if self.verbose {
                    eprintln!("wrote {}", path.display());
                }
            }
            None => print!("{contents}"),
        }
        Ok(())
    }

    fn rank(&self, a: &RankArgs) -> RankConfig {
        let base = self.config.rank();
        RankConfig {
            damping: a.damping.unwrap_or(base.damping),
            max_iterations: a.max_iterations.unwrap_or(base.max_iterations),
            tolerance: a.tolerance.unwrap_or(base.tolerance),
        }
    }

    fn weights(&self, a: &WeightArgs) -> (Weights, Aggregator) {
        let w = self.config.weights;
        let weights = Weights::new(
            a.w_ti.unwrap_or(w.w_ti),
            a.w_ni.unwrap_or(w.w_ni),
            a.w_si.unwrap_or(w.w_si),
        );
        (weights, a.aggregator.unwrap_or(self.config.aggregator))
    }
}

struct Loaded {
    cdg: Cdg,
    matches: MatchReport,
    vulndb: Vec<VulnerabilityRecord>,
}

fn load_inputs(i: &Inputs) -> Result<Loaded> {
    let cdg = parse_cdg(
        &fs::read_to_string(&i.cdg).with_context(|| format!("reading {}", i.cdg.display()))?,
    )
    .with_context(|| format!("loading {}", i.cdg.display()))?;
    Ok(Loaded {
        cdg,
        matches: read_json(&i.matches)?,
        vulndb: load_vulndb_file(&i.vulndb)?,
    })
}

fn score(
    ctx: &Ctx,
    l: &Loaded,
    rank: &RankArgs,
    weights: &WeightArgs,
) -> Result<Vec<VulnerabilityScore>> {
    let importances = compute_importances(&l.cdg, &ctx.rank(rank))?;
    let (w, agg) = ctx.weights(weights);
    Ok(score_vulnerabilities(
        &l.matches.matches,
        &importances,
        &w,
        agg,
        &l.vulndb,
    )?)
}

fn plan(spec: &str, scores: &[VulnerabilityScore], l: &Loaded) -> Result<(FixPlan, String)> {
    Ok(match spec {
        "ncvs" => (FixPlan::from_scores(scores), spec.to_string()),
        "cvss" => (
            FixPlan::by_base_score(&l.matches.matches, &l.vulndb)?,
            spec.to_string(),
        ),
        file => {
            let path = Path::new(file);
            let text = fs::read_to_string(path).with_context(|| format!("reading plan {file}"))?;
            let ids: Vec<String> = if text.trim_start().starts_with('[') {
                serde_json::from_str(&text).with_context(|| format!("parsing plan {file}"))?
            } else {
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(String::from)
                    .collect()
            };
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (FixPlan::new(ids), label)
        }
    })
}

fn topo(ctx: &Ctx, cmd: TopoCommand) -> Result<ExitCode> {
    match cmd {
        TopoCommand::Parse { file, out, format } => {
            let g = load_topology(&file)?;
            ctx.emit(out.as_deref(), &serialize_topology(&g, format.into()))?;
        }
        TopoCommand::Gen {
            model,
            k,
            n,
            levels,
            hosts_per_edge,
            gateway,
            no_gateway,
            out,
            format,
        } => {
            let spec = match model {
                ModelArg::FatTree => TopologySpec::FatTree {
                    k: k.expect("required by clap"),
                    hosts_per_edge,
                },
                ModelArg::Bcube => {
                    if hosts_per_edge.is_some() {
                        bail!("--hosts-per-edge only applies to fat-tree");
                    }
                    TopologySpec::Bcube {
                        n: n.expect("required by clap"),
                        levels: levels.expect("required by clap"),
                    }
                }
            };
            let g = generate_topology(&spec, (!no_gateway).then_some(gateway.as_str()))?;
            ctx.emit(out.as_deref(), &serialize_topology(&g, format.into()))?;
        }
        TopoCommand::Validate { file } => {
            let violations = validate_topology(&load_topology(&file)?);
            if violations.is_empty() {
                println!("ok");
            } else {
                for v in &violations {
                    println!("{v}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<ExitCode> {
    match command {
        Command::Topo(cmd) => return topo(ctx, cmd),
        Command::MineSw(a) => {
            let events = match &a.pattern {
                Some(p) => {
                    let re = regex::Regex::new(p).context("invalid --pattern")?;
                    let text = fs::read_to_string(&a.events)?;
                    extract_events(&text, &re, a.node.as_deref())?
                }
                None => load_event_file(&a.events)?,
            };
            let base = ctx.config.mining();
            let params = MiningParams {
                window_ms: a.window_ms.unwrap_or(base.window_ms),
                min_support: a.min_support.unwrap_or(base.min_support),
                min_confidence: a.min_confidence.unwrap_or(base.min_confidence),
            };
            let deps = mine_software_dependencies(&events, &params)?;
            let text = if a.lines {
                render_dependency_lines(&deps)
            } else {
                to_json(&deps)
            };
            ctx.emit(a.out.as_deref(), &text)?;
        }
        Command::MineNet(a) => {
            let hosts = load_host_map(&fs::read_to_string(&a.hosts)?)
                .with_context(|| format!("loading {}", a.hosts.display()))?;
            let threshold = a.threshold.unwrap_or(ctx.config.threshold);
            let deps = mine_network_dependencies(&load_flow_file(&a.flows)?, &hosts, threshold)?;
            let text = if a.listing {
                render_dependency_listing(&deps)
            } else {
                to_json(&deps)
            };
            ctx.emit(a.out.as_deref(), &text)?;
        }
        Command::Build(a) => {
            let topo = load_topology(&a.topo)?;
            let sw = match &a.sw_deps {
                Some(p) => read_json(p)?,
                None => Vec::new(),
            };
            let net = match &a.net_deps {
                Some(p) => read_json(p)?,
                None => Vec::new(),
            };
            let endpoints = match &a.endpoints {
                Some(p) => load_endpoint_file(p)?,
                None => Default::default(),
            };
            let built = build_cdg(&topo, &sw, &net, &endpoints)?;
            if ctx.verbose {
                for d in &built.dropped {
                    eprintln!("dropped {:?} edge {} -> {}", d.kind, d.from, d.to);
                }
            }
            if let Some(p) = &a.dropped {
                ctx.emit(Some(p), &to_json(&built.dropped))?;
            }
            ctx.emit(a.out.as_deref(), &serialize_cdg(&built.cdg))?;
        }
        Command::Match(a) => {
            let cdg = parse_cdg(&fs::read_to_string(&a.cdg)?)
                .with_context(|| format!("loading {}", a.cdg.display()))?;
            let report = match_vulnerabilities(&load_vulndb_file(&a.vulndb)?, &cdg);
            ctx.emit(a.out.as_deref(), &to_json(&report))?;
        }
        Command::Score(a) => {
            let l = load_inputs(&a.inputs)?;
            let scores = score(ctx, &l, &a.rank, &a.weights)?;
            ctx.emit(
                a.out.as_deref(),
                &render_report(&scores, Some(&l.matches), a.format),
            )?;
        }
        Command::SweepWeights(a) => {
            let l = load_inputs(&a.inputs)?;
            let importances = compute_importances(&l.cdg, &ctx.rank(&a.rank))?;
            let grid = weight_grid(&a.levels);
            let sweep = sweep_weights(
                &l.matches.matches,
                &importances,
                &l.vulndb,
                &grid,
                Exec::default(),
            )?;
            ctx.emit(a.out.as_deref(), &to_json(&sweep))?;
        }
        Command::Simulate(a) => {
            let l = load_inputs(&a.inputs)?;
            let scores = score(ctx, &l, &a.rank, &a.weights)?;
            let (plan_a, label_a) = plan(&a.plan_a, &scores, &l)?;
            let (plan_b, label_b) = plan(&a.plan_b, &scores, &l)?;
            let gateway = match a.gateway.clone().or_else(|| ctx.config.gateway.clone()) {
                Some(g) => g,
                None => sole_gateway(l.cdg.hardware_nodes().map(|n| (n.id.clone(), n.kind)))?,
            };
            let cmp = compare_plans(&l.cdg, &l.matches.matches, &plan_a, &plan_b, &gateway)?;
            if a.plot {
                eprint!("{}", render_step_plot(&cmp, &label_a, &label_b, 40));
            }
            ctx.emit(a.out.as_deref(), &cmp.steps_csv(&label_a, &label_b))?;
        }
        Command::Run(a) => {
            let mut cfg = ctx.config.clone();
            let cwd = Path::new(".");
            for (slot, flag) in [
                (&mut cfg.topology, a.topology),
                (&mut cfg.events, a.events),
                (&mut cfg.flows, a.flows),
                (&mut cfg.hosts, a.hosts),
                (&mut cfg.endpoints, a.endpoints),
                (&mut cfg.vulndb, a.vulndb),
            ] {
                if let Some(p) = flag {
                    *slot = Some(cwd.join(p));
                }
            }
            if cfg.topology.is_some() && ctx.config.topology.is_none() {
                cfg.topology_gen = None;
            }
            cfg.window_ms = a.window_ms.unwrap_or(cfg.window_ms);
            cfg.min_support = a.min_support.unwrap_or(cfg.min_support);
            cfg.min_confidence = a.min_confidence.unwrap_or(cfg.min_confidence);
            cfg.threshold = a.threshold.unwrap_or(cfg.threshold);
            let rank = ctx.rank(&a.rank);
            cfg.damping = rank.damping;
            cfg.max_iterations = rank.max_iterations;
            cfg.tolerance = rank.tolerance;
            (cfg.weights, cfg.aggregator) = ctx.weights(&a.weights);
            cfg.simulate |= a.simulate;
            if a.gateway.is_some() {
                cfg.gateway = a.gateway;
            }
            let out_dir = ctx.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            let outcome = run_pipeline(&cfg, &out_dir, ctx.verbose)?;
            print!(
                "{}",
                render_report(&outcome.scores, None, ReportFormat::Text)
            );
            if let Some(cmp) = &outcome.comparison {
                println!("\nfix-plan auc: ncvs {} vs cvss {}", cmp.a.auc, cmp.b.auc);
            }
        }
        Command::Report(a) => {
            let scores: Vec<VulnerabilityScore> = read_json(&a.scores)?;
            let matches: Option<MatchReport> = a.matches.as_deref().map(read_json).transpose()?;
            ctx.emit(
                a.out.as_deref(),
                &render_report(&scores, matches.as_ref(), a.format),
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    };
    let result = config.and_then(|config| {
        let ctx = Ctx {
            config,
            out_dir: cli.out_dir,
            verbose: cli.verbose,
        };
        dispatch(&ctx, cli.command)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
