//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ctxvuln::config::PipelineConfig;
use ctxvuln::pipeline::{
    load_endpoint_file, load_event_file, load_flow_file, load_topology, load_vulndb_file,
};
use ctxvuln_core::cdg::{build_cdg, Cdg};
use ctxvuln_core::fixsim::{compare_plans, FixPlan, FixSimulator};
use ctxvuln_core::graph::DiGraph;
use ctxvuln_core::logmine::{apriori_rules, mine_software_dependencies};
use ctxvuln_core::netdep::{load_host_map, mine_network_dependencies};
use ctxvuln_core::scoring::{
    compute_importances, pagerank, score_vulnerabilities, Aggregator, RankConfig,
    VulnerabilityScore, Weights,
};
use ctxvuln_core::synth::{synthetic_cdg, SynthParams};
use ctxvuln_core::vulnmatch::{match_vulnerabilities, MatchReport, VulnerabilityRecord};
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/hadoop-cluster")
}

struct Fixture {
    cdg: Cdg,
    vulndb: Vec<VulnerabilityRecord>,
    matches: MatchReport,
}

fn load_fixture() -> Fixture {
    let cfg = PipelineConfig::load(&fixture_dir().join("pipeline.json")).unwrap();
    let topo = load_topology(cfg.topology.as_deref().unwrap()).unwrap();
    let sw = mine_software_dependencies(
        &load_event_file(cfg.events.as_deref().unwrap()).unwrap(),
        &cfg.mining(),
    )
    .unwrap();
    let hosts =
        load_host_map(&std::fs::read_to_string(cfg.hosts.as_deref().unwrap()).unwrap()).unwrap();
    let net = mine_network_dependencies(
        &load_flow_file(cfg.flows.as_deref().unwrap()).unwrap(),
        &hosts,
        cfg.threshold,
    )
    .unwrap();
    let endpoints = load_endpoint_file(cfg.endpoints.as_deref().unwrap()).unwrap();
    let cdg = build_cdg(&topo, &sw, &net, &endpoints).unwrap().cdg;
    let vulndb = load_vulndb_file(cfg.vulndb.as_deref().unwrap()).unwrap();
    let matches = match_vulnerabilities(&vulndb, &cdg);
    Fixture {
        cdg,
        vulndb,
        matches,
    }
}

fn fixture_scores(f: &Fixture, agg: Aggregator) -> Vec<VulnerabilityScore> {
    let imp = compute_importances(&f.cdg, &RankConfig::default()).unwrap();
    score_vulnerabilities(
        &f.matches.matches,
        &imp,
        &Weights::default(),
        agg,
        &f.vulndb,
    )
    .unwrap()
}

fn pagerank_correctness() -> Outcome {
    let cycle = DiGraph::from_indexed(
        vec!["a".into(), "b".into(), "c".into()],
        vec![(0, 1), (1, 2), (2, 0)],
    );
    let s = pagerank(&cycle, &RankConfig::default()).unwrap();
    ensure!(
        s.iter().all(|v| (v - 1.0 / 3.0).abs() <= 1e-9),
        "3-cycle scores {s:?}"
    );

    let cfg = RankConfig {
        max_iterations: 1000,
        tolerance: 1e-12,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let (n, edges) = random_digraph(&mut rng, 20);
        let g = DiGraph::from_indexed((0..n).map(|i| format!("v{i}")).collect(), edges.clone());
        let d = l1(
            &pagerank(&g, &cfg).unwrap(),
            &dense_pagerank(n, &edges, 0.85),
        );
        ensure!(d <= 1e-4, "L1 {d:e} on n={n}");
        worst = worst.max(d);
    }
    Ok(format!(
        "3-cycle exact; 30 random digraphs, max L1 {worst:.1e} (limit 1e-4)"
    ))
}

fn motivating_example() -> Outcome {
    let f = load_fixture();
    let base = |id: &str| f.vulndb.iter().find(|r| r.id == id).map(|r| r.base_score);
    ensure!(
        base("CVE-2016-1392") == Some(7.4) && base("CVE-2015-7430") == Some(8.4),
        "fixture base scores"
    );
    let mut parts = Vec::new();
    for agg in [Aggregator::WeightedSum, Aggregator::CvssProduct] {
        let scores = fixture_scores(&f, agg);
        let sev = |id: &str| scores.iter().find(|s| s.vuln_id == id).map(|s| s.severity);
        let (core, nn) = (sev("CVE-2016-1392"), sev("CVE-2015-7430"));
        let (Some(core), Some(nn)) = (core, nn) else {
            return Err(format!("{agg}: a vulnerability went unmatched"));
        };
        ensure!(core > nn, "{agg}: core switch {core} <= name node {nn}");
        parts.push(format!("{agg} {core:.4} > {nn:.4}"));
    }
    Ok(format!(
        "CVE-2016-1392 over CVE-2015-7430: {}",
        parts.join(", ")
    ))
}

fn base_order_preservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut pairs = 0;
    for case in 0..300 {
        let (cdg, db) = random_scenario(&mut rng);
        let report = match_vulnerabilities(&db, &cdg);
        let imp = compute_importances(&cdg, &RankConfig::default()).unwrap();
        let scores = score_vulnerabilities(
            &report.matches,
            &imp,
            &Weights::default(),
            Aggregator::CvssProduct,
            &db,
        )
        .unwrap();
        for (i, a) in scores.iter().enumerate() {
            for b in &scores[i + 1..] {
                if a.affected_nodes == b.affected_nodes {
                    pairs += 1;
                    ensure!(
                        a.base_score >= b.base_score,
                        "case {case}: {} above {}",
                        a.vuln_id,
                        b.vuln_id
                    );
                }
            }
        }
    }
    ensure!(pairs > 0, "no equal node sets generated");
    Ok(format!(
        "300 random deployments, {pairs} same-node-set pairs in base order"
    ))
}

fn fix_plan_dominance() -> Outcome {
    let f = load_fixture();
    let matched = f.matches.matches.len();
    ensure!(matched >= 6, "only {matched} matched vulnerabilities");
    let scores = fixture_scores(&f, Aggregator::WeightedSum);
    let ncvs = FixPlan::from_scores(&scores);
    let cvss = FixPlan::by_base_score(&f.matches.matches, &f.vulndb).unwrap();
    let cmp = compare_plans(&f.cdg, &f.matches.matches, &ncvs, &cvss, "gw0").unwrap();
    let servers = f
        .cdg
        .hardware_nodes()
        .filter(|n| n.kind == Some(ctxvuln_core::topology::NodeKind::Server))
        .count();
    for r in [&cmp.a, &cmp.b] {
        ensure!(
            r.alive_counts.windows(2).all(|w| w[0] <= w[1]),
            "non-monotone {:?}",
            r.alive_counts
        );
        ensure!(
            r.alive_counts.last() == Some(&servers),
            "terminal {:?} != {servers}",
            r.alive_counts.last()
        );
    }
    ensure!(
        cmp.a.auc > cmp.b.auc,
        "auc contextual {} vs base {}",
        cmp.a.auc,
        cmp.b.auc
    );

    // every simulation, not just the two shipped plans
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (cdg, db) = random_scenario(&mut rng);
        let report = match_vulnerabilities(&db, &cdg);
        let sim = FixSimulator::new(&cdg, &report.matches, "gw0").unwrap();
        let mut ids: Vec<String> = report.matches.iter().map(|m| m.vuln_id.clone()).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let r = sim.simulate(&FixPlan::new(ids)).unwrap();
        ensure!(
            r.alive_counts.windows(2).all(|w| w[0] <= w[1]),
            "random plan non-monotone {:?}",
            r.alive_counts
        );
        ensure!(
            r.alive_counts.last() == Some(&sim.server_count()),
            "random plan terminal"
        );
    }
    Ok(format!(
        "{matched} vulns; auc contextual {} > base {}; monotone and complete (+200 random plans)",
        cmp.a.auc, cmp.b.auc
    ))
}

fn performance() -> Outcome {
    let cdg = synthetic_cdg(&SynthParams::default()).unwrap();
    ensure!(
        cdg.nodes().len() == 100_000,
        "synthetic CDG has {} nodes",
        cdg.nodes().len()
    );
    let cfg = RankConfig {
        max_iterations: 100,
        tolerance: 0.001,
        ..Default::default()
    };
    let start = Instant::now();
    let imp = compute_importances(&cdg, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    ensure!(
        imp.len() == cdg.software_nodes().count(),
        "importance count"
    );
    ensure!(secs < 12.0, "compute_importances took {secs:.2}s");
    Ok(format!(
        "100000 nodes, {} edges, {secs:.3}s (limit 12s)",
        cdg.edges().len()
    ))
}

fn apriori_equivalence() -> Outcome {
    let thresholds = [(0.1, 0.7), (0.5, 0.5), (0.3, 1.0), (1.0, 0.1)];
    let mut cases = exhaustive_transaction_sets(&["a", "b", "c"], 3);
    let exhaustive = cases.len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    cases.extend((0..100).map(|_| random_transactions(&mut rng, 10, 6)));
    for txs in &cases {
        for (s, c) in thresholds {
            let got = rule_set(&apriori_rules(txs, s, c).unwrap());
            ensure!(
                got == rule_set(&brute_force_rules(txs, s, c)),
                "mismatch on {txs:?} at ({s}, {c})"
            );
        }
    }
    Ok(format!(
        "{exhaustive} exhaustive + 100 random inputs, {} threshold pairs each",
        thresholds.len()
    ))
}

fn nesting_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let levels = [0.05, 0.25, 0.5, 0.75, 1.0];
    for case in 0..100 {
        let (flows, hosts) = random_flows(&mut rng, 50);
        let mut previous: Option<Vec<_>> = None;
        for t in levels {
            let got = mine_network_dependencies(&flows, &hosts, t).unwrap();
            ensure!(
                got == brute_force_nesting(&flows, &hosts, t),
                "case {case} mismatch at {t}"
            );
            let pairs: Vec<_> = got.iter().map(|d| (d.upstream, d.downstream)).collect();
            if let Some(prev) = &previous {
                ensure!(
                    pairs.iter().all(|p| prev.contains(p)),
                    "case {case} not monotone at {t}"
                );
            }
            previous = Some(pairs);
        }
    }
    Ok("100 random flow sets, exact match at 5 thresholds, monotone".into())
}

fn weight_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checks = 0;
    for case in 0..300 {
        let (cdg, db) = random_scenario(&mut rng);
        let report = match_vulnerabilities(&db, &cdg);
        let imp = compute_importances(&cdg, &RankConfig::default()).unwrap();
        let w = Weights::new(
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
            rng.random_range(0.01..5.0),
        );
        let order = |w: &Weights| -> Vec<String> {
            score_vulnerabilities(&report.matches, &imp, w, Aggregator::WeightedSum, &db)
                .unwrap()
                .into_iter()
                .map(|s| s.vuln_id)
                .collect()
        };
        let reference = order(&w);
        for c in [1e-3, 0.37, 2.0, 3.3, 1e3, rng.random_range(0.01..100.0)] {
            checks += 1;
            ensure!(
                order(&w.scaled(c)) == reference,
                "case {case}: order changed under c={c}"
            );
        }
    }
    Ok(format!("300 random deployments, {checks} scalings"))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_ctxvuln");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = fixture_dir().join("pipeline.json");
    let mut dirs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(bin)
            .arg("--config")
            .arg(&config)
            .arg("--out-dir")
            .arg(&out)
            .arg("run")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            status.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        dirs.push(out);
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    ensure!(
        names.iter().any(|n| n == "report.json"),
        "no report written"
    );
    for name in &names {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure!(a == b, "{name} differs between runs");
    }
    Ok(format!(
        "{} artifacts byte-identical across two runs",
        names.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("PageRank correctness", pagerank_correctness),
        ("Motivating-example ordering", motivating_example),
        ("Base-order preservation", base_order_preservation),
        ("Fix-plan dominance", fix_plan_dominance),
        ("Performance", performance),
        ("Apriori oracle equivalence", apriori_equivalence),
        ("Flow-nesting oracle equivalence", nesting_equivalence),
        ("Weight-scaling order invariance", weight_scaling),
        ("Determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
