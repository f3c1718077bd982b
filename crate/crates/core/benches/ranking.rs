//! Sequential vs rayon-parallel timings for the data-parallel stages.

use std::hint::black_box;
use std::net::Ipv4Addr;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctxvuln_core::cdg::Projection;
use ctxvuln_core::logmine::{mine_software_dependencies_with, LogEvent, MiningParams};
use ctxvuln_core::netdep::{mine_network_dependencies_with, FlowRecord, HostMap, Proto};
use ctxvuln_core::scoring::{compute_importances_with, PageRank, RankConfig, Ranker};
use ctxvuln_core::synth::{synthetic_cdg, SynthParams};
use ctxvuln_core::Exec;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn ranking(c: &mut Criterion) {
    let mut group = c.benchmark_group("pagerank");
    group.sample_size(10);
    for total in [10_000usize, 100_000] {
        let cdg = synthetic_cdg(&SynthParams {
            total_nodes: total,
            ..Default::default()
        })
        .unwrap();
        let sw = cdg.project(Projection::Software);
        for (name, exec) in MODES {
            let ranker = PageRank::new(RankConfig::default()).with_exec(exec);
            group.bench_with_input(BenchmarkId::new(name, total), &sw, |b, g| {
                b.iter(|| black_box(ranker.rank(g).unwrap()))
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("compute_importances");
    group.sample_size(10);
    let cdg = synthetic_cdg(&SynthParams::default()).unwrap();
    for (name, exec) in MODES {
        let ranker = PageRank::new(RankConfig::default()).with_exec(exec);
        group.bench_function(name, |b| {
            b.iter(|| black_box(compute_importances_with(&cdg, &ranker, exec).unwrap()))
        });
    }
    group.finish();
}

fn mining(c: &mut Criterion) {
    // 64 hosts, each calling the next one inside every inbound request
    let hosts: HostMap = (0..64u8)
        .map(|i| (Ipv4Addr::new(10, 0, 0, i), format!("h{i}")))
        .collect();
    let mut flows = Vec::new();
    for round in 0..200u64 {
        for i in 0..63u8 {
            let start = round * 1000 + u64::from(i);
            flows.push(FlowRecord {
                src_ip: Ipv4Addr::new(10, 0, 0, i),
                src_port: 40000,
                dst_ip: Ipv4Addr::new(10, 0, 0, i + 1),
                dst_port: 8000 + u16::from(i % 4),
                proto: Proto::Tcp,
                start_ms: start,
                end_ms: start + 500 - u64::from(i) * 4,
            });
        }
    }
    let mut group = c.benchmark_group("mine_network_dependencies");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| black_box(mine_network_dependencies_with(&flows, &hosts, 0.5, exec).unwrap()))
        });
    }
    group.finish();

    let events: Vec<LogEvent> = (0..64)
        .flat_map(|h| {
            (0..2000u64).flat_map(move |i| {
                let t = i * 100;
                (0..6u64).map(move |c| {
                    LogEvent::new(t + c, format!("h{h}"), format!("c{}", (i + c) % 12))
                })
            })
        })
        .collect();
    let params = MiningParams {
        window_ms: 50,
        ..Default::default()
    };
    let mut group = c.benchmark_group("mine_software_dependencies");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| black_box(mine_software_dependencies_with(&events, &params, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, ranking, mining);
criterion_main!(benches);
