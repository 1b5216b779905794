//! Sequential vs rayon execution for the block particle filter and simulation.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spatpomp::filters::{block_particle_filter, FilterConfig};
use spatpomp::pomp::{simulate, unit_blocks};
use spatpomp::synthetic::synthetic_seair;
use spatpomp::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bpf(c: &mut Criterion) {
    let syn = synthetic_seair(10, 20, 1).unwrap();
    let blocks = unit_blocks(10);
    let mut g = c.benchmark_group("bpf_u10_j1000");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            let cfg = FilterConfig::new(1000, 7).with_exec(exec);
            b.iter(|| black_box(block_particle_filter(&syn.model, &syn.params, &syn.data, &blocks, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn simulate_reps(c: &mut Criterion) {
    let syn = synthetic_seair(10, 30, 1).unwrap();
    let grid = syn.data.grid().clone();
    let mut g = c.benchmark_group("simulate_u10_200reps");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(simulate(&syn.model, &syn.params, &grid, 200, 3, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bpf, simulate_reps);
criterion_main!(benches);
