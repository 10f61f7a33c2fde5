//! Kernel timings on a one-thread pool against the full rayon pool.
//!
//! `cargo bench -p mabuchi` compares `threads=1` with `threads=<all>`;
//! `cargo bench -p mabuchi --no-default-features` times the plain sequential
//! build under the name `sequential`.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mabuchi::flow::flow_step;
use mabuchi::geodesic::{self, PathGrid, SolveOptions};
use mabuchi::grid::{laplacian, Field, Grid};
use mabuchi::kahler::lichnerowicz_norm_sq;
use mabuchi::make_metric;
use mabuchi::npc::random_potential;
use mabuchi::par;

struct Backend {
    name: String,
    #[cfg(feature = "parallel")]
    pool: rayon::ThreadPool,
}

impl Backend {
    fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        return self.pool.install(f);
        #[cfg(not(feature = "parallel"))]
        f()
    }
}

#[cfg(feature = "parallel")]
fn backends() -> Vec<Backend> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut threads = vec![1];
    if all > 1 {
        threads.push(all);
    }
    threads
        .into_iter()
        .map(|t| Backend {
            name: format!("threads={t}"),
            pool: rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap(),
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn backends() -> Vec<Backend> {
    vec![Backend { name: "sequential".into() }]
}

fn grid_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid");
    for n in [32, 128] {
        let g = Grid::new(n).unwrap();
        let phi = random_potential(g, 1, 2e-3, 4);
        let m = make_metric(&phi).unwrap();
        let f = random_potential(g, 2, 1.0, 4);
        for b in backends() {
            group.bench_function(BenchmarkId::new(format!("laplacian/{}", b.name), n), |bench| {
                bench.iter(|| b.run(|| laplacian(black_box(&f))))
            });
            group.bench_function(BenchmarkId::new(format!("lichnerowicz/{}", b.name), n), |bench| {
                bench.iter(|| b.run(|| lichnerowicz_norm_sq(black_box(&f), &m)))
            });
            group.bench_function(BenchmarkId::new(format!("flow_step/{}", b.name), n), |bench| {
                bench.iter(|| b.run(|| flow_step(black_box(&phi), 1e-6).unwrap()))
            });
        }
    }
    group.finish();
}

fn solver_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("solver");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    let g = Grid::new(16).unwrap();
    let a = random_potential(g, 3, 1e-2, 1);
    let z = Field::zeros(g);
    let opts = SolveOptions {
        eps_target: 1e-2,
        ..SolveOptions::default()
    };
    let pairs: Vec<(Field, Field)> = (0..4)
        .map(|s| (random_potential(g, 10 + s, 1e-2, 1), random_potential(g, 20 + s, 1e-2, 1)))
        .collect();
    for b in backends() {
        group.bench_function(BenchmarkId::new("epsilon_geodesic", &b.name), |bench| {
            bench.iter(|| {
                b.run(|| {
                    let guess = PathGrid::linear_guess(&z, &a, 16, 0.1).unwrap();
                    geodesic::solve_epsilon_geodesic(&z, &a, 0.1, &opts, Some(&guess)).unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("distance_batch", &b.name), |bench| {
            bench.iter(|| {
                b.run(|| {
                    par::map_indices(pairs.len(), |i| {
                        geodesic::distance(&pairs[i].0, &pairs[i].1, &opts).unwrap().value
                    })
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, grid_kernels, solver_kernels);
criterion_main!(benches);
