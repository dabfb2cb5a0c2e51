//! Grid kernels and a full coupled step, run inside a one-thread pool and
//! inside the default pool. Build with `--no-default-features` for the plain
//! sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qtensor_core::dynamics::{SimState, Stepper, StepperConfig};
use qtensor_core::energy::{total_energy, PotentialParams};
use qtensor_core::grid::{
    tensor_laplacian, velocity_laplacian, Boundary, Grid, HelmholtzSolver, VectorField,
};
use qtensor_core::init::random_q;
use qtensor_core::tensor::BulkForce;

struct Pool {
    label: String,
    #[cfg(feature = "parallel")]
    inner: rayon::ThreadPool,
}

impl Pool {
    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        return self.inner.install(f);
        #[cfg(not(feature = "parallel"))]
        f()
    }
}

#[cfg(feature = "parallel")]
fn pools() -> Vec<Pool> {
    let build = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let all = rayon::current_num_threads();
    let mut out = vec![Pool {
        label: "threads=1".into(),
        inner: build(1),
    }];
    if all > 1 {
        out.push(Pool {
            label: format!("threads={all}"),
            inner: build(all),
        });
    }
    out
}

#[cfg(not(feature = "parallel"))]
fn pools() -> Vec<Pool> {
    vec![Pool {
        label: "sequential".into(),
    }]
}

fn params() -> PotentialParams {
    PotentialParams::new(-1.0, 0.0, 1.0, 0.1, 1.0, 1.0).unwrap()
}

fn kernels(c: &mut Criterion) {
    for n in [64usize, 128] {
        let grid = Grid::new_2d(n, n, 1.0 / n as f64, Boundary::Box).unwrap();
        let q = random_q(grid, 7);
        let u = VectorField::from_fn(grid, |a, x| {
            if a == 0 {
                (3.0 * x[1]).sin()
            } else {
                (2.0 * x[0]).cos()
            }
        });
        let solver = HelmholtzSolver::new(grid, 1.0, 1e-3);
        let state = SimState::new(u.clone(), q.clone(), 0.0).unwrap();
        for pool in pools() {
            let label = pool.label.clone();
            let mut g = c.benchmark_group(format!("{n}x{n}"));
            g.sample_size(20);
            g.bench_function(BenchmarkId::new("tensor_laplacian", &label), |b| {
                pool.install(|| b.iter(|| tensor_laplacian(&q)))
            });
            g.bench_function(BenchmarkId::new("velocity_laplacian", &label), |b| {
                pool.install(|| b.iter(|| velocity_laplacian(&u)))
            });
            g.bench_function(BenchmarkId::new("helmholtz_solve", &label), |b| {
                pool.install(|| b.iter(|| solver.solve_plane(&q.comps[0])))
            });
            g.bench_function(BenchmarkId::new("total_energy", &label), |b| {
                pool.install(|| b.iter(|| total_energy(&u, &q, &params(), BulkForce::F).unwrap()))
            });
            g.bench_function(BenchmarkId::new("coupled_step", &label), |b| {
                pool.install(|| {
                    let mut stepper =
                        Stepper::new(StepperConfig::new(1e-3, params()), &state).unwrap();
                    b.iter(|| stepper.coupled_step(&state).unwrap())
                })
            });
            g.finish();
        }
    }
}

criterion_group!(benches, kernels);
criterion_main!(benches);
