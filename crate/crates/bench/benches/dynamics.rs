//! Throughput benchmarks for the three inner loops: split-step unitary
//! propagation, one diffusion step, and the jump pipeline (density,
//! center draw, hit application).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use collapse_core::csl::{CslStepper, SmearingKernel};
use collapse_core::grw::{apply_jump, jump_probability_density, sample_jump_center, JumpKernel};
use collapse_core::propagator::evolve_unitary;
use collapse_core::rng::trajectory_rng;
use collapse_core::{make_gaussian_packet, superpose, CollapseParams, HamiltonianSpec, LatticeGrid};

fn cat_on(grid: &LatticeGrid) -> collapse_core::WaveFunction {
    let left = make_gaussian_packet(grid, -5.0, 1.0, 0.0).unwrap();
    let right = make_gaussian_packet(grid, 5.0, 1.0, 0.0).unwrap();
    superpose(1.0.into(), &left, 1.0.into(), &right).unwrap()
}

fn bench_unitary(c: &mut Criterion) {
    let grid = LatticeGrid::new(256, 0.1, -12.8).unwrap();
    let packet = make_gaussian_packet(&grid, 0.0, 1.0, 4.0).unwrap();
    let h = HamiltonianSpec::free(1.0, &grid).unwrap();
    // 100 steps per call amortizes the phase-table construction; report
    // per-call time and divide by 100 for the per-step cost.
    c.bench_function("unitary_evolve_100_steps_256_sites", |b| {
        b.iter(|| evolve_unitary(&packet, &h, 1.0, 0.1, 1e-3).unwrap())
    });
}

fn bench_csl_step(c: &mut Criterion) {
    for n_sites in [64usize, 256] {
        let dx = if n_sites == 64 { 0.5 } else { 0.1 };
        let x_min = -0.5 * n_sites as f64 * dx;
        let grid = LatticeGrid::new(n_sites, dx, x_min).unwrap();
        let cat = cat_on(&grid);
        let params = CollapseParams::new(1.0, 1.0, 1.0, 1, 1.0, 1.0).unwrap();
        let kernel = SmearingKernel::new(&grid, params.r_c()).unwrap();
        let mut stepper = CslStepper::new(&kernel, &params, 2e-4, None).unwrap();
        let mut rng = trajectory_rng(0, 0);
        let name = format!("csl_step_{n_sites}_sites");
        c.bench_function(&name, |b| {
            b.iter_batched_ref(
                || cat.amplitudes().to_vec(),
                |buf| stepper.step_in_place(buf, &mut rng).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

fn bench_jump_pipeline(c: &mut Criterion) {
    let grid = LatticeGrid::new(256, 0.25, -32.0).unwrap();
    let cat = cat_on(&grid);
    let kernel = JumpKernel::new(&grid, 1.0).unwrap();
    let mut rng = trajectory_rng(0, 1);
    c.bench_function("jump_pipeline_256_sites", |b| {
        b.iter(|| {
            let density = jump_probability_density(&cat, &kernel).unwrap();
            let center = sample_jump_center(&cat, &kernel, &mut rng).unwrap();
            let (post, weight) = apply_jump(&cat, &kernel, center).unwrap();
            (density, post, weight)
        })
    });
}

criterion_group!(benches, bench_unitary, bench_csl_step, bench_jump_pipeline);
criterion_main!(benches);
