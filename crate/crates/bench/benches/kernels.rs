use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use trispin::evolution::{
    default_step, propagate_unitary, PropagationOptions, TimeDependentHamiltonian,
};
use trispin::linalg::{expm_generator, haar_state};
use trispin::metrics::{
    avg_gate_fidelity_monte_carlo, relative_avg_gate_fidelity, FidelityConvention,
};
use trispin_bench::{sector_generator, x_gate_model, x_target};

fn expm(c: &mut Criterion) {
    let model = x_gate_model();
    let g = sector_generator(&model);
    c.bench_function("expm_sector_27", |b| {
        b.iter(|| expm_generator(black_box(&g), 3e-3).unwrap())
    });
}

fn steps(c: &mut Criterion) {
    let model = x_gate_model();
    let h = default_step(model.params());
    c.bench_function("step_generator", |b| {
        b.iter(|| model.step_generator(black_box(10.0), h, 1))
    });
    let opts = PropagationOptions::new(h);
    c.bench_function("propagate_100_steps", |b| {
        b.iter(|| propagate_unitary(&model, 0.0, black_box(100.0 * h), &opts).unwrap())
    });
}

fn fidelity(c: &mut Criterion) {
    let v = x_target();
    let psi = haar_state(54 * 54, 7);
    let e = trispin::ComplexMatrix::from_fn(54, 54, |i, j| psi[i * 54 + j]);
    c.bench_function("relative_fidelity_54", |b| {
        b.iter(|| relative_avg_gate_fidelity(black_box(&e), &v, FidelityConvention::Haar).unwrap())
    });
    c.bench_function("monte_carlo_fidelity_200", |b| {
        b.iter(|| avg_gate_fidelity_monte_carlo(black_box(&e), 200, 1))
    });
}

criterion_group!(benches, expm, steps, fidelity);
criterion_main!(benches);
