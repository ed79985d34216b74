use std::hint::black_box;

use bearing_servo::allocation::allocate;
use bearing_servo::dynamics::{step, ActuationInput};
use bearing_servo::sensing::observe;
use bearing_servo::{
    paper_scenario, Rotation3, ScenarioConfig, Simulation, UnitVector3, YawReference,
};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::Vector3;

fn config(duration: f64) -> ScenarioConfig {
    let mut cfg = paper_scenario();
    cfg.duration = duration;
    cfg
}

fn physics(c: &mut Criterion) {
    let s = config(1.0).resolve().unwrap();
    let input = ActuationInput {
        thrust: 10.0,
        omega: Vector3::new(0.1, -0.2, 0.05),
    };
    c.bench_function("rk4_step", |b| {
        b.iter(|| {
            step(
                black_box(&s.world),
                black_box(&input),
                &s.params,
                s.dt_physics,
            )
            .unwrap()
        })
    });
    c.bench_function("observe", |b| {
        b.iter(|| {
            observe(
                black_box(&s.world.vehicle),
                black_box(&s.world.target),
                s.truth.r_true,
            )
            .unwrap()
        })
    });
}

fn allocation(c: &mut Criterion) {
    let s = config(1.0).resolve().unwrap();
    let u = Vector3::new(0.4, -0.1, -0.3);
    let bearing = UnitVector3::new_normalize(Vector3::new(1.0, 0.05, 0.3)).unwrap();
    let attitude = Rotation3::identity();
    c.bench_function("allocate", |b| {
        let mut yaw = YawReference::new();
        b.iter(|| {
            allocate(
                black_box(&u),
                black_box(&bearing),
                &attitude,
                &s.params,
                &s.visibility,
                &s.k_attitude,
                &mut yaw,
            )
        })
    });
}

fn control_step(c: &mut Criterion) {
    let s = config(10.0).resolve().unwrap();
    c.bench_function("control_step", |b| {
        b.iter_batched_ref(
            || {
                let mut sim = Simulation::new(s);
                sim.advance().unwrap();
                sim
            },
            |sim| sim.advance().unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn short_run(c: &mut Criterion) {
    let s = config(1.0).resolve().unwrap();
    let mut group = c.benchmark_group("run");
    group.sample_size(20);
    group.bench_function("one_second", |b| b.iter(|| Simulation::new(s).run_to_end()));
    group.finish();
}

criterion_group!(benches, physics, allocation, control_step, short_run);
criterion_main!(benches);
