use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use lnms_core::bench::{EnvId, EnvSpec, Environment};
use lnms_core::qp::assemble_fixed_mode_ocp;
use lnms_core::{solve_bnb, solve_qp, BnbConfig, ModeSequence, QpSettings};

fn cart1() -> Environment {
    Environment::build(EnvId::Cart1, &EnvSpec::default()).unwrap()
}

fn fixed_mode_qp(c: &mut Criterion) {
    let env = cart1();
    let x = DVector::from_column_slice(&[0.4, 2.0]);
    let modes = ModeSequence::new(vec![0; env.ocp.horizon]);
    let qp = assemble_fixed_mode_ocp(&env.ocp, &modes, &x).unwrap();
    let settings = QpSettings::default();
    c.bench_function("cart1 fixed-mode QP", |b| b.iter(|| solve_qp(black_box(&qp), &settings).unwrap()));
}

fn branch_and_bound(c: &mut Criterion) {
    let env = cart1();
    let x = DVector::from_column_slice(&[0.7, 5.0]);
    let mut group = c.benchmark_group("cart1 branch-and-bound");
    group.sample_size(10);
    group.bench_function("exact", |b| {
        b.iter(|| solve_bnb(&env.ocp, black_box(&x), None, &BnbConfig::exact()).unwrap())
    });
    let warm = solve_bnb(&env.ocp, &x, None, &BnbConfig::exact()).unwrap().modes;
    group.bench_function("exact, optimal warm start", |b| {
        b.iter(|| solve_bnb(&env.ocp, black_box(&x), Some(&warm), &BnbConfig::exact()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fixed_mode_qp, branch_and_bound);
criterion_main!(benches);
