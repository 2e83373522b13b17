use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kato_core::birman_schwinger::count_negative_bound_states;
use kato_core::bound_states::{default_kappa_max, find_bound_states};
use kato_core::grids::{build_eval_grid, build_support_grid, EvalSpec};
use kato_core::potentials::{KatoQuadrature, Potential, Primitive};
use kato_core::propagators::{SpectralQuadrature, StoneContext};
use kato_core::special::bessel_j;

fn well() -> Potential {
    Potential::new(vec![Primitive::square_well(-4.0, 1.0)]).unwrap()
}

fn special(c: &mut Criterion) {
    c.bench_function("bessel_j 2.0 over z in (0, 50)", |b| {
        b.iter(|| (1..200).map(|k| bessel_j(2.0, black_box(k as f64 * 0.25)).unwrap()).sum::<f64>())
    });
}

fn kato(c: &mut Criterion) {
    let q = KatoQuadrature::default();
    let same_sign = Potential::new(vec![Primitive::gaussian(1.0, 1.0), Primitive::gaussian(2.0, 0.5).shifted([1.0, 0.0, 0.0])]).unwrap();
    let probes = same_sign.default_probes();
    c.bench_function("kato_norm closed form", |b| b.iter(|| same_sign.kato_norm(black_box(&probes), &q).unwrap()));
    let few = [[0.0; 3], [1.0, 0.0, 0.0]];
    let radial = Potential::new(vec![Primitive::gaussian(1.0, 1.0), Primitive::gaussian(-2.0, 0.5)]).unwrap();
    c.bench_function("kato_norm mixed sign radial", |b| b.iter(|| radial.kato_norm(black_box(&few), &q).unwrap()));
    // Off-center sign changes fall back to the spherical product rule.
    let loose = KatoQuadrature { rel_tol: 1e-3, ..q };
    let mixed = Potential::new(vec![Primitive::gaussian(1.0, 1.0), Primitive::gaussian(-2.0, 0.5).shifted([1.0, 0.0, 0.0])]).unwrap();
    c.bench_function("kato_norm mixed sign off-center", |b| b.iter(|| mixed.kato_norm(black_box(&few), &loose).unwrap()));
}

fn spectral(c: &mut Criterion) {
    let p = well();
    let g = build_support_grid(&p, 24, 26).unwrap();
    c.bench_function("count_negative_bound_states square well", |b| {
        b.iter(|| count_negative_bound_states(black_box(&p), &g).unwrap())
    });
    let kmax = default_kappa_max(&p);
    c.bench_function("find_bound_states square well", |b| b.iter(|| find_bound_states(black_box(&p), &g, kmax).unwrap()));
}

fn propagators(c: &mut Criterion) {
    let p = well();
    let g = build_support_grid(&p, 24, 26).unwrap();
    let pairs = build_eval_grid(&EvalSpec::new(0.5, 6.0, 8)).pairs;
    let sq = SpectralQuadrature::new(30.0, 1.0, 16).unwrap();
    let mut group = c.benchmark_group("stone");
    group.sample_size(10);
    group.bench_function("context square well", |b| b.iter(|| StoneContext::new(black_box(&p), &g, &sq, &pairs).unwrap()));
    let ctx = StoneContext::new(&p, &g, &sq, &pairs).unwrap();
    group.bench_function("heat slice", |b| b.iter(|| ctx.heat_pc(black_box(1.0)).unwrap()));
    group.finish();
}

criterion_group!(benches, special, kato, spectral, propagators);
criterion_main!(benches);
