use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use rbx_core::linalg::lu_solve_in_place;
use rbx_core::spd::{cdm_approx_error, cdm_build_offline, cdm_construct, pivoted_cholesky, DEFAULT_DROP_TOL};
use rbx_core::{
    build_problem2, sample_training_set, truth_solve, CdmOptions, Parameter, Problem, ReducedModel, Sampling,
    TrainingSet,
};
use std::hint::black_box;

fn thermal_setup(n: usize, points: usize) -> (Problem, TrainingSet, ReducedModel) {
    let problem = build_problem2(19).expect("thermal block builds");
    let train = sample_training_set(problem.affine().bounds(), &Sampling::Random { count: points, seed: 11 })
        .expect("training set");
    let mut model = ReducedModel::new(&problem);
    let mut i = 0;
    while model.len() < n {
        let s = truth_solve(&problem, train.get(i)).expect("truth solve");
        let _ = model.extend_basis(&problem, &s);
        i += 1;
    }
    (problem, train, model)
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimator sweep, 1000 points");
    for n in [5, 20, 40] {
        let (problem, train, model) = thermal_setup(n, 1000);
        let points: Vec<&Parameter> = train.points().iter().collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| model.estimate_batch(&problem, black_box(&points)).unwrap())
        });
    }
    group.finish();
}

fn cholesky(c: &mut Criterion) {
    let mut group = c.benchmark_group("pivoted cholesky, 40 steps");
    for size in [500, 2000] {
        let y = DMatrix::from_fn(60, size, |i, j| (((i * 31 + j * 17) % 97) as f64 - 48.0) / 48.0);
        let diag: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, _| {
            b.iter(|| pivoted_cholesky(&diag, 40, DEFAULT_DROP_TOL, |j| y.tr_mul(&y.column(j))))
        });
    }
    group.finish();
}

fn cdm(c: &mut Criterion) {
    let (problem, train, model) = thermal_setup(20, 2000);
    let offline = cdm_build_offline(&model, &problem, 10).expect("offline data");
    c.bench_function("cdm approximate error, N = 20", |b| {
        b.iter(|| cdm_approx_error(&model, &problem, &offline, black_box(train.get(3))).unwrap())
    });
    c.bench_function("cdm construction, 2000 points, budget 40", |b| {
        b.iter(|| cdm_construct(&model, &problem, &offline, &train, 40, &CdmOptions::default()).unwrap())
    });
}

fn reduced_lu(c: &mut Criterion) {
    let mut group = c.benchmark_group("reduced LU solve");
    for n in [40, 150] {
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { n as f64 } else { 0.0 });
        let rhs = DVector::from_element(n, 1.0);
        group.bench_with_input(BenchmarkId::new("blocked", n), &n, |b, _| {
            b.iter(|| {
                let mut w = a.as_slice().to_vec();
                let mut x = rhs.as_slice().to_vec();
                lu_solve_in_place(&mut w, n, &mut x);
                x
            })
        });
        group.bench_with_input(BenchmarkId::new("nalgebra", n), &n, |b, _| b.iter(|| a.clone().lu().solve(&rhs)));
    }
    group.finish();
}

criterion_group!(benches, sweep, cholesky, cdm, reduced_lu);
criterion_main!(benches);
