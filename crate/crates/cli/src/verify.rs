//! Oracle checks comparing the online machinery against direct truth-space
//! computations and brute-force references.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbx_core::rb::{reconstruct, residual_dual_norm_sq};
use rbx_core::spd::{pivoted_cholesky, smm_construct, DEFAULT_DROP_TOL};
use rbx_core::{
    build_problem1, build_problem2, error_estimate, reduced_solve, truth_solve, Parameter, Problem, ReducedModel,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

pub fn random_parameter(problem: &Problem, rng: &mut impl Rng) -> Parameter {
    let b = problem.affine().bounds();
    Parameter::new(b.lower().iter().zip(b.upper()).map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect())
}

/// Model built from `n` truth solves at random parameters.
pub fn random_model(problem: &Problem, n: usize, rng: &mut impl Rng) -> rbx_core::Result<ReducedModel> {
    let mut model = ReducedModel::new(problem);
    while model.len() < n {
        let snap = truth_solve(problem, &random_parameter(problem, rng))?;
        match model.extend_basis(problem, &snap) {
            Ok(()) | Err(rbx_core::Error::DependentSnapshot { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(model)
}

/// `||r||_{X'}^2` by a Riesz solve of the assembled truth residual.
pub fn direct_residual_sq(problem: &Problem, mu: &Parameter, u: &DVector<f64>) -> rbx_core::Result<f64> {
    let affine = problem.affine();
    let theta = affine.evaluate_theta(mu)?;
    let r = affine.assemble_rhs(mu) - affine.apply_operator(&theta, u);
    let v = problem.truth().riesz_solve(&r);
    Ok(problem.truth().x_inner_product(&v, &v))
}

/// Offline-online residual norms against direct Riesz solves for `pairs`
/// random `(mu, N)` with `N <= n_max`; relative tolerance `tol`.
pub fn residual_equivalence(problem: &Problem, pairs: usize, n_max: usize, tol: f64, seed: u64) -> CheckOutcome {
    let name = format!("residual equivalence ({})", problem.name());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes: Vec<usize> = (0..pairs).map(|_| rng.random_range(1..=n_max)).collect();
    sizes.sort_unstable();
    let mut model = ReducedModel::new(problem);
    let mut worst: f64 = 0.0;
    for n in sizes {
        let mut run = || -> rbx_core::Result<f64> {
            while model.len() < n {
                let snap = truth_solve(problem, &random_parameter(problem, &mut rng))?;
                let _ = model.extend_basis(problem, &snap);
            }
            let mu = random_parameter(problem, &mut rng);
            let sol = reduced_solve(&model, problem, &mu)?;
            let online = residual_dual_norm_sq(&model, problem, &mu, &sol);
            let direct = direct_residual_sq(problem, &mu, &reconstruct(&model, &sol))?;
            Ok((online - direct).abs() / direct)
        };
        match run() {
            Ok(rel) => worst = worst.max(rel),
            Err(e) => return CheckOutcome::failed(&name, e),
        }
    }
    CheckOutcome::new(&name, worst <= tol, format!("{pairs} pairs, worst relative error {worst:.3e} (tol {tol:e})"))
}

/// `Delta_N(mu) >= ||u(mu) - u_N(mu)||_X` for `n_mu` random parameters at each
/// basis size in `sizes`.
pub fn certified_bound(problem: &Problem, sizes: &[usize], n_mu: usize, seed: u64) -> CheckOutcome {
    let name = format!("certified bound ({})", problem.name());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut min_effectivity = f64::INFINITY;
    let mut total = 0;
    let mut model = ReducedModel::new(problem);
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    for n in sizes {
        let run = |model: &mut ReducedModel, rng: &mut ChaCha8Rng| -> rbx_core::Result<Vec<f64>> {
            while model.len() < n {
                let snap = truth_solve(problem, &random_parameter(problem, rng))?;
                let _ = model.extend_basis(problem, &snap);
            }
            let mut eff = Vec::with_capacity(n_mu);
            for _ in 0..n_mu {
                let mu = random_parameter(problem, rng);
                let delta = error_estimate(model, problem, &mu)?;
                let sol = reduced_solve(model, problem, &mu)?;
                let u = truth_solve(problem, &mu)?.coefficients;
                let err = problem.truth().x_norm(&(u - reconstruct(model, &sol)));
                eff.push(delta / err);
            }
            Ok(eff)
        };
        match run(&mut model, &mut rng) {
            Ok(eff) => {
                total += eff.len();
                violations += eff.iter().filter(|e| **e < 1.0 || e.is_nan()).count();
                min_effectivity = eff.iter().copied().fold(min_effectivity, f64::min);
            }
            Err(e) => return CheckOutcome::failed(&name, e),
        }
    }
    CheckOutcome::new(
        &name,
        violations == 0,
        format!("{violations} violations in {total} parameters, smallest effectivity {min_effectivity:.4}"),
    )
}

/// `Delta_N(mu^j) <= factor * Delta_0(mu^j)` at every snapshot parameter.
pub fn reproduction(problem: &Problem, model: &ReducedModel, factor: f64) -> CheckOutcome {
    let name = format!("reproduction at snapshots ({})", problem.name());
    let empty = ReducedModel::new(problem);
    let mut worst: f64 = 0.0;
    for mu in model.snapshot_params() {
        let ratio = match (error_estimate(model, problem, mu), error_estimate(&empty, problem, mu)) {
            (Ok(dn), Ok(d0)) => dn / d0,
            (Err(e), _) | (_, Err(e)) => return CheckOutcome::failed(&name, e),
        };
        worst = worst.max(ratio);
    }
    CheckOutcome::new(
        &name,
        worst <= factor,
        format!("N = {}, worst Delta_N / Delta_0 = {worst:.3e} (limit {factor:e})", model.len()),
    )
}

/// Pivot order of a greedy search that recomputes every Schur complement
/// diagonal from scratch.
pub fn brute_force_pivots(g: &DMatrix<f64>, steps: usize, drop_tol: f64) -> Vec<usize> {
    let n = g.nrows();
    let scale = g.diagonal().max();
    let mut pivots: Vec<usize> = Vec::new();
    while pivots.len() < steps.min(n) {
        let k = pivots.len();
        let gpp = DMatrix::from_fn(k, k, |i, j| g[(pivots[i], pivots[j])]);
        let chol = if k > 0 { gpp.cholesky() } else { None };
        let mut best = None;
        let mut best_val = f64::NEG_INFINITY;
        for i in (0..n).filter(|i| !pivots.contains(i)) {
            let mut s = g[(i, i)];
            if let Some(c) = &chol {
                let gpi = DVector::from_fn(k, |r, _| g[(pivots[r], i)]);
                s -= gpi.dot(&c.solve(&gpi));
            }
            if s > best_val {
                best_val = s;
                best = Some(i);
            }
        }
        match best {
            Some(i) if best_val > drop_tol * scale => pivots.push(i),
            _ => break,
        }
    }
    pivots
}

fn random_psd(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = rng.random_range(2..=30);
    let rank = if rng.random_bool(0.3) { rng.random_range(1..n) } else { n };
    let v = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let g = &v * v.transpose();
    let s = g.diagonal().max();
    g / s
}

/// Pivot order against the brute-force Schur search, and reconstruction of
/// the full factor.
pub fn pivoted_cholesky_oracle(cases: usize, seed: u64) -> CheckOutcome {
    let name = "pivoted Cholesky vs brute force";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    let mut worst_recon: f64 = 0.0;
    for _ in 0..cases {
        let g = random_psd(&mut rng);
        let n = g.nrows();
        let diag: Vec<f64> = g.diagonal().iter().copied().collect();
        let f = pivoted_cholesky(&diag, n, DEFAULT_DROP_TOL, |j| g.column(j).into_owned());
        if f.pivots != brute_force_pivots(&g, n, DEFAULT_DROP_TOL) {
            mismatches += 1;
        }
        let l = DMatrix::from_columns(&f.columns);
        worst_recon = worst_recon.max((&l * l.transpose() - &g).norm());
    }
    CheckOutcome::new(
        name,
        mismatches == 0 && worst_recon <= 1e-10,
        format!("{cases} matrices, {mismatches} pivot mismatches, worst reconstruction error {worst_recon:.3e}"),
    )
}

/// Size bound and the level/argmin conditions on random estimate arrays.
pub fn smm_oracle(cases: usize, seed: u64) -> CheckOutcome {
    let name = "SMM construction";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..cases {
        let len = rng.random_range(1..=200);
        let coarse = rng.random_bool(0.3);
        let delta: Vec<f64> = (0..len)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..1.0);
                if coarse {
                    (x * 8.0).floor() / 8.0
                } else {
                    10f64.powf(-6.0 * x)
                }
            })
            .collect();
        let eps = rng.random_range(0.0..0.5) * rng.random_range(0.0..1.0);
        let m = rng.random_range(1..=40);
        let d = smm_construct(&delta, eps, m);
        let d_max = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut expected = Vec::new();
        if d_max > eps {
            for k in 0..m {
                let nu = eps + (d_max - eps) * k as f64 / m as f64;
                let best = (0..len)
                    .filter(|&i| delta[i] >= nu)
                    .min_by(|&a, &b| (delta[a] - nu).total_cmp(&(delta[b] - nu)).then(a.cmp(&b)));
                if let Some(b) = best {
                    if !expected.contains(&b) {
                        expected.push(b);
                    }
                }
            }
        }
        let distinct = {
            let mut s = d.indices.clone();
            s.sort_unstable();
            s.dedup();
            s.len() == d.indices.len()
        };
        if d.len() > m || d.indices != expected || !distinct {
            failures += 1;
        }
    }
    CheckOutcome::new(name, failures == 0, format!("{cases} random arrays, {failures} failures"))
}

/// The oracle suite at small scale (`quick`) or at the default resolutions.
pub fn verify(quick: bool) -> Vec<CheckOutcome> {
    let (n_x, ns) = if quick { (14, 10) } else { (35, 19) };
    let mut out = Vec::new();
    let p1 = build_problem1(n_x);
    let p2 = build_problem2(ns);
    match (&p1, &p2) {
        (Ok(p1), Ok(p2)) => {
            let pairs = if quick { 15 } else { 50 };
            out.push(residual_equivalence(p1, pairs, 10, 1e-6, 1));
            out.push(residual_equivalence(p2, pairs, 10, 1e-6, 2));
            let n_mu = if quick { 30 } else { 100 };
            out.push(certified_bound(p2, &[2, 5, 10], n_mu, 3));
            for (p, seed) in [(p1, 4), (p2, 5)] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match random_model(p, 8, &mut rng) {
                    Ok(model) => out.push(reproduction(p, &model, 1e-8)),
                    Err(e) => out.push(CheckOutcome::failed("reproduction at snapshots", e)),
                }
            }
        }
        (Err(e), _) | (_, Err(e)) => out.push(CheckOutcome::failed("problem assembly", e)),
    }
    out.push(pivoted_cholesky_oracle(20, 6));
    out.push(smm_oracle(200, 7));
    out
}
