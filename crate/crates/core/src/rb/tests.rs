use super::*;
use crate::truth::{build_problem1, build_problem2, truth_solve};
use nalgebra::DMatrix;

fn mu9(seed: usize) -> Parameter {
    Parameter::new((0..9).map(|k| 0.1 + ((seed * 7 + k * 13) % 23) as f64 * 0.43).collect())
}

fn thermal_model(n: usize) -> (Problem, ReducedModel) {
    let p = build_problem2(10).unwrap();
    let mut model = ReducedModel::new(&p);
    for s in 0..n {
        let snap = truth_solve(&p, &mu9(s)).unwrap();
        model.extend_basis(&p, &snap).unwrap();
    }
    (p, model)
}

fn direct_residual_sq(p: &Problem, model: &ReducedModel, mu: &Parameter, sol: &ReducedSolution) -> f64 {
    let theta = p.affine().evaluate_theta(mu).unwrap();
    let u = reconstruct(model, sol);
    let r = p.affine().assemble_rhs(mu) - p.affine().apply_operator(&theta, &u);
    let v = p.truth().riesz_solve(&r);
    p.truth().x_inner_product(&v, &v)
}

#[test]
fn first_extension_normalizes_snapshot() {
    let (p, model) = thermal_model(1);
    let u = truth_solve(&p, &mu9(0)).unwrap().coefficients;
    let xi = &model.basis()[0];
    let scaled = &u / p.truth().x_norm(&u);
    assert!((xi - &scaled).amax() < 1e-12 * scaled.amax());
}

#[test]
fn dependent_snapshot_is_rejected_and_model_unchanged() {
    let (p, mut model) = thermal_model(2);
    let again = truth_solve(&p, &mu9(1)).unwrap();
    let before = model.len();
    let err = model.extend_basis(&p, &again).unwrap_err();
    assert!(matches!(err, Error::DependentSnapshot { .. }));
    assert_eq!(model.len(), before);
    assert_eq!(model.residual_ll().nrows(), before * 9);
}

#[test]
fn basis_is_x_orthonormal() {
    let (p, model) = thermal_model(5);
    let x = p.truth().x_inner().to_dense();
    let b = DMatrix::from_columns(model.basis());
    let gram = b.transpose() * x * &b;
    assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
}

#[test]
fn nested_structures() {
    let (p, small) = thermal_model(3);
    let (_, big) = thermal_model(4);
    for q in 0..9 {
        let a = &small.reduced_components()[q];
        assert!((a - big.reduced_components()[q].view((0, 0), (3, 3))).amax() < 1e-13);
    }
    let k = 3 * p.affine().q_a();
    assert!((small.residual_ll() - big.residual_ll().view((0, 0), (k, k))).amax() < 1e-13);
    assert!((small.residual_cl() - big.residual_cl().rows(0, k)).amax() < 1e-13);
    assert!((small.reduced_rhs() - big.reduced_rhs().rows(0, 3)).amax() < 1e-13);
}

#[test]
fn single_vector_solve_is_a_ratio() {
    let (p, model) = thermal_model(1);
    let mu = mu9(4);
    let sol = reduced_solve(&model, &p, &mu).unwrap();
    let xi = &model.basis()[0];
    let theta = p.affine().evaluate_theta(&mu).unwrap();
    let a = xi.dot(&p.affine().apply_operator(&theta, xi));
    let f = p.affine().rhs().dot(xi);
    assert!((sol.coeffs[0] - f / a).abs() < 1e-12 * (f / a).abs());
}

#[test]
fn reproduction_at_snapshot() {
    let (p, model) = thermal_model(1);
    let mu = mu9(0);
    let sol = reduced_solve(&model, &p, &mu).unwrap();
    let u = truth_solve(&p, &mu).unwrap().coefficients;
    assert!((reconstruct(&model, &sol) - &u).amax() < 1e-10 * u.amax());
    let r2 = residual_dual_norm_sq(&model, &p, &mu, &sol);
    assert!(r2 <= 1e-9 * model.residual_cc());
}

#[test]
fn matches_truth_space_galerkin_projection() {
    let (p, model) = thermal_model(8);
    let mu = mu9(11);
    let sol = reduced_solve(&model, &p, &mu).unwrap();
    let a = p.affine().assemble_operator(&mu).unwrap().to_dense();
    let v = DMatrix::from_columns(model.basis());
    let lhs = v.transpose() * &a * &v;
    let rhs = v.transpose() * p.affine().assemble_rhs(&mu);
    let c = lhs.lu().solve(&rhs).unwrap();
    assert!((&sol.coeffs - &c).amax() < 1e-10 * c.amax());
}

#[test]
fn output_is_linear() {
    let (p, model) = thermal_model(3);
    let zero = ReducedSolution {
        coeffs: DVector::zeros(3),
        mu: mu9(0),
    };
    assert_eq!(reduced_output(&model, &zero), 0.0);
    let a = reduced_solve(&model, &p, &mu9(5)).unwrap();
    let b = reduced_solve(&model, &p, &mu9(6)).unwrap();
    let sum = ReducedSolution {
        coeffs: &a.coeffs + &b.coeffs,
        mu: mu9(0),
    };
    let lhs = reduced_output(&model, &sum);
    let rhs = reduced_output(&model, &a) + reduced_output(&model, &b);
    assert!((lhs - rhs).abs() < 1e-14 * rhs.abs());
}

#[test]
fn residual_matches_direct_riesz_computation() {
    let (p, model) = thermal_model(6);
    for s in 6..16 {
        let mu = mu9(s);
        let sol = reduced_solve(&model, &p, &mu).unwrap();
        let direct = direct_residual_sq(&p, &model, &mu, &sol);
        let frame = residual_dual_norm_sq(&model, &p, &mu, &sol);
        let gram = residual_dual_norm_sq_gram(&model, &p, &mu, &sol);
        assert!((frame - direct).abs() <= 1e-6 * direct, "{frame} vs {direct}");
        assert!((gram - direct).abs() <= 1e-6 * direct, "{gram} vs {direct}");
    }
}

#[test]
fn empty_model_estimate_is_dual_norm_of_f() {
    let p = build_problem2(10).unwrap();
    let model = ReducedModel::new(&p);
    let mu = mu9(2);
    let f = p.affine().rhs();
    let dual = p.truth().riesz_solve(f).dot(f).sqrt();
    let alpha = coercivity_lower_bound(&p, &mu).unwrap();
    let delta = error_estimate(&model, &p, &mu).unwrap();
    assert!((delta - dual / alpha).abs() < 1e-12 * delta);
    assert!((model.residual_cc() - dual * dual).abs() < 1e-12 * model.residual_cc());
}

#[test]
fn estimator_does_no_truth_work() {
    let (p, model) = thermal_model(4);
    let before = p.counters().snapshot();
    error_estimate(&model, &p, &mu9(9)).unwrap();
    let pts = [mu9(1), mu9(2), mu9(3)];
    let refs: Vec<&Parameter> = pts.iter().collect();
    model.estimate_batch(&p, &refs).unwrap();
    let d = p.counters().snapshot().since(&before);
    assert_eq!(d.truth_ops, 0);
    assert_eq!(d.riesz_solves, 0);
    assert_eq!(d.truth_solves, 0);
    assert_eq!(d.estimator_evals, 4);
}

#[test]
fn batch_and_single_estimates_agree() {
    let (p, model) = thermal_model(4);
    let pts: Vec<Parameter> = (0..600).map(mu9).collect();
    let refs: Vec<&Parameter> = pts.iter().collect();
    let batch = model.estimate_batch(&p, &refs).unwrap();
    for (mu, b) in pts.iter().zip(&batch).step_by(37) {
        let s = error_estimate(&model, &p, mu).unwrap();
        assert!((s - b).abs() <= 1e-10 * s + 1e-13, "{s} vs {b}");
    }
}

#[test]
fn min_theta_identity_and_validity() {
    let p = build_problem2(7).unwrap();
    let CoercivityBound::MinTheta { anchor_alpha, .. } = p.coercivity().clone() else {
        panic!("thermal block uses min-theta");
    };
    for s in 0..5 {
        let mu = mu9(s);
        let lb = coercivity_lower_bound(&p, &mu).unwrap();
        let min_mu = mu.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((lb - min_mu * anchor_alpha).abs() < 1e-14 * lb);
        assert!(lb <= stability_constant(&p, &mu).unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn constant_bound_and_invalid_min_theta() {
    let p = build_problem1(8).unwrap();
    assert_eq!(coercivity_lower_bound(&p, &Parameter::new(vec![0.3, -0.8])).unwrap(), 1.0);
    // Problem 1 has a negative coefficient somewhere in its box.
    let err = CoercivityBound::min_theta(&p, &Parameter::new(vec![-0.5, 0.5])).unwrap_err();
    assert!(matches!(err, Error::StrategyInvalid(_)));
}

#[test]
fn collocation_residual_matches_direct() {
    let p = build_problem1(12).unwrap();
    let mut model = ReducedModel::new(&p);
    for mu in [[0.5, -0.5], [-0.9, 0.9], [0.0, 0.3]] {
        let s = truth_solve(&p, &Parameter::new(mu.to_vec())).unwrap();
        model.extend_basis(&p, &s).unwrap();
    }
    let mu = Parameter::new(vec![0.7, 0.2]);
    let sol = reduced_solve(&model, &p, &mu).unwrap();
    let direct = direct_residual_sq(&p, &model, &mu, &sol);
    let frame = residual_dual_norm_sq(&model, &p, &mu, &sol);
    assert!((frame - direct).abs() <= 1e-6 * direct);
}

