use super::{SpdMethod, SurrogateDomain};

/// Level-set sampling of the estimator range.
///
/// With `d_max = max(delta)`, levels are `nu_m = eps_tol + (d_max - eps_tol) * m / budget`
/// for `m = 0..budget`. Each level picks the point minimizing `delta - nu_m`
/// among points with `delta >= nu_m` (lowest index on ties). Duplicates are
/// dropped, keeping first occurrence. Non-finite values are never selected.
pub fn smm_construct(delta: &[f64], eps_tol: f64, budget: usize) -> SurrogateDomain {
    let mut domain = SurrogateDomain {
        indices: Vec::new(),
        method: SpdMethod::Smm,
        outer_loop: 0,
        budget,
    };
    let mut order: Vec<usize> = (0..delta.len()).filter(|&i| delta[i].is_finite()).collect();
    let Some(d_max) = order.iter().map(|&i| delta[i]).reduce(f64::max) else {
        return domain;
    };
    if budget == 0 || d_max <= eps_tol {
        return domain;
    }
    order.sort_by(|&a, &b| delta[a].total_cmp(&delta[b]).then(a.cmp(&b)));
    for m in 0..budget {
        let level = eps_tol + (d_max - eps_tol) * m as f64 / budget as f64;
        let pos = order.partition_point(|&i| delta[i] < level);
        if let Some(&idx) = order.get(pos) {
            if !domain.indices.contains(&idx) {
                domain.indices.push(idx);
            }
        }
    }
    domain
}
