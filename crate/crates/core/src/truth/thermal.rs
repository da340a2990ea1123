//! P1 finite-element thermal block on the unit square.
//!
//! Nine conductivity blocks (3x3, numbered row-wise from the bottom-left),
//! homogeneous Dirichlet data on the top edge, unit Neumann flux on the bottom
//! edge and insulated sides. The output is the integral of `u` over the bottom
//! edge, which makes the problem compliant (`l = f`).

use super::{Geometry, TruthDiscretization};
use crate::affine::{AffineProblem, Parameter, ParameterBox};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Operator};
use crate::problem::Problem;
use crate::rb::CoercivityBound;
use nalgebra::DVector;
use std::sync::Arc;

pub const BLOCKS_PER_SIDE: usize = 3;

/// Uniform triangulation with `nodes_per_side^2` nodes; node `(i, j)` has id
/// `j * nodes_per_side + i`.
#[derive(Debug, Clone)]
pub struct ThermalMesh {
    pub nodes_per_side: usize,
    pub coords: Vec<[f64; 2]>,
    /// Triangles with the block index of their cell.
    pub triangles: Vec<([usize; 3], usize)>,
}

impl ThermalMesh {
    pub fn new(nodes_per_side: usize) -> Result<Self> {
        let ns = nodes_per_side;
        if ns < 4 || !(ns - 1).is_multiple_of(BLOCKS_PER_SIDE) {
            return Err(Error::Config(format!(
                "nodes_per_side = {ns} does not align element edges with the block boundaries \
                 (need nodes_per_side = 1 mod 3 and at least 4)"
            )));
        }
        let cells = ns - 1;
        let h = 1.0 / cells as f64;
        let coords = (0..ns * ns).map(|k| [(k % ns) as f64 * h, (k / ns) as f64 * h]).collect();
        let per_block = cells / BLOCKS_PER_SIDE;
        let mut triangles = Vec::with_capacity(2 * cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                let block = (j / per_block) * BLOCKS_PER_SIDE + i / per_block;
                let n00 = j * ns + i;
                let (n10, n01, n11) = (n00 + 1, n00 + ns, n00 + ns + 1);
                triangles.push(([n00, n10, n11], block));
                triangles.push(([n00, n11, n01], block));
            }
        }
        Ok(Self {
            nodes_per_side: ns,
            coords,
            triangles,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    fn element_geometry(&self, tri: &[usize; 3]) -> (f64, [f64; 3], [f64; 3]) {
        let p = tri.map(|k| self.coords[k]);
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let area = 0.5 * (b[0] * c[1] - b[1] * c[0]).abs();
        (area, b, c)
    }

    /// Stiffness matrix of the Laplacian restricted to one block.
    pub fn block_stiffness(&self, block: usize) -> CsrMatrix {
        let mut trip = Vec::new();
        for (tri, blk) in &self.triangles {
            if *blk != block {
                continue;
            }
            let (area, b, c) = self.element_geometry(tri);
            for a in 0..3 {
                for e in 0..3 {
                    trip.push((tri[a], tri[e], (b[a] * b[e] + c[a] * c[e]) / (4.0 * area)));
                }
            }
        }
        CsrMatrix::from_triplets(self.n_nodes(), self.n_nodes(), trip)
    }

    pub fn mass(&self) -> CsrMatrix {
        let mut trip = Vec::new();
        for (tri, _) in &self.triangles {
            let (area, _, _) = self.element_geometry(tri);
            for a in 0..3 {
                for e in 0..3 {
                    let v = if a == e { area / 6.0 } else { area / 12.0 };
                    trip.push((tri[a], tri[e], v));
                }
            }
        }
        CsrMatrix::from_triplets(self.n_nodes(), self.n_nodes(), trip)
    }

    /// `int_{y=0} phi_k dx` for every node: the unit-flux load and, equally,
    /// the bottom-edge integral functional.
    pub fn bottom_edge_load(&self) -> Vec<f64> {
        let ns = self.nodes_per_side;
        let h = 1.0 / (ns - 1) as f64;
        let mut load = vec![0.0; self.n_nodes()];
        for i in 0..ns - 1 {
            load[i] += 0.5 * h;
            load[i + 1] += 0.5 * h;
        }
        load
    }

    /// Nodes not on the top (Dirichlet) edge, in id order.
    pub fn free_nodes(&self) -> Vec<usize> {
        let ns = self.nodes_per_side;
        (0..ns * (ns - 1)).collect()
    }
}

/// Builds the thermal-block truth model; `mu_q` is the conductivity of block
/// `q`, `D = [0.1, 10]^9`. The coercivity bound is min-theta anchored at
/// `mu = (1, ..., 1)`.
pub fn build_problem2(nodes_per_side: usize) -> Result<Problem> {
    let mesh = ThermalMesh::new(nodes_per_side)?;
    let free = mesh.free_nodes();
    let n_blocks = BLOCKS_PER_SIDE * BLOCKS_PER_SIDE;
    let mut stiff_total: Option<CsrMatrix> = None;
    let mut components = Vec::with_capacity(n_blocks);
    for q in 0..n_blocks {
        let k = mesh.block_stiffness(q);
        stiff_total = Some(match stiff_total {
            None => k.clone(),
            Some(t) => CsrMatrix::linear_combination(&[&t, &k], &[1.0, 1.0]),
        });
        components.push(Operator::Sparse(k.restrict(&free, &free)));
    }
    let stiff = stiff_total.expect("nine blocks");
    let x_inner = CsrMatrix::linear_combination(&[&stiff, &mesh.mass()], &[1.0, 1.0]).restrict(&free, &free);
    let load = mesh.bottom_edge_load();
    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&k| load[k]));
    let coords = free.iter().map(|&k| mesh.coords[k]).collect();

    let affine = AffineProblem::new(
        "thermalblock",
        ParameterBox::cube(n_blocks, 0.1, 10.0)?,
        Arc::new(|mu: &[f64], out: &mut [f64]| out.copy_from_slice(mu)),
        components,
        rhs.clone(),
        rhs,
    )?;
    let truth = TruthDiscretization::new(
        Geometry::ThermalBlock { nodes_per_side },
        mesh.n_nodes(),
        free,
        coords,
        Operator::Sparse(x_inner),
    )?;
    let problem = Problem::new(affine, truth, CoercivityBound::Constant(1.0))?;
    let anchor = Parameter::new(vec![1.0; n_blocks]);
    let bound = CoercivityBound::min_theta(&problem, &anchor)?;
    Ok(problem.with_coercivity(bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth::truth_solve;

    #[test]
    fn sizes() {
        let p = build_problem2(19).unwrap();
        assert_eq!(p.truth().n_nodes(), 361);
        assert_eq!(p.truth().n_dof(), 342);
        assert_eq!(p.affine().q_a(), 9);
        assert!(p.affine().is_symmetric());
    }

    #[test]
    fn misaligned_mesh_rejected() {
        assert!(matches!(build_problem2(18), Err(Error::Config(_))));
        assert!(matches!(build_problem2(1), Err(Error::Config(_))));
    }

    #[test]
    fn blocks_partition_the_laplacian() {
        let mesh = ThermalMesh::new(10).unwrap();
        let total = (0..9).fold(nalgebra::DMatrix::zeros(100, 100), |acc, q| acc + mesh.block_stiffness(q).to_dense());
        let mut trip = Vec::new();
        for (tri, _) in &mesh.triangles {
            let (area, b, c) = mesh.element_geometry(tri);
            for a in 0..3 {
                for e in 0..3 {
                    trip.push((tri[a], tri[e], (b[a] * b[e] + c[a] * c[e]) / (4.0 * area)));
                }
            }
        }
        let global = CsrMatrix::from_triplets(100, 100, trip).to_dense();
        assert!((&total - &global).amax() < 1e-13);
        // Rows of a pure-Neumann stiffness annihilate constants.
        let ones = nalgebra::DVector::from_element(100, 1.0);
        assert!((global * ones).amax() < 1e-12);
    }

    #[test]
    fn patch_test_linear_solution() {
        // Constant conductivity: u = (1 - y) / c satisfies every boundary condition.
        let p = build_problem2(19).unwrap();
        for c in [1.0, 0.25, 7.0] {
            let u = truth_solve(&p, &Parameter::new(vec![c; 9])).unwrap().coefficients;
            let err = p
                .truth()
                .coords()
                .iter()
                .zip(u.iter())
                .map(|(xy, v)| (v - (1.0 - xy[1]) / c).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "c={c}: {err}");
        }
    }

    #[test]
    fn solution_is_homogeneous_of_degree_minus_one() {
        let p = build_problem2(10).unwrap();
        let mu: Vec<f64> = (0..9).map(|k| 0.2 + 0.5 * k as f64).collect();
        let mu2: Vec<f64> = mu.iter().map(|v| 2.0 * v).collect();
        let u1 = truth_solve(&p, &Parameter::new(mu)).unwrap().coefficients;
        let u2 = truth_solve(&p, &Parameter::new(mu2)).unwrap().coefficients;
        assert!((&u1 * 0.5 - &u2).amax() < 1e-12 * u1.amax());
    }

    /// Output on a fine mesh by conjugate gradients on the sparse system,
    /// independent of the dense truth machinery.
    fn fine_output(ns: usize, mu: &[f64]) -> f64 {
        let mesh = ThermalMesh::new(ns).unwrap();
        let free = mesh.free_nodes();
        let mats: Vec<CsrMatrix> = (0..9).map(|q| mesh.block_stiffness(q).restrict(&free, &free)).collect();
        let refs: Vec<&CsrMatrix> = mats.iter().collect();
        let a = CsrMatrix::linear_combination(&refs, mu);
        let load = mesh.bottom_edge_load();
        let f = DVector::from_iterator(free.len(), free.iter().map(|&k| load[k]));
        let mut u = DVector::zeros(f.len());
        let mut r = f.clone();
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        for _ in 0..20 * f.len() {
            let ap = a.mul_vec(&p);
            let step = rr / p.dot(&ap);
            u.axpy(step, &p, 1.0);
            r.axpy(-step, &ap, 1.0);
            let rr_new = r.dot(&r);
            if rr_new.sqrt() <= 1e-12 * f.norm() {
                break;
            }
            p = &r + &p * (rr_new / rr);
            rr = rr_new;
        }
        f.dot(&u)
    }

    #[test]
    fn output_agrees_with_refined_mesh() {
        let coarse = build_problem2(19).unwrap();
        for mu in [vec![1.0; 9], vec![0.5, 2.0, 0.8, 1.5, 0.6, 1.2, 1.0, 0.7, 1.8]] {
            let u = truth_solve(&coarse, &Parameter::new(mu.clone())).unwrap().coefficients;
            let sc = coarse.affine().output().dot(&u);
            let sf = fine_output(73, &mu);
            assert!((sc - sf).abs() <= 0.02 * sf.abs(), "{sc} vs {sf}");
        }
    }
}
