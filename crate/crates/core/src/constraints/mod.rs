//! Tensor calculus for initial data: curvature, the constraint map, its
//! formal adjoint, Killing operators and energy conditions.
//!
//! Everything is cell-centered with second-order central differences.
//! Second derivatives are compositions of first-derivative stencils; that
//! matches the internal structure of the curvature routine (Christoffels
//! first, then their derivatives), which is what makes the discrete
//! adjoint identities exact on flat backgrounds.
//!
//! Outputs are populated on cells at least two cells away from the box
//! edge (the stencil clearance) and zero elsewhere; norms restrict to the
//! interior mask intersected with that clearance.

mod adjoint;
mod kids;

pub use adjoint::adjoint_constraint;
pub use kids::{kid_residual, killing_operator, KidResidual};

use crate::error::{GlueError, Result};
use crate::grid::{sym_count, sym_index};
use crate::grid::{CellVectorField, GridDomain, ScalarField, SymTensorField};
use std::sync::Arc;

/// Riemannian metric, second fundamental form and cosmological constant.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub g: SymTensorField,
    pub k: SymTensorField,
    pub lambda: f64,
}

impl InitialData {
    pub fn flat(dom: &Arc<GridDomain>) -> Self {
        InitialData {
            g: SymTensorField::from_fn(dom, |_, i, j| if i == j { 1.0 } else { 0.0 }),
            k: SymTensorField::zeros(dom),
            lambda: 0.0,
        }
    }

    pub fn time_symmetric(g: SymTensorField) -> Self {
        let dom = g.domain.clone();
        InitialData {
            g,
            k: SymTensorField::zeros(&dom),
            lambda: 0.0,
        }
    }
}

/// Hamiltonian and momentum parts of the constraint operator.
#[derive(Debug, Clone)]
pub struct ConstraintValues {
    /// R - |K|^2 + (tr K)^2 - 2 Lambda
    pub scalar_part: ScalarField,
    /// 2(-grad^j K_ij + grad_i tr K), covariant components
    pub vector_part: CellVectorField,
}

/// Lapse/shift candidate for the Killing-initial-data equations.
#[derive(Debug, Clone)]
pub struct KidCandidate {
    pub n: ScalarField,
    pub y: CellVectorField,
}

pub struct Curvature {
    pub ricci: SymTensorField,
    pub scalar: ScalarField,
}

/// Inverse metric and Christoffel symbols, shared by all operators.
pub(crate) struct Geometry {
    pub dom: Arc<GridDomain>,
    pub dim: usize,
    ncell: usize,
    stride: [usize; 3],
    /// inverse metric, sym component-major
    pub ginv: Vec<f64>,
    /// sqrt(det g)
    pub sqrt_det: Vec<f64>,
    /// Gamma^l_{ij}: layout [l * symcount + sym(i,j)] * ncell + idx
    pub gamma: Vec<f64>,
}

impl Geometry {
    pub fn build(g: &SymTensorField) -> Result<Geometry> {
        let dom = g.domain.clone();
        let dim = dom.dim;
        let ncell = dom.cell_count();
        let sc = sym_count(dim);
        let stride = [1usize, dom.n[0], dom.n[0] * dom.n[1]];
        let mut ginv = vec![0.0; sc * ncell];
        let mut sqrt_det = vec![0.0; ncell];

        for idx in 0..ncell {
            let mut m = [[0.0f64; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    m[i][j] = g.values[sym_index(dim, i, j) * ncell + idx];
                }
            }
            let (inv, det) = invert_sym(&m, dim).ok_or(GlueError::MetricNotPositive {
                cell: dom.cell_coords(idx),
            })?;
            for i in 0..dim {
                for j in i..dim {
                    ginv[sym_index(dim, i, j) * ncell + idx] = inv[i][j];
                }
            }
            sqrt_det[idx] = det.sqrt();
        }

        let mut geo = Geometry {
            dom: dom.clone(),
            dim,
            ncell,
            stride,
            ginv,
            sqrt_det,
            gamma: vec![0.0; dim * sc * ncell],
        };

        // Gamma^l_ij = 1/2 g^{lm} (d_i g_jm + d_j g_im - d_m g_ij)
        for idx in interior_band(&dom, 1) {
            for l in 0..dim {
                for i in 0..dim {
                    for j in i..dim {
                        let mut acc = 0.0;
                        for m in 0..dim {
                            let digjm = geo.dcomp(g, j, m, i, idx);
                            let djgim = geo.dcomp(g, i, m, j, idx);
                            let dmgij = geo.dcomp(g, i, j, m, idx);
                            acc += geo.ginv[sym_index(dim, l, m) * ncell + idx]
                                * (digjm + djgim - dmgij);
                        }
                        geo.gamma[(l * sc + sym_index(dim, i, j)) * ncell + idx] = 0.5 * acc;
                    }
                }
            }
        }
        Ok(geo)
    }

    #[inline]
    pub fn ginv_at(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.ginv[sym_index(self.dim, i, j) * self.ncell + idx]
    }

    #[inline]
    pub fn gamma_at(&self, idx: usize, l: usize, i: usize, j: usize) -> f64 {
        self.gamma[(l * sym_count(self.dim) + sym_index(self.dim, i, j)) * self.ncell + idx]
    }

    /// Central derivative along `axis` of the (i,j) component of a
    /// symmetric tensor field.
    #[inline]
    fn dcomp(&self, t: &SymTensorField, i: usize, j: usize, axis: usize, idx: usize) -> f64 {
        let base = sym_index(self.dim, i, j) * self.ncell;
        (t.values[base + idx + self.stride[axis]] - t.values[base + idx - self.stride[axis]])
            / (2.0 * self.dom.h)
    }

    /// Central derivative of a scalar array.
    #[inline]
    pub fn dscalar(&self, v: &[f64], axis: usize, idx: usize) -> f64 {
        (v[idx + self.stride[axis]] - v[idx - self.stride[axis]]) / (2.0 * self.dom.h)
    }

    /// Central derivative of a cell-vector component.
    #[inline]
    fn dvec(&self, y: &CellVectorField, comp: usize, axis: usize, idx: usize) -> f64 {
        let base = comp * self.ncell;
        (y.values[base + idx + self.stride[axis]] - y.values[base + idx - self.stride[axis]])
            / (2.0 * self.dom.h)
    }

    /// Covariant derivative D_m Y_l = d_m Y_l - Gamma^p_{ml} Y_p.
    pub fn cov_dvec(&self, y: &CellVectorField, m: usize, l: usize, idx: usize) -> f64 {
        let mut acc = self.dvec(y, l, m, idx);
        for p in 0..self.dim {
            acc -= self.gamma_at(idx, p, m, l) * y.values[p * self.ncell + idx];
        }
        acc
    }

    /// Covariant derivative D_m K_ij of a symmetric tensor.
    pub fn cov_dtensor(
        &self,
        k: &SymTensorField,
        m: usize,
        i: usize,
        j: usize,
        idx: usize,
    ) -> f64 {
        let mut acc = self.dcomp(k, i, j, m, idx);
        for p in 0..self.dim {
            acc -= self.gamma_at(idx, p, m, i) * k.get(idx, p, j);
            acc -= self.gamma_at(idx, p, m, j) * k.get(idx, i, p);
        }
        acc
    }

    pub fn trace(&self, t: &SymTensorField, idx: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.ginv_at(idx, i, j) * t.get(idx, i, j);
            }
        }
        acc
    }
}

/// Cells with `margin` cells of clearance from every box edge, ascending.
pub(crate) fn interior_band(dom: &GridDomain, margin: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let lo = |n: usize| margin.min(n);
    let hi = |n: usize| n.saturating_sub(margin);
    let (n0, n1, n2) = (dom.n[0], dom.n[1], dom.n[2]);
    let zr = if dom.dim > 2 { (lo(n2), hi(n2)) } else { (0, n2) };
    let yr = if dom.dim > 1 { (lo(n1), hi(n1)) } else { (0, n1) };
    for k in zr.0..zr.1 {
        for j in yr.0..yr.1 {
            for i in lo(n0)..hi(n0) {
                out.push(i + n0 * (j + n1 * k));
            }
        }
    }
    out
}

/// Interior cells that also have the stencil clearance (margin 2).
pub fn trusted_cells(dom: &GridDomain) -> Vec<usize> {
    interior_band(dom, 2)
        .into_iter()
        .filter(|&idx| dom.is_interior(idx))
        .collect()
}

fn invert_sym(m: &[[f64; 3]; 3], dim: usize) -> Option<([[f64; 3]; 3], f64)> {
    let mut inv = [[0.0f64; 3]; 3];
    match dim {
        1 => {
            if !(m[0][0] > 0.0) {
                return None;
            }
            inv[0][0] = 1.0 / m[0][0];
            Some((inv, m[0][0]))
        }
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
            if !(m[0][0] > 0.0 && det > 0.0 && det.is_finite()) {
                return None;
            }
            inv[0][0] = m[1][1] / det;
            inv[1][1] = m[0][0] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = inv[0][1];
            Some((inv, det))
        }
        _ => {
            let c00 = m[1][1] * m[2][2] - m[1][2] * m[1][2];
            let c01 = m[0][2] * m[1][2] - m[0][1] * m[2][2];
            let c02 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            let minor2 = m[0][0] * m[1][1] - m[0][1] * m[0][1];
            if !(m[0][0] > 0.0 && minor2 > 0.0 && det > 0.0 && det.is_finite()) {
                return None;
            }
            inv[0][0] = c00 / det;
            inv[0][1] = c01 / det;
            inv[0][2] = c02 / det;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[0][2]) / det;
            inv[1][2] = (m[0][2] * m[0][1] - m[0][0] * m[1][2]) / det;
            inv[2][2] = minor2 / det;
            inv[1][0] = inv[0][1];
            inv[2][0] = inv[0][2];
            inv[2][1] = inv[1][2];
            Some((inv, det))
        }
    }
}

/// Ricci tensor and scalar curvature, O(h^2) on smooth metrics.
pub fn curvature(g: &SymTensorField) -> Result<Curvature> {
    let geo = Geometry::build(g)?;
    Ok(curvature_with(&geo))
}

pub(crate) fn curvature_with(geo: &Geometry) -> Curvature {
    let dom = &geo.dom;
    let dim = geo.dim;
    let ncell = geo.ncell;
    let sc = sym_count(dim);
    let mut ricci = SymTensorField::zeros(dom);
    let mut scalar = ScalarField::zeros(dom);

    // Contracted Christoffel Gamma_j = Gamma^k_{kj} as a field.
    let mut contracted = vec![0.0; dim * ncell];
    for idx in interior_band(dom, 1) {
        for j in 0..dim {
            let mut acc = 0.0;
            for k in 0..dim {
                acc += geo.gamma_at(idx, k, k, j);
            }
            contracted[j * ncell + idx] = acc;
        }
    }

    for idx in interior_band(dom, 2) {
        for i in 0..dim {
            for j in i..dim {
                // d_k Gamma^k_ij
                let mut acc = 0.0;
                for k in 0..dim {
                    let base = (k * sc + sym_index(dim, i, j)) * ncell;
                    acc += (geo.gamma[base + idx + geo.stride[k]]
                        - geo.gamma[base + idx - geo.stride[k]])
                        / (2.0 * dom.h);
                }
                // - d_(i Gamma^k_k j): symmetrized so the discrete Ricci is
                // exactly symmetric (the two orderings agree only to O(h^2)
                // otherwise, breaking lattice-symmetry equivariance).
                acc -= 0.5
                    * (geo.dscalar(&contracted[j * ncell..(j + 1) * ncell], i, idx)
                        + geo.dscalar(&contracted[i * ncell..(i + 1) * ncell], j, idx));
                // + Gamma^k_kl Gamma^l_ij - Gamma^k_il Gamma^l_kj
                for l in 0..dim {
                    acc += contracted[l * ncell + idx] * geo.gamma_at(idx, l, i, j);
                    for k in 0..dim {
                        acc -= geo.gamma_at(idx, k, i, l) * geo.gamma_at(idx, l, k, j);
                    }
                }
                ricci.set(idx, i, j, acc);
            }
        }
        scalar.values[idx] = geo.trace(&ricci, idx);
    }
    Curvature { ricci, scalar }
}

/// The constraint operator C(g, K).
pub fn constraint_map(data: &InitialData) -> Result<ConstraintValues> {
    let geo = Geometry::build(&data.g)?;
    Ok(constraint_map_with(&geo, data))
}

pub(crate) fn constraint_map_with(geo: &Geometry, data: &InitialData) -> ConstraintValues {
    let dom = &geo.dom;
    let dim = geo.dim;
    let ncell = geo.ncell;
    let curv = curvature_with(geo);
    let mut scalar_part = ScalarField::zeros(dom);
    let mut vector_part = CellVectorField::zeros(dom);

    // tr K as a field (it sits under a derivative).
    let mut trk = vec![0.0; ncell];
    for idx in 0..ncell {
        trk[idx] = geo.trace(&data.k, idx);
    }

    for idx in interior_band(dom, 2) {
        let mut ksq = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        ksq += data.k.get(idx, i, j)
                            * data.k.get(idx, k, l)
                            * geo.ginv_at(idx, i, k)
                            * geo.ginv_at(idx, j, l);
                    }
                }
            }
        }
        scalar_part.values[idx] =
            curv.scalar.values[idx] - ksq + trk[idx] * trk[idx] - 2.0 * data.lambda;

        // 2(-grad^j K_ij + grad_i tr K)
        for i in 0..dim {
            let mut divk = 0.0;
            for j in 0..dim {
                for l in 0..dim {
                    divk += geo.ginv_at(idx, j, l) * geo.cov_dtensor(&data.k, l, i, j, idx);
                }
            }
            let dtrk = geo.dscalar(&trk, i, idx);
            vector_part.set(idx, i, 2.0 * (-divk + dtrk));
        }
    }
    ConstraintValues {
        scalar_part,
        vector_part,
    }
}

/// Dominant energy condition mu >= |J|_g with mu = scalar_part/2 and
/// J_i = -vector_part_i/2. Returns the cell-wise margin and whether it is
/// nonnegative (within `tol`) on all trusted cells.
pub fn energy_condition(
    cv: &ConstraintValues,
    g: &SymTensorField,
    tol: f64,
) -> Result<(bool, ScalarField)> {
    let geo = Geometry::build(g)?;
    let dom = geo.dom.clone();
    let mut margin = ScalarField::zeros(&dom);
    let mut holds = true;
    for idx in trusted_cells(&dom) {
        let mu = 0.5 * cv.scalar_part.values[idx];
        let mut jsq = 0.0;
        for i in 0..geo.dim {
            for j in 0..geo.dim {
                let ji = -0.5 * cv.vector_part.get(idx, i);
                let jj = -0.5 * cv.vector_part.get(idx, j);
                jsq += geo.ginv_at(idx, i, j) * ji * jj;
            }
        }
        let m = mu - jsq.max(0.0).sqrt();
        margin.values[idx] = m;
        if m < -tol {
            holds = false;
        }
    }
    Ok((holds, margin))
}

/// Riemannian L2 and sup norms of a symmetric tensor over trusted cells
/// (g-contracted Frobenius, sqrt(det g) volume element).
pub fn tensor_norms(t: &SymTensorField, g: &SymTensorField) -> Result<(f64, f64)> {
    let geo = Geometry::build(g)?;
    let dom = geo.dom.clone();
    let mut l2 = 0.0;
    let mut sup: f64 = 0.0;
    for idx in trusted_cells(&dom) {
        let mut fro = 0.0;
        for i in 0..geo.dim {
            for j in 0..geo.dim {
                for k in 0..geo.dim {
                    for l in 0..geo.dim {
                        fro += t.get(idx, i, j)
                            * t.get(idx, k, l)
                            * geo.ginv_at(idx, i, k)
                            * geo.ginv_at(idx, j, l);
                    }
                }
            }
        }
        l2 += fro * geo.sqrt_det[idx];
        sup = sup.max(fro.max(0.0).sqrt());
    }
    Ok(((l2 * dom.cell_volume()).max(0.0).sqrt(), sup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, RegionSpec};

    fn box2(h: f64) -> Arc<GridDomain> {
        build_domain(RegionSpec::Box, h, [-1.0, -1.0, 0.0], [1.0, 1.0, 0.0], 2).unwrap()
    }

    fn box3(h: f64, l: f64) -> Arc<GridDomain> {
        build_domain(RegionSpec::Box, h, [-l, -l, -l], [l, l, l], 3).unwrap()
    }

    #[test]
    fn flat_metric_has_exactly_zero_curvature() {
        let dom = box3(0.25, 1.0);
        let data = InitialData::flat(&dom);
        let curv = curvature(&data.g).unwrap();
        assert_eq!(curv.ricci.sup_interior(), 0.0);
        assert_eq!(curv.scalar.sup_interior(), 0.0);
        let cv = constraint_map(&data).unwrap();
        assert_eq!(cv.scalar_part.sup_interior(), 0.0);
    }

    #[test]
    fn conformal_2d_scalar_curvature_matches_closed_form() {
        // g = e^{2f} delta in 2D: R = -2 e^{-2f} (Laplacian f).
        let f = |p: [f64; 3]| 0.3 * (-(p[0] * p[0] + p[1] * p[1]) / 0.18).exp();
        let lap_f = |p: [f64; 3]| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            let w = 0.18;
            0.3 * (-r2 / w).exp() * (4.0 * r2 / (w * w) - 4.0 / w)
        };
        let err_at = |h: f64| -> f64 {
            let dom = box2(h);
            let g = SymTensorField::from_fn(&dom, |p, i, j| {
                if i == j {
                    (2.0 * f(p)).exp()
                } else {
                    0.0
                }
            });
            let curv = curvature(&g).unwrap();
            let mut err: f64 = 0.0;
            for idx in trusted_cells(&dom) {
                let p = dom.cell_center(idx);
                let expected = -2.0 * (-2.0 * f(p)).exp() * lap_f(p);
                err = err.max((curv.scalar.values[idx] - expected).abs());
            }
            err
        };
        let e1 = err_at(0.025);
        let e2 = err_at(0.0125);
        assert!(e1 < 0.1, "coarse error {e1}");
        assert!(e2 < e1 / 3.0, "not second order: {e1} -> {e2}");
    }

    #[test]
    fn schwarzschild_scalar_curvature_vanishes_at_second_order() {
        // The harmonic conformal factor (1 + m/2r)^4 makes R = 0 exactly.
        let err_at = |h: f64| -> f64 {
            let dom = build_domain(
                RegionSpec::Annulus { r1: 2.0, r2: 4.0 },
                h,
                [-4.75, -4.75, -4.75],
                [4.75, 4.75, 4.75],
                3,
            )
            .unwrap();
            let g = SymTensorField::from_fn(&dom, |p, i, j| {
                if i != j {
                    return 0.0;
                }
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(0.05);
                (1.0 + 0.5 / r).powi(4)
            });
            let curv = curvature(&g).unwrap();
            let mut err: f64 = 0.0;
            for idx in trusted_cells(&dom) {
                err = err.max(curv.scalar.values[idx].abs());
            }
            err
        };
        let e1 = err_at(0.25);
        let e2 = err_at(0.125);
        let order = (e1 / e2).log2();
        assert!(
            (1.7..=2.3).contains(&order),
            "observed order {order} ({e1} -> {e2})"
        );
    }

    #[test]
    fn constant_trace_extrinsic_curvature_algebra() {
        // Flat metric, K = c g, n = 3: scalar part = -3c^2 + 9c^2 = 6c^2,
        // vector part = 0.
        let dom = box3(0.25, 1.0);
        let c = 0.7;
        let mut data = InitialData::flat(&dom);
        data.k = SymTensorField::from_fn(&dom, |_, i, j| if i == j { c } else { 0.0 });
        let cv = constraint_map(&data).unwrap();
        for idx in trusted_cells(&dom) {
            assert!((cv.scalar_part.values[idx] - 6.0 * c * c).abs() < 1e-12);
            for a in 0..3 {
                assert!(cv.vector_part.get(idx, a).abs() < 1e-12);
            }
        }
        let (holds, margin) = energy_condition(&cv, &data.g, 1e-12).unwrap();
        assert!(holds);
        for idx in trusted_cells(&dom) {
            assert!((margin.values[idx] - 3.0 * c * c).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_condition_flag_matches_per_cell_recomputation() {
        let dom = box3(0.25, 1.0);
        let mut data = InitialData::flat(&dom);
        data.k = SymTensorField::from_fn(&dom, |p, i, j| {
            0.1 * ((i + j) as f64) * (p[0] - 0.3 * p[1] + 0.2 * (i as f64)).sin()
        });
        let cv = constraint_map(&data).unwrap();
        let (holds, margin) = energy_condition(&cv, &data.g, 1e-12).unwrap();
        let geo = Geometry::build(&data.g).unwrap();
        let mut brute = true;
        for idx in trusted_cells(&dom) {
            let mu = 0.5 * cv.scalar_part.values[idx];
            let mut jsq = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    jsq += geo.ginv_at(idx, i, j)
                        * (0.5 * cv.vector_part.get(idx, i))
                        * (0.5 * cv.vector_part.get(idx, j));
                }
            }
            let m = mu - jsq.sqrt();
            assert!((margin.values[idx] - m).abs() < 1e-12);
            if m < -1e-12 {
                brute = false;
            }
        }
        assert_eq!(holds, brute);
    }

    #[test]
    fn lattice_permutation_equivariance() {
        // Swapping the x and y axes of the inputs permutes the outputs.
        let dom = box2(0.1);
        let profile = |p: [f64; 3], i: usize, j: usize| {
            let bump = 0.1 * (-(p[0] * p[0] + 2.0 * p[1] * p[1])).exp();
            if i == j {
                1.0 + bump * (1.0 + 0.3 * (i as f64))
            } else {
                0.2 * bump
            }
        };
        let g = SymTensorField::from_fn(&dom, |p, i, j| profile(p, i, j));
        let g_swapped =
            SymTensorField::from_fn(&dom, |p, i, j| profile([p[1], p[0], p[2]], 1 - i, 1 - j));
        let c1 = curvature(&g).unwrap();
        let c2 = curvature(&g_swapped).unwrap();
        for idx in trusted_cells(&dom) {
            let p = dom.cell_center(idx);
            let ci = ((p[1] - dom.lo[0]) / dom.h - 0.5).round() as usize;
            let cj = ((p[0] - dom.lo[1]) / dom.h - 0.5).round() as usize;
            let jdx = dom.cell_index([ci, cj, 0]);
            let d = (c1.scalar.values[idx] - c2.scalar.values[jdx]).abs();
            assert!(
                d < 1e-12,
                "scalar curvature not equivariant at {idx}: {d} ({} vs {})",
                c1.scalar.values[idx],
                c2.scalar.values[jdx]
            );
        }
    }
}
