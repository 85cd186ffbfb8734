//! Linearized scalar-curvature machinery for the Picard gluing.
//!
//! The correction ansatz is dg = w DR*(N) with w = phi^2 psi^2 and
//! DR*(N) = Hess N - (Lap N) g - N Ric, the time-symmetric rows of the
//! adjoint constraint operator. The normal operator solved by CG is
//! A = (DR*)^T w DR*, assembled from compact Hessian stencils whose exact
//! code transpose keeps A symmetric positive semidefinite; the gap to the
//! true linearization is closed by defect correction against the
//! finite-difference derivative of the curvature routine.

use crate::constraints::{curvature, Geometry};
use crate::error::Result;
use crate::grid::{GridDomain, ScalarField, SymTensorField};
use std::sync::Arc;

pub(crate) struct LinearizedScalarOp {
    pub dom: Arc<GridDomain>,
    geo: Geometry,
    g: SymTensorField,
    ricci: SymTensorField,
    /// stiffness weight phi^2 psi^2 at cells
    pub w: ScalarField,
    /// interior cells with one cell of box clearance: the stencil support
    pub active_cells: Vec<usize>,
    pub active_mask: Vec<bool>,
    stride: [usize; 3],
    h: f64,
}

impl LinearizedScalarOp {
    pub fn new(g_base: &SymTensorField, w: &ScalarField) -> Result<Self> {
        let dom = g_base.domain.clone();
        let geo = Geometry::build(g_base)?;
        let curv = crate::constraints::curvature_with(&geo);
        let mut active_mask = vec![false; dom.cell_count()];
        let mut active_cells = Vec::new();
        for &idx in dom.interior_cells() {
            let c = dom.cell_coords(idx);
            if (0..dom.dim).all(|a| c[a] > 1 && c[a] + 2 < dom.n[a]) {
                active_mask[idx] = true;
                active_cells.push(idx);
            }
        }
        Ok(LinearizedScalarOp {
            stride: [1, dom.n[0], dom.n[0] * dom.n[1]],
            h: dom.h,
            dom,
            geo,
            g: g_base.clone(),
            ricci: curv.ricci,
            w: w.clone(),
            active_cells,
            active_mask,
        })
    }

    fn dim(&self) -> usize {
        self.dom.dim
    }

    /// Hessian of the zero-padded dof field, covariantized, at an interior
    /// cell. Built from compositions of central first differences (the wide
    /// stencil) so its code transpose reproduces the linearization of the
    /// Christoffel-based curvature routine exactly on flat backgrounds.
    #[inline]
    fn hess_at(&self, n: &[f64], idx: usize, i: usize, j: usize, dn: &[f64; 3]) -> f64 {
        let h = self.h;
        let mut v = if i == j {
            (n[idx + 2 * self.stride[i]] - 2.0 * n[idx] + n[idx - 2 * self.stride[i]])
                / (4.0 * h * h)
        } else {
            (n[idx + self.stride[i] + self.stride[j]]
                - n[idx + self.stride[i] - self.stride[j]]
                - n[idx - self.stride[i] + self.stride[j]]
                + n[idx - self.stride[i] - self.stride[j]])
                / (4.0 * h * h)
        };
        for l in 0..self.dim() {
            v -= self.geo.gamma_at(idx, l, i, j) * dn[l];
        }
        v
    }

    /// DR*(N) on interior cells from dof values (zero-padded field input).
    pub fn dr_star(&self, n_field: &[f64]) -> SymTensorField {
        let dom = &self.dom;
        let dim = self.dim();
        let mut out = SymTensorField::zeros(dom);
        for &idx in &self.active_cells {
            let idx = idx;
            let mut dn = [0.0f64; 3];
            for l in 0..dim {
                dn[l] =
                    (n_field[idx + self.stride[l]] - n_field[idx - self.stride[l]]) / (2.0 * self.h);
            }
            // Covariant Hessian, then subtract (Lap N) g + N Ric.
            let mut hess = [[0.0f64; 3]; 3];
            for i in 0..dim {
                for j in i..dim {
                    hess[i][j] = self.hess_at(n_field, idx, i, j, &dn);
                }
            }
            let mut lap = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let hij = if i <= j { hess[i][j] } else { hess[j][i] };
                    lap += self.geo.ginv_at(idx, i, j) * hij;
                }
            }
            for i in 0..dim {
                for j in i..dim {
                    let v = hess[i][j]
                        - lap * self.base_g(idx, i, j)
                        - n_field[idx] * self.ricci.get(idx, i, j);
                    out.set(idx, i, j, v);
                }
            }
        }
        out
    }

    #[inline]
    fn base_g(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.g.get(idx, i, j)
    }

    /// Exact code transpose of `dr_star` under the plain component pairing
    /// (off-diagonal entries counted twice).
    pub fn dr_star_t(&self, s: &SymTensorField) -> Vec<f64> {
        let dom = &self.dom;
        let dim = self.dim();
        let ncell = dom.cell_count();
        let h = self.h;

        // Pointwise coefficient fields M_kl, W_l, P driven by S.
        let mut m_field = SymTensorField::zeros(dom);
        let mut w_field = vec![0.0; dim * ncell];
        let mut p_field = vec![0.0; ncell];
        for &idx in &self.active_cells {
            let mut g_dot_s = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let mult = 1.0;
                    g_dot_s += mult * self.base_g(idx, i, j) * s.get(idx, i, j);
                }
            }
            for k in 0..dim {
                for l in k..dim {
                    m_field.set(idx, k, l, s.get(idx, k, l) - self.geo.ginv_at(idx, k, l) * g_dot_s);
                }
            }
            for l in 0..dim {
                let mut acc = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        acc += self.geo.gamma_at(idx, l, i, j) * s.get(idx, i, j);
                    }
                }
                let mut contracted = 0.0;
                for k in 0..dim {
                    for q in 0..dim {
                        contracted += self.geo.ginv_at(idx, k, q) * self.geo.gamma_at(idx, l, k, q);
                    }
                }
                w_field[l * ncell + idx] = acc - g_dot_s * contracted;
            }
            let mut ric_dot = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    ric_dot += self.ricci.get(idx, i, j) * s.get(idx, i, j);
                }
            }
            p_field[idx] = ric_dot;
        }

        // out = sum_kl H_kl(M_kl) + sum_l d_l(W_l) - P, on interior cells.
        let mut out = vec![0.0; ncell];
        for &idx in self.dom.interior_cells() {
            let c = self.dom.cell_coords(idx);
            if !(0..dim).all(|a| c[a] > 1 && c[a] + 2 < self.dom.n[a]) {
                continue;
            }
            let mut acc = -p_field[idx];
            for k in 0..dim {
                // diagonal Hessian blocks (wide, self-transposed)
                let base = crate::grid::sym_index(dim, k, k) * ncell;
                acc += (m_field.values[base + idx + 2 * self.stride[k]]
                    - 2.0 * m_field.values[base + idx]
                    + m_field.values[base + idx - 2 * self.stride[k]])
                    / (4.0 * h * h);
                for l in (k + 1)..dim {
                    // mixed blocks, multiplicity 2
                    let base = crate::grid::sym_index(dim, k, l) * ncell;
                    let mixed = (m_field.values[base + idx + self.stride[k] + self.stride[l]]
                        - m_field.values[base + idx + self.stride[k] - self.stride[l]]
                        - m_field.values[base + idx - self.stride[k] + self.stride[l]]
                        + m_field.values[base + idx - self.stride[k] - self.stride[l]])
                        / (4.0 * h * h);
                    acc += 2.0 * mixed;
                }
                acc += (w_field[k * ncell + idx + self.stride[k]]
                    - w_field[k * ncell + idx - self.stride[k]])
                    / (2.0 * h);
            }
            out[idx] = acc;
        }
        out
    }

    /// dg = w DR*(N).
    pub fn weighted_dg(&self, n_field: &[f64]) -> SymTensorField {
        let mut s = self.dr_star(n_field);
        let ncell = self.dom.cell_count();
        let dim = self.dim();
        for &idx in &self.active_cells {
            for c in 0..crate::grid::sym_count(dim) {
                s.values[c * ncell + idx] *= self.w.values[idx];
            }
        }
        s
    }

    /// A N = (DR*)^T (w DR* N): symmetric PSD on the dof space.
    pub fn apply_normal(&self, n_field: &[f64], out: &mut [f64]) {
        let s = self.weighted_dg(n_field);
        let t = self.dr_star_t(&s);
        out.copy_from_slice(&t);
    }

    /// Diagonal of the normal operator by local stencil enumeration.
    pub fn normal_diag(&self) -> Vec<f64> {
        let dom = &self.dom;
        let dim = self.dim();
        let ncell = dom.cell_count();
        let mut diag = vec![0.0; ncell];
        // Unit dof at c contributes to DR* at cells c' in its stencil star;
        // enumerate those cells and accumulate w(c') * coeff^2 with the
        // off-diagonal multiplicity.
        for &cidx in &self.active_cells {
            let coords = dom.cell_coords(cidx);
            let mut star: Vec<usize> = vec![cidx];
            for a in 0..dim {
                for da in [-2isize, -1, 1, 2] {
                    let mut cc = coords;
                    let v = cc[a] as isize + da;
                    if v < 0 || v as usize >= dom.n[a] {
                        continue;
                    }
                    cc[a] = v as usize;
                    star.push(dom.cell_index(cc));
                    if da.abs() == 1 {
                        for b in (a + 1)..dim {
                            for db in [-1isize, 1] {
                                let mut c2 = cc;
                                let vb = c2[b] as isize + db;
                                if vb < 0 || vb as usize >= dom.n[b] {
                                    continue;
                                }
                                c2[b] = vb as usize;
                                star.push(dom.cell_index(c2));
                            }
                        }
                    }
                }
            }
            let mut acc = 0.0;
            let h = self.h;
            for &oidx in &star {
                if !self.active_mask[oidx] {
                    continue;
                }
                // Coefficient of N(c) in DR*(N)_ij(oidx).
                let rel = relative_offset(dom, oidx, cidx);
                let mut dn_coef = [0.0f64; 3];
                for l in 0..dim {
                    dn_coef[l] = central_coef(&rel, l, dim) / (2.0 * h);
                }
                let mut hess_coef = [[0.0f64; 3]; 3];
                for i in 0..dim {
                    for j in i..dim {
                        let mut v = stencil_coef(&rel, i, j, dim) / (h * h);
                        for l in 0..dim {
                            v -= self.geo.gamma_at(oidx, l, i, j) * dn_coef[l];
                        }
                        hess_coef[i][j] = v;
                    }
                }
                let mut lap = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        let hij = if i <= j { hess_coef[i][j] } else { hess_coef[j][i] };
                        lap += self.geo.ginv_at(oidx, i, j) * hij;
                    }
                }
                let own = if oidx == cidx { 1.0 } else { 0.0 };
                for i in 0..dim {
                    for j in 0..dim {
                        let hij = if i <= j { hess_coef[i][j] } else { hess_coef[j][i] };
                        let coef = hij
                            - lap * self.base_g(oidx, i, j)
                            - own * self.ricci.get(oidx, i, j);
                        acc += self.w.values[oidx] * coef * coef;
                    }
                }
            }
            diag[cidx] = acc;
        }
        diag
    }
}

fn relative_offset(dom: &GridDomain, oidx: usize, cidx: usize) -> [isize; 3] {
    let a = dom.cell_coords(cidx);
    let b = dom.cell_coords(oidx);
    [
        a[0] as isize - b[0] as isize,
        a[1] as isize - b[1] as isize,
        a[2] as isize - b[2] as isize,
    ]
}

/// Coefficient of the offset cell in the central first derivative at origin.
fn central_coef(rel: &[isize; 3], l: usize, dim: usize) -> f64 {
    for a in 0..dim {
        if a != l && rel[a] != 0 {
            return 0.0;
        }
    }
    match rel[l] {
        1 => 1.0,
        -1 => -1.0,
        _ => 0.0,
    }
}

/// Coefficient of the offset cell in the Hessian stencil at origin
/// (times h^2).
fn stencil_coef(rel: &[isize; 3], i: usize, j: usize, dim: usize) -> f64 {
    if i == j {
        for a in 0..dim {
            if a != i && rel[a] != 0 {
                return 0.0;
            }
        }
        match rel[i] {
            0 => -0.5,
            2 | -2 => 0.25,
            _ => 0.0,
        }
    } else {
        for a in 0..dim {
            if a != i && a != j && rel[a] != 0 {
                return 0.0;
            }
        }
        if rel[i].abs() != 1 || rel[j].abs() != 1 {
            return 0.0;
        }
        0.25 * (rel[i] * rel[j]) as f64
    }
}

/// Finite-difference directional derivative of the discrete scalar
/// curvature at g_base in direction dg (one curvature evaluation per sign).
pub fn dr_fd(g_base: &SymTensorField, dg: &SymTensorField) -> Result<ScalarField> {
    let scale = {
        let mut sup: f64 = 0.0;
        for v in &dg.values {
            sup = sup.max(v.abs());
        }
        sup
    };
    let dom = g_base.domain.clone();
    if scale == 0.0 {
        return Ok(ScalarField::zeros(&dom));
    }
    let eps = f64::EPSILON.cbrt() / scale;
    let mut gp = g_base.clone();
    gp.axpy(eps, dg);
    let mut gm = g_base.clone();
    gm.axpy(-eps, dg);
    let rp = curvature(&gp)?.scalar;
    let rm = curvature(&gm)?.scalar;
    let mut out = ScalarField::zeros(&dom);
    for idx in 0..dom.cell_count() {
        out.values[idx] = (rp.values[idx] - rm.values[idx]) / (2.0 * eps);
    }
    Ok(out)
}
