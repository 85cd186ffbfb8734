//! Weighted stiffness form for the symmetrized gradient S(Y), used by the
//! Korn-constant estimator.
//!
//! Y is cell-centered (component-major dofs over interior cells). Diagonal
//! strain components live on faces between interior cells; mixed components
//! live on 2x2 cell corners with averaged differences, so linear fields
//! differentiate exactly and discrete rigid motions are exact null vectors.

use crate::error::Result;
use crate::grid::{GridDomain, ScalarField};
use std::sync::Arc;

struct FaceTerm {
    l: u32,
    r: u32,
    w: f64,
}

struct CornerTerm {
    /// component-b dofs at [c00, c+a, c+b, c+a+b]
    yb: [u32; 4],
    /// component-a dofs at the same cells
    ya: [u32; 4],
    w: f64,
}

pub struct KornStiffness {
    pub domain: Arc<GridDomain>,
    faces: Vec<FaceTerm>,
    corners: Vec<CornerTerm>,
    ndof: usize,
    cells: usize,
    h: f64,
}

impl KornStiffness {
    /// `w` is the cell stiffness weight (phi^2 psi^2 at cell centers).
    pub fn assemble(dom: &Arc<GridDomain>, w: &ScalarField) -> Result<Self> {
        dom.same_domain(&w.domain)?;
        let cells = dom.interior_count();
        let mut cell_to_dof = vec![-1i32; dom.cell_count()];
        for (d, &idx) in dom.interior_cells().iter().enumerate() {
            cell_to_dof[idx] = d as i32;
        }
        let dof = |comp: usize, cell_dof: i32| -> u32 { (comp * cells) as u32 + cell_dof as u32 };

        let mut faces = Vec::new();
        let mut corners = Vec::new();
        for &idx in dom.interior_cells() {
            let c = dom.cell_coords(idx);
            let d0 = cell_to_dof[idx];
            // Diagonal strain: face between c and c + e_a.
            for a in 0..dom.dim {
                if c[a] + 1 >= dom.n[a] {
                    continue;
                }
                let mut m = c;
                m[a] += 1;
                let j = dom.cell_index(m);
                if cell_to_dof[j] < 0 {
                    continue;
                }
                faces.push(FaceTerm {
                    l: dof(a, d0),
                    r: dof(a, cell_to_dof[j]),
                    w: 0.5 * (w.values[idx] + w.values[j]),
                });
            }
            // Mixed strain: 2x2 block with lower corner at c in plane (a,b).
            for a in 0..dom.dim {
                for b in (a + 1)..dom.dim {
                    if c[a] + 1 >= dom.n[a] || c[b] + 1 >= dom.n[b] {
                        continue;
                    }
                    let mut ca = c;
                    ca[a] += 1;
                    let mut cb = c;
                    cb[b] += 1;
                    let mut cab = ca;
                    cab[b] += 1;
                    let ia = dom.cell_index(ca);
                    let ib = dom.cell_index(cb);
                    let iab = dom.cell_index(cab);
                    if cell_to_dof[ia] < 0 || cell_to_dof[ib] < 0 || cell_to_dof[iab] < 0 {
                        continue;
                    }
                    let wc = 0.25
                        * (w.values[idx] + w.values[ia] + w.values[ib] + w.values[iab]);
                    corners.push(CornerTerm {
                        yb: [
                            dof(b, d0),
                            dof(b, cell_to_dof[ia]),
                            dof(b, cell_to_dof[ib]),
                            dof(b, cell_to_dof[iab]),
                        ],
                        ya: [
                            dof(a, d0),
                            dof(a, cell_to_dof[ia]),
                            dof(a, cell_to_dof[ib]),
                            dof(a, cell_to_dof[iab]),
                        ],
                        w: wc,
                    });
                }
            }
        }
        Ok(KornStiffness {
            domain: dom.clone(),
            faces,
            corners,
            ndof: dom.dim * cells,
            cells,
            h: dom.h,
        })
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn cell_dofs(&self) -> usize {
        self.cells
    }

    /// y = A x with <x, Ax> = sum w |S(Y)|^2 (1/h^2 scaling, no volume factor).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for v in y.iter_mut() {
            *v = 0.0;
        }
        let h = self.h;
        for t in &self.faces {
            let g = (x[t.r as usize] - x[t.l as usize]) / h;
            let c = t.w * g / h;
            y[t.r as usize] += c;
            y[t.l as usize] -= c;
        }
        for t in &self.corners {
            let dab = (x[t.yb[1] as usize] + x[t.yb[3] as usize]
                - x[t.yb[0] as usize]
                - x[t.yb[2] as usize])
                / (2.0 * h);
            let dba = (x[t.ya[2] as usize] + x[t.ya[3] as usize]
                - x[t.ya[0] as usize]
                - x[t.ya[1] as usize])
                / (2.0 * h);
            let s = 0.5 * (dab + dba);
            let coef = t.w * s / (2.0 * h);
            y[t.yb[1] as usize] += coef;
            y[t.yb[3] as usize] += coef;
            y[t.yb[0] as usize] -= coef;
            y[t.yb[2] as usize] -= coef;
            y[t.ya[2] as usize] += coef;
            y[t.ya[3] as usize] += coef;
            y[t.ya[0] as usize] -= coef;
            y[t.ya[1] as usize] -= coef;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.ndof];
        let h2 = self.h * self.h;
        for t in &self.faces {
            d[t.l as usize] += t.w / h2;
            d[t.r as usize] += t.w / h2;
        }
        for t in &self.corners {
            for &slot in t.yb.iter().chain(t.ya.iter()) {
                d[slot as usize] += t.w / (8.0 * h2);
            }
        }
        d
    }

    /// (sum w |grad Y|^2, sum w |S(Y)|^2) over the same stencil locations,
    /// for the full-gradient-vs-strain ratio at the minimizer.
    pub fn gradient_and_strain_energy(&self, x: &[f64]) -> (f64, f64) {
        let h = self.h;
        let mut grad = 0.0;
        let mut strain = 0.0;
        for t in &self.faces {
            let g = (x[t.r as usize] - x[t.l as usize]) / h;
            grad += t.w * g * g;
            strain += t.w * g * g;
        }
        for t in &self.corners {
            let dab = (x[t.yb[1] as usize] + x[t.yb[3] as usize]
                - x[t.yb[0] as usize]
                - x[t.yb[2] as usize])
                / (2.0 * h);
            let dba = (x[t.ya[2] as usize] + x[t.ya[3] as usize]
                - x[t.ya[0] as usize]
                - x[t.ya[1] as usize])
                / (2.0 * h);
            let s = 0.5 * (dab + dba);
            grad += t.w * (dab * dab + dba * dba);
            strain += 2.0 * t.w * s * s;
        }
        (grad, strain)
    }

    /// Sample an analytic vector field on interior cells (component-major).
    pub fn sample(&self, f: impl Fn([f64; 3], usize) -> f64) -> Vec<f64> {
        let dom = &self.domain;
        let mut v = vec![0.0; self.ndof];
        for (d, &idx) in dom.interior_cells().iter().enumerate() {
            let p = dom.cell_center(idx);
            for comp in 0..dom.dim {
                v[comp * self.cells + d] = f(p, comp);
            }
        }
        v
    }

    /// Discrete rigid motions: translations and in-plane rotations.
    pub fn rigid_motions(&self) -> Vec<Vec<f64>> {
        let dim = self.domain.dim;
        let mut out = Vec::new();
        for a in 0..dim {
            out.push(self.sample(|_, comp| if comp == a { 1.0 } else { 0.0 }));
        }
        for a in 0..dim {
            for b in (a + 1)..dim {
                out.push(self.sample(|p, comp| {
                    if comp == a {
                        -p[b]
                    } else if comp == b {
                        p[a]
                    } else {
                        0.0
                    }
                }));
            }
        }
        out
    }
}
