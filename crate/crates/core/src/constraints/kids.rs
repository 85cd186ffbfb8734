//! Killing operator and the Killing-initial-data residuals.

use super::adjoint::hessian;
use super::{curvature_with, interior_band, tensor_norms, Geometry, InitialData, KidCandidate};
use crate::error::Result;
use crate::grid::{CellVectorField, SymTensorField};

/// S(Y)_ij = (D_i Y_j + D_j Y_i) / 2.
pub fn killing_operator(g: &SymTensorField, y: &CellVectorField) -> Result<SymTensorField> {
    let geo = Geometry::build(g)?;
    let dom = geo.dom.clone();
    let mut s = SymTensorField::zeros(&dom);
    for idx in interior_band(&dom, 2) {
        for i in 0..geo.dim {
            for j in i..geo.dim {
                let v = 0.5 * (geo.cov_dvec(y, i, j, idx) + geo.cov_dvec(y, j, i, idx));
                s.set(idx, i, j, v);
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct KidResidual {
    /// D_(i Y_j) - N K_ij
    pub res_y: SymTensorField,
    /// Hess N minus the full right-hand side of the lapse equation
    pub res_n: SymTensorField,
    /// (weighted L2, sup) of res_y over trusted cells
    pub norm_y: (f64, f64),
    /// (weighted L2, sup) of res_n
    pub norm_n: (f64, f64),
}

/// Residuals of the KID equations; both vanish iff (N, Y) generates a
/// Killing vector of the development.
pub fn kid_residual(data: &InitialData, xi: &KidCandidate) -> Result<KidResidual> {
    let geo = Geometry::build(&data.g)?;
    let dom = geo.dom.clone();
    let dim = geo.dim;
    let ncell = dom.cell_count();
    let curv = curvature_with(&geo);
    let hess = hessian(&geo, &xi.n);

    // tr K as a field (differentiated below).
    let mut trk = vec![0.0; ncell];
    for idx in 0..ncell {
        trk[idx] = geo.trace(&data.k, idx);
    }

    let mut res_y = SymTensorField::zeros(&dom);
    let mut res_n = SymTensorField::zeros(&dom);
    let nf = dim as f64;

    for idx in interior_band(&dom, 2) {
        let n_val = xi.n.values[idx];

        let mut dy = [[0.0f64; 3]; 3];
        for m in 0..dim {
            for l in 0..dim {
                dy[m][l] = geo.cov_dvec(&xi.y, m, l, idx);
            }
        }
        let mut y_up = [0.0f64; 3];
        for l in 0..dim {
            for m in 0..dim {
                y_up[l] += geo.ginv_at(idx, l, m) * xi.y.values[m * ncell + idx];
            }
        }
        let mut k_up = [[0.0f64; 3]; 3]; // K^l_i
        for l in 0..dim {
            for i in 0..dim {
                for m in 0..dim {
                    k_up[l][i] += geo.ginv_at(idx, l, m) * data.k.get(idx, m, i);
                }
            }
        }
        // K^{ql} K_ql = g^{qa} g^{lb} K_ab K_ql
        let mut ksq_scalar = 0.0;
        for q in 0..dim {
            for l in 0..dim {
                for a in 0..dim {
                    for b in 0..dim {
                        ksq_scalar += geo.ginv_at(idx, q, a)
                            * geo.ginv_at(idx, l, b)
                            * data.k.get(idx, a, b)
                            * data.k.get(idx, q, l);
                    }
                }
            }
        }
        let mut divk = [0.0f64; 3]; // grad^p K_lp
        for l in 0..dim {
            for p in 0..dim {
                for m in 0..dim {
                    divk[l] += geo.ginv_at(idx, p, m) * geo.cov_dtensor(&data.k, m, l, p, idx);
                }
            }
        }
        let trk_v = trk[idx];

        for i in 0..dim {
            for j in i..dim {
                let gij = data.g.get(idx, i, j);
                let kij = data.k.get(idx, i, j);

                let sym_dy = 0.5 * (dy[i][j] + dy[j][i]);
                res_y.set(idx, i, j, sym_dy - n_val * kij);

                // Lapse equation right-hand side.
                let mut kk = 0.0; // K^l_i K_jl
                for l in 0..dim {
                    kk += k_up[l][i] * data.k.get(idx, j, l);
                }
                let mut rhs = (curv.ricci.get(idx, i, j) - 2.0 * kk
                    + trk_v * kij
                    + (curv.scalar.values[idx] + trk_v * trk_v - ksq_scalar) * gij
                        / (1.0 - nf))
                    * n_val;
                for l in 0..dim {
                    let transport = geo.cov_dtensor(&data.k, l, i, j, idx)
                        + (divk[l] - geo.dscalar(&trk, l, idx)) * gij / (nf - 1.0);
                    rhs += transport * y_up[l];
                }
                for l in 0..dim {
                    rhs += k_up[l][i] * dy[j][l] + k_up[l][j] * dy[i][l];
                }
                res_n.set(idx, i, j, hess.get(idx, i, j) - rhs);
            }
        }
    }

    let norm_y = tensor_norms(&res_y, &data.g)?;
    let norm_n = tensor_norms(&res_n, &data.g)?;
    Ok(KidResidual {
        res_y,
        res_n,
        norm_y,
        norm_n,
    })
}
