//! Formal adjoint of the linearized constraint operator.

use super::{curvature_with, interior_band, Geometry, InitialData, KidCandidate};
use crate::error::Result;
use crate::grid::{ScalarField, SymTensorField};

/// P*(N, Y): the pair of symmetric tensors pairing with (dg, dK).
///
/// First block:
///   div Y K_ij - 2 K^l_(i D_j) Y_l + K^q_l D_q Y^l g_ij
///   - Lap N g_ij + Hess N_ij + (div K_l g_ij - D_l K_ij) Y^l
///   - N Ric_ij + 2 N K^l_i K_jl - 2 N tr K K_ij
/// Second block:
///   2 (D_(i Y_j) - div Y g_ij - K_ij N + tr K N g_ij)
pub fn adjoint_constraint(
    data: &InitialData,
    xi: &KidCandidate,
) -> Result<(SymTensorField, SymTensorField)> {
    let geo = Geometry::build(&data.g)?;
    Ok(adjoint_constraint_with(&geo, data, xi))
}

pub(crate) fn adjoint_constraint_with(
    geo: &Geometry,
    data: &InitialData,
    xi: &KidCandidate,
) -> (SymTensorField, SymTensorField) {
    let dom = geo.dom.clone();
    let dim = geo.dim;
    let ncell = dom.cell_count();
    let curv = curvature_with(geo);
    let hess = hessian(geo, &xi.n);
    let mut first = SymTensorField::zeros(&dom);
    let mut second = SymTensorField::zeros(&dom);

    for idx in interior_band(&dom, 2) {
        let n_val = xi.n.values[idx];
        let trk = geo.trace(&data.k, idx);

        // D_m Y_l, raised Y, K with first index raised.
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

        let mut div_y = 0.0;
        for l in 0..dim {
            for m in 0..dim {
                div_y += geo.ginv_at(idx, l, m) * dy[m][l];
            }
        }
        // K^q_l D_q Y^l = g^{qa} K_{al} g^{lp} D_q Y_p
        let mut k_dy = 0.0;
        for q in 0..dim {
            for l in 0..dim {
                let mut dyq_up = 0.0; // D_q Y^l
                for p in 0..dim {
                    dyq_up += geo.ginv_at(idx, l, p) * dy[q][p];
                }
                k_dy += k_up[q][l] * dyq_up;
            }
        }
        // div K_l = grad^p K_lp
        let mut divk = [0.0f64; 3];
        for l in 0..dim {
            for p in 0..dim {
                for m in 0..dim {
                    divk[l] += geo.ginv_at(idx, p, m) * geo.cov_dtensor(&data.k, m, l, p, idx);
                }
            }
        }
        let mut lap_n = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                lap_n += geo.ginv_at(idx, i, j) * hess.get(idx, i, j);
            }
        }

        for i in 0..dim {
            for j in i..dim {
                let gij = data.g.get(idx, i, j);
                let kij = data.k.get(idx, i, j);

                let mut v = div_y * kij;
                // -2 K^l_(i D_j) Y_l
                for l in 0..dim {
                    v -= k_up[l][i] * dy[j][l] + k_up[l][j] * dy[i][l];
                }
                v += k_dy * gij;
                v += -lap_n * gij + hess.get(idx, i, j);
                for l in 0..dim {
                    v += (divk[l] * gij - geo.cov_dtensor(&data.k, l, i, j, idx)) * y_up[l];
                }
                v -= n_val * curv.ricci.get(idx, i, j);
                // +2 N K^l_i K_jl
                let mut kk = 0.0;
                for l in 0..dim {
                    kk += k_up[l][i] * data.k.get(idx, j, l);
                }
                v += 2.0 * n_val * kk - 2.0 * n_val * trk * kij;
                first.set(idx, i, j, v);

                let sym_dy = 0.5 * (dy[i][j] + dy[j][i]);
                second.set(
                    idx,
                    i,
                    j,
                    2.0 * (sym_dy - div_y * gij - kij * n_val + trk * n_val * gij),
                );
            }
        }
    }
    (first, second)
}

/// Covariant Hessian of a scalar, built as a composition of central
/// first-derivative stencils to match the curvature routine.
pub(crate) fn hessian(geo: &Geometry, n: &ScalarField) -> SymTensorField {
    let dom = geo.dom.clone();
    let dim = geo.dim;
    let ncell = dom.cell_count();
    let mut dn = vec![0.0; dim * ncell];
    for idx in interior_band(&dom, 1) {
        for a in 0..dim {
            dn[a * ncell + idx] = geo.dscalar(&n.values, a, idx);
        }
    }
    let mut hess = SymTensorField::zeros(&dom);
    for idx in interior_band(&dom, 2) {
        for i in 0..dim {
            for j in i..dim {
                let mut v = geo.dscalar(&dn[j * ncell..(j + 1) * ncell], i, idx);
                for l in 0..dim {
                    v -= geo.gamma_at(idx, l, i, j) * dn[l * ncell + idx];
                }
                hess.set(idx, i, j, v);
            }
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, CellVectorField, RegionSpec};

    #[test]
    fn flat_constant_and_affine_lapse_are_annihilated() {
        let dom = build_domain(
            RegionSpec::Box,
            0.2,
            [-1.0, -1.0, -1.0],
            [1.0, 1.0, 1.0],
            3,
        )
        .unwrap();
        let data = InitialData::flat(&dom);
        for n_fn in [
            Box::new(|_: [f64; 3]| 1.0) as Box<dyn Fn([f64; 3]) -> f64>,
            Box::new(|p: [f64; 3]| p[0]),
        ] {
            let xi = KidCandidate {
                n: ScalarField::from_fn(&dom, &n_fn),
                y: CellVectorField::zeros(&dom),
            };
            let (first, second) = adjoint_constraint(&data, &xi).unwrap();
            // Cell centers are not exactly representable, so the affine
            // lapse leaves (1 ulp / h)-scale noise.
            assert!(first.sup_interior() < 1e-13);
            assert!(second.sup_interior() < 1e-13);
        }
    }
}
