use super::GridDomain;
use std::sync::Arc;

/// Cell-centered scalar values over the whole box lattice.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub domain: Arc<GridDomain>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        ScalarField {
            domain: domain.clone(),
            values: vec![0.0; domain.cell_count()],
        }
    }

    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut s = Self::zeros(domain);
        for idx in 0..domain.cell_count() {
            s.values[idx] = f(domain.cell_center(idx));
        }
        s
    }

    pub fn constant(domain: &Arc<GridDomain>, v: f64) -> Self {
        ScalarField {
            domain: domain.clone(),
            values: vec![v; domain.cell_count()],
        }
    }

    /// Sup norm over interior cells.
    pub fn sup_interior(&self) -> f64 {
        self.domain
            .interior_cells()
            .iter()
            .fold(0.0, |m, &i| m.max(self.values[i].abs()))
    }

    /// Volume-weighted l2 norm over interior cells.
    pub fn l2_interior(&self) -> f64 {
        let s: f64 = self
            .domain
            .interior_cells()
            .iter()
            .map(|&i| self.values[i] * self.values[i])
            .sum();
        (s * self.domain.cell_volume()).sqrt()
    }

    /// Mean over interior cells (plain cell average).
    pub fn mean_interior(&self) -> f64 {
        let s: f64 = self
            .domain
            .interior_cells()
            .iter()
            .map(|&i| self.values[i])
            .sum();
        s / self.domain.interior_count() as f64
    }
}

/// Face-staggered vector field: component `a` on faces normal to axis `a`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub domain: Arc<GridDomain>,
    pub comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        let comps = (0..domain.dim)
            .map(|a| vec![0.0; domain.face_count(a)])
            .collect();
        VectorField {
            domain: domain.clone(),
            comps,
        }
    }

    /// Sample an analytic field at face centers (component-wise).
    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn([f64; 3], usize) -> f64) -> Self {
        let mut v = Self::zeros(domain);
        for a in 0..domain.dim {
            let fd = domain.face_dims(a);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let idx = domain.face_index(a, [i, j, k]);
                        v.comps[a][idx] = f(domain.face_center(a, [i, j, k]), a);
                    }
                }
            }
        }
        v
    }

    /// 2D: exact discrete curl of a node-based stream function, so the
    /// discrete divergence vanishes identically.
    pub fn from_stream_2d(domain: &Arc<GridDomain>, psi: impl Fn([f64; 3]) -> f64) -> Self {
        assert_eq!(domain.dim, 2, "stream functions are 2D");
        let mut v = Self::zeros(domain);
        let h = domain.h;
        let node = |i: usize, j: usize| -> f64 {
            psi([
                domain.lo[0] + i as f64 * h,
                domain.lo[1] + j as f64 * h,
                0.0,
            ])
        };
        // E_x(face) = d psi / dy across the vertical face's endpoints.
        let fd0 = domain.face_dims(0);
        for j in 0..fd0[1] {
            for i in 0..fd0[0] {
                let idx = domain.face_index(0, [i, j, 0]);
                v.comps[0][idx] = (node(i, j + 1) - node(i, j)) / h;
            }
        }
        // E_y(face) = -d psi / dx across the horizontal face's endpoints.
        let fd1 = domain.face_dims(1);
        for j in 0..fd1[1] {
            for i in 0..fd1[0] {
                let idx = domain.face_index(1, [i, j, 0]);
                v.comps[1][idx] = -(node(i + 1, j) - node(i, j)) / h;
            }
        }
        v
    }

    /// 3D: exact discrete curl of an edge-based vector potential (Yee
    /// layout); the discrete divergence vanishes identically.
    pub fn from_potential_3d(domain: &Arc<GridDomain>, pot: impl Fn([f64; 3], usize) -> f64) -> Self {
        assert_eq!(domain.dim, 3, "vector potentials are 3D");
        let mut v = Self::zeros(domain);
        let h = domain.h;
        // Edge along axis `a` indexed by (i,j,k): cell-centered in `a`,
        // node-aligned in the other two axes.
        let edge = |a: usize, c: [usize; 3]| -> f64 {
            let mut p = [0.0; 3];
            for b in 0..3 {
                p[b] = if b == a {
                    domain.lo[b] + (c[b] as f64 + 0.5) * h
                } else {
                    domain.lo[b] + c[b] as f64 * h
                };
            }
            pot(p, a)
        };
        for a in 0..3 {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            let fd = domain.face_dims(a);
            for kk in 0..fd[2] {
                for jj in 0..fd[1] {
                    for ii in 0..fd[0] {
                        let idx = domain.face_index(a, [ii, jj, kk]);
                        // (curl A)_a = dA_c/db - dA_b/dc on the face.
                        let mut up = [ii, jj, kk];
                        up[b] += 1;
                        let d1 = (edge(c, up) - edge(c, [ii, jj, kk])) / h;
                        let mut up2 = [ii, jj, kk];
                        up2[c] += 1;
                        let d2 = (edge(b, up2) - edge(b, [ii, jj, kk])) / h;
                        v.comps[a][idx] = d1 - d2;
                    }
                }
            }
        }
        v
    }

    pub fn sup(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        for a in 0..self.comps.len() {
            for (x, y) in self.comps[a].iter_mut().zip(other.comps[a].iter()) {
                *x += alpha * y;
            }
        }
    }
}

/// Cell-centered symmetric 2-tensor; only the upper triangle is stored,
/// component-major.
#[derive(Debug, Clone)]
pub struct SymTensorField {
    pub domain: Arc<GridDomain>,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Upper-triangle component order for symmetric tensors: (0,0), (0,1), ...,
/// (1,1), (1,2), ... Row-major over i <= j.
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // offset of row i = sum_{r<i} (dim - r)
    let offset: usize = (0..i).map(|r| dim - r).sum();
    offset + (j - i)
}

pub fn sym_count(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl SymTensorField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        let dim = domain.dim;
        SymTensorField {
            domain: domain.clone(),
            dim,
            values: vec![0.0; sym_count(dim) * domain.cell_count()],
        }
    }

    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn([f64; 3], usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(domain);
        let nc = domain.cell_count();
        for idx in 0..nc {
            let p = domain.cell_center(idx);
            for i in 0..t.dim {
                for j in i..t.dim {
                    t.values[sym_index(t.dim, i, j) * nc + idx] = f(p, i, j);
                }
            }
        }
        t
    }

    #[inline]
    pub fn get(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.values[sym_index(self.dim, i, j) * self.domain.cell_count() + idx]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, i: usize, j: usize, v: f64) {
        let nc = self.domain.cell_count();
        self.values[sym_index(self.dim, i, j) * nc + idx] = v;
    }

    #[inline]
    pub fn add(&mut self, idx: usize, i: usize, j: usize, v: f64) {
        let nc = self.domain.cell_count();
        self.values[sym_index(self.dim, i, j) * nc + idx] += v;
    }

    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        let nc = self.domain.cell_count();
        let c = sym_index(self.dim, i, j);
        &self.values[c * nc..(c + 1) * nc]
    }

    pub fn axpy(&mut self, alpha: f64, other: &SymTensorField) {
        for (x, y) in self.values.iter_mut().zip(other.values.iter()) {
            *x += alpha * y;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for x in self.values.iter_mut() {
            *x *= alpha;
        }
    }

    /// Frobenius sup over interior cells (flat component norm).
    pub fn sup_interior(&self) -> f64 {
        let nc = self.domain.cell_count();
        let mut m: f64 = 0.0;
        for &idx in self.domain.interior_cells() {
            let mut s = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let v = self.values[sym_index(self.dim, i, j) * nc + idx];
                    s += v * v;
                }
            }
            m = m.max(s.sqrt());
        }
        m
    }
}

/// Cell-centered vector field (used by the tensor calculus, where staggering
/// would scatter the components of mixed stencils).
#[derive(Debug, Clone)]
pub struct CellVectorField {
    pub domain: Arc<GridDomain>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl CellVectorField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        CellVectorField {
            domain: domain.clone(),
            dim: domain.dim,
            values: vec![0.0; domain.dim * domain.cell_count()],
        }
    }

    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn([f64; 3], usize) -> f64) -> Self {
        let mut v = Self::zeros(domain);
        let nc = domain.cell_count();
        for idx in 0..nc {
            let p = domain.cell_center(idx);
            for a in 0..v.dim {
                v.values[a * nc + idx] = f(p, a);
            }
        }
        v
    }

    #[inline]
    pub fn get(&self, idx: usize, a: usize) -> f64 {
        self.values[a * self.domain.cell_count() + idx]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, a: usize, v: f64) {
        let nc = self.domain.cell_count();
        self.values[a * nc + idx] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_index_covers_upper_triangle() {
        assert_eq!(sym_index(3, 0, 0), 0);
        assert_eq!(sym_index(3, 0, 1), 1);
        assert_eq!(sym_index(3, 0, 2), 2);
        assert_eq!(sym_index(3, 1, 1), 3);
        assert_eq!(sym_index(3, 1, 2), 4);
        assert_eq!(sym_index(3, 2, 2), 5);
        assert_eq!(sym_index(3, 2, 1), sym_index(3, 1, 2));
        assert_eq!(sym_count(2), 3);
    }
}
