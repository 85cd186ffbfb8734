//! Truncated rectangular lattices with region masks and the distance field.
//!
//! Cells are indexed `idx = i + n[0]*(j + n[1]*k)` with centers at
//! `lo[a] + (i_a + 1/2) h`. Vector quantities are face-staggered (MAC
//! layout): the component along axis `a` lives on faces normal to `a`,
//! at `lo[a] + i_a h` in that axis and at cell centers in the others.

mod calculus;
mod field;

pub use calculus::{
    discrete_divergence, discrete_gradient, flux_integral, inner_cells, inner_faces,
    interp_component, weighted_inner, weighted_inner_faces, Surface,
};
pub use field::{sym_count, sym_index, CellVectorField, ScalarField, SymTensorField, VectorField};

use crate::error::{GlueError, Result};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

static NEXT_DOMAIN_ID: AtomicU64 = AtomicU64::new(1);

/// Geometric description of the gluing region inside the box.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSpec {
    /// Open annulus (spherical shell) `r1 < |x| < r2` centered at the origin.
    Annulus { r1: f64, r2: f64 },
    /// Difference of two coaxial cones truncated at `rmax`:
    /// `theta1 < angle(x - apex, axis) < theta2`, `|x - apex| < rmax`.
    ConeShell {
        theta1: f64,
        theta2: f64,
        axis: [f64; 3],
        apex: [f64; 3],
        rmax: f64,
    },
    /// The whole box.
    Box,
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegionSpec::Annulus { r1, r2 } => {
                if !(r1 > 0.0 && r1 < r2) {
                    return Err(GlueError::ParamOutOfRange {
                        name: "annulus radii",
                        value: r1,
                        range: format!("0 < R1 < R2 (got R1={r1}, R2={r2})"),
                    });
                }
            }
            RegionSpec::ConeShell {
                theta1,
                theta2,
                rmax,
                axis,
                ..
            } => {
                if !(theta1 > 0.0 && theta1 < theta2 && theta2 < std::f64::consts::FRAC_PI_2) {
                    return Err(GlueError::ParamOutOfRange {
                        name: "cone apertures",
                        value: theta1,
                        range: format!("0 < theta1 < theta2 < pi/2 (got {theta1}, {theta2})"),
                    });
                }
                if rmax <= 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "rmax",
                        value: rmax,
                        range: "rmax > 0".into(),
                    });
                }
                let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "axis",
                        value: norm,
                        range: "unit vector".into(),
                    });
                }
            }
            RegionSpec::Box => {}
        }
        Ok(())
    }

    /// Strict interior test.
    pub fn contains(&self, p: [f64; 3], dim: usize) -> bool {
        match *self {
            RegionSpec::Annulus { r1, r2 } => {
                let r = radius(p, dim);
                r > r1 && r < r2
            }
            RegionSpec::ConeShell {
                theta1,
                theta2,
                axis,
                apex,
                rmax,
            } => {
                let (rho, theta) = cone_coords(p, apex, axis, dim);
                rho > 0.0 && rho < rmax && theta > theta1 && theta < theta2
            }
            RegionSpec::Box => true,
        }
    }

    /// Signed analytic distance to the region boundary: positive inside,
    /// negative outside. For `Box` the box faces play the boundary and are
    /// supplied by the caller.
    pub fn signed_distance(&self, p: [f64; 3], dim: usize) -> f64 {
        match *self {
            RegionSpec::Annulus { r1, r2 } => {
                let r = radius(p, dim);
                (r - r1).min(r2 - r)
            }
            RegionSpec::ConeShell {
                theta1,
                theta2,
                axis,
                apex,
                rmax,
            } => {
                let (rho, theta) = cone_coords(p, apex, axis, dim);
                // Distance to an infinite cone through the apex is
                // rho*sin(dtheta) for angular offsets below pi/2.
                let d1 = rho * clamp_angle(theta - theta1).sin();
                let d2 = rho * clamp_angle(theta2 - theta).sin();
                let sgn1 = if theta > theta1 { 1.0 } else { -1.0 };
                let sgn2 = if theta < theta2 { 1.0 } else { -1.0 };
                (sgn1 * d1.abs()).min(sgn2 * d2.abs()).min(rmax - rho)
            }
            RegionSpec::Box => f64::INFINITY,
        }
    }

    /// Normalized transverse coordinate: 0 on the inner boundary component,
    /// 1 on the outer one. Unclamped, so points on the inner side of the
    /// region report values below 0 and points beyond the outer side above 1.
    pub fn transverse(&self, p: [f64; 3], dim: usize, lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
        match *self {
            RegionSpec::Annulus { r1, r2 } => (radius(p, dim) - r1) / (r2 - r1),
            RegionSpec::ConeShell {
                theta1,
                theta2,
                axis,
                apex,
                ..
            } => {
                let (_, theta) = cone_coords(p, apex, axis, dim);
                (theta - theta1) / (theta2 - theta1)
            }
            RegionSpec::Box => (p[0] - lo[0]) / (hi[0] - lo[0]),
        }
    }

    fn describe(&self) -> String {
        match *self {
            RegionSpec::Annulus { r1, r2 } => format!("annulus {r1}..{r2}"),
            RegionSpec::ConeShell {
                theta1,
                theta2,
                rmax,
                ..
            } => format!("cone shell {theta1}..{theta2} rmax {rmax}"),
            RegionSpec::Box => "box".into(),
        }
    }
}

fn radius(p: [f64; 3], dim: usize) -> f64 {
    p[..dim].iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cone_coords(p: [f64; 3], apex: [f64; 3], axis: [f64; 3], dim: usize) -> (f64, f64) {
    let mut u = [0.0; 3];
    for a in 0..dim {
        u[a] = p[a] - apex[a];
    }
    let rho = radius(u, dim);
    if rho == 0.0 {
        return (0.0, 0.0);
    }
    let cos = (u[..dim]
        .iter()
        .zip(axis.iter())
        .map(|(x, a)| x * a)
        .sum::<f64>()
        / rho)
        .clamp(-1.0, 1.0);
    (rho, cos.acos())
}

fn clamp_angle(a: f64) -> f64 {
    a.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
}

/// Uniform lattice over a box with a region mask and distance field.
#[derive(Debug)]
pub struct GridDomain {
    id: u64,
    pub dim: usize,
    pub h: f64,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n: [usize; 3],
    pub region: RegionSpec,
    interior: Vec<bool>,
    /// Distance to the region boundary, zero exactly on cells with a
    /// non-interior face neighbor and 1-Lipschitz across face neighbors.
    pub dist: Vec<f64>,
    interior_cells: Vec<usize>,
    dropped_cells: usize,
}

impl GridDomain {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn interior_count(&self) -> usize {
        self.interior_cells.len()
    }

    /// Interior cells in ascending linear-index order (deterministic).
    pub fn interior_cells(&self) -> &[usize] {
        &self.interior_cells
    }

    pub fn dropped_cells(&self) -> usize {
        self.dropped_cells
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior[idx]
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n[0] * (c[1] + self.n[1] * c[2])
    }

    pub fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let c = self.cell_coords(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.lo[a] + (c[a] as f64 + 0.5) * self.h;
        }
        p
    }

    /// Face lattice dimensions for the component along `axis`.
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.n;
        d[axis] += 1;
        d
    }

    pub fn face_count(&self, axis: usize) -> usize {
        let d = self.face_dims(axis);
        d[0] * d[1] * d[2]
    }

    pub fn face_index(&self, axis: usize, c: [usize; 3]) -> usize {
        let d = self.face_dims(axis);
        c[0] + d[0] * (c[1] + d[1] * c[2])
    }

    pub fn face_center(&self, axis: usize, c: [usize; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = if a == axis {
                self.lo[a] + c[a] as f64 * self.h
            } else {
                self.lo[a] + (c[a] as f64 + 0.5) * self.h
            };
        }
        p
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Measure of the masked interior.
    pub fn interior_volume(&self) -> f64 {
        self.interior_count() as f64 * self.cell_volume()
    }

    pub fn same_domain(&self, other: &GridDomain) -> Result<()> {
        if self.id != other.id {
            return Err(GlueError::DomainMismatch {
                left: self.id,
                right: other.id,
            });
        }
        Ok(())
    }

    /// Whether a cell has a face neighbor outside the interior mask (cells on
    /// the box edge count as exposed).
    pub fn is_boundary_adjacent(&self, idx: usize) -> bool {
        if !self.interior[idx] {
            return false;
        }
        let c = self.cell_coords(idx);
        for a in 0..self.dim {
            if c[a] == 0 || c[a] + 1 == self.n[a] {
                return true;
            }
            let mut m = c;
            m[a] -= 1;
            if !self.interior[self.cell_index(m)] {
                return true;
            }
            m[a] += 2;
            if !self.interior[self.cell_index(m)] {
                return true;
            }
        }
        false
    }
}

/// Build a masked lattice for `region` with spacing `h` over the box
/// `[lo, hi]` (per axis, first `dim` entries used).
///
/// The interior mask keeps the largest face-connected component; isolated
/// slivers of thin regions otherwise decouple from every stencil.
pub fn build_domain(
    region: RegionSpec,
    h: f64,
    lo: [f64; 3],
    hi: [f64; 3],
    dim: usize,
) -> Result<Arc<GridDomain>> {
    region.validate()?;
    if h <= 0.0 {
        return Err(GlueError::ParamOutOfRange {
            name: "h",
            value: h,
            range: "h > 0".into(),
        });
    }
    if !(1..=3).contains(&dim) {
        return Err(GlueError::ParamOutOfRange {
            name: "dim",
            value: dim as f64,
            range: "1, 2 or 3".into(),
        });
    }
    if dim == 1 && region != RegionSpec::Box {
        return Err(GlueError::ParamOutOfRange {
            name: "dim",
            value: 1.0,
            range: "dim 1 supports only Box regions".into(),
        });
    }
    let mut n = [1usize; 3];
    let mut hi_eff = [0.0; 3];
    for a in 0..dim {
        let span = hi[a] - lo[a];
        if span <= 0.0 {
            return Err(GlueError::ParamOutOfRange {
                name: "extents",
                value: span,
                range: "hi > lo per axis".into(),
            });
        }
        n[a] = (span / h).round().max(1.0) as usize;
        hi_eff[a] = lo[a] + n[a] as f64 * h;
    }

    let total = n[0] * n[1] * n[2];
    let mut dom = GridDomain {
        id: NEXT_DOMAIN_ID.fetch_add(1, Ordering::Relaxed),
        dim,
        h,
        lo,
        hi: hi_eff,
        n,
        region: region.clone(),
        interior: vec![false; total],
        dist: vec![0.0; total],
        interior_cells: Vec::new(),
        dropped_cells: 0,
    };

    for idx in 0..total {
        let p = dom.cell_center(idx);
        dom.interior[idx] = dom.region.contains(p, dim);
    }

    // The box must contain the region: a mask reaching the box edge means
    // the region is clipped and the degenerate-weight boundary treatment
    // would silently apply to an artificial cut.
    if region != RegionSpec::Box {
        for idx in 0..total {
            if !dom.interior[idx] {
                continue;
            }
            let c = dom.cell_coords(idx);
            if (0..dim).any(|a| c[a] == 0 || c[a] + 1 == n[a]) {
                return Err(GlueError::EmptyRegion {
                    region: format!("{} clipped by box", region.describe()),
                    h,
                });
            }
        }
    }

    keep_largest_component(&mut dom);

    dom.interior_cells = (0..total).filter(|&i| dom.interior[i]).collect();
    if dom.interior_cells.is_empty() {
        return Err(GlueError::EmptyRegion {
            region: region.describe(),
            h,
        });
    }

    compute_dist(&mut dom);
    Ok(Arc::new(dom))
}

fn keep_largest_component(dom: &mut GridDomain) {
    let total = dom.cell_count();
    let mut label = vec![u32::MAX; total];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..total {
        if !dom.interior[start] || label[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0usize;
        stack.push(start);
        label[start] = id;
        while let Some(idx) = stack.pop() {
            size += 1;
            let c = dom.cell_coords(idx);
            for a in 0..dom.dim {
                if c[a] > 0 {
                    let mut m = c;
                    m[a] -= 1;
                    let j = dom.cell_index(m);
                    if dom.interior[j] && label[j] == u32::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
                if c[a] + 1 < dom.n[a] {
                    let mut m = c;
                    m[a] += 1;
                    let j = dom.cell_index(m);
                    if dom.interior[j] && label[j] == u32::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    if sizes.len() <= 1 {
        return;
    }
    let best = sizes
        .iter()
        .enumerate()
        .max_by_key(|(_, s)| **s)
        .map(|(i, _)| i as u32)
        .unwrap();
    let mut dropped = 0usize;
    for idx in 0..total {
        if dom.interior[idx] && label[idx] != best {
            dom.interior[idx] = false;
            dropped += 1;
        }
    }
    dom.dropped_cells = dropped;
}

/// Analytic distance, clamped half a cell in, forced to zero on exposed cells,
/// then relaxed to restore the 1-Lipschitz property across face neighbors.
fn compute_dist(dom: &mut GridDomain) {
    let total = dom.cell_count();
    let box_dist = |p: [f64; 3]| -> f64 {
        let mut d = f64::INFINITY;
        for a in 0..dom.dim {
            d = d.min(p[a] - dom.lo[a]).min(dom.hi[a] - p[a]);
        }
        d
    };
    for idx in 0..total {
        if !dom.interior[idx] {
            dom.dist[idx] = 0.0;
            continue;
        }
        let p = dom.cell_center(idx);
        let d_region = dom.region.signed_distance(p, dom.dim).min(box_dist(p));
        dom.dist[idx] = (d_region - 0.5 * dom.h).max(0.0);
    }
    for idx in 0..total {
        if dom.interior[idx] && dom.is_boundary_adjacent(idx) {
            dom.dist[idx] = 0.0;
        }
    }
    // Chamfer sweeps (forward/backward) until the field is a fixpoint of
    // dist[c] <= dist[neighbor] + h.
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let order: Box<dyn Iterator<Item = usize>> = if pass == 0 {
                Box::new(0..total)
            } else {
                Box::new((0..total).rev())
            };
            for idx in order {
                if !dom.interior[idx] {
                    continue;
                }
                let c = dom.cell_coords(idx);
                let mut best = dom.dist[idx];
                for a in 0..dom.dim {
                    if c[a] > 0 {
                        let mut m = c;
                        m[a] -= 1;
                        let j = dom.cell_index(m);
                        if dom.interior[j] {
                            best = best.min(dom.dist[j] + dom.h);
                        }
                    }
                    if c[a] + 1 < dom.n[a] {
                        let mut m = c;
                        m[a] += 1;
                        let j = dom.cell_index(m);
                        if dom.interior[j] {
                            best = best.min(dom.dist[j] + dom.h);
                        }
                    }
                }
                if best < dom.dist[idx] {
                    dom.dist[idx] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}
