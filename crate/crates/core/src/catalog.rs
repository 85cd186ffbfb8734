//! Named analytic fields and metrics used by the CLI presets and tests.

use crate::grid::{GridDomain, VectorField};
use crate::weights::CutoffSpec;
use std::sync::Arc;

/// 2D dipole-type solenoidal field: discrete curl of the stream function
/// psi = y exp(-r^2), so the discrete divergence vanishes identically.
pub fn dipole_2d(dom: &Arc<GridDomain>) -> VectorField {
    VectorField::from_stream_2d(dom, |p| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        p[1] * (-r2).exp()
    })
}

/// Family of compactly-concentrated solenoidal fields; different `k` give
/// linearly independent stream functions.
pub fn stream_bump_2d(dom: &Arc<GridDomain>, k: usize) -> VectorField {
    VectorField::from_stream_2d(dom, move |p| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        let base = (-r2).exp();
        match k {
            0 => base,
            1 => p[0] * base,
            2 => p[1] * base,
            3 => (p[0] * p[1]) * base,
            _ => (p[0] * p[0] - p[1] * p[1]) * base,
        }
    })
}

/// Point-source field x/|x|^dim: net flux 2 pi (2D) or 4 pi (3D); the
/// screening obstruction in the flesh.
pub fn monopole(dom: &Arc<GridDomain>) -> VectorField {
    let dim = dom.dim;
    VectorField::from_fn(dom, move |p, a| {
        let r2: f64 = p[..dim].iter().map(|x| x * x).sum();
        let r2 = r2.max(1e-12);
        match dim {
            2 => p[a] / r2,
            _ => p[a] / (r2 * r2.sqrt()),
        }
    })
}

/// 3D point dipole with moment along z, sampled analytically at faces
/// (divergence-free in the continuum; discrete divergence O(h^2)).
pub fn dipole_3d_analytic(dom: &Arc<GridDomain>) -> VectorField {
    VectorField::from_fn(dom, |p, a| {
        let r2: f64 = p.iter().map(|x| x * x).sum::<f64>().max(1e-12);
        let r = r2.sqrt();
        let pz = p[2] / r; // cos(theta) with moment along z
        let m = [0.0, 0.0, 1.0];
        (3.0 * pz * p[a] / r - m[a]) / (r2 * r)
    })
}

/// 3D solenoidal field: discrete curl of an edge potential, divergence-free
/// to machine precision.
pub fn curl_bump_3d(dom: &Arc<GridDomain>) -> VectorField {
    VectorField::from_potential_3d(dom, |p, a| {
        let r2: f64 = p.iter().map(|x| x * x).sum();
        match a {
            2 => p[1] * (-r2).exp(),
            _ => 0.0,
        }
    })
}

/// Uniform field along the first axis (screening test input).
pub fn uniform_x(dom: &Arc<GridDomain>) -> VectorField {
    VectorField::from_fn(dom, |_, a| if a == 0 { 1.0 } else { 0.0 })
}

/// Look up a named field generator (CLI `problem.e1` / `problem.e2` keys).
pub fn vector_field_by_name(name: &str, dom: &Arc<GridDomain>) -> Option<VectorField> {
    match name {
        "dipole" => Some(dipole_2d(dom)),
        "monopole" => Some(monopole(dom)),
        "stream-bump" => Some(stream_bump_2d(dom, 0)),
        "curl-bump" => Some(curl_bump_3d(dom)),
        "uniform-x" => Some(uniform_x(dom)),
        "zero" => Some(VectorField::zeros(dom)),
        _ => None,
    }
}

/// Radial two-lobe bump for the conformal gluing preset, tuned so that the
/// leading static-lapse obstruction of the interpolation vanishes:
/// int b (Lap chi) dA = 0 over the annulus. Without the tuning the
/// truncated-domain solve is left with an O(eps) cokernel defect.
pub fn tuned_radial_bump(r1: f64, r2: f64, cutoff: &CutoffSpec) -> impl Fn(f64) -> f64 {
    let mid = 0.5 * (r1 + r2);
    let (w1, w2) = (0.18, 0.06);
    let b1 = move |r: f64| (-(r - mid) * (r - mid) / w1).exp();
    let b2 = move |r: f64| (-(r - mid) * (r - mid) / w2).exp();
    // Laplacian of the radial cut-off in 2D: chi'' + chi'/r, with
    // t = (r - r1)/(r2 - r1).
    let span = r2 - r1;
    let lap_chi = {
        let cutoff = *cutoff;
        move |r: f64| {
            let t = (r - r1) / span;
            cutoff.second_derivative(t) / (span * span) + cutoff.derivative(t) / (span * r)
        }
    };
    // Simpson quadrature of int b_i (Lap chi) r dr.
    let moment = |b: &dyn Fn(f64) -> f64| -> f64 {
        let n = 20_000usize;
        let h = span / n as f64;
        let f = |r: f64| b(r) * lap_chi(r) * r;
        let mut acc = f(r1) + f(r2);
        for k in 1..n {
            let r = r1 + k as f64 * h;
            acc += f(r) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let c = moment(&b1) / moment(&b2);
    move |r: f64| b1(r) - c * b2(r)
}
