//! End-to-end checks of the scalar-curvature interpolation gluing.

use fieldglue::constraints::curvature;
use fieldglue::grid::{build_domain, GridDomain, RegionSpec, ScalarField, SymTensorField};
use fieldglue::scalar_glue::{
    interpolated_target, linear_correction, picard_glue, ScalarGlueProblem,
};
use fieldglue::weights::{eval_cutoff, eval_phi, eval_psi, CutoffSpec, WeightSpec};
use fieldglue::GlueError;
use std::sync::Arc;

fn annulus(n: usize) -> Arc<GridDomain> {
    build_domain(
        RegionSpec::Annulus { r1: 1.0, r2: 3.0 },
        8.0 / n as f64,
        [-4.0, -4.0, 0.0],
        [4.0, 4.0, 0.0],
        2,
    )
    .unwrap()
}

fn flat(dom: &Arc<GridDomain>) -> SymTensorField {
    SymTensorField::from_fn(dom, |_, i, j| if i == j { 1.0 } else { 0.0 })
}

fn conformal_bump(dom: &Arc<GridDomain>, eps: f64) -> SymTensorField {
    SymTensorField::from_fn(dom, |p, i, j| {
        if i == j {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            (1.0 + eps * (-(r - 2.0) * (r - 2.0) / 0.18).exp()).powi(4)
        } else {
            0.0
        }
    })
}

fn problem(dom: &Arc<GridDomain>, g: SymTensorField, g_hat: SymTensorField) -> ScalarGlueProblem {
    ScalarGlueProblem {
        g,
        g_hat,
        domain: dom.clone(),
        weights: WeightSpec::exponential(2.0, 2.0),
        cutoff: CutoffSpec::new(0.4, 0.6),
        tol: 1e-8,
        max_iter: 10,
        strict: false,
        defect_tol: 0.5,
        smallness: 0.25,
    }
}

#[test]
fn interpolated_target_special_cases() {
    let dom = annulus(64);
    let chi = eval_cutoff(&CutoffSpec::new(0.4, 0.6), &dom).unwrap();
    // ghat = g: target is R(g) exactly.
    let g = conformal_bump(&dom, 1e-2);
    let t = interpolated_target(&g, &g.clone(), &chi).unwrap();
    let r = curvature(&g).unwrap().scalar;
    for idx in 0..dom.cell_count() {
        assert!((t.values[idx] - r.values[idx]).abs() < 1e-14);
    }
    // Both flat (scalar-flat): target is identically zero.
    let f = flat(&dom);
    let t0 = interpolated_target(&f, &flat(&dom), &chi).unwrap();
    assert_eq!(t0.sup_interior(), 0.0);
    // Flat glued to a conformal metric: target = chi * R(ghat) within O(h^2)
    // of the closed form, checked through the curvature oracle.
    let gh = conformal_bump(&dom, 1e-2);
    let t1 = interpolated_target(&f, &gh, &chi).unwrap();
    let rh = curvature(&gh).unwrap().scalar;
    for idx in fieldglue::constraints::trusted_cells(&dom) {
        let expect = chi.values[idx] * rh.values[idx];
        assert!((t1.values[idx] - expect).abs() < 1e-13);
    }
}

#[test]
fn trivial_glue_returns_zero_correction() {
    let dom = annulus(64);
    let g = conformal_bump(&dom, 1e-3);
    let (dg, rep) = picard_glue(&problem(&dom, g.clone(), g)).unwrap();
    assert_eq!(rep.iterations, 0, "one residual evaluation suffices");
    assert_eq!(dg.sup_interior(), 0.0);
}

#[test]
fn manufactured_linear_correction_is_recovered() {
    // residual := DR_fd(w DR* N*) for a chosen N*; the solve must reproduce
    // that residual to the requested tolerance (modulo the deflated affine
    // components, which the manufactured source largely avoids).
    let dom = annulus(96);
    let g = flat(&dom);
    let spec = WeightSpec::exponential(2.0, 2.0);
    let phi = eval_phi(&spec, &dom).unwrap();
    let psi = eval_psi(&spec, &dom).unwrap();
    let residual = ScalarField::from_fn(&dom, |p| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r > 1.6 && r < 2.4 {
            ((r - 2.0) * 7.0).sin() * (p[0] - 0.3 * p[1]) / r
        } else {
            0.0
        }
    });
    let (dg, rep) = linear_correction(&g, &residual, &phi, &psi, 1e-4, false, 1.0).unwrap();
    assert!(
        rep.achieved <= 1e-4,
        "linear solve stopped at {}",
        rep.achieved
    );
    assert!(dg.sup_interior() > 0.0);
    // dg carries the weight decay: identically zero outside the open region.
    for idx in 0..dom.cell_count() {
        if !dom.is_interior(idx) {
            for i in 0..2 {
                for j in i..2 {
                    assert_eq!(dg.get(idx, i, j), 0.0);
                }
            }
        }
    }
}

#[test]
fn conformal_bump_glue_converges_quadratically() {
    let dom = annulus(96);
    let g = flat(&dom);
    let g_hat = conformal_bump(&dom, 1e-3);
    let (dg, rep) = picard_glue(&problem(&dom, g, g_hat.clone())).unwrap();
    assert!(rep.iterations <= 10, "iterations {}", rep.iterations);
    assert!(rep.residual_sup <= 1e-8, "residual {}", rep.residual_sup);
    // Contraction well inside the basin: every measured factor below 1/2.
    for (k, c) in rep.contraction.iter().enumerate() {
        assert!(*c <= 0.5, "step {k} contracted only by {c}");
    }
    // Correction supported in the closed region.
    for idx in 0..dom.cell_count() {
        if !dom.is_interior(idx) {
            for i in 0..2 {
                for j in i..2 {
                    assert_eq!(dg.get(idx, i, j), 0.0);
                }
            }
        }
    }
    // Extends by zero across the boundary.
    assert!(
        rep.boundary_sup <= 1e-8,
        "boundary values {}",
        rep.boundary_sup
    );

    // Sandwich property: R of the glued metric lies between the input
    // curvatures up to the tolerance plus the reported cokernel carpet.
    let chi = eval_cutoff(&CutoffSpec::new(0.4, 0.6), &dom).unwrap();
    let mut g_chi = SymTensorField::zeros(&dom);
    for idx in 0..dom.cell_count() {
        let c = chi.values[idx];
        for i in 0..2 {
            for j in i..2 {
                let gh = g_hat.get(idx, i, j);
                let gf = if i == j { 1.0 } else { 0.0 };
                g_chi.set(idx, i, j, c * gh + (1.0 - c) * gf);
            }
        }
    }
    let mut glued = g_chi.clone();
    glued.axpy(1.0, &dg);
    let r_glued = curvature(&glued).unwrap().scalar;
    let r_hat = curvature(&g_hat).unwrap().scalar;
    // Carpet allowance: the affine component the truncated solve cannot
    // remove, converted to sup units through the normalized basis.
    let carpet = rep.cokernel_defect / dom.cell_volume().sqrt()
        / (dom.interior_count() as f64).sqrt();
    let allow = 1e-8 + 10.0 * carpet;
    let mut worst: f64 = 0.0;
    for idx in fieldglue::constraints::trusted_cells(&dom) {
        let lo = r_hat.values[idx].min(0.0);
        let hi = r_hat.values[idx].max(0.0);
        let v = r_glued.values[idx];
        worst = worst.max(lo - v).max(v - hi);
    }
    assert!(
        worst <= allow,
        "sandwich excess {worst} vs allowance {allow}"
    );
}

#[test]
fn violating_smallness_is_reported_not_silently_wrong() {
    let dom = annulus(64);
    let g = flat(&dom);
    let g_hat = conformal_bump(&dom, 0.5);
    // The smallness gate fires first with the default threshold.
    let err = picard_glue(&problem(&dom, g.clone(), g_hat.clone())).unwrap_err();
    assert!(matches!(err, GlueError::ParamOutOfRange { .. }));
    // With the gate opened wide the iteration itself must fail loudly.
    let mut p = problem(&dom, g, g_hat);
    p.smallness = 100.0;
    p.max_iter = 4;
    match picard_glue(&p) {
        Err(GlueError::NoConvergence { .. }) | Err(GlueError::MetricNotPositive { .. }) => {}
        Err(other) => panic!("unexpected error {other:?}"),
        Ok((_, rep)) => panic!(
            "stress case claimed convergence: residual {}",
            rep.residual_sup
        ),
    }
}
