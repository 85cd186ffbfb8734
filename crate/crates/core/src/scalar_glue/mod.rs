//! Time-symmetric gluing by scalar-curvature interpolation: find dg with
//! R(g_chi + dg) = chi R(ghat) + (1 - chi) R(g), supported in the region,
//! via weighted linearized solves and a Picard iteration.
//!
//! On a truncated grid the linearized problem has a cokernel spanned by the
//! near-static lapse functions {1, x^i} (the radial weights of the unbounded
//! construction are what excludes them there); those directions are deflated
//! from the solve and the leftover defect is measured and reported rather
//! than hidden.

mod linear;

pub(crate) use linear::LinearizedScalarOp;

use crate::constraints::curvature;
use crate::error::{GlueError, Result};
use crate::grid::{GridDomain, ScalarField, SymTensorField};
use crate::weights::{eval_cutoff, eval_phi, eval_psi, CutoffSpec, WeightSpec};
use linear::dr_fd;
use std::sync::Arc;

pub struct ScalarGlueProblem {
    pub g: SymTensorField,
    pub g_hat: SymTensorField,
    pub domain: Arc<GridDomain>,
    pub weights: WeightSpec,
    pub cutoff: CutoffSpec,
    /// Sup-norm stop for the deflated nonlinear residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Abort when the cokernel defect of the initial residual exceeds
    /// `defect_tol` relative to the residual norm.
    pub strict: bool,
    pub defect_tol: f64,
    /// Largest allowed sup |ghat - g| on the region (Picard smallness).
    pub smallness: f64,
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub iterations: usize,
    /// Deflated nonlinear residual at exit.
    pub residual_sup: f64,
    pub residual_l2: f64,
    /// l2 size of the affine (static-KID) residual components that the
    /// truncated-domain solve cannot address.
    pub cokernel_defect: f64,
    /// Per-iteration ratios of deflated residual norms.
    pub contraction: Vec<f64>,
    pub halvings: usize,
    /// sup |dg| over cells within 2h of the region boundary.
    pub boundary_sup: f64,
    /// Total inner CG iterations across all linear solves.
    pub cg_iterations: usize,
}

/// chi R(ghat) + (1 - chi) R(g), the curvature the glued metric must attain.
pub fn interpolated_target(
    g: &SymTensorField,
    g_hat: &SymTensorField,
    chi: &ScalarField,
) -> Result<ScalarField> {
    let dom = g.domain.clone();
    dom.same_domain(&g_hat.domain)?;
    dom.same_domain(&chi.domain)?;
    let rg = curvature(g)?.scalar;
    let rh = curvature(g_hat)?.scalar;
    let mut out = ScalarField::zeros(&dom);
    for idx in 0..dom.cell_count() {
        let c = chi.values[idx];
        out.values[idx] = c * rh.values[idx] + (1.0 - c) * rg.values[idx];
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LinearReport {
    /// ||P(residual - DR dg)|| / ||residual|| in the dof l2 norm.
    pub achieved: f64,
    pub cokernel_defect: f64,
    pub cg_iterations: usize,
    pub refinements: usize,
}

/// Solve DR(w DR*(N)) = residual for dg = w DR*(N), modulo the affine
/// cokernel, by CG on the symmetrized normal operator plus defect
/// correction against the finite-difference linearization.
pub fn linear_correction(
    g_base: &SymTensorField,
    residual: &ScalarField,
    phi: &ScalarField,
    psi: &ScalarField,
    tol: f64,
    strict: bool,
    defect_tol: f64,
) -> Result<(SymTensorField, LinearReport)> {
    let dom = g_base.domain.clone();
    dom.same_domain(&residual.domain)?;
    let mut w = ScalarField::zeros(&dom);
    for idx in 0..dom.cell_count() {
        let pv = phi.values[idx] * psi.values[idx];
        w.values[idx] = pv * pv;
    }
    let op = LinearizedScalarOp::new(g_base, &w)?;
    let ctx = SolveContext::new(&op)?;
    solve_linear(&op, &ctx, g_base, residual, tol, strict, defect_tol)
}

/// Deflation basis and preconditioning data shared across Picard steps.
struct SolveContext {
    /// Orthonormal affine dof vectors (plain l2 on active cells).
    affine: Vec<Vec<f64>>,
    normal_diag: Vec<f64>,
}

impl SolveContext {
    fn new(op: &LinearizedScalarOp) -> Result<SolveContext> {
        let dom = &op.dom;
        let ncell = dom.cell_count();
        let mut affine: Vec<Vec<f64>> = Vec::new();
        for sel in 0..=dom.dim {
            let mut v = vec![0.0; ncell];
            for &idx in &op.active_cells {
                v[idx] = if sel == 0 {
                    1.0
                } else {
                    dom.cell_center(idx)[sel - 1]
                };
            }
            for b in &affine {
                let c = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b.iter()) {
                    *x -= c * y;
                }
            }
            let n = dot(&v, &v).sqrt();
            if n > 0.0 {
                for x in v.iter_mut() {
                    *x /= n;
                }
                affine.push(v);
            }
        }

        Ok(SolveContext {
            affine,
            normal_diag: op.normal_diag(),
        })
    }

    fn project(&self, v: &mut [f64]) {
        for b in &self.affine {
            let c = dot(v, b);
            for (x, y) in v.iter_mut().zip(b.iter()) {
                *x -= c * y;
            }
        }
    }

    fn defect_components(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for b in &self.affine {
            let c = dot(v, b);
            s += c * c;
        }
        s.sqrt()
    }

    /// Jacobi on the normal operator. Composed (inverse-Poisson-squared)
    /// preconditioning converges in fewer iterations but loses positive
    /// definiteness through inexact inner solves; plain Jacobi is slower
    /// per solve and unconditionally safe.
    fn apply_preconditioner(&self, _op: &LinearizedScalarOp, r: &[f64], out: &mut [f64]) {
        for (o, (ri, di)) in out.iter_mut().zip(r.iter().zip(self.normal_diag.iter())) {
            *o = if *di > 0.0 { ri / di } else { 0.0 };
        }
    }

}

fn solve_linear(
    op: &LinearizedScalarOp,
    ctx: &SolveContext,
    g_base: &SymTensorField,
    residual: &ScalarField,
    tol: f64,
    strict: bool,
    defect_tol: f64,
) -> Result<(SymTensorField, LinearReport)> {
    let ncell = op.dom.cell_count();
    let mut res = vec![0.0; ncell];
    for &idx in &op.active_cells {
        res[idx] = residual.values[idx];
    }
    let res_norm = dot(&res, &res).sqrt();
    let defect0 = ctx.defect_components(&res);
    if strict && res_norm > 0.0 && defect0 > defect_tol * res_norm {
        return Err(GlueError::NetSourceMismatch {
            defect: defect0,
            tol: defect_tol * res_norm,
        });
    }
    ctx.project(&mut res);

    let mut n_total = vec![0.0; ncell];
    let mut dg = SymTensorField::zeros(&op.dom);
    let mut report = LinearReport {
        achieved: if res_norm == 0.0 { 0.0 } else { 1.0 },
        cokernel_defect: defect0,
        cg_iterations: 0,
        refinements: 0,
    };
    if res_norm == 0.0 {
        return Ok((dg, report));
    }

    let mut current = res.clone();
    for refine in 0..6 {
        report.refinements = refine + 1;
        let (dn, iters) = flexible_cg(op, ctx, &current, tol.max(5e-3), 4000);
        if std::env::var("FIELDGLUE_TRACE").is_ok() {
            eprintln!("  refine {refine}: cg iters {iters}");
        }
        report.cg_iterations += iters;
        for (a, b) in n_total.iter_mut().zip(dn.iter()) {
            *a += b;
        }
        dg = op.weighted_dg(&n_total);
        // Defect against the finite-difference linearization.
        let fd = dr_fd(g_base, &dg)?;
        for &idx in &op.active_cells {
            current[idx] = res[idx] - fd.values[idx];
        }
        for (idx, v) in current.iter_mut().enumerate() {
            if !op.active_mask[idx] {
                *v = 0.0;
            }
        }
        ctx.project(&mut current);
        report.achieved = dot(&current, &current).sqrt() / res_norm;
        if std::env::var("FIELDGLUE_TRACE").is_ok() {
            eprintln!("  refine {refine}: achieved {:.3e}", report.achieved);
        }
        if report.achieved <= tol {
            break;
        }
    }
    Ok((dg, report))
}

/// Flexible PCG (the preconditioner runs inner iterations, so beta uses the
/// Polak-Ribiere form).
fn flexible_cg(
    op: &LinearizedScalarOp,
    ctx: &SolveContext,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return (x, 0);
    }
    let mut z = vec![0.0; n];
    ctx.apply_preconditioner(op, &r, &mut z);
    ctx.project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    if std::env::var("FIELDGLUE_TRACE").is_ok() {
        eprintln!(
            "    fcg start: |b| {:.3e} |z| {:.3e} rz {:.3e}",
            b_norm,
            dot(&z, &z).sqrt(),
            rz
        );
    }
    let mut r_prev = r.clone();
    let mut ap = vec![0.0; n];
    let mut iters = 0;
    let trace = std::env::var("FIELDGLUE_TRACE").is_ok();
    for _ in 0..max_iter {
        iters += 1;
        if trace && iters % 25 == 0 {
            eprintln!("    fcg iter {iters}: rel {:.3e}", dot(&r, &r).sqrt() / b_norm);
        }
        op.apply_normal(&p, &mut ap);
        ctx.project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for d in 0..n {
            x[d] += alpha * p[d];
            r[d] -= alpha * ap[d];
        }
        ctx.project(&mut r);
        if dot(&r, &r).sqrt() <= tol * b_norm {
            break;
        }
        ctx.apply_preconditioner(op, &r, &mut z);
        ctx.project(&mut z);
        // Polak-Ribiere: <z, r - r_prev> / <z_prev, r_prev>
        let mut num = 0.0;
        for d in 0..n {
            num += z[d] * (r[d] - r_prev[d]);
        }
        let beta = (num / rz).max(0.0);
        rz = dot(&r, &z);
        if !rz.is_finite() {
            break;
        }
        r_prev.copy_from_slice(&r);
        for d in 0..n {
            p[d] = z[d] + beta * p[d];
        }
    }
    (x, iters)
}

/// Picard iteration for the nonlinear interpolation problem.
pub fn picard_glue(problem: &ScalarGlueProblem) -> Result<(SymTensorField, PicardReport)> {
    let dom = &problem.domain;
    dom.same_domain(&problem.g.domain)?;
    dom.same_domain(&problem.g_hat.domain)?;
    problem.cutoff.validate()?;

    // Smallness gate.
    let mut gap: f64 = 0.0;
    for &idx in dom.interior_cells() {
        for i in 0..dom.dim {
            for j in i..dom.dim {
                gap = gap.max((problem.g_hat.get(idx, i, j) - problem.g.get(idx, i, j)).abs());
            }
        }
    }
    if gap > problem.smallness {
        return Err(GlueError::ParamOutOfRange {
            name: "smallness",
            value: gap,
            range: format!("sup |ghat - g| <= {}", problem.smallness),
        });
    }

    let chi = eval_cutoff(&problem.cutoff, dom)?;
    let target = interpolated_target(&problem.g, &problem.g_hat, &chi)?;
    let mut g_chi = SymTensorField::zeros(dom);
    for idx in 0..dom.cell_count() {
        let c = chi.values[idx];
        for i in 0..dom.dim {
            for j in i..dom.dim {
                g_chi.set(
                    idx,
                    i,
                    j,
                    c * problem.g_hat.get(idx, i, j) + (1.0 - c) * problem.g.get(idx, i, j),
                );
            }
        }
    }

    let phi = eval_phi(&problem.weights, dom)?;
    let psi = eval_psi(&problem.weights, dom)?;
    let mut w = ScalarField::zeros(dom);
    for idx in 0..dom.cell_count() {
        let pv = phi.values[idx] * psi.values[idx];
        w.values[idx] = pv * pv;
    }

    let mut dg = SymTensorField::zeros(dom);
    let mut report = PicardReport {
        iterations: 0,
        residual_sup: f64::INFINITY,
        residual_l2: f64::INFINITY,
        cokernel_defect: 0.0,
        contraction: Vec::new(),
        halvings: 0,
        boundary_sup: 0.0,
        cg_iterations: 0,
    };

    // Residual of a candidate metric: deflated (sup, l2, defect) triple.
    let residual_of = |g_full: &SymTensorField,
                       ctx: &SolveContext,
                       op: &LinearizedScalarOp|
     -> Result<(Vec<f64>, f64, f64, f64)> {
        let r_now = curvature(g_full)?.scalar;
        let mut res = vec![0.0; dom.cell_count()];
        for &idx in &op.active_cells {
            res[idx] = target.values[idx] - r_now.values[idx];
        }
        let defect = ctx.defect_components(&res) * dom.cell_volume().sqrt();
        ctx.project(&mut res);
        let sup = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l2 = (dot(&res, &res) * dom.cell_volume()).sqrt();
        Ok((res, sup, l2, defect))
    };

    let mut prev_norm = f64::INFINITY;
    for it in 0..=problem.max_iter {
        let mut g_full = g_chi.clone();
        g_full.axpy(1.0, &dg);
        let op = LinearizedScalarOp::new(&g_full, &w)?;
        let ctx = SolveContext::new(&op)?;
        let (res, sup, l2, defect) = residual_of(&g_full, &ctx, &op)?;
        report.iterations = it;
        report.residual_sup = sup;
        report.residual_l2 = l2;
        report.cokernel_defect = defect;
        if std::env::var("FIELDGLUE_TRACE").is_ok() {
            eprintln!("picard {it}: sup {sup:.3e} l2 {l2:.3e} defect {defect:.3e}");
        }
        if it > 0 && prev_norm.is_finite() && prev_norm > 0.0 {
            report.contraction.push(sup / prev_norm);
        }
        if sup <= problem.tol {
            break;
        }
        if it == problem.max_iter {
            return Err(GlueError::NoConvergence {
                iterations: it,
                residual: sup,
                tol: problem.tol,
            });
        }
        prev_norm = sup;

        let mut res_field = ScalarField::zeros(dom);
        res_field.values.copy_from_slice(&res);
        let (step, linrep) = solve_linear(
            &op,
            &ctx,
            &g_full,
            &res_field,
            1e-3,
            problem.strict && it == 0,
            problem.defect_tol,
        )?;
        report.cg_iterations += linrep.cg_iterations;

        // Step control: halve on residual increase, at most 4 times.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..5 {
            let mut trial = dg.clone();
            trial.axpy(scale, &step);
            let mut g_trial = g_chi.clone();
            g_trial.axpy(1.0, &trial);
            match LinearizedScalarOp::new(&g_trial, &w)
                .and_then(|op_t| SolveContext::new(&op_t).map(|c| (op_t, c)))
                .and_then(|(op_t, ctx_t)| residual_of(&g_trial, &ctx_t, &op_t))
            {
                Ok((_, sup_t, _, _)) if sup_t < sup => {
                    dg = trial;
                    accepted = true;
                    break;
                }
                Ok(_) | Err(GlueError::MetricNotPositive { .. }) => {
                    scale *= 0.5;
                    report.halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            // One more check: the candidate may have left the metric cone.
            let mut g_trial = g_chi.clone();
            g_trial.axpy(1.0, &dg);
            g_trial.axpy(scale, &step);
            if let Err(e @ GlueError::MetricNotPositive { .. }) =
                crate::constraints::curvature(&g_trial).map(|_| ())
            {
                return Err(e);
            }
            return Err(GlueError::NoConvergence {
                iterations: it,
                residual: sup,
                tol: problem.tol,
            });
        }
    }

    // dg dies at the region boundary with the weight.
    for &idx in dom.interior_cells() {
        if dom.is_boundary_adjacent(idx) {
            for i in 0..dom.dim {
                for j in i..dom.dim {
                    report.boundary_sup = report.boundary_sup.max(dg.get(idx, i, j).abs());
                }
            }
        }
    }
    Ok((dg, report))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
