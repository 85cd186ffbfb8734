//! Smallest generalized eigenvalue of a stiffness/mass pencil by inverse
//! power iteration with deflation of known null directions.

use crate::error::{GlueError, Result};

/// Matrix-free symmetric PSD pencil (A, B) with diagonal mass B.
pub struct Pencil<'a> {
    pub apply_a: Box<dyn Fn(&[f64], &mut [f64]) + 'a>,
    pub diag_a: Vec<f64>,
    pub mass_b: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Relative eigenresidual ||Av - lambda Bv|| / (lambda ||Bv||).
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_outer: 200,
            max_inner: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenReport {
    pub outer_iterations: usize,
    pub eig_residual: f64,
    /// Rayleigh quotients of the excluded fields before deflation
    /// (0 for exact null directions, guarded on 0/0).
    pub excluded_quotients: Vec<f64>,
    /// Dofs removed because the stiffness does not see them (thin-mask
    /// cells without full stencil support); keeping them would report a
    /// spurious zero eigenvalue.
    pub dropped_dofs: usize,
}

/// Minimize <v,Av>/<v,Bv> over the B-orthogonal complement of `excluded`.
pub fn rayleigh_minimize(
    pencil: &Pencil,
    excluded: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<(f64, Vec<f64>, EigenReport)> {
    let n = pencil.diag_a.len();
    assert_eq!(pencil.mass_b.len(), n);

    // Quotients of the excluded directions before deflation.
    let mut excluded_quotients = Vec::with_capacity(excluded.len());
    let mut scratch = vec![0.0; n];
    for e in excluded {
        (pencil.apply_a)(e, &mut scratch);
        let num = dot(e, &scratch);
        let den: f64 = e
            .iter()
            .zip(pencil.mass_b.iter())
            .map(|(x, m)| x * x * m)
            .sum();
        excluded_quotients.push(if den > 0.0 { num / den } else { 0.0 });
    }

    // Keep only dofs the stiffness can see.
    let keep: Vec<bool> = pencil
        .diag_a
        .iter()
        .zip(pencil.mass_b.iter())
        .map(|(&d, &m)| d > 0.0 || m == 0.0)
        .collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    let mask = |v: &mut [f64]| {
        for (x, k) in v.iter_mut().zip(keep.iter()) {
            if !*k {
                *x = 0.0;
            }
        }
    };

    if pencil.mass_b.iter().all(|&m| m <= 0.0) {
        return Err(GlueError::DegenerateMass { dof: 0 });
    }

    // B-orthonormalize the excluded set (modified Gram-Schmidt).
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for e in excluded {
        let mut v = e.clone();
        mask(&mut v);
        for b in &basis {
            let c = b_dot(&v, b, &pencil.mass_b);
            axpy(&mut v, -c, b);
        }
        let norm = b_dot(&v, &v, &pencil.mass_b).sqrt();
        if norm <= 1e-300 {
            // Excluded direction invisible to the mass form.
            let dof = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            return Err(GlueError::DegenerateMass { dof });
        }
        scale(&mut v, 1.0 / norm);
        basis.push(v);
    }
    let project = |v: &mut Vec<f64>| {
        for b in &basis {
            let c = b_dot(v, b, &pencil.mass_b);
            axpy(v, -c, b);
        }
    };

    // Deterministic pseudo-random start vector.
    let mut v = vec![0.0; n];
    let mut state: u64 = 0x9e3779b97f4a7c15;
    for x in v.iter_mut() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *x = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
    }
    mask(&mut v);
    project(&mut v);
    let nv = b_dot(&v, &v, &pencil.mass_b).sqrt();
    if nv <= 0.0 {
        return Err(GlueError::DegenerateMass { dof: 0 });
    }
    scale(&mut v, 1.0 / nv);

    let minv: Vec<f64> = pencil
        .diag_a
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();

    // Inverse-power steps accelerated by a Rayleigh-Ritz subspace
    // {x, A^+ B x, previous step}: near-degenerate pairs (grid-split angular
    // modes) rotate inside the subspace instead of stalling the iteration.
    let mut x = v;
    let mut p_dir: Option<Vec<f64>> = None;
    let mut lambda;
    let mut lambda_prev = f64::INFINITY;
    let mut stagnant_prev = false;
    let mut report = EigenReport {
        outer_iterations: 0,
        eig_residual: f64::INFINITY,
        excluded_quotients,
        dropped_dofs: dropped,
    };
    let mut w = vec![0.0; n];

    for outer in 1..=opts.max_outer {
        (pencil.apply_a)(&x, &mut scratch);
        lambda = dot(&x, &scratch);
        let mut res = 0.0;
        let mut bnorm = 0.0;
        for d in 0..n {
            let bv = pencil.mass_b[d] * x[d];
            let r = scratch[d] - lambda * bv;
            res += r * r;
            bnorm += bv * bv;
        }
        report.outer_iterations = outer;
        report.eig_residual = res.sqrt() / (lambda.abs() * bnorm.sqrt()).max(1e-300);
        if std::env::var("FIELDGLUE_TRACE").is_ok() {
            eprintln!(
                "  eig outer {outer}: lambda {lambda:.9e} res {:.3e}",
                report.eig_residual
            );
        }
        // Converged when the eigenresidual is below tolerance, or when the
        // eigenvalue has stopped moving at that relative level while the
        // vector residual sits at the inner-solve accuracy floor.
        let stagnant = (lambda - lambda_prev).abs() <= opts.tol * lambda.abs().max(1e-300);
        if report.eig_residual <= opts.tol
            || (stagnant && stagnant_prev && report.eig_residual <= 1e-4)
        {
            return Ok((lambda, x, report));
        }
        stagnant_prev = stagnant;
        lambda_prev = lambda;

        // Inverse-power direction: A w = B x, deflated.
        let mut b = vec![0.0; n];
        for d in 0..n {
            b[d] = pencil.mass_b[d] * x[d];
        }
        mask(&mut b);
        let inner_tol = (report.eig_residual * 0.05).clamp(1e-10, 1e-2);
        w.copy_from_slice(&x);
        cg_solve(pencil, &minv, &b, &mut w, inner_tol, opts.max_inner, &mask, &project);
        project(&mut w);

        // Rayleigh-Ritz over {x, w, p}; directions that survive the
        // B-orthogonalization only as roundoff are dropped, or they poison
        // the small eigenproblem.
        let mut basis_s: Vec<Vec<f64>> = Vec::new();
        for cand in [Some(&x), Some(&w), p_dir.as_ref()].into_iter().flatten() {
            let mut c = cand.clone();
            mask(&mut c);
            project(&mut c);
            let pre = b_dot(&c, &c, &pencil.mass_b).sqrt();
            for bvec in &basis_s {
                let coef = b_dot(&c, bvec, &pencil.mass_b);
                axpy(&mut c, -coef, bvec);
            }
            let norm = b_dot(&c, &c, &pencil.mass_b).sqrt();
            if norm > 1e-7 * pre.max(1e-300) {
                scale(&mut c, 1.0 / norm);
                basis_s.push(c);
            }
        }
        let m = basis_s.len();
        if m == 0 {
            return Err(GlueError::DegenerateMass { dof: 0 });
        }
        let mut small = [[0.0f64; 3]; 3];
        let mut applied: Vec<Vec<f64>> = Vec::with_capacity(m);
        for bvec in &basis_s {
            let mut av = vec![0.0; n];
            (pencil.apply_a)(bvec, &mut av);
            applied.push(av);
        }
        for i in 0..m {
            for j in 0..m {
                small[i][j] = dot(&basis_s[i], &applied[j]);
            }
        }
        let coeffs = smallest_eigvec(&small, m);
        let mut x_new = vec![0.0; n];
        for (c, bvec) in coeffs.iter().zip(basis_s.iter()) {
            axpy(&mut x_new, *c, bvec);
        }
        let nx = b_dot(&x_new, &x_new, &pencil.mass_b).sqrt();
        if nx <= 0.0 {
            return Err(GlueError::DegenerateMass { dof: 0 });
        }
        scale(&mut x_new, 1.0 / nx);
        // Conjugate-direction memory: the non-x part of the update.
        let mut p_new = x_new.clone();
        let overlap = b_dot(&p_new, &x, &pencil.mass_b);
        axpy(&mut p_new, -overlap, &x);
        p_dir = Some(p_new);
        x = x_new;
    }
    Err(GlueError::NoConvergence {
        iterations: report.outer_iterations,
        residual: report.eig_residual,
        tol: opts.tol,
    })
}

/// Smallest eigenvector of a small (m <= 3) symmetric matrix by cyclic
/// Jacobi rotations.
fn smallest_eigvec(a: &[[f64; 3]; 3], m: usize) -> Vec<f64> {
    let mut mat = *a;
    let mut vecs = [[0.0f64; 3]; 3];
    for (i, row) in vecs.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..50 {
        let mut off = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                off += mat[i][j] * mat[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if mat[i][j].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (mat[j][j] - mat[i][i]) / mat[i][j];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..m {
                    let (aik, ajk) = (mat[i][k], mat[j][k]);
                    mat[i][k] = c * aik - sn * ajk;
                    mat[j][k] = sn * aik + c * ajk;
                }
                for k in 0..m {
                    let (aki, akj) = (mat[k][i], mat[k][j]);
                    mat[k][i] = c * aki - sn * akj;
                    mat[k][j] = sn * aki + c * akj;
                }
                for row in vecs.iter_mut() {
                    let (vi, vj) = (row[i], row[j]);
                    row[i] = c * vi - sn * vj;
                    row[j] = sn * vi + c * vj;
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..m {
        if mat[i][i] < mat[best][best] {
            best = i;
        }
    }
    (0..m).map(|i| vecs[i][best]).collect()
}

#[allow(clippy::too_many_arguments)]
fn cg_solve(
    pencil: &Pencil,
    minv: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    mask: &impl Fn(&mut [f64]),
    project: &impl Fn(&mut Vec<f64>),
) {
    let n = b.len();
    let mut ax = vec![0.0; n];
    (pencil.apply_a)(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    mask(&mut r);
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        return;
    }
    let mut z: Vec<f64> = r.iter().zip(minv.iter()).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        (pencil.apply_a)(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for d in 0..n {
            x[d] += alpha * p[d];
            r[d] -= alpha * ap[d];
        }
        if it % 32 == 31 {
            let mut xv = x.to_vec();
            project(&mut xv);
            x.copy_from_slice(&xv);
            (pencil.apply_a)(x, &mut ax);
            for d in 0..n {
                r[d] = b[d] - ax[d];
            }
            mask(&mut r);
        }
        if dot(&r, &r).sqrt() <= tol * bn {
            break;
        }
        for d in 0..n {
            z[d] = r[d] * minv[d];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for d in 0..n {
            p[d] = z[d] + beta * p[d];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn b_dot(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter().zip(m.iter()))
        .map(|(x, (y, w))| x * y * w)
        .sum()
}

fn axpy(a: &mut [f64], c: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x += c * y;
    }
}

fn scale(a: &mut [f64], c: f64) {
    for x in a.iter_mut() {
        *x *= c;
    }
}
