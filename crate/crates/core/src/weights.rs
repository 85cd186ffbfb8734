//! Degenerate weight pairs (phi, psi) and cut-off functions.
//!
//! psi vanishes at the region boundary and controls how fast corrections
//! decay there; phi rescales the stiffness so the weighted Poincare/Korn
//! inequalities hold. Families:
//!
//! * `Power`     (annulus)     psi = (r-R1)^sigma (R2-r)^sigma,
//!                             phi = (r-R1)^-1 (R2-r)^-1
//! * `Exponential` (annulus)   psi = ((r-R1)(R2-r))^alpha exp(-s/((r-R1)(R2-r))),
//!                             phi = (r-R1)^-2 (R2-r)^-2
//! * `Cone`      (cone shell)  psi = r^(n/2-q) (th-th1)^sigma (th2-th)^sigma,
//!                             phi = r, with a (1 - r/rmax)^sigma factor so
//!                             psi also dies on the truncation sphere
//! * `Exotic`    (any region)  psi = r^mu x^sigma exp(-s r/x) with
//!                             mu = beta - sigma - n/2, phi = x^2/r, where x
//!                             is the analytic distance to the boundary
//!
//! `r` in the cone and exotic families is the regularized radius
//! `(|p|^4 + 1)^(1/4)`, positive at the apex and asymptotic to |p|.

use crate::error::{GlueError, Result};
use crate::grid::{GridDomain, RegionSpec, ScalarField};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    Power { sigma: f64 },
    Exponential { alpha: f64, s: f64 },
    Cone { q: f64, sigma: f64 },
    Exotic { sigma: f64, s: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
}

impl WeightSpec {
    pub fn power(sigma: f64) -> Self {
        WeightSpec {
            kind: WeightKind::Power { sigma },
        }
    }
    pub fn exponential(alpha: f64, s: f64) -> Self {
        WeightSpec {
            kind: WeightKind::Exponential { alpha, s },
        }
    }
    pub fn cone(q: f64, sigma: f64) -> Self {
        WeightSpec {
            kind: WeightKind::Cone { q, sigma },
        }
    }
    pub fn exotic(sigma: f64, s: f64, beta: f64) -> Self {
        WeightSpec {
            kind: WeightKind::Exotic { sigma, s, beta },
        }
    }

    pub fn validate(&self, dom: &GridDomain) -> Result<()> {
        let n = dom.dim as f64;
        match self.kind {
            WeightKind::Power { sigma } => {
                if sigma <= 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "sigma",
                        value: sigma,
                        range: "sigma > 0".into(),
                    });
                }
                require_annulus(dom)
            }
            WeightKind::Exponential { s, .. } => {
                if s <= 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "s",
                        value: s,
                        range: "s > 0".into(),
                    });
                }
                require_annulus(dom)
            }
            WeightKind::Cone { q, sigma } => {
                if !(q > 0.0 && q < (n - 2.0) / 2.0) {
                    return Err(GlueError::ParamOutOfRange {
                        name: "q",
                        value: q,
                        range: format!("0 < q < (n-2)/2 = {}", (n - 2.0) / 2.0),
                    });
                }
                if n >= 5.0 && (q - (n - 4.0) / 2.0).abs() < 1e-12 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "q",
                        value: q,
                        range: "q != (n-4)/2 for n >= 5".into(),
                    });
                }
                if sigma <= 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "sigma",
                        value: sigma,
                        range: "sigma > 0".into(),
                    });
                }
                match dom.region {
                    RegionSpec::ConeShell { .. } => Ok(()),
                    _ => Err(GlueError::ParamOutOfRange {
                        name: "region",
                        value: 0.0,
                        range: "cone weights need a ConeShell region".into(),
                    }),
                }
            }
            WeightKind::Exotic { sigma, s, beta } => {
                if s <= 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "s",
                        value: s,
                        range: "s > 0".into(),
                    });
                }
                if beta == 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "beta",
                        value: beta,
                        range: "beta = sigma + mu + n/2 must be nonzero".into(),
                    });
                }
                if sigma <= 0.0 {
                    return Err(GlueError::ParamOutOfRange {
                        name: "sigma",
                        value: sigma,
                        range: "sigma > 0".into(),
                    });
                }
                Ok(())
            }
        }
    }
}

fn require_annulus(dom: &GridDomain) -> Result<()> {
    match dom.region {
        RegionSpec::Annulus { .. } => Ok(()),
        _ => Err(GlueError::ParamOutOfRange {
            name: "region",
            value: 0.0,
            range: "power/exponential weights need an Annulus region".into(),
        }),
    }
}

/// Regularized radius: analytic, positive, asymptotic to |p|.
pub fn reg_radius(p: [f64; 3], dim: usize) -> f64 {
    let r2: f64 = p[..dim].iter().map(|x| x * x).sum();
    (r2 * r2 + 1.0).powf(0.25)
}

fn psi_value(spec: &WeightSpec, dom: &GridDomain, p: [f64; 3]) -> f64 {
    let n = dom.dim as f64;
    match (spec.kind, &dom.region) {
        (WeightKind::Power { sigma }, RegionSpec::Annulus { r1, r2 }) => {
            let r = radius(p, dom.dim);
            let d1 = r - r1;
            let d2 = r2 - r;
            if d1 <= 0.0 || d2 <= 0.0 {
                return 0.0;
            }
            (d1 * d2).powf(sigma)
        }
        (WeightKind::Exponential { alpha, s }, RegionSpec::Annulus { r1, r2 }) => {
            let r = radius(p, dom.dim);
            let d1 = r - r1;
            let d2 = r2 - r;
            if d1 <= 0.0 || d2 <= 0.0 {
                return 0.0;
            }
            let x = d1 * d2;
            // Clamp away the exp underflow so psi stays strictly positive on
            // interior cells arbitrarily close to the boundary.
            (x.powf(alpha) * (-s / x).exp()).max(f64::MIN_POSITIVE)
        }
        (
            WeightKind::Cone { q, sigma },
            RegionSpec::ConeShell {
                theta1,
                theta2,
                axis,
                apex,
                rmax,
            },
        ) => {
            let mut u = [0.0; 3];
            for a in 0..dom.dim {
                u[a] = p[a] - apex[a];
            }
            let rho = radius(u, dom.dim);
            if rho == 0.0 || rho >= *rmax {
                return 0.0;
            }
            let cos = (u[..dom.dim]
                .iter()
                .zip(axis.iter())
                .map(|(x, a)| x * a)
                .sum::<f64>()
                / rho)
                .clamp(-1.0, 1.0);
            let theta = cos.acos();
            let a1 = theta - theta1;
            let a2 = theta2 - theta;
            if a1 <= 0.0 || a2 <= 0.0 {
                return 0.0;
            }
            let rr = reg_radius(u, dom.dim);
            // The truncation sphere rho = rmax is part of the boundary: force
            // psi to zero there through a smoothstep confined to the last 10%
            // of the radial extent, leaving the displayed formula untouched
            // elsewhere.
            let trunc = smoothstep((rmax - rho) / (0.1 * rmax));
            rr.powf(n / 2.0 - q) * (a1 * a2).powf(sigma) * trunc
        }
        (WeightKind::Exotic { sigma, s, beta }, region) => {
            let x = region
                .signed_distance(p, dom.dim)
                .min(box_distance(dom, p));
            if x <= 0.0 {
                return 0.0;
            }
            let rr = reg_radius(p, dom.dim);
            let mu = beta - sigma - n / 2.0;
            (rr.powf(mu) * x.powf(sigma) * (-s * rr / x).exp()).max(f64::MIN_POSITIVE)
        }
        _ => 0.0,
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn phi_value(spec: &WeightSpec, dom: &GridDomain, p: [f64; 3]) -> f64 {
    match (spec.kind, &dom.region) {
        (WeightKind::Power { .. }, RegionSpec::Annulus { r1, r2 }) => {
            let r = radius(p, dom.dim);
            let d1 = r - r1;
            let d2 = r2 - r;
            if d1 <= 0.0 || d2 <= 0.0 {
                return 0.0;
            }
            1.0 / (d1 * d2)
        }
        (WeightKind::Exponential { .. }, RegionSpec::Annulus { r1, r2 }) => {
            let r = radius(p, dom.dim);
            let d1 = r - r1;
            let d2 = r2 - r;
            if d1 <= 0.0 || d2 <= 0.0 {
                return 0.0;
            }
            1.0 / (d1 * d1 * d2 * d2)
        }
        (WeightKind::Cone { .. }, RegionSpec::ConeShell { apex, .. }) => {
            let mut u = [0.0; 3];
            for a in 0..dom.dim {
                u[a] = p[a] - apex[a];
            }
            reg_radius(u, dom.dim)
        }
        (WeightKind::Exotic { .. }, region) => {
            let x = region
                .signed_distance(p, dom.dim)
                .min(box_distance(dom, p));
            if x <= 0.0 {
                return 0.0;
            }
            x * x / reg_radius(p, dom.dim)
        }
        _ => 0.0,
    }
}

fn radius(p: [f64; 3], dim: usize) -> f64 {
    p[..dim].iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn box_distance(dom: &GridDomain, p: [f64; 3]) -> f64 {
    let mut d = f64::INFINITY;
    for a in 0..dom.dim {
        d = d.min(p[a] - dom.lo[a]).min(dom.hi[a] - p[a]);
    }
    d
}

/// Evaluate psi at cell centers; strictly positive on interior cells.
pub fn eval_psi(spec: &WeightSpec, dom: &Arc<GridDomain>) -> Result<ScalarField> {
    spec.validate(dom)?;
    let mut f = ScalarField::zeros(dom);
    for idx in 0..dom.cell_count() {
        f.values[idx] = psi_value(spec, dom, dom.cell_center(idx));
    }
    Ok(f)
}

/// Evaluate phi at cell centers.
pub fn eval_phi(spec: &WeightSpec, dom: &Arc<GridDomain>) -> Result<ScalarField> {
    spec.validate(dom)?;
    let mut f = ScalarField::zeros(dom);
    for idx in 0..dom.cell_count() {
        f.values[idx] = phi_value(spec, dom, dom.cell_center(idx));
    }
    Ok(f)
}

/// The product weight phi^2 psi^2 used inside the divergence.
pub fn eval_stiffness_weight(spec: &WeightSpec, dom: &Arc<GridDomain>) -> Result<ScalarField> {
    spec.validate(dom)?;
    let mut f = ScalarField::zeros(dom);
    for idx in 0..dom.cell_count() {
        let p = dom.cell_center(idx);
        let phi = phi_value(spec, dom, p);
        let psi = psi_value(spec, dom, p);
        f.values[idx] = phi * phi * psi * psi;
    }
    Ok(f)
}

/// Quintic-smoothstep cut-off in the region's normalized transverse
/// coordinate: 1 up to `t0`, 0 from `t1`, C^2 across the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub t0: f64,
    pub t1: f64,
}

impl CutoffSpec {
    pub fn new(t0: f64, t1: f64) -> Self {
        CutoffSpec { t0, t1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t0 && self.t0 < self.t1 && self.t1 < 1.0) {
            return Err(GlueError::BandOutsideRegion {
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(())
    }

    /// chi as a function of the unclamped transverse coordinate.
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t0 {
            1.0
        } else if t >= self.t1 {
            0.0
        } else {
            let s = (t - self.t0) / (self.t1 - self.t0);
            1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        }
    }

    /// d chi / dt (analytic; zero outside the band).
    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.t0 || t >= self.t1 {
            0.0
        } else {
            let w = self.t1 - self.t0;
            let s = (t - self.t0) / w;
            -(30.0 * s * s - 60.0 * s * s * s + 30.0 * s * s * s * s) / w
        }
    }

    /// d^2 chi / dt^2 (analytic; zero outside the band).
    pub fn second_derivative(&self, t: f64) -> f64 {
        if t <= self.t0 || t >= self.t1 {
            0.0
        } else {
            let w = self.t1 - self.t0;
            let s = (t - self.t0) / w;
            -(60.0 * s - 180.0 * s * s + 120.0 * s * s * s) / (w * w)
        }
    }

    /// chi evaluated at an arbitrary point of the domain.
    pub fn at(&self, dom: &GridDomain, p: [f64; 3]) -> f64 {
        self.value(dom.region.transverse(p, dom.dim, &dom.lo, &dom.hi))
    }
}

/// Evaluate the cut-off at cell centers. chi = 1 on the whole inner side
/// (r <= R1 for annuli), 0 on the whole outer side.
pub fn eval_cutoff(spec: &CutoffSpec, dom: &Arc<GridDomain>) -> Result<ScalarField> {
    spec.validate()?;
    let mut f = ScalarField::zeros(dom);
    for idx in 0..dom.cell_count() {
        f.values[idx] = spec.at(dom, dom.cell_center(idx));
    }
    Ok(f)
}
