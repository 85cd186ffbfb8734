use thiserror::Error;

/// Errors shared across the solver and gluing pipelines.
///
/// The "mathematical obstruction" variants (`NetSourceMismatch`,
/// `NoConvergence`, `MetricNotPositive`) carry the measured quantities so a
/// caller can report them without re-running the computation.
#[derive(Debug, Error)]
pub enum GlueError {
    #[error("region produced no interior cells (region {region}, h = {h})")]
    EmptyRegion { region: String, h: f64 },

    #[error("fields live on different domains ({left} vs {right})")]
    DomainMismatch { left: u64, right: u64 },

    #[error("surface {surface} is not contained in the domain box")]
    SurfaceOutsideDomain { surface: String },

    #[error("parameter {name} = {value} outside valid range {range}")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },

    #[error("cut-off band [{t0}, {t1}] not strictly inside the open region")]
    BandOutsideRegion { t0: f64, t1: f64 },

    #[error("net source incompatible with a divergence-free glue: defect {defect:e} exceeds tolerance {tol:e}")]
    NetSourceMismatch { defect: f64, tol: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, tolerance {tol:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("mass form vanishes on a non-excluded direction (dof {dof})")]
    DegenerateMass { dof: usize },

    #[error("metric not positive-definite at cell {cell:?}")]
    MetricNotPositive { cell: [usize; 3] },

    #[error("domain reaches into r < {rmin} where the data is singular")]
    DomainContainsSingularity { rmin: f64 },
}

pub type Result<T> = std::result::Result<T, GlueError>;
