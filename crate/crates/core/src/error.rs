use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("potential returned a non-finite value at {0:?}")]
    NonFiniteEvaluation(Vec<f64>),
    #[error("well {index} is not a critical point: |grad V| = {grad_norm:e}")]
    WellNotCritical { index: usize, grad_norm: f64 },
    #[error("mu0 shrink loop exhausted at mu0 = {0:e}")]
    ShrinkExhausted(f64),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("unknown potential '{0}'")]
    UnknownPotential(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("disk is not contained in the domain")]
    DiskOutsideDomain,
    #[error("circle is not contained in the domain")]
    CircleOutsideDomain,
    #[error("region is not contained in the domain")]
    RegionOutsideDomain,
    #[error("annulus is not contained in the domain")]
    AnnulusOutsideDomain,
    #[error("mask geometry: {0}")]
    MaskGeometryError(String),
    #[error("blow-up: sup|u| = {amplitude} exceeds {limit}")]
    BlowUp { amplitude: f64, limit: f64 },
    #[error("newton stagnated after {iters} iterations (scaled residual {residual:e})")]
    Stagnation { iters: usize, residual: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no regular level found in the scanned range")]
    NoRegularLevel,
    #[error("boundary condition violated: max |u - sigma| = {max_dist} >= kappa = {kappa}")]
    BoundaryConditionViolated { max_dist: f64, kappa: f64 },
    #[error("radius set is empty")]
    EmptyRadiusSet,
    #[error("no sampled disk satisfies any premise")]
    DegenerateFamily,
    #[error("point is not regular (isotropic or empty neighbourhood)")]
    NotRegularPoint,
    #[error("frame hypothesis not met: mass {frame_mass:e} exceeds tolerance {tolerance:e}")]
    HypothesisNotMet { frame_mass: f64, tolerance: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("family has {0} entries, need at least 2")]
    InsufficientFamily(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing artifact: {0}")]
    MissingArtifacts(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
