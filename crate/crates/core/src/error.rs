use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("one-cut endpoint solve did not converge (residual {residual:.3e} after {iterations} iterations); potential is likely multi-cut")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("equilibrium density negative at {at:.6} ({value:.3e}); one-cut ansatz invalid")]
    NegativeDensity { at: f64, value: f64 },

    #[error("density normalization {mass:.12} differs from 1 by more than {tolerance:.1e}")]
    Normalization { mass: f64, tolerance: f64 },

    #[error("non-generic potential: |P| = {min_abs_p:.3e} on the support")]
    NonGeneric { min_abs_p: f64 },

    #[error("effective potential exceeds its support level by {excess:.3e} at {at:.6}")]
    EffectivePotential { at: f64, excess: f64 },

    #[error("orthonormality residual {residual:.3e} exceeds {tolerance:.1e}")]
    Orthogonality { residual: f64, tolerance: f64 },

    #[error("recurrence breakdown: a_{index} = {value:.3e}")]
    RecurrenceBreakdown { index: usize, value: f64 },

    #[error("interval {interval:?} is not inside the support interior with the required margin")]
    IntervalOutsideBulk { interval: (f64, f64) },

    #[error("point {0} lies inside the interval")]
    PointInInterval(f64),

    #[error("need at least {required} quadrature nodes, got {given}")]
    TooFewNodes { required: usize, given: usize },

    #[error("kernel spectrum leaves [0, 1]: eigenvalue {value:.3e}")]
    Spectrum { value: f64 },

    #[error("identity violated: {name} residual {residual:.3e} > {tolerance:.1e}")]
    Identity {
        name: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("determinant branch ambiguous at x = {x}: factor {factor:.3e} crossed zero")]
    Branch { x: f64, factor: f64 },

    #[error("characteristic functional outside its representation: {0}")]
    Representation(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
