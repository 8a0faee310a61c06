use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("degenerate bar at arc length {arc_length:.6}: {reason}")]
    DegenerateBar { arc_length: f64, reason: String },

    #[error("decomposition failed ({reason}); bar arc lengths: {bars:?}")]
    Decomposition { reason: String, bars: Vec<f64> },

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("source point ({x:.6}, {y:.6}) is outside the permitted region")]
    SourceOutside { x: f64, y: f64 },

    #[error("path leaves the domain at sample {index}")]
    InvalidPath { index: usize },

    #[error("point ({x:.6}, {y:.6}) is outside subregion {subregion}")]
    OutsideSubregion { x: f64, y: f64, subregion: usize },

    #[error("subregion {0} has no admissible cells")]
    EmptySubregion(usize),

    #[error("distance field is stale: built at epoch {built}, now {now}, period {period}")]
    StaleField { built: u64, now: u64, period: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: u64) -> Error {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }
}
