use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for probe construction, analysis, and optimization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spectrum must contain at least one level")]
    EmptySpectrum,

    #[error("spectrum levels must be finite, got {0}")]
    NonFiniteLevel(f64),

    #[error("spectrum must be pinned: sorted ascending with the ground level at 0, got ground {0}")]
    UnpinnedSpectrum(f64),

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("invalid temperature range: t_min {t_min}, t_max {t_max} (need 0 < t_min <= t_max, finite)")]
    InvalidRange { t_min: f64, t_max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("thermal sensitivity vanishes somewhere on the requested range; the averaged measure diverges")]
    DivergentMeasure,

    #[error("quadrature did not settle by {nodes} nodes: last two estimates {previous} and {latest}")]
    QuadratureDidNotConverge {
        nodes: usize,
        previous: f64,
        latest: f64,
    },

    #[error("no root inside the bracket [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("bracket endpoints both have {count} clusters; nothing to bisect")]
    DegenerateBracket { count: usize },

    #[error("{what} supports at most {limit}, requested {requested}")]
    Capacity {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("design system is singular: numerical rank {rank}, expected {expected}")]
    SingularDesign { rank: usize, expected: usize },

    #[error("{0}")]
    Parse(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
