use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced across the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// A state, control, or measurement contained NaN or infinity.
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// A control sequence must contain at least one input.
    #[error("empty control sequence")]
    EmptyControls,

    /// Two sequences that must agree in length do not.
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// The sensor pose lies inside obstacle geometry (crash state).
    #[error("sensor pose ({x:.3}, {y:.3}, {z:.3}) lies inside an obstacle")]
    InsideObstacle { x: f64, y: f64, z: f64 },

    /// A path endpoint is occupied or outside the grid.
    #[error("{which} cell ({},{},{}) is occupied or out of bounds", cell[0], cell[1], cell[2])]
    BadEndpoint { which: &'static str, cell: [i32; 3] },

    /// The goal cell is unreachable; carries the boundary of the searched region.
    #[error("no grid path to goal ({} frontier cells searched up to walls)", frontier.len())]
    NoPath { frontier: Vec<[i32; 3]> },

    /// An obstacle point coincides with the vehicle position.
    #[error("potential-field singularity: obstacle coincides with vehicle position")]
    Singularity,

    /// Scenario file failed schema or semantic validation.
    #[error("scenario: {0}")]
    Scenario(String),

    /// Scenario file could not be parsed.
    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidParameter`].
    pub fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
