use std::io;

/// Errors raised across the measurement pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate direction pair: outgoing equals incoming direction")]
    DegenerateDirection,

    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },

    #[error("point lies behind the camera")]
    BehindCamera,

    #[error("phase unwrapping inconsistent at level {level}: jump of {jump:.3} mm exceeds half a fringe")]
    UnwrapInconsistent { level: usize, jump: f64 },

    #[error("no background region survived segmentation")]
    EmptyBackground,

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("anchor point does not project into the foreground")]
    AnchorOutsideForeground,

    #[error("too few faces with measured normals ({valid} of {total})")]
    NoValidFaces { valid: usize, total: usize },

    #[error("line search failed {0} consecutive times")]
    Diverged(usize),

    #[error("mesh is not a manifold: {0}")]
    NonManifoldInput(String),

    #[error("insufficient overlap between meshes: {matched} of {total} source vertices matched")]
    InsufficientOverlap { matched: usize, total: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("manifest does not match image stack: {0}")]
    ManifestMismatch(String),

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }
}
