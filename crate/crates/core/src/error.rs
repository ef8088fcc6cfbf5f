use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by callers that need to map errors onto exit
/// codes or retry policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad user-supplied parameters or configuration.
    Config,
    /// Numerically degenerate or geometrically impossible input.
    Numeric,
    /// File system or file format problems.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive depth {depth}{}", location_suffix(*.pixel))]
    NonPositiveDepth { depth: f64, pixel: Option<(usize, usize)> },

    #[error("point at height {y} is not above the ground plane y = {ground}")]
    BelowGround { y: f64, ground: f64 },

    #[error("negative blur size {0}")]
    NegativeBlur(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("raster dimensions {0}x{1} are invalid (both must be >= 1)")]
    EmptyRaster(usize, usize),

    #[error("buffer holds {actual} texels, expected {expected}")]
    BufferSize { expected: usize, actual: usize },

    #[error("non-finite value{}", location_suffix(*.pixel))]
    NonFiniteInput { pixel: Option<(usize, usize)> },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("mask has no on-pixels")]
    EmptyMask,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("too few samples: {0} (need at least 2)")]
    TooFewSamples(usize),

    #[error("no samples")]
    EmptySamples,

    #[error("degenerate fit: disparity variance {variance:e} <= {threshold:e}")]
    DegenerateFit { variance: f64, threshold: f64 },

    #[error("|CoC| = {coc} px at ({x}, {y}) exceeds the clamp of {max_coc} px")]
    CocExceedsClamp { coc: f32, max_coc: f32, x: usize, y: usize },

    #[error("region {0}x{1} is smaller than the {2}x{2} SSIM window")]
    RegionTooSmall(usize, usize, usize),

    #[error("primary ray for pixel ({0}, {1}) hit no geometry")]
    SkyPixel(usize, usize),

    #[error("unknown object id {0}")]
    UnknownObject(usize),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("{path}: invalid configuration: {message}")]
    InvalidConfig { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("unsupported bit depth in {path}: {depth}")]
    UnsupportedBitDepth { path: PathBuf, depth: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location_suffix(pixel: Option<(usize, usize)>) -> String {
    match pixel {
        Some((x, y)) => format!(" at pixel ({x}, {y})"),
        None => String::new(),
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_)
            | Error::EmptyRaster(..)
            | Error::BufferSize { .. }
            | Error::DimensionMismatch(..)
            | Error::CocExceedsClamp { .. }
            | Error::RegionTooSmall(..)
            | Error::UnknownObject(_)
            | Error::InvalidScene(_)
            | Error::InvalidConfig { .. } => ErrorKind::Config,
            Error::Format { .. } | Error::UnsupportedBitDepth { .. } | Error::Io { .. } => {
                ErrorKind::Io
            }
            _ => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
