use std::path::PathBuf;

/// Errors produced by the stabilization engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("frame {index} has dimensions {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        index: usize,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("frame too small: {w}x{h}, need at least {min_w}x{min_h} for {levels} pyramid levels")]
    FrameTooSmall {
        w: usize,
        h: usize,
        min_w: usize,
        min_h: usize,
        levels: usize,
    },

    #[error("flow field has {invalid_pct:.1}% invalid pixels (limit 50%)")]
    TooManyInvalid { invalid_pct: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("video too short: {got} frames, need at least {need}")]
    VideoTooShort { got: usize, need: usize },

    #[error("empty temporal window")]
    EmptyWindow,

    #[error("crop intersection is empty at frame {frame_index}")]
    EmptyCrop { frame_index: usize },

    #[error("texture canvas overflow: path requires a margin of {required_margin} px, have {have_margin}")]
    CanvasOverflow {
        required_margin: usize,
        have_margin: usize,
    },

    #[error("denominator motion energy below 1e-9; reference video is already smooth")]
    SmoothReference,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// True for failures caused by unusable or missing input rather than by
    /// the numerics of a run (drives the CLI exit-code split).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Format { .. }
                | Error::DimensionMismatch { .. }
                | Error::VideoTooShort { .. }
                | Error::InvalidParameter(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
