use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed content in a text input, pointing at the offending line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("grid headers differ: {0}")]
    HeaderMismatch(String),

    /// No crop pixels with a valid peak value; peak statistics are undefined.
    #[error("no cropland pixels with a valid peak value")]
    EmptyStatistics,

    /// A stratum carries weight but has too few samples for the variance
    /// estimator (needs n_i >= 2).
    #[error("stratum {stratum}: weight {weight} > 0 but only {n} sample(s); need at least 2")]
    Infeasible {
        stratum: String,
        weight: f64,
        n: usize,
    },

    #[error("point ({lon}, {lat}) is off the grid or on a nodata cell")]
    OffGrid { lon: f64, lat: f64 },

    #[error("unknown sample id {0} in label file")]
    UnknownSample(u64),

    #[error("map {map}: class code {code} has no crop/noncrop mapping")]
    UnmappedClass { map: String, code: u8 },

    #[error("stratum {stratum}: plan asks for {wanted} pixels but only {available} exist")]
    StratumDeficit {
        stratum: String,
        wanted: usize,
        available: usize,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
