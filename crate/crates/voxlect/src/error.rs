use std::io;
use std::path::{Path, PathBuf};

use voxlect_core::apps::AppError;
use voxlect_core::corpus::CorpusError;
use voxlect_core::metrics::MetricsError;
use voxlect_core::probe::ProbeError;
use voxlect_core::robustness::RobustnessError;
use voxlect_core::taxonomy::TaxonomyError;
use voxlect_core::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} not found: {}", path.display())]
    NotFound { what: &'static str, path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Wav { path: PathBuf, source: hound::Error },
    #[error("checkpoint was built with taxonomy {found}, this build ships {expected}")]
    TaxonomyVersion { found: String, expected: String },
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    App(#[from] AppError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Adapter for `map_err` that attaches the offending path.
pub fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Errors with [`Error::NotFound`] unless `path` exists.
pub fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::NotFound {
            what,
            path: path.to_path_buf(),
        })
    }
}
