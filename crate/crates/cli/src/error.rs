use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] assetpop_core::Error),
    #[error("cannot read {what} {}: {source}", path.display())]
    Input {
        what: &'static str,
        path: PathBuf,
        source: Box<assetpop_core::Error>,
    },
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
