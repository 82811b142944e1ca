use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol:?} at position {position} is not in the symbol table")]
    UnknownSymbol { position: usize, symbol: char },

    #[error("symbol tables of composed machines do not match")]
    SymbolTableMismatch,

    #[error("unsupported composition: {0}")]
    UnsupportedComposition(String),

    #[error("machine has a cycle reachable from the start state")]
    Cyclic,

    #[error("no accepting path")]
    NoPath,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference sequence is empty")]
    EmptyReference,

    #[error("training failed: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
