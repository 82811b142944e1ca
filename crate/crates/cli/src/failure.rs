use std::fmt;

use romdecipher::Error;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const TRAINING: u8 = 3;

/// An error on its way out of `main`, tagged with the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Failure {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Failure {
        Failure {
            code: DATA,
            message: message.into(),
        }
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> Failure {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::Config(_) | Error::SymbolTableMismatch | Error::UnsupportedComposition(_) => {
                USAGE
            }
            Error::UnknownSymbol { .. }
            | Error::NoPath
            | Error::EmptyCorpus
            | Error::Parse { .. }
            | Error::EmptyReference
            | Error::Io(_) => DATA,
            Error::Training(_) | Error::Cyclic => TRAINING,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::data(e.to_string())
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Attaches a path or step name to any error convertible to a [`Failure`].
pub trait Context<T> {
    fn with(self, what: impl fmt::Display) -> Outcome<T>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn with(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| e.into().context(what))
    }
}
