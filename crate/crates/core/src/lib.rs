//! Unsupervised decipherment of informally romanized text.
//!
//! A character n-gram model of the original script (the transition model)
//! and an edit-operation transducer (the emission model) form a noisy
//! channel. Emission parameters are learned from romanized text alone with
//! stepwise EM under Dirichlet priors derived from phonetic keyboard layouts
//! and visually confusable characters, and romanized input is decoded by a
//! shortest-path search over the composed lattice.

pub mod automata;
pub mod cascade;
pub mod channel;
pub mod corpus;
pub mod decode_eval;
pub mod error;
pub mod ngram;
pub mod semiring;
pub mod training;

pub use error::{Error, Result};
