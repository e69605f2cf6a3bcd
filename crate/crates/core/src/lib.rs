//! Trace equivalence of bounded security-protocol processes under the
//! regular, annotated, compressed and reduced semantics.

pub mod annotated_lts;
pub mod bench;
pub mod compressed_lts;
pub mod corpus;
pub mod dsl;
pub mod equivalence_engine;
pub mod process_calculus;
pub mod properties;
pub mod reduced_lts;
pub mod term_algebra;

use thiserror::Error;

pub use term_algebra::TermError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("process has free variables: {0}")]
    FreeVariables(String),
    #[error(transparent)]
    Parse(#[from] dsl::ParseError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("internal error: {0}")]
    Witness(String),
}
