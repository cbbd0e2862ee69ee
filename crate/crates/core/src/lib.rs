//! Roundtrip verification and repair of natural-language to SMT-LIB formalizations.

pub mod backends;
pub mod config;
pub mod corpus;
pub mod equivalence;
pub mod events;
pub mod experiment;
pub mod nli;
pub mod pipeline;
pub mod repair;
pub mod report;
pub mod rng;
pub mod smt;
