//! Bilateral counterparty-risk pricing of credit default swaps under a
//! Markovian systemic-contagion default model.

pub mod cds;
pub mod cli;
pub mod contagion;
pub mod config;
pub mod convention;
pub mod engine;
pub mod error;
pub mod exec;
pub mod grid;
pub mod mc;
pub mod roots;
pub mod settlement;
pub mod verify;

pub use convention::{Convention, RankKind, RankRule};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::TenorGrid;
