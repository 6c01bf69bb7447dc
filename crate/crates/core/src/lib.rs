//! Numerical screening: discrete monopoly pricing over convex surplus
//! functions, with and without an aversion dimension, plus the perturbation
//! certificates showing when selling an undesirable quality pays.

pub mod cone;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod exec;
pub mod io;
pub mod objective;
pub mod perturbation;
pub mod solver;

pub use error::{Error, Result};
pub use exec::Exec;
