//! Frontier-efficiency analysis for bank panels: DEA and super-efficiency,
//! stochastic profit frontiers, and the second-stage statistics and panel
//! regressions built on them.

pub mod dea;
pub mod error;
pub mod linalg;
pub mod linprog;
pub mod panel;
pub mod regress;
pub mod report;
pub mod sfa;
pub mod stats;

pub use error::{Error, Result};
