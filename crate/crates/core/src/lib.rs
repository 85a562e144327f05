//! Decision processes with variable discounts: Bellman and discounted
//! transfer operators, vanishing-discount limits, regularity bounds and
//! ergodic optimization oracles.

pub mod applications;
pub mod cli;
pub mod discounts;
pub mod ergodic;
pub mod limits;
pub mod operators;
pub mod process;
pub mod regularity;
pub mod report;
