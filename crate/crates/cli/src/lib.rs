//! Command implementations behind the `minpair` binary.

pub mod analyze;
pub mod generate;
pub mod io;
pub mod score;
pub mod serve;
