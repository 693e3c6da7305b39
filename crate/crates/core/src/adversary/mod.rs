//! Crash and Byzantine adversary strategies.

pub mod byzantine;
pub mod crash;
