//! Deterministic synchronous-round simulation of fault-tolerant strong renaming.
//!
//! The crate holds the network engine, the crash-resilient interval-halving
//! protocol, the Byzantine fingerprint protocol, a library of adversaries and
//! the lemma monitors. Everything here is `no_std` and allocation-only so a
//! trial is a pure function of its configuration and seed.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adversary;
pub mod byz;
pub mod crash;
pub mod interval;
pub mod math;
pub mod monitor;
pub mod net;
pub mod trial;

pub use interval::{Interval, IntervalError};
pub use net::{NodeId, NodeIndex};

