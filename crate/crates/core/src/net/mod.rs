//! Synchronous complete-network engine: authenticated sends, mid-send crashes,
//! shared randomness and exact message/bit accounting.

mod engine;
mod group;
mod metrics;
pub mod rng;
mod transcript;
pub mod wire;

use core::fmt;

use serde::{Deserialize, Serialize};

pub use engine::{CountPolicy, CrashDecision, Delivered, Delivery, Envelope, Network, Payload, SimError};
pub use group::NodeGroup;
pub use metrics::MetricCounters;
pub use transcript::{Event, EventLog, IterationOutcome, LogLevel, NodeOutcome, RoundClock, TimedEvent};
pub use wire::{MessageKind, WireMessage, WireWidths};

/// Position of a node in the simulator's node table, `0..n`.
pub type NodeIndex = usize;

/// Original identity in `[1, N]`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
