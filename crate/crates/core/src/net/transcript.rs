use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::wire::MessageKind;
use super::NodeId;
use crate::Interval;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    #[default]
    Off,
    Summary,
    Trace,
}

impl LogLevel {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "off" => Some(LogLevel::Off),
            "summary" => Some(LogLevel::Summary),
            "trace" => Some(LogLevel::Trace),
            _ => None,
        }
    }
}

/// Position of a round inside a protocol schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundClock {
    pub round: u64,
    pub phase: u64,
    pub sub_round: u8,
}

impl RoundClock {
    /// Crash protocol mapping: round 0 is initialisation, rounds `3(k-1)+1..=3k` form phase `k`.
    pub fn crash(round: u64) -> Self {
        if round == 0 {
            return RoundClock { round, phase: 0, sub_round: 0 };
        }
        RoundClock { round, phase: (round - 1) / 3 + 1, sub_round: ((round - 1) % 3 + 1) as u8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationOutcome {
    Accepted,
    AcceptedDirty,
    Split,
    Singleton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Crash { node: NodeId, delivered_to: u32 },
    Rejected { sender: NodeId, kind: MessageKind, claimed: u32 },
    Envelope { sender: NodeId, kind: MessageKind, fanout: u32, delivered: u32, bits: u32 },
    PhaseEnd { phase: u64, live: u32, elected: u32, min_depth: u32, min_p: u32, max_p: u32, decided: u32 },
    CommitteeElected { size: u32, correct: u32, byzantine: u32 },
    Iteration { index: u64, segment: Interval, outcome: IterationOutcome },
    Decided { node: NodeId, new_id: u32 },
    MonitorFailure { lemma: String, detail: String },
    Note { text: String },
}

impl Event {
    fn min_level(&self) -> LogLevel {
        if matches!(self, Event::Envelope { .. }) {
            LogLevel::Trace
        } else {
            LogLevel::Summary
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub round: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Ordered event record filtered by verbosity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub level: LogLevel,
    pub events: Vec<TimedEvent>,
}

impl EventLog {
    pub fn new(level: LogLevel) -> Self {
        EventLog { level, events: Vec::new() }
    }

    pub fn enabled(&self, level: LogLevel) -> bool {
        self.level >= level && level != LogLevel::Off
    }

    pub fn push(&mut self, round: u64, event: Event) {
        if self.enabled(event.min_level()) {
            self.events.push(TimedEvent { round, event });
        }
    }

    /// Monitor failures are kept at every verbosity.
    pub fn push_failure(&mut self, round: u64, lemma: &str, detail: String) {
        self.events.push(TimedEvent {
            round,
            event: Event::MonitorFailure { lemma: lemma.into(), detail },
        });
    }
}

/// Final state of one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum NodeOutcome {
    Renamed(u32),
    Crashed,
    Byzantine,
    /// Ended without a single-valued interval or an adoptable id.
    Undecided,
}

impl NodeOutcome {
    pub fn new_id(&self) -> Option<u32> {
        match self {
            NodeOutcome::Renamed(x) => Some(*x),
            _ => None,
        }
    }
}
