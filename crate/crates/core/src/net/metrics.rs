use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::CountPolicy;
use super::wire::MessageKind;

/// Message, bit and round accounting of one trial.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounters {
    pub messages_total: u64,
    pub bits_total: u64,
    pub rounds_total: u64,
    pub messages_per_round: Vec<u64>,
    pub committee_size_history: Vec<u64>,
    pub messages_by_kind: BTreeMap<MessageKind, u64>,
    /// Point-to-point deliveries that happened.
    pub messages_delivered: u64,
    /// Sends lost because the sender crashed mid-send.
    pub messages_lost: u64,
    pub count_policy: CountPolicy,
}

impl MetricCounters {
    pub fn kind_total(&self, kind: MessageKind) -> u64 {
        self.messages_by_kind.get(&kind).copied().unwrap_or(0)
    }

    pub fn kinds_total(&self, kinds: &[MessageKind]) -> u64 {
        kinds.iter().map(|k| self.kind_total(*k)).sum()
    }

    /// Internal consistency of the counters.
    pub fn conserved(&self) -> bool {
        let per_round: u64 = self.messages_per_round.iter().sum();
        let by_kind: u64 = self.messages_by_kind.values().sum();
        let policy_total = match self.count_policy {
            CountPolicy::Sent => self.messages_delivered + self.messages_lost,
            CountPolicy::Delivered => self.messages_delivered,
        };
        per_round == self.messages_total
            && by_kind == self.messages_total
            && policy_total == self.messages_total
            && self.bits_total >= self.messages_total
            && self.messages_per_round.len() as u64 == self.rounds_total
    }
}
