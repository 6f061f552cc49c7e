use serde::{Deserialize, Serialize};

use crate::queue::Time;

/// Latency and bandwidth shared by every pair of hosts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkModel {
    pub rtt_ms: f64,
    pub bandwidth_mbps: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            rtt_ms: 200.0,
            bandwidth_mbps: 35.0,
        }
    }
}

impl LinkModel {
    pub fn one_way_us(&self) -> Time {
        (self.rtt_ms * 500.0).round() as Time
    }

    pub fn bandwidth_bps(&self) -> f64 {
        self.bandwidth_mbps * 1e6
    }

    pub fn serialization_us(&self, bytes: u64) -> Time {
        (bytes as f64 * 8.0 / self.bandwidth_bps() * 1e6).ceil() as Time
    }
}

/// One FIFO uplink per host: a message starts serializing once everything
/// queued before it has left, then spends half the round trip in flight.
#[derive(Debug, Clone)]
pub struct Uplinks {
    link: LinkModel,
    free_at: Vec<Time>,
    sent_bytes: Vec<u64>,
    sent_messages: Vec<u64>,
}

/// Where a transmission sat on its sender's uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub start: Time,
    pub end: Time,
    pub delivery: Time,
}

impl Uplinks {
    pub fn new(link: LinkModel, hosts: usize) -> Self {
        Self {
            link,
            free_at: vec![0; hosts],
            sent_bytes: vec![0; hosts],
            sent_messages: vec![0; hosts],
        }
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn send(&mut self, host: usize, now: Time, bytes: u64) -> Transmission {
        let start = now.max(self.free_at[host]);
        let end = start + self.link.serialization_us(bytes);
        self.free_at[host] = end;
        self.sent_bytes[host] += bytes;
        self.sent_messages[host] += 1;
        Transmission {
            start,
            end,
            delivery: end + self.link.one_way_us(),
        }
    }

    pub fn sent_bytes(&self) -> &[u64] {
        &self.sent_bytes
    }

    pub fn sent_messages(&self) -> &[u64] {
        &self.sent_messages
    }
}
