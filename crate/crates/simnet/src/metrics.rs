use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use byzcoin_core::chain::NodeId;

use crate::audit::AuditReport;
use crate::queue::{Time, MS, SECOND};
use crate::SimError;

/// One row of the event trace. Times are kept in microseconds and written
/// in milliseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: Time,
    pub node: NodeId,
    pub event: &'static str,
    pub bytes: u64,
    pub height: u64,
}

#[derive(Serialize)]
struct TraceRow {
    time_ms: f64,
    node: NodeId,
    event: &'static str,
    bytes: u64,
    height: u64,
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(TraceRow {
            time_ms: r.time as f64 / MS as f64,
            node: r.node,
            event: r.event,
            bytes: r.bytes,
            height: r.height,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Summary of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub name: String,
    pub seed: u64,
    pub hosts: usize,
    pub topology: String,
    pub quorum: String,
    /// Microblocks committed by a leader, in commit order.
    pub committed_blocks: u64,
    /// Proposal-to-commit time at the leader for each committed block.
    pub latency_s: Vec<f64>,
    pub mean_latency_s: f64,
    /// Transactions per second after the first commit.
    pub throughput_tps: f64,
    /// Distinct blocks proposed by honest leaders before the last commit.
    pub proposals: u64,
    pub proposals_committed: u64,
    pub messages: BTreeMap<String, u64>,
    pub bytes_per_host_mean: f64,
    pub bytes_per_host_max: u64,
    pub view_changes: u64,
    pub tree_fallbacks: u64,
    pub round_failures: u64,
    pub rejections: u64,
    pub checkpoints: u64,
    pub keyblocks_mined: u64,
    pub keyblocks_signed: u64,
    pub audit: AuditReport,
    /// The stop condition was not met before the duration ran out.
    pub truncated: bool,
    pub end_time_s: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Mean of a nonempty slice, zero otherwise.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Committed transactions per second over the span between the first and
/// the last commit, where the first block only marks the start. A single
/// block falls back to its own latency.
pub fn throughput(commits: &[(Time, u64)], first_latency: Time) -> f64 {
    match commits {
        [] => 0.0,
        [(_, tx)] => *tx as f64 * SECOND as f64 / first_latency.max(1) as f64,
        [(t0, _), rest @ ..] => {
            let last = rest.last().expect("nonempty").0;
            let tx: u64 = rest.iter().map(|c| c.1).sum();
            tx as f64 * SECOND as f64 / (last - t0).max(1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_is_written_in_milliseconds() {
        let rec = TraceRecord {
            time: 1500,
            node: 3,
            event: "committed",
            bytes: 10,
            height: 1,
        };
        assert_eq!(trace_csv(&[rec]), "time_ms,node,event,bytes,height\n1.5,3,committed,10,1\n");
    }

    #[test]
    fn throughput_skips_the_first_block() {
        let tps = throughput(&[(0, 100), (SECOND, 50), (2 * SECOND, 50)], 1);
        assert!((tps - 50.0).abs() < 1e-9);
        assert!((throughput(&[(0, 10)], 2 * SECOND) - 5.0).abs() < 1e-9);
    }
}
