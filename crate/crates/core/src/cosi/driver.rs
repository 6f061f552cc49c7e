//! In-process execution of a CoSi round, for tests and analytical message
//! counting. Delivery is instantaneous and ordered; silent nodes are modelled
//! by dropping everything addressed to them and firing the waiting parents'
//! timers once nothing else can happen.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use crate::crypto::{Group, KeyPair};

use super::round::{Action, CosiMessage, CosiPhase, Participant, RoundConfig};
use super::signature::CollectiveSignature;
use super::tree::CommTree;
use super::CosiError;

#[derive(Debug, Clone)]
pub struct TracedMessage<G: Group> {
    pub from: usize,
    pub to: usize,
    pub msg: CosiMessage<G>,
}

#[derive(Debug)]
pub struct RoundOutcome<G: Group> {
    pub result: Result<CollectiveSignature<G>, CosiError>,
    /// Every message sent, in send order, including ones addressed to faulty
    /// nodes that were then dropped.
    pub trace: Vec<TracedMessage<G>>,
}

/// Runs one round over `tree` with the leader at position 0.
///
/// `validator(pos, message)` is each node's verdict; nodes in `faults` never
/// act. The round fails with [`CosiError::InsufficientParticipation`] when
/// the signers' weight is under `cfg.min_weight`.
pub fn run_round<G, V>(
    group: &G,
    tree: CommTree,
    keys: &[KeyPair<G>],
    message: &[u8],
    validator: V,
    faults: &BTreeSet<usize>,
    cfg: RoundConfig<G>,
) -> RoundOutcome<G>
where
    G: Group,
    V: Fn(usize, &[u8]) -> bool,
{
    assert_eq!(keys.len(), tree.size(), "one key per roster position");
    if faults.contains(&0) {
        return RoundOutcome {
            result: Err(CosiError::LeaderFaulty),
            trace: Vec::new(),
        };
    }
    let roster: Arc<[G::Element]> = keys.iter().map(|k| k.public).collect();
    let mut nodes: Vec<Option<Participant<G>>> = (0..tree.size())
        .map(|pos| {
            (!faults.contains(&pos)).then(|| {
                Participant::new(group.clone(), tree, pos, keys[pos], roster.clone(), cfg.clone())
            })
        })
        .collect();

    let mut trace = Vec::new();
    let mut queue: VecDeque<(usize, Action<G>)> = VecDeque::new();
    let root = nodes[0].as_mut().expect("leader present");
    queue.extend(root.start(Arc::from(message)).into_iter().map(|a| (0, a)));

    loop {
        while let Some((pos, action)) = queue.pop_front() {
            match action {
                Action::Send { to, msg } => {
                    trace.push(TracedMessage {
                        from: pos,
                        to,
                        msg: msg.clone(),
                    });
                    if let Some(node) = nodes[to].as_mut() {
                        queue.extend(node.on_message(pos, &msg).into_iter().map(|a| (to, a)));
                    }
                }
                Action::Validate { message } => {
                    let node = nodes[pos].as_mut().expect("acting node exists");
                    let verdict = validator(pos, &message);
                    queue.extend(node.decide(verdict).into_iter().map(|a| (pos, a)));
                }
                Action::AwaitChildren { .. } => {}
                Action::Done(sig) => {
                    return RoundOutcome {
                        result: Ok(sig),
                        trace,
                    }
                }
                Action::Failed(e) if pos == 0 => {
                    return RoundOutcome {
                        result: Err(e),
                        trace,
                    }
                }
                Action::Failed(_) => {}
            }
        }
        // Quiescent: the deepest node still waiting on children times out
        // first, so partial aggregates move up in tree order.
        let waiting = nodes
            .iter()
            .flatten()
            .filter(|n| n.pending_children().next().is_some())
            .max_by_key(|n| (tree.depth_of(n.position()), n.position()));
        match waiting {
            Some(n) => {
                let pos = n.position();
                let node = nodes[pos].as_mut().expect("exists");
                queue.extend(node.on_child_timeout().into_iter().map(|a| (pos, a)));
            }
            None => {
                return RoundOutcome {
                    result: Err(CosiError::Stalled),
                    trace,
                }
            }
        }
    }
}

/// Message totals for one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub per_phase: [usize; 4],
    /// Longest path, in hops from the root, that any message of each phase
    /// travelled.
    pub max_hops: [usize; 4],
    /// Messages the leader sent and received.
    pub leader_sent: usize,
    pub leader_received: usize,
}

impl MessageStats {
    pub fn total(&self) -> usize {
        self.per_phase.iter().sum()
    }

    pub fn phase(&self, phase: CosiPhase) -> usize {
        self.per_phase[phase.index()]
    }
}

/// Tallies a round trace by phase, including per-phase path length.
pub fn count_messages<G: Group>(tree: &CommTree, trace: &[TracedMessage<G>]) -> MessageStats {
    let mut stats = MessageStats::default();
    for m in trace {
        let phase = m.msg.phase();
        let i = phase.index();
        stats.per_phase[i] += 1;
        let depth = if phase.is_downward() {
            tree.depth_of(m.to)
        } else {
            tree.depth_of(m.from)
        };
        stats.max_hops[i] = stats.max_hops[i].max(depth);
        if m.from == 0 {
            stats.leader_sent += 1;
        }
        if m.to == 0 {
            stats.leader_received += 1;
        }
    }
    stats
}
