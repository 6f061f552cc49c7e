//! Small rosters driven by a fixed-latency event loop.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use byzcoin_core::chain::{ChainState, KeyBlock, MicroBlock, NodeId};
use byzcoin_core::consensus::{
    Behavior, Event, Input, Node, NodeConfig, Output, QuorumRule, RoundKind, Time, Timing,
};
use byzcoin_core::crypto::{self, Ed25519Group, KeyPair};
use byzcoin_core::Hash256;

type G = Ed25519Group;

const LATENCY: Time = 10_000;

fn key(id: NodeId) -> KeyPair<G> {
    crypto::keygen(&Ed25519Group, u64::from(id) + 77)
}

fn keyblock(height: u64, prev: Hash256, miner: NodeId) -> KeyBlock<G> {
    KeyBlock {
        height,
        prev,
        miner,
        miner_key: key(miner).public,
        nonce: 0,
        difficulty_bits: 1,
        timestamp: height,
        signature: None,
    }
    .solve(&Ed25519Group)
}

/// One share per miner `0..w`, with miner `w - 1` the newest.
fn bootstrap(w: usize, order: &[NodeId]) -> ChainState<G> {
    let mut state = ChainState::new(Ed25519Group, w, keyblock(0, Hash256::ZERO, order[0])).unwrap();
    for (h, &m) in order.iter().enumerate().skip(1) {
        let kb = keyblock(h as u64, state.era(), m);
        state.apply_keyblock(kb).unwrap();
    }
    state
}

struct Net {
    nodes: BTreeMap<NodeId, Node<G>>,
    queue: BinaryHeap<Reverse<(Time, u64, NodeId)>>,
    inputs: BTreeMap<u64, Input<G>>,
    seq: u64,
    now: Time,
    events: Vec<(Time, NodeId, Event<G>)>,
    drop: Box<dyn Fn(NodeId, NodeId) -> bool>,
}

impl Net {
    fn new(w: usize, behaviors: &[(NodeId, Behavior)], tweak: impl Fn(&mut NodeConfig)) -> Self {
        let order: Vec<NodeId> = (0..w as NodeId).collect();
        let population: Arc<[NodeId]> = order.clone().into();
        let colluders: Arc<BTreeSet<NodeId>> = Arc::new(
            behaviors
                .iter()
                .filter(|(_, b)| *b != Behavior::Honest)
                .map(|(id, _)| *id)
                .collect(),
        );
        let chain = bootstrap(w, &order);
        let mut nodes = BTreeMap::new();
        for &id in &order {
            let mut cfg = NodeConfig::new(id, population.clone());
            cfg.block_bytes = 4096;
            cfg.timing = Timing {
                one_way_us: LATENCY,
                ..Timing::default()
            };
            cfg.behavior = behaviors
                .iter()
                .find(|(b, _)| *b == id)
                .map_or(Behavior::Honest, |(_, b)| *b);
            cfg.colluders = colluders.clone();
            tweak(&mut cfg);
            nodes.insert(id, Node::new(cfg, Ed25519Group, key(id), chain.clone()));
        }
        Self {
            nodes,
            queue: BinaryHeap::new(),
            inputs: BTreeMap::new(),
            seq: 0,
            now: 0,
            events: Vec::new(),
            drop: Box::new(|_, _| false),
        }
    }

    fn push(&mut self, at: Time, to: NodeId, input: Input<G>) {
        self.seq += 1;
        self.inputs.insert(self.seq, input);
        self.queue.push(Reverse((at, self.seq, to)));
    }

    fn start(&mut self) {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            self.push(0, id, Input::Start);
        }
    }

    fn run_until(&mut self, end: Time) {
        while let Some(&Reverse((t, seq, to))) = self.queue.peek() {
            if t > end {
                break;
            }
            self.queue.pop();
            self.now = t;
            let input = self.inputs.remove(&seq).unwrap();
            let outputs = self.nodes.get_mut(&to).unwrap().handle(t, input);
            for out in outputs {
                match out {
                    Output::Send { to: dst, msg } => {
                        if !(self.drop)(to, dst) {
                            self.push(t + LATENCY, dst, Input::Message { from: to, msg });
                        }
                    }
                    Output::Timer { after, timer } => self.push(t + after, to, Input::Timer(timer)),
                    Output::Event(e) => self.events.push((t, to, e)),
                }
            }
        }
        self.now = end;
    }

    fn honest_heights(&self) -> Vec<u64> {
        self.nodes
            .values()
            .filter(|n| n.behavior() == Behavior::Honest)
            .map(|n| n.chain().micro_height())
            .collect()
    }

    fn certificates(&self) -> Vec<Arc<MicroBlock<G>>> {
        self.events
            .iter()
            .filter_map(|(_, _, e)| match e {
                Event::CertificateProduced { block, .. } => Some(block.clone()),
                _ => None,
            })
            .collect()
    }

    /// No two certificates for the same height name different blocks.
    fn assert_safe(&self) {
        let mut seen: BTreeMap<u64, Hash256> = BTreeMap::new();
        for b in self.certificates() {
            let h = seen.entry(b.header.height).or_insert(b.hash());
            assert_eq!(*h, b.hash(), "conflicting certificates at {}", b.header.height);
        }
        let chains: Vec<_> = self.nodes.values().map(|n| n.chain().microblocks()).collect();
        for a in &chains {
            for b in &chains {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_eq!(x.hash(), y.hash());
                }
            }
        }
    }
}

#[test]
fn honest_roster_commits_blocks() {
    let mut net = Net::new(7, &[], |_| {});
    net.start();
    net.run_until(5_000_000);
    let heights = net.honest_heights();
    assert!(heights.iter().all(|&h| h >= 5), "{heights:?}");
    net.assert_safe();
}

#[test]
fn flat_and_tree_agree_on_progress() {
    for flat in [false, true] {
        let mut net = Net::new(10, &[], |c| {
            c.start_flat = flat;
            c.branching = 3;
        });
        net.start();
        net.run_until(3_000_000);
        assert!(net.honest_heights().iter().all(|&h| h >= 2), "flat={flat}");
        net.assert_safe();
    }
}

#[test]
fn silent_leader_is_replaced() {
    // the newest miner leads view 0
    let mut net = Net::new(7, &[(6, Behavior::SilentLeader)], |_| {});
    net.start();
    net.run_until(60_000_000);
    let installed = net
        .events
        .iter()
        .any(|(_, _, e)| matches!(e, Event::ViewInstalled { view: 1, leader: 5, .. }));
    assert!(installed);
    assert!(net.honest_heights().iter().all(|&h| h >= 3), "{:?}", net.honest_heights());
    net.assert_safe();
}

#[test]
fn equivocating_leader_never_gets_two_certificates() {
    // w = 3f + 2 is the tightest case for quorum intersection
    for (w, f) in [(5usize, 1usize), (8, 2), (11, 3)] {
        let mut behaviors = vec![(w as NodeId - 1, Behavior::EquivocatingLeader)];
        for i in 0..f - 1 {
            behaviors.push((i as NodeId, Behavior::Colluder));
        }
        let mut net = Net::new(w, &behaviors, |c| c.start_flat = true);
        net.start();
        net.run_until(30_000_000);
        net.assert_safe();
    }
}

#[test]
fn classic_quorum_lets_an_equivocator_split_the_roster() {
    let w = 5;
    let behaviors = [(4, Behavior::EquivocatingLeader)];
    let mut net = Net::new(w, &behaviors, |c| {
        c.start_flat = true;
        c.rule = QuorumRule::Classic { era_first_bump: false };
    });
    net.start();
    net.run_until(2_000_000);
    let mut per_height: BTreeMap<u64, BTreeSet<Hash256>> = BTreeMap::new();
    for b in net.certificates() {
        per_height.entry(b.header.height).or_default().insert(b.hash());
    }
    assert!(per_height.values().any(|s| s.len() > 1), "{per_height:?}");
}

#[test]
fn subtree_cutter_forces_flat_fallback() {
    // rosters list the newest miner first, so node 11 sits right below the
    // leader and carries half the binary tree
    let mut net = Net::new(13, &[(11, Behavior::SubtreeCutter)], |c| c.branching = 2);
    net.start();
    net.run_until(20_000_000);
    assert!(net
        .events
        .iter()
        .any(|(_, _, e)| matches!(e, Event::TreeFallback { .. })));
    assert!(net.honest_heights().iter().all(|&h| h >= 2), "{:?}", net.honest_heights());
    net.assert_safe();
}

#[test]
fn new_keyblock_starts_an_era_and_is_cosigned() {
    let mut net = Net::new(7, &[], |_| {});
    net.start();
    net.run_until(1_000_000);
    let kb = net.nodes[&3].mine_keyblock(net.now, 1);
    let hash = kb.hash(&Ed25519Group);
    let ids: Vec<NodeId> = net.nodes.keys().copied().collect();
    for id in ids {
        net.push(net.now + 1, id, Input::Keyblock(kb.clone()));
    }
    let before = net.honest_heights()[0];
    net.run_until(10_000_000);
    for n in net.nodes.values() {
        assert_eq!(n.chain().era(), hash);
        assert!(n.chain().keyblocks().last().unwrap().signature.is_some());
        assert_eq!(n.leader(0), 3);
    }
    let era_blocks = net
        .events
        .iter()
        .filter(|(_, _, e)| matches!(e, Event::Committed { era, .. } if *era == hash))
        .count();
    assert!(era_blocks > 0);
    assert!(net.honest_heights()[0] > before);
    assert!(net.events.iter().any(|(_, _, e)| matches!(
        e,
        Event::KeyblockSigned { .. }
    )));
    net.assert_safe();
    let _ = RoundKind::Keyblock;
}

#[test]
fn delivery_filter_partitions_stop_progress() {
    // isolating three of seven leaves no quorum
    let mut net = Net::new(7, &[], |_| {});
    net.drop = Box::new(|a, b| (a < 3) != (b < 3));
    net.start();
    net.run_until(5_000_000);
    assert!(net.honest_heights().iter().all(|&h| h == 0));
}

