//! The simulation driver.
//!
//! Every host runs a consensus [`Node`] and a [`GossipNode`] for keyblocks.
//! Both share the host's uplink. Node ids and host indices coincide.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use byzcoin_core::chain::{ChainState, KeyBlock, NodeId};
use byzcoin_core::consensus::{Behavior, Event, Input, Message, Node, NodeConfig, Output, QuorumRule, Timing};
use byzcoin_core::crypto::{self, Ed25519Group, KeyPair};
use byzcoin_core::Hash256;

use crate::audit::audit;
use crate::config::{ProfileKind, ScenarioConfig, Topology};
use crate::gossip::{self, GossipMsg, GossipNode, GossipOut, KeyblockItem};
use crate::graph::PeerGraph;
use crate::link::Uplinks;
use crate::metrics::{self, MetricsReport, TraceRecord};
use crate::mining::MinerModel;
use crate::queue::{EventQueue, Time, MS, SECOND};
use crate::SimError;

/// The group used for all simulated signatures.
pub type G = Ed25519Group;

/// Returns `true` to drop a consensus message `(now, from, to, msg)`.
pub type MessageFilter = Box<dyn FnMut(Time, NodeId, NodeId, &Message<G>) -> bool>;

type Item = KeyblockItem<G>;

const DEFAULT_SELFISH_POWER: f64 = 0.25;
const DEFAULT_EXTRA_ZERO_BITS: u32 = 2;

enum Ev {
    Node { node: NodeId, input: Input<G> },
    Gossip { to: usize, from: usize, msg: GossipMsg<Item> },
    GossipRetry { node: usize, id: Hash256, attempt: u32 },
    Mine,
    Found { miner: NodeId },
    Scripted { miner: NodeId },
    Crash { node: NodeId },
}

/// An adversary profile bound to concrete nodes.
#[derive(Debug, Clone)]
pub struct Profile {
    pub kind: ProfileKind,
    pub nodes: BTreeSet<NodeId>,
    pub max_delay: Time,
    pub extra_zero_bits: u32,
    pub power: f64,
}

fn key_seed(seed: u64, id: NodeId) -> u64 {
    let h = Hash256::of_parts([&seed.to_le_bytes()[..], &id.to_le_bytes()[..]]);
    h.short()
}

fn bootstrap_keyblock(height: u64, prev: Hash256, miner: NodeId, key: &KeyPair<G>, bits: u32) -> KeyBlock<G> {
    KeyBlock {
        height,
        prev,
        miner,
        miner_key: key.public,
        nonce: 0,
        difficulty_bits: bits,
        timestamp: 0,
        signature: None,
    }
    .solve(&Ed25519Group)
}

/// Picks `count` nodes for a profile from the bootstrap order, oldest first.
/// Leader attacks take the newest miners, who lead the first views; subtree
/// cutters take the positions right below the view-0 leader.
fn pick_nodes(kind: ProfileKind, order: &[NodeId], count: usize) -> BTreeSet<NodeId> {
    let newest = order.iter().rev().copied();
    match kind {
        ProfileKind::SilentLeader | ProfileKind::EquivocatingLeader => newest.take(count).collect(),
        ProfileKind::SubtreeCutter => newest.skip(1).take(count).collect(),
        _ => order.iter().copied().take(count).collect(),
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    rule: QuorumRule,
    nodes: Vec<Node<G>>,
    gossip: Vec<GossipNode<Item>>,
    graph: PeerGraph,
    uplinks: Uplinks,
    queue: EventQueue<Ev>,
    rng: ChaCha8Rng,
    miners: Option<MinerModel>,
    tie_window: Time,
    difficulty_bits: u32,
    profiles: Vec<Profile>,
    /// Index into `profiles` per node.
    role: Vec<Option<usize>>,
    crashed: Vec<bool>,
    ever_crashed: Vec<bool>,
    withheld: Vec<Option<Arc<Item>>>,
    filter: Option<MessageFilter>,
    trace: Vec<TraceRecord>,
    events: Vec<(Time, NodeId, Event<G>)>,
    messages: BTreeMap<&'static str, u64>,
    dropped: u64,
    nonce: u64,
    keyblocks_mined: u64,
    stopped: bool,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let pop = cfg.population();
        let ids: Vec<NodeId> = (0..pop as NodeId).collect();
        let population: Arc<[NodeId]> = ids.clone().into();
        let keys: Vec<KeyPair<G>> = ids
            .iter()
            .map(|&id| crypto::keygen(&Ed25519Group, key_seed(cfg.seed, id)))
            .collect();
        let order: Vec<NodeId> = if cfg.bootstrap_order.is_empty() {
            (0..cfg.hosts as NodeId).collect()
        } else {
            cfg.bootstrap_order.clone()
        };
        let difficulty_bits = cfg.mining.as_ref().map_or(1, |m| m.difficulty_bits);

        let first = order[0];
        let genesis = bootstrap_keyblock(0, Hash256::ZERO, first, &keys[first as usize], difficulty_bits);
        let mut chain = ChainState::new(Ed25519Group, cfg.hosts, genesis)?;
        for (h, &m) in order.iter().enumerate().skip(1) {
            let kb = bootstrap_keyblock(h as u64, chain.era(), m, &keys[m as usize], difficulty_bits);
            chain.apply_keyblock(kb)?;
        }

        let mut profiles = Vec::new();
        let mut role = vec![None; pop];
        for a in &cfg.adversaries {
            let nodes = if a.nodes.is_empty() {
                pick_nodes(a.kind, &order, a.count.unwrap_or(1))
            } else {
                a.nodes.iter().copied().collect()
            };
            for &n in &nodes {
                role[n as usize] = Some(profiles.len());
            }
            profiles.push(Profile {
                kind: a.kind,
                nodes,
                max_delay: (a.max_delay_ms.unwrap_or(cfg.link.rtt_ms) * MS as f64).round() as Time,
                extra_zero_bits: a.extra_zero_bits.unwrap_or(DEFAULT_EXTRA_ZERO_BITS),
                power: a.power.unwrap_or(DEFAULT_SELFISH_POWER),
            });
        }
        let colluders: Arc<BTreeSet<NodeId>> = Arc::new(
            profiles
                .iter()
                .filter(|p| p.kind == ProfileKind::EquivocatingLeader)
                .flat_map(|p| p.nodes.iter().copied())
                .collect(),
        );

        let timing = Timing {
            one_way_us: cfg.link.one_way_us(),
            bandwidth_bps: cfg.link.bandwidth_bps(),
            verify_ns_per_byte: cfg.timing.verify_ms_per_mb * 1e6 / (1u64 << 20) as f64,
            slack: cfg.timing.slack,
            view_change_factor: cfg.timing.view_change_factor,
            settle_us: (cfg.timing.settle_ms * MS as f64).round() as u64,
            block_interval_us: (cfg.block_interval_ms * MS as f64).round() as u64,
        };
        let rule: QuorumRule = cfg.quorum.into();
        let nodes: Vec<Node<G>> = ids
            .iter()
            .zip(keys)
            .map(|(&id, key)| {
                let mut nc = NodeConfig::new(id, population.clone());
                nc.branching = cfg.branching;
                nc.start_flat = cfg.topology == Topology::Flat;
                nc.tree_detection = cfg.tree_detection;
                nc.rule = rule;
                nc.timing = timing.clone();
                nc.block_bytes = cfg.block_bytes;
                nc.tx_bytes = cfg.tx_bytes;
                nc.behavior = role[id as usize].map_or(Behavior::Honest, |r| profiles[r].kind.behavior());
                nc.colluders = colluders.clone();
                nc.seed = key_seed(cfg.seed ^ 0x5eed, id);
                nc.difficulty_bits = difficulty_bits;
                Node::new(nc, Ed25519Group, key, chain.clone())
            })
            .collect();

        let graph = PeerGraph::random_regular(pop, cfg.peer_degree, &mut rng);
        let sample = nodes[0].mine_keyblock(0, 0);
        let degree = (0..pop).map(|v| graph.degree(v)).max().unwrap_or(1) as u64;
        let retry = gossip::retry_after(&cfg.link, degree, sample.encoded_len(&Ed25519Group) as u64);
        let gossip = (0..pop)
            .map(|v| GossipNode::new(v, graph.neighbors(v).collect(), retry))
            .collect();

        let miners = match &cfg.mining {
            None => None,
            Some(m) => {
                let selfish: Vec<(NodeId, f64)> = profiles
                    .iter()
                    .filter(|p| p.kind == ProfileKind::SelfishMiner)
                    .flat_map(|p| {
                        let share = p.power / p.nodes.len().max(1) as f64;
                        p.nodes.iter().map(move |&n| (n, share))
                    })
                    .collect();
                let adversarial = selfish.iter().map(|s| s.1).sum::<f64>();
                let honest: Vec<NodeId> = ids.iter().copied().filter(|&id| role[id as usize].is_none()).collect();
                if honest.is_empty() || adversarial >= 1.0 {
                    return Err(SimError::Config("mining: no honest hash power left".into()));
                }
                let share = (1.0 - adversarial) / honest.len() as f64;
                let mut powers = selfish;
                powers.extend(honest.iter().map(|&h| (h, share)));
                // nodes of other profiles do not mine
                powers.extend(
                    ids.iter()
                        .copied()
                        .filter(|&id| role[id as usize].is_some_and(|r| profiles[r].kind != ProfileKind::SelfishMiner))
                        .map(|id| (id, 0.0)),
                );
                Some(MinerModel::new(powers, m.interval_s)?)
            }
        };
        let tie_window = cfg
            .mining
            .as_ref()
            .and_then(|m| m.tie_window_ms)
            .map_or(cfg.link.one_way_us(), |ms| (ms * MS as f64).round() as Time);

        let mut sim = Self {
            rule,
            uplinks: Uplinks::new(cfg.link, pop),
            nodes,
            gossip,
            graph,
            queue: EventQueue::new(),
            rng,
            miners,
            tie_window,
            difficulty_bits,
            profiles,
            role,
            crashed: vec![false; pop],
            ever_crashed: vec![false; pop],
            withheld: vec![None; pop],
            filter: None,
            trace: Vec::new(),
            events: Vec::new(),
            messages: BTreeMap::new(),
            dropped: 0,
            nonce: 1,
            keyblocks_mined: 0,
            stopped: false,
            cfg,
        };
        for &id in &ids {
            sim.queue.schedule(0, Ev::Node { node: id, input: Input::Start });
        }
        if sim.miners.is_some() {
            sim.queue.schedule(0, Ev::Mine);
        }
        for k in sim.cfg.keyblocks.clone() {
            sim.inject_keyblock(secs(k.at_s), k.miner);
        }
        let leader = sim.nodes[0].leader(0);
        for c in sim.cfg.crashes.clone() {
            sim.crash(secs(c.at_s), c.node.unwrap_or(leader));
        }
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> Time {
        self.queue.now()
    }

    pub fn nodes(&self) -> &[Node<G>] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node<G> {
        &self.nodes[id as usize]
    }

    pub fn graph(&self) -> &PeerGraph {
        &self.graph
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn events(&self) -> &[(Time, NodeId, Event<G>)] {
        &self.events
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_csv(&self) -> String {
        metrics::trace_csv(&self.trace)
    }

    /// Consensus messages a filter dropped.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Not under adversary control and never crashed.
    pub fn is_honest(&self, id: NodeId) -> bool {
        self.role[id as usize].is_none() && !self.ever_crashed[id as usize]
    }

    pub fn set_filter(&mut self, filter: MessageFilter) {
        self.filter = Some(filter);
    }

    /// Has `miner` mine a keyblock on its current tip at `at` and publish it.
    pub fn inject_keyblock(&mut self, at: Time, miner: NodeId) {
        self.queue.schedule(at, Ev::Scripted { miner });
    }

    pub fn crash(&mut self, at: Time, node: NodeId) {
        self.queue.schedule(at, Ev::Crash { node });
    }

    /// Runs to the configured duration or the stop condition and reports.
    pub fn run(&mut self) -> MetricsReport {
        self.run_until(secs(self.cfg.duration_s));
        self.report()
    }

    pub fn run_until(&mut self, end: Time) {
        while !self.stopped {
            match self.queue.peek_time() {
                Some(t) if t <= end => {}
                _ => break,
            }
            let ev = self.queue.pop().expect("peeked").item;
            self.step(ev);
        }
    }

    fn step(&mut self, ev: Ev) {
        let now = self.now();
        match ev {
            Ev::Node { node, input } => {
                if !self.crashed[node as usize] {
                    let outs = self.nodes[node as usize].handle(now, input);
                    self.apply(node, outs);
                }
            }
            Ev::Gossip { to, from, msg } => {
                if !self.crashed[to] {
                    let outs = self.gossip[to].on_message(from, msg);
                    self.apply_gossip(to, outs);
                }
            }
            Ev::GossipRetry { node, id, attempt } => {
                if !self.crashed[node] {
                    let outs = self.gossip[node].on_retry(id, attempt);
                    self.apply_gossip(node, outs);
                }
            }
            Ev::Mine => {
                let model = self.miners.as_ref().expect("mining enabled");
                let found = model.race(&mut self.rng, self.tie_window);
                if let Some(first) = found.first() {
                    self.queue.schedule_in(first.after, Ev::Mine);
                }
                for f in found {
                    self.queue.schedule_in(f.after, Ev::Found { miner: f.miner });
                }
            }
            Ev::Found { miner } => self.mine(miner, true),
            Ev::Scripted { miner } => self.mine(miner, false),
            Ev::Crash { node } => {
                self.crashed[node as usize] = true;
                self.ever_crashed[node as usize] = true;
                self.record(node, "crash", 0, self.nodes[node as usize].chain().micro_height());
            }
        }
    }

    fn mine(&mut self, miner: NodeId, raced: bool) {
        let m = miner as usize;
        if self.crashed[m] {
            return;
        }
        let now = self.now();
        let kb = self.nodes[m].mine_keyblock(now, self.nonce);
        self.nonce += 1;
        self.keyblocks_mined += 1;
        let body = (kb.encoded_len(&Ed25519Group) - kb.header_len(&Ed25519Group)) as u64;
        let item = Arc::new(KeyblockItem::new(&Ed25519Group, kb, body));
        self.record(miner, "keyblock-mined", 0, item.block.height);
        let selfish = self.role[m].map(|r| &self.profiles[r]).filter(|p| p.kind == ProfileKind::SelfishMiner);
        if let Some(p) = selfish {
            if raced && item.hash.leading_zero_bits() >= self.difficulty_bits + p.extra_zero_bits {
                self.record(miner, "keyblock-withheld", 0, item.block.height);
                self.withheld[m] = Some(item);
                return;
            }
        }
        let outs = self.gossip[m].publish(item);
        self.apply_gossip(m, outs);
    }

    fn apply_gossip(&mut self, host: usize, outs: Vec<GossipOut<Item>>) {
        let now = self.now();
        let mut release = None;
        for out in outs {
            match out {
                GossipOut::Send { to, msg } => {
                    *self.messages.entry(msg.kind()).or_default() += 1;
                    let t = self.uplinks.send(host, now, msg.bytes());
                    self.queue.schedule(t.delivery, Ev::Gossip { to, from: host, msg });
                }
                GossipOut::Retry { after, id, attempt } => {
                    self.queue.schedule_in(after, Ev::GossipRetry { node: host, id, attempt });
                }
                GossipOut::Delivered(b) => {
                    if let Some(w) = &self.withheld[host] {
                        if w.block.height == b.block.height && w.hash != b.hash {
                            release = self.withheld[host].take();
                        }
                    }
                    self.queue.schedule(
                        now,
                        Ev::Node {
                            node: host as NodeId,
                            input: Input::Keyblock(b.block.clone()),
                        },
                    );
                }
                GossipOut::Rejected(_) => {
                    let h = self.nodes[host].chain().key_height();
                    self.record(host as NodeId, "keyblock-rejected", 0, h);
                }
            }
        }
        if let Some(item) = release {
            self.record(host as NodeId, "keyblock-released", 0, item.block.height);
            let outs = self.gossip[host].publish(item);
            self.apply_gossip(host, outs);
        }
    }

    fn apply(&mut self, node: NodeId, outs: Vec<Output<G>>) {
        let now = self.now();
        let delay = self.role[node as usize]
            .map(|r| &self.profiles[r])
            .filter(|p| p.kind == ProfileKind::MessageDelayer)
            .map(|p| p.max_delay);
        for out in outs {
            match out {
                Output::Send { to, msg } => {
                    if let Some(f) = self.filter.as_mut() {
                        if f(now, node, to, &msg) {
                            self.dropped += 1;
                            continue;
                        }
                    }
                    *self.messages.entry(msg.kind()).or_default() += 1;
                    let bytes = msg.wire_len(&Ed25519Group) as u64;
                    let t = self.uplinks.send(node as usize, now, bytes);
                    let extra = delay.map_or(0, |d| self.rng.gen_range(0..=d));
                    self.queue.schedule(
                        t.delivery + extra,
                        Ev::Node {
                            node: to,
                            input: Input::Message { from: node, msg },
                        },
                    );
                }
                Output::Timer { after, timer } => {
                    self.queue.schedule_in(after, Ev::Node { node, input: Input::Timer(timer) });
                }
                Output::Event(e) => self.on_event(node, e),
            }
        }
    }

    fn on_event(&mut self, node: NodeId, e: Event<G>) {
        let micro = self.nodes[node as usize].chain().micro_height();
        let (name, bytes, height) = match &e {
            Event::EraStarted { key_height, .. } => ("era-started", 0, *key_height),
            Event::ViewInstalled { .. } => ("view-change", 0, micro),
            Event::Proposed { tag, bytes, .. } => ("proposed", *bytes, tag.height),
            Event::PrepareCertified { tag, .. } => ("prepared", 0, tag.height),
            Event::CertificateProduced { tag, .. } => ("certified", 0, tag.height),
            Event::Committed { height, bytes, .. } => ("committed", *bytes, *height),
            Event::KeyblockSigned { height, .. } => ("keyblock-signed", 0, *height),
            Event::TreeFallback { .. } => ("tree-fallback", 0, micro),
            Event::RoundFailed { tag, .. } => ("round-failed", 0, tag.height),
            Event::Rejected { tag, .. } => ("rejected", 0, tag.height),
            Event::CheckpointRequested { .. } => ("checkpoint-requested", 0, micro),
            Event::CheckpointAdopted { height, .. } => ("checkpoint-adopted", 0, *height),
            Event::CheckpointStalled { .. } => ("checkpoint-stalled", 0, micro),
            Event::Reorganized { key_height } => ("reorganized", 0, *key_height),
        };
        self.record(node, name, bytes, height);
        if let (Event::Committed { height, .. }, Some(target)) = (&e, self.cfg.stop_after_blocks) {
            if *height >= target && self.all_reached(target) {
                self.stopped = true;
            }
        }
        self.events.push((self.now(), node, e));
    }

    fn all_reached(&self, target: u64) -> bool {
        self.nodes
            .iter()
            .filter(|n| self.is_honest(n.id()))
            .all(|n| n.chain().micro_height() >= target)
    }

    fn record(&mut self, node: NodeId, event: &'static str, bytes: u64, height: u64) {
        self.trace.push(TraceRecord {
            time: self.now(),
            node,
            event,
            bytes,
            height,
        });
    }

    pub fn report(&self) -> MetricsReport {
        let mut commits: Vec<(Time, Time, u64)> = Vec::new();
        let mut seen = HashSet::new();
        let mut committed_hashes = HashSet::new();
        let mut views = BTreeSet::new();
        let mut fallbacks = BTreeSet::new();
        let mut checkpoints = BTreeSet::new();
        let mut signed = BTreeSet::new();
        let (mut failures, mut rejections) = (0, 0);
        for (t, _, e) in &self.events {
            match e {
                Event::Committed {
                    hash,
                    tx_count,
                    proposed_at,
                    ..
                } => {
                    committed_hashes.insert(*hash);
                    if let Some(p) = proposed_at {
                        if seen.insert(*hash) {
                            commits.push((*t, t - p, *tx_count));
                        }
                    }
                }
                Event::ViewInstalled { era, view, .. } => {
                    views.insert((*era, *view));
                }
                Event::TreeFallback { era } => {
                    fallbacks.insert(*era);
                }
                Event::CheckpointAdopted { era, .. } => {
                    checkpoints.insert(*era);
                }
                Event::KeyblockSigned { hash, .. } => {
                    signed.insert(*hash);
                }
                Event::RoundFailed { .. } => failures += 1,
                Event::Rejected { .. } => rejections += 1,
                _ => {}
            }
        }
        commits.sort();
        let last_commit = commits.last().map(|c| c.0);
        let proposals: BTreeSet<Hash256> = self
            .events
            .iter()
            .filter(|(t, n, _)| self.is_honest(*n) && last_commit.is_some_and(|l| *t <= l))
            .filter_map(|(_, _, e)| match e {
                Event::Proposed { hash, .. } => Some(*hash),
                _ => None,
            })
            .collect();
        let latency_s: Vec<f64> = commits.iter().map(|c| c.1 as f64 / SECOND as f64).collect();
        let tx: Vec<(Time, u64)> = commits.iter().map(|c| (c.0, c.2)).collect();
        let sent = self.uplinks.sent_bytes();
        let honest_chains: Vec<&ChainState<G>> = self
            .nodes
            .iter()
            .filter(|n| self.role[n.id() as usize].is_none())
            .map(|n| n.chain())
            .collect();
        let certs = self.events.iter().filter_map(|(_, _, e)| match e {
            Event::CertificateProduced { block, .. } => Some(block),
            _ => None,
        });
        MetricsReport {
            name: self.cfg.name.clone(),
            seed: self.cfg.seed,
            hosts: self.cfg.hosts,
            topology: format!("{:?}", self.cfg.topology).to_lowercase(),
            quorum: self.rule.name().to_string(),
            committed_blocks: commits.len() as u64,
            mean_latency_s: metrics::mean(&latency_s),
            latency_s,
            throughput_tps: metrics::throughput(&tx, commits.first().map_or(1, |c| c.1)),
            proposals_committed: proposals.iter().filter(|h| committed_hashes.contains(*h)).count() as u64,
            proposals: proposals.len() as u64,
            messages: self.messages.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            bytes_per_host_mean: sent.iter().sum::<u64>() as f64 / sent.len().max(1) as f64,
            bytes_per_host_max: sent.iter().copied().max().unwrap_or(0),
            view_changes: views.len() as u64,
            tree_fallbacks: fallbacks.len() as u64,
            round_failures: failures,
            rejections,
            checkpoints: checkpoints.len() as u64,
            keyblocks_mined: self.keyblocks_mined,
            keyblocks_signed: signed.len() as u64,
            audit: audit(&Ed25519Group, self.rule, &honest_chains, certs),
            truncated: self.cfg.stop_after_blocks.is_some() && !self.stopped,
            end_time_s: self.now() as f64 / SECOND as f64,
        }
    }
}

pub fn secs(s: f64) -> Time {
    (s * SECOND as f64).round() as Time
}
