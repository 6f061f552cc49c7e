use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use crate::chain::{
    resolve_fork, signing_message, ChainState, KeyBlock, MicroBlock, NodeId, Payload, Roster,
    ShareWindow, SignedKind, Violation,
};
use crate::cosi::{
    build_tree, verify_collective, Action, CollectiveSignature, CommTree, CosiError, CosiMessage,
    CosiPhase, ExceptionMask, Participant, RoundConfig,
};
use crate::crypto::{Group, KeyPair};
use crate::hash::Hash256;

use super::messages::{Context, Message, ProofOfAcceptance, RoundKind, RoundTag};
use super::rules::{era_first_block_rule, QuorumRule};

/// Simulated time in microseconds.
pub type Time = u64;

/// How a node deviates from the protocol, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Behavior {
    #[default]
    Honest,
    /// Never proposes while leader; otherwise honest.
    SilentLeader,
    /// As leader, sends conflicting candidates to two halves of the roster
    /// and tries to certify both. Signs anything as a follower.
    EquivocatingLeader,
    /// Relays CoSi traffic but never co-signs and never votes.
    VoteWithholder,
    /// Drops every CoSi message it should forward, in both directions, while
    /// acknowledging the leader's probes as if all were well.
    SubtreeCutter,
    /// Signs whatever it is asked to, ignoring locks and validity.
    Colluder,
}

impl Behavior {
    fn signs_anything(self) -> bool {
        matches!(self, Behavior::EquivocatingLeader | Behavior::Colluder)
    }
}

/// Link and processing figures the node uses to size its timers.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    /// One-way latency between any two nodes.
    pub one_way_us: u64,
    pub bandwidth_bps: f64,
    /// Transaction verification cost charged at the leaves.
    pub verify_ns_per_byte: f64,
    /// Multiplier on estimated per-level times for CoSi child timeouts.
    pub slack: f64,
    /// View-change timeout as a multiple of the expected round time.
    pub view_change_factor: f64,
    /// How long a node collects competing keyblocks before picking one.
    pub settle_us: u64,
    /// Pause between a commit and the leader's next proposal.
    pub block_interval_us: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            one_way_us: 100_000,
            bandwidth_bps: 35e6,
            verify_ns_per_byte: 0.4e6 / (1u64 << 20) as f64,
            slack: 3.0,
            view_change_factor: 10.0,
            settle_us: 2_000_000,
            block_interval_us: 0,
        }
    }
}

/// Bytes budgeted for a message without bulk payload.
const SMALL_MESSAGE: u64 = 512;

impl Timing {
    pub fn transmit_us(&self, bytes: u64) -> u64 {
        (bytes as f64 * 8.0 / self.bandwidth_bps * 1e6).ceil() as u64
    }

    pub fn verify_us(&self, bytes: u64) -> u64 {
        (bytes as f64 * self.verify_ns_per_byte / 1000.0).ceil() as u64
    }

    /// One tree level: push `bytes` to every child in turn and hear back.
    pub fn level_us(&self, fanout: usize, bytes: u64) -> u64 {
        fanout as u64 * self.transmit_us(bytes) + 2 * self.one_way_us
    }

    /// Expected duration of a prepare round followed by a commit round.
    pub fn round_estimate_us(&self, tree: &CommTree, block_bytes: u64) -> u64 {
        let depth = tree.depth().max(1) as u64;
        let fan = fanout(tree);
        let prepare = depth * self.level_us(fan, block_bytes + SMALL_MESSAGE)
            + self.verify_us(block_bytes)
            + depth * self.level_us(fan, SMALL_MESSAGE);
        let commit = 2 * depth * self.level_us(fan, SMALL_MESSAGE);
        prepare + commit
    }
}

fn fanout(tree: &CommTree) -> usize {
    if tree.size() <= 1 {
        0
    } else if tree.is_flat() {
        tree.size() - 1
    } else {
        tree.branching().min(tree.size() - 1)
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: NodeId,
    pub branching: usize,
    /// Start every era with a flat tree instead of a `branching`-ary one.
    pub start_flat: bool,
    /// Leader probes members directly to notice a broken tree.
    pub tree_detection: bool,
    pub rule: QuorumRule,
    pub timing: Timing,
    /// Payload size of each proposed microblock.
    pub block_bytes: u64,
    pub tx_bytes: u64,
    pub behavior: Behavior,
    /// Nodes an equivocating leader may rely on to sign both sides.
    pub colluders: Arc<BTreeSet<NodeId>>,
    /// Everyone who should learn about commits and signed keyblocks.
    pub population: Arc<[NodeId]>,
    pub seed: u64,
    pub difficulty_bits: u32,
}

impl NodeConfig {
    pub fn new(id: NodeId, population: Arc<[NodeId]>) -> Self {
        Self {
            id,
            branching: crate::cosi::DEFAULT_BRANCHING,
            start_flat: false,
            tree_detection: true,
            rule: QuorumRule::default(),
            timing: Timing::default(),
            block_bytes: 1 << 20,
            tx_bytes: 250,
            behavior: Behavior::Honest,
            colluders: Arc::new(BTreeSet::new()),
            population,
            seed: id as u64,
            difficulty_bits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Timer {
    Propose { era: Hash256, view: u32 },
    ViewChange { era: Hash256, generation: u64 },
    Ack { tag: RoundTag },
    Child { tag: RoundTag, phase: CosiPhase },
    Verify { tag: RoundTag },
    Settle { height: u64 },
    Checkpoint { era: Hash256, nonce: u64 },
}

#[derive(Debug, Clone)]
pub enum Input<G: Group> {
    Start,
    Message { from: NodeId, msg: Message<G> },
    Timer(Timer),
    /// A keyblock that arrived through block propagation or was mined here.
    Keyblock(KeyBlock<G>),
}

#[derive(Debug, Clone)]
pub enum Event<G: Group> {
    EraStarted { era: Hash256, key_height: u64, leader: NodeId },
    ViewInstalled { era: Hash256, view: u32, leader: NodeId },
    Proposed { tag: RoundTag, hash: Hash256, bytes: u64 },
    PrepareCertified { tag: RoundTag, hash: Hash256 },
    /// A commit round this node led produced a certificate. Emitted whether
    /// or not the block could be applied locally, so that audits see every
    /// certificate a leader managed to obtain.
    CertificateProduced {
        tag: RoundTag,
        block: Arc<MicroBlock<G>>,
    },
    /// A certified microblock was appended to the local chain.
    Committed {
        era: Hash256,
        height: u64,
        hash: Hash256,
        tx_count: u64,
        bytes: u64,
        era_first: bool,
        /// Set on the leader that produced the certificate.
        proposed_at: Option<Time>,
    },
    KeyblockSigned { height: u64, hash: Hash256, signers: usize },
    TreeFallback { era: Hash256 },
    RoundFailed { tag: RoundTag, reason: String },
    Rejected { tag: RoundTag, code: &'static str },
    CheckpointRequested { era: Hash256 },
    CheckpointAdopted { era: Hash256, height: u64 },
    CheckpointStalled { era: Hash256 },
    Reorganized { key_height: u64 },
}

#[derive(Debug, Clone)]
pub enum Output<G: Group> {
    Send { to: NodeId, msg: Message<G> },
    Timer { after: Time, timer: Timer },
    Event(Event<G>),
}

/// Tree layout of one (era, leader, flat) combination. Position 0 is the
/// leader; the rest follow the roster order.
struct Topology<G: Group> {
    tree: CommTree,
    roster: Arc<Roster<G>>,
    /// Roster position of the leader.
    lead: usize,
    keys: Arc<[G::Element]>,
    weights: Arc<[u64]>,
}

impl<G: Group> Topology<G> {
    fn build(roster: Arc<Roster<G>>, leader: NodeId, flat: bool, branching: usize) -> Option<Self> {
        let lead = roster.position(leader)?;
        let tree = if flat {
            CommTree::flat(roster.len())
        } else {
            build_tree(roster.len(), branching)
        }
        .ok()?;
        // the newest miner usually leads, and then tree order is roster order
        let (keys, weights) = if lead == 0 {
            (roster.keys(), roster.weights())
        } else {
            let members = roster.members();
            let order = || std::iter::once(lead).chain((0..roster.len()).filter(move |&i| i != lead));
            (
                order().map(|i| members[i].key).collect(),
                order().map(|i| members[i].shares).collect(),
            )
        };
        Some(Self {
            tree,
            roster,
            lead,
            keys,
            weights,
        })
    }

    fn roster_index(&self, pos: usize) -> usize {
        match pos {
            0 => self.lead,
            p if p <= self.lead => p - 1,
            p => p,
        }
    }

    fn id_at(&self, pos: usize) -> NodeId {
        self.roster.members()[self.roster_index(pos)].id
    }

    fn pos_of(&self, id: NodeId) -> Option<usize> {
        let i = self.roster.position(id)?;
        Some(match i {
            i if i == self.lead => 0,
            i if i < self.lead => i + 1,
            i => i,
        })
    }

    /// Re-indexes a tree-order signature into roster order.
    fn to_roster(&self, sig: CollectiveSignature<G>) -> CollectiveSignature<G> {
        if self.lead == 0 {
            return sig;
        }
        let mut mask = ExceptionMask::new(sig.mask.len());
        for p in sig.mask.iter() {
            mask.set(self.roster_index(p));
        }
        CollectiveSignature { mask, ..sig }
    }
}

struct Slot<G: Group> {
    part: Participant<G>,
    topo: Arc<Topology<G>>,
    context: Arc<Context<G>>,
    verdict: Option<bool>,
    awaiting: Option<CosiPhase>,
    /// Root only: members the announcement may be sent to.
    filter: Option<Arc<BTreeSet<NodeId>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Prepare,
    Commit,
    Dead,
}

struct Proposal<G: Group> {
    block: MicroBlock<G>,
    tag: RoundTag,
    phase: Phase,
    proposed_at: Time,
    era_first: bool,
    acks: BTreeMap<NodeId, bool>,
}

struct Checkpoint<G: Group> {
    nonce: u64,
    responders: BTreeSet<NodeId>,
    blocks: Vec<Arc<MicroBlock<G>>>,
    proofs: Vec<Arc<ProofOfAcceptance<G>>>,
    resolved: bool,
}

const MAX_ATTEMPTS: u8 = 16;
const EARLY_LIMIT: usize = 4096;
const CHECKPOINT_BLOCKS: usize = 4;

/// One participant's consensus state machine.
///
/// Purely event driven: [`Node::handle`] consumes one input and returns the
/// messages to send, timers to arm and events to record. Time only enters
/// through the `now` argument.
pub struct Node<G: Group> {
    cfg: NodeConfig,
    group: G,
    key: KeyPair<G>,
    chain: ChainState<G>,
    /// The chain as it was before the current keyblock was adopted.
    before_era: Option<ChainState<G>>,
    now: Time,
    out: Vec<Output<G>>,
    inbox: VecDeque<(NodeId, Message<G>)>,

    view: u32,
    voted: u32,
    flat: bool,
    vc_generation: u64,
    vc_failures: u32,
    vc_base: Time,
    votes: BTreeMap<u32, BTreeSet<NodeId>>,

    prepared: BTreeMap<(Hash256, u64, u32), Hash256>,
    commit_locks: BTreeMap<u64, Hash256>,
    keyblock_locks: BTreeMap<u64, Hash256>,
    best_proof: Option<Arc<ProofOfAcceptance<G>>>,

    rounds: BTreeMap<RoundTag, Slot<G>>,
    /// Contexts of rounds this node led, kept after the slot is gone.
    root_contexts: BTreeMap<RoundTag, Arc<Context<G>>>,
    finished: BTreeSet<RoundTag>,
    verdicts: BTreeMap<RoundTag, bool>,
    probes: BTreeMap<RoundTag, NodeId>,
    topologies: HashMap<(Hash256, NodeId, bool), Arc<Topology<G>>>,
    attempts: HashMap<(Hash256, u64, u32), u8>,
    early: Vec<(NodeId, Message<G>)>,

    proposal: Option<Proposal<G>>,
    /// Equivocating leader only: who may see each of its candidates.
    split: HashMap<Hash256, Arc<BTreeSet<NodeId>>>,
    checkpointed: bool,
    checkpoint: Option<Checkpoint<G>>,
    nonce_counter: u64,

    kb_candidates: BTreeMap<u64, Vec<KeyBlock<G>>>,
    settling: BTreeSet<u64>,
    pending_commits: BTreeMap<u64, Arc<MicroBlock<G>>>,
}

impl<G: Group> Node<G> {
    /// A node whose chain already holds the keyblocks of the starting era.
    pub fn new(cfg: NodeConfig, group: G, key: KeyPair<G>, chain: ChainState<G>) -> Self {
        let flat = cfg.start_flat;
        let mut node = Self {
            cfg,
            group,
            key,
            chain,
            before_era: None,
            now: 0,
            out: Vec::new(),
            inbox: VecDeque::new(),
            view: 0,
            voted: 0,
            flat,
            vc_generation: 0,
            vc_failures: 0,
            vc_base: 0,
            votes: BTreeMap::new(),
            prepared: BTreeMap::new(),
            commit_locks: BTreeMap::new(),
            keyblock_locks: BTreeMap::new(),
            best_proof: None,
            rounds: BTreeMap::new(),
            root_contexts: BTreeMap::new(),
            finished: BTreeSet::new(),
            verdicts: BTreeMap::new(),
            probes: BTreeMap::new(),
            topologies: HashMap::new(),
            attempts: HashMap::new(),
            early: Vec::new(),
            proposal: None,
            split: HashMap::new(),
            checkpointed: false,
            checkpoint: None,
            nonce_counter: 0,
            kb_candidates: BTreeMap::new(),
            settling: BTreeSet::new(),
            pending_commits: BTreeMap::new(),
        };
        node.vc_base = node.view_change_base();
        node
    }

    pub fn id(&self) -> NodeId {
        self.cfg.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn behavior(&self) -> Behavior {
        self.cfg.behavior
    }

    pub fn public_key(&self) -> G::Element {
        self.key.public
    }

    pub fn chain(&self) -> &ChainState<G> {
        &self.chain
    }

    pub fn view(&self) -> u32 {
        self.view
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn view_change_timeout(&self) -> Time {
        self.vc_base
    }

    /// Leader of `view` in the current era: the miner of the `view`-th most
    /// recent share in the window, wrapping around.
    pub fn leader(&self, view: u32) -> NodeId {
        leader_in(self.chain.window(), view)
    }

    pub fn is_leader(&self) -> bool {
        self.leader(self.view) == self.cfg.id
    }

    /// A keyblock extending this node's key tip, with proof-of-work solved.
    pub fn mine_keyblock(&self, now: Time, nonce: u64) -> KeyBlock<G> {
        KeyBlock {
            height: self.chain.key_height() + 1,
            prev: self.chain.era(),
            miner: self.cfg.id,
            miner_key: self.key.public,
            nonce,
            difficulty_bits: self.cfg.difficulty_bits,
            timestamp: now / 1000,
            signature: None,
        }
        .solve(&self.group)
    }

    pub fn handle(&mut self, now: Time, input: Input<G>) -> Vec<Output<G>> {
        self.now = now;
        match input {
            Input::Start => self.on_start(),
            Input::Message { from, msg } => self.on_message(from, msg),
            Input::Timer(t) => self.on_timer(t),
            Input::Keyblock(kb) => self.on_keyblock(kb),
        }
        while let Some((from, msg)) = self.inbox.pop_front() {
            self.on_message(from, msg);
        }
        std::mem::take(&mut self.out)
    }

    // ---- plumbing

    fn emit(&mut self, e: Event<G>) {
        self.out.push(Output::Event(e));
    }

    fn send(&mut self, to: NodeId, msg: Message<G>) {
        if to == self.cfg.id {
            self.inbox.push_back((to, msg));
        } else {
            self.out.push(Output::Send { to, msg });
        }
    }

    fn timer(&mut self, after: Time, timer: Timer) {
        self.out.push(Output::Timer { after, timer });
    }

    fn broadcast_roster(&mut self, msg: Message<G>, include_self: bool) {
        for id in self.chain.roster().ids() {
            if include_self || id != self.cfg.id {
                self.send(id, msg.clone());
            }
        }
    }

    fn broadcast_population(&mut self, msg: Message<G>) {
        let population = self.cfg.population.clone();
        for &id in population.iter() {
            if id != self.cfg.id {
                self.send(id, msg.clone());
            }
        }
    }

    fn roster_for(&self, era: &Hash256) -> Option<&Arc<Roster<G>>> {
        self.chain.roster_of(era)
    }

    fn leader_of(&self, era: &Hash256, view: u32) -> Option<NodeId> {
        if *era == self.chain.era() {
            return Some(self.leader(view));
        }
        let before = self.before_era.as_ref()?;
        (before.era() == *era).then(|| leader_in(before.window(), view))
    }

    fn topology(&mut self, era: Hash256, leader: NodeId, flat: bool) -> Option<Arc<Topology<G>>> {
        if let Some(t) = self.topologies.get(&(era, leader, flat)) {
            return Some(t.clone());
        }
        let roster = self.roster_for(&era)?.clone();
        let topo = Arc::new(Topology::build(roster, leader, flat, self.cfg.branching)?);
        if self.topologies.len() > 16 {
            self.topologies.clear();
        }
        self.topologies.insert((era, leader, flat), topo.clone());
        Some(topo)
    }

    fn view_change_base(&self) -> Time {
        let roster = self.chain.roster();
        let tree = if self.flat {
            CommTree::flat(roster.len())
        } else {
            build_tree(roster.len(), self.cfg.branching)
        };
        let estimate = tree.map_or(0, |t| self.cfg.timing.round_estimate_us(&t, self.cfg.block_bytes));
        let t = &self.cfg.timing;
        ((estimate + t.block_interval_us) as f64 * t.view_change_factor) as Time
    }

    fn arm_view_timer(&mut self) {
        self.vc_generation += 1;
        let after = self.vc_base << self.vc_failures.min(10);
        let era = self.chain.era();
        let generation = self.vc_generation;
        self.timer(after.max(1), Timer::ViewChange { era, generation });
    }

    fn required(&self, total: u64, era_first: bool) -> u64 {
        era_first_block_rule(self.cfg.rule, total, era_first)
    }

    /// Whether a block of `era` extending the local tip would be its era's
    /// first microblock.
    fn era_first_after_tip(&self, era: &Hash256) -> bool {
        self.chain
            .microblocks()
            .last()
            .is_none_or(|m| m.header.keyblock != *era)
    }

    fn next_attempt(&mut self, slot: (Hash256, u64, u32)) -> u8 {
        let a = self.attempts.entry(slot).or_insert(0);
        let out = *a;
        *a = a.saturating_add(1);
        out
    }

    // ---- inputs

    fn on_start(&mut self) {
        self.arm_view_timer();
        let era = self.chain.era();
        let leader = self.leader(0);
        self.emit(Event::EraStarted {
            era,
            key_height: self.chain.key_height(),
            leader,
        });
        if leader == self.cfg.id {
            self.propose();
        }
    }

    fn on_timer(&mut self, timer: Timer) {
        match timer {
            Timer::Propose { era, view } => {
                if era == self.chain.era() && view == self.view {
                    self.propose();
                }
            }
            Timer::ViewChange { era, generation } => {
                if era == self.chain.era() && generation == self.vc_generation {
                    self.vc_failures += 1;
                    let next = self.voted.max(self.view) + 1;
                    self.vote(next);
                    self.arm_view_timer();
                }
            }
            Timer::Ack { tag } => self.on_ack_timer(tag),
            Timer::Child { tag, phase } => {
                let Some(slot) = self.rounds.get_mut(&tag) else {
                    return;
                };
                if slot.awaiting != Some(phase) {
                    return;
                }
                slot.awaiting = None;
                let actions = slot.part.on_child_timeout();
                self.run_actions(tag, actions);
            }
            Timer::Verify { tag } => {
                let Some(slot) = self.rounds.get_mut(&tag) else {
                    return;
                };
                let verdict = slot.verdict.unwrap_or(false);
                let actions = slot.part.decide(verdict);
                self.run_actions(tag, actions);
            }
            Timer::Settle { height } => self.on_settle(height),
            Timer::Checkpoint { era, nonce } => {
                if era != self.chain.era() {
                    return;
                }
                if let Some(c) = &mut self.checkpoint {
                    if c.nonce == nonce && !c.resolved {
                        c.resolved = true;
                        self.emit(Event::CheckpointStalled { era });
                        if let Some(p) = &mut self.proposal {
                            p.phase = Phase::Dead;
                        }
                    }
                }
            }
        }
    }

    fn on_message(&mut self, from: NodeId, msg: Message<G>) {
        match msg {
            Message::Cosi { msg, context } => self.on_cosi(from, msg, context),
            Message::Probe { tag, hash } => self.on_probe(from, tag, hash),
            Message::Ack { tag, accept, .. } => self.on_ack(from, tag, accept),
            Message::Committed { block } => {
                self.accept_committed((*block).clone(), None);
            }
            Message::SignedKeyblock { block } => self.on_signed_keyblock((*block).clone()),
            Message::ViewChange {
                era,
                view,
                latest,
                proof,
            } => self.on_view_change(from, era, view, latest, proof),
            Message::CheckpointRequest { era, nonce } => {
                let n = self.chain.microblocks().len();
                let blocks = self.chain.microblocks()[n.saturating_sub(CHECKPOINT_BLOCKS)..]
                    .iter()
                    .cloned()
                    .map(Arc::new)
                    .collect();
                let proof = self.best_proof.clone();
                self.send(
                    from,
                    Message::CheckpointResponse {
                        era,
                        nonce,
                        blocks,
                        proof,
                    },
                );
            }
            Message::CheckpointResponse {
                nonce,
                blocks,
                proof,
                ..
            } => self.on_checkpoint_response(from, nonce, blocks, proof),
        }
    }

    // ---- CoSi rounds

    fn on_cosi(&mut self, from: NodeId, msg: CosiMessage<G>, context: Option<Arc<Context<G>>>) {
        let Some(tag) = RoundTag::from_round_id(msg.round()) else {
            return;
        };
        if !self.rounds.contains_key(&tag) {
            let CosiMessage::Announcement { .. } = msg else {
                return;
            };
            if self.finished.contains(&tag) {
                return;
            }
            let Some(ctx) = context else {
                return;
            };
            match self.admit(&tag, &ctx) {
                Admit::Yes => {
                    if !self.create_slot(tag, ctx.clone(), None, 0) {
                        return;
                    }
                }
                Admit::Later => {
                    if self.early.len() < EARLY_LIMIT {
                        self.early.push((
                            from,
                            Message::Cosi {
                                msg,
                                context: Some(ctx),
                            },
                        ));
                    }
                    return;
                }
                Admit::No => return,
            }
        }
        let slot = self.rounds.get_mut(&tag).expect("slot present");
        let Some(pos) = slot.topo.pos_of(from) else {
            return;
        };
        let actions = slot.part.on_message(pos, &msg);
        self.run_actions(tag, actions);
    }

    fn admit(&mut self, tag: &RoundTag, ctx: &Context<G>) -> Admit {
        let era = self.chain.era();
        if tag.kind == RoundKind::Keyblock {
            let Context::Keyblock(kb) = ctx else {
                return Admit::No;
            };
            if kb.hash(&self.group) != tag.era {
                return Admit::No;
            }
            if tag.era == era {
                return self.member_of(&era);
            }
            if kb.prev == era && kb.height == self.chain.key_height() + 1 {
                self.on_keyblock(kb.clone());
                return Admit::Later;
            }
            return Admit::No;
        }
        if tag.era == era {
            if tag.view > self.view {
                return Admit::Later;
            }
            if tag.view < self.view || self.voted > self.view {
                return Admit::No;
            }
            return self.member_of(&era);
        }
        let before = self.before_era.as_ref().map(|c| c.era());
        if before == Some(tag.era) {
            // finish commit rounds the previous leader had in flight
            return if tag.kind == RoundKind::Commit {
                self.member_of(&tag.era)
            } else {
                Admit::No
            };
        }
        if self.chain.key_height_of(&tag.era).is_some() {
            Admit::No
        } else {
            Admit::Later
        }
    }

    fn member_of(&self, era: &Hash256) -> Admit {
        match self.roster_for(era) {
            Some(r) if r.contains(self.cfg.id) => Admit::Yes,
            _ => Admit::No,
        }
    }

    fn nonce_seed(&self, tag: &RoundTag) -> u64 {
        let id = tag.round_id();
        let h = Hash256::of_parts([
            &self.cfg.seed.to_le_bytes()[..],
            &self.cfg.id.to_le_bytes(),
            &id.era.0,
            &id.round.to_le_bytes(),
        ]);
        u64::from_le_bytes(h.0[..8].try_into().expect("8 bytes"))
    }

    fn create_slot(
        &mut self,
        tag: RoundTag,
        context: Arc<Context<G>>,
        filter: Option<Arc<BTreeSet<NodeId>>>,
        min_weight: u64,
    ) -> bool {
        let Some(leader) = self.leader_of(&tag.era, tag.view) else {
            return false;
        };
        let Some(topo) = self.topology(tag.era, leader, tag.flat) else {
            return false;
        };
        let Some(pos) = topo.pos_of(self.cfg.id) else {
            return false;
        };
        let mut rc = RoundConfig::new(tag.round_id(), self.nonce_seed(&tag));
        rc.weights = Some(topo.weights.clone());
        rc.min_weight = min_weight.max(1);
        let part = Participant::new(
            self.group.clone(),
            topo.tree,
            pos,
            self.key,
            topo.keys.clone(),
            rc,
        );
        self.rounds.insert(
            tag,
            Slot {
                part,
                topo,
                context,
                verdict: None,
                awaiting: None,
                filter,
            },
        );
        true
    }

    fn start_root(
        &mut self,
        tag: RoundTag,
        context: Arc<Context<G>>,
        message: Vec<u8>,
        filter: Option<Arc<BTreeSet<NodeId>>>,
        min_weight: u64,
    ) -> bool {
        if !self.create_slot(tag, context, filter, min_weight) {
            return false;
        }
        let slot = self.rounds.get_mut(&tag).expect("slot created");
        let actions = slot.part.start(Arc::from(message));
        self.run_actions(tag, actions);
        true
    }

    fn run_actions(&mut self, tag: RoundTag, actions: Vec<Action<G>>) {
        let mut queue: VecDeque<Action<G>> = actions.into();
        while let Some(action) = queue.pop_front() {
            let Some(slot) = self.rounds.get_mut(&tag) else {
                return;
            };
            let is_root = slot.part.position() == 0;
            match action {
                Action::Send { to, msg } => {
                    let to_id = slot.topo.id_at(to);
                    if self.cfg.behavior == Behavior::SubtreeCutter && !is_root {
                        continue;
                    }
                    if let Some(f) = &slot.filter {
                        if !f.contains(&to_id) {
                            continue;
                        }
                    }
                    let context = matches!(msg, CosiMessage::Announcement { .. })
                        .then(|| slot.context.clone());
                    self.send(to_id, Message::Cosi { msg, context });
                }
                Action::Validate { message } => {
                    let context = slot.context.clone();
                    let leaf = slot.topo.tree.is_leaf(slot.part.position());
                    let verdict = if is_root {
                        self.lock_own(&tag, &context);
                        true
                    } else {
                        self.validate(&tag, &context, &message)
                    };
                    let slot = self.rounds.get_mut(&tag).expect("slot present");
                    slot.verdict = Some(verdict);
                    self.verdicts.insert(tag, verdict);
                    if let Some(leader) = self.probes.remove(&tag) {
                        let hash = context_hash(&self.group, &context);
                        self.send(
                            leader,
                            Message::Ack {
                                tag,
                                hash,
                                accept: verdict,
                            },
                        );
                    }
                    let bytes = context_payload(&context);
                    let delay = self.cfg.timing.verify_us(bytes);
                    if leaf && tag.kind == RoundKind::Prepare && delay > 0 && !is_root {
                        self.timer(delay, Timer::Verify { tag });
                    } else {
                        let slot = self.rounds.get_mut(&tag).expect("slot present");
                        queue.extend(slot.part.decide(verdict));
                    }
                }
                Action::AwaitChildren { phase } => {
                    slot.awaiting = Some(phase);
                    let after = self.child_timeout(&tag, phase);
                    self.timer(after, Timer::Child { tag, phase });
                }
                Action::Done(sig) => {
                    let sig = slot.topo.to_roster(sig);
                    let context = slot.context.clone();
                    self.finish_slot(tag);
                    self.on_root_done(tag, sig, context);
                    return;
                }
                Action::Failed(e) => {
                    self.finish_slot(tag);
                    self.on_root_failed(tag, e);
                    return;
                }
            }
        }
        if self.rounds.get(&tag).is_some_and(|s| s.part.is_finished()) {
            self.finish_slot(tag);
        }
    }

    fn finish_slot(&mut self, tag: RoundTag) -> Option<Slot<G>> {
        self.finished.insert(tag);
        self.rounds.remove(&tag)
    }

    fn child_timeout(&self, tag: &RoundTag, phase: CosiPhase) -> Time {
        let Some(slot) = self.rounds.get(tag) else {
            return 1;
        };
        let tree = &slot.topo.tree;
        let below = (tree.depth() - tree.depth_of(slot.part.position())).max(1) as u64;
        let t = &self.cfg.timing;
        let fan = fanout(tree);
        let base = match (tag.kind, phase) {
            (RoundKind::Prepare, CosiPhase::Commitment) => {
                let bytes = context_payload(&slot.context);
                below * t.level_us(fan, bytes + SMALL_MESSAGE) + t.verify_us(bytes)
            }
            (RoundKind::Keyblock, CosiPhase::Commitment) => {
                below * t.level_us(fan, SMALL_MESSAGE) + t.settle_us
            }
            _ => below * t.level_us(fan, SMALL_MESSAGE),
        };
        ((base as f64 * t.slack) as Time).max(1)
    }

    /// The leader's own locks on what it proposes.
    fn lock_own(&mut self, tag: &RoundTag, context: &Context<G>) {
        match context {
            Context::Candidate { block, .. } => {
                self.prepared.entry(tag.slot()).or_insert(block.hash());
            }
            Context::Proof(p) => {
                self.commit_locks.entry(p.height()).or_insert(p.hash());
            }
            Context::Keyblock(kb) => {
                self.keyblock_locks.entry(kb.height).or_insert(tag.era);
            }
        }
    }

    fn reject(&mut self, tag: &RoundTag, code: &'static str) -> bool {
        self.emit(Event::Rejected { tag: *tag, code });
        false
    }

    fn validate(&mut self, tag: &RoundTag, context: &Context<G>, message: &[u8]) -> bool {
        match self.cfg.behavior {
            Behavior::VoteWithholder => return self.reject(tag, "withheld"),
            b if b.signs_anything() => return true,
            _ => {}
        }
        match (tag.kind, context) {
            (RoundKind::Prepare, Context::Candidate { block, parent }) => {
                let hash = block.hash();
                if message != signing_message(SignedKind::Prepare, &hash).as_slice() {
                    return self.reject(tag, "message");
                }
                if let Some(p) = parent {
                    if p.header.height == self.chain.micro_height() + 1 {
                        self.accept_committed(p.clone(), None);
                    }
                }
                if let Err(v) = self.check_extends(block, &tag.era) {
                    return self.reject(tag, v.code());
                }
                if self
                    .commit_locks
                    .get(&block.header.height)
                    .is_some_and(|h| *h != hash)
                {
                    return self.reject(tag, "commit-locked");
                }
                let lock = self.prepared.entry(tag.slot()).or_insert(hash);
                if *lock != hash {
                    return self.reject(tag, "prepare-locked");
                }
                true
            }
            (RoundKind::Commit, Context::Proof(poa)) => {
                let hash = poa.hash();
                if message != signing_message(SignedKind::Commit, &hash).as_slice() {
                    return self.reject(tag, "message");
                }
                if poa.view != tag.view {
                    return self.reject(tag, "proof-view");
                }
                if let Err(v) = self.check_extends(&poa.block, &tag.era) {
                    return self.reject(tag, v.code());
                }
                if !self.verify_proof(poa) {
                    return self.reject(tag, "bad-proof");
                }
                let lock = self.commit_locks.entry(poa.height()).or_insert(hash);
                if *lock != hash {
                    return self.reject(tag, "commit-locked");
                }
                self.offer_proof(Arc::new(poa.clone()));
                true
            }
            (RoundKind::Keyblock, Context::Keyblock(kb)) => {
                if message != signing_message(SignedKind::Keyblock, &tag.era).as_slice() {
                    return self.reject(tag, "message");
                }
                if tag.era != self.chain.era() || kb.height != self.chain.key_height() {
                    return self.reject(tag, "keyblock-not-adopted");
                }
                let lock = self.keyblock_locks.entry(kb.height).or_insert(tag.era);
                if *lock != tag.era {
                    return self.reject(tag, "keyblock-locked");
                }
                true
            }
            _ => self.reject(tag, "context"),
        }
    }

    /// Structural checks for a block of `era` extending the local tip.
    fn check_extends(&self, block: &MicroBlock<G>, era: &Hash256) -> Result<(), Violation> {
        let h = &block.header;
        if h.prev != self.chain.micro_tip() {
            return Err(Violation::StaleParent {
                expected: self.chain.micro_tip(),
                got: h.prev,
            });
        }
        if h.height != self.chain.micro_height() + 1 {
            return Err(Violation::WrongHeight {
                expected: self.chain.micro_height() + 1,
                got: h.height,
            });
        }
        if h.keyblock != *era {
            return Err(Violation::WrongEra {
                expected: *era,
                got: h.keyblock,
            });
        }
        if !block.payload_consistent() {
            return Err(Violation::PayloadMismatch);
        }
        Ok(())
    }

    /// A prepare certificate for a block extending the local tip.
    fn verify_proof(&self, poa: &ProofOfAcceptance<G>) -> bool {
        let era = poa.block.header.keyblock;
        let Some(roster) = self.roster_for(&era) else {
            return false;
        };
        if poa.signature.mask.len() != roster.len() {
            return false;
        }
        let era_first = self.era_first_after_tip(&era);
        let required = self.required(roster.total_shares(), era_first);
        let message = signing_message(SignedKind::Prepare, &poa.hash());
        matches!(
            verify_collective(&self.group, &roster.keys(), &poa.signature, &message),
            Ok(true)
        ) && poa.signature.signed_weight(&roster.weights()) >= required
    }

    fn offer_proof(&mut self, poa: Arc<ProofOfAcceptance<G>>) {
        let better = match &self.best_proof {
            None => true,
            Some(b) => (poa.height(), poa.view) > (b.height(), b.view),
        };
        if better && poa.height() > self.chain.micro_height() {
            self.best_proof = Some(poa);
        }
    }

    fn on_root_done(&mut self, tag: RoundTag, sig: CollectiveSignature<G>, context: Arc<Context<G>>) {
        match (tag.kind, &*context) {
            (RoundKind::Prepare, Context::Candidate { block, .. }) => {
                let hash = block.hash();
                self.emit(Event::PrepareCertified { tag, hash });
                let poa = Arc::new(ProofOfAcceptance {
                    block: block.clone(),
                    signature: sig,
                    view: tag.view,
                });
                if self.cfg.behavior != Behavior::EquivocatingLeader {
                    self.offer_proof(poa.clone());
                }
                if tag.era == self.chain.era() && tag.view == self.view {
                    self.start_commit(tag, poa);
                }
            }
            (RoundKind::Commit, Context::Proof(poa)) => {
                let mut block = poa.block.clone();
                block.signature = Some(sig);
                let block = Arc::new(block);
                self.emit(Event::CertificateProduced {
                    tag,
                    block: block.clone(),
                });
                let proposed_at = self
                    .proposal
                    .as_ref()
                    .filter(|p| p.block.hash() == poa.hash())
                    .map(|p| p.proposed_at);
                let applied = self.accept_committed((*block).clone(), proposed_at);
                if applied || self.cfg.behavior == Behavior::EquivocatingLeader {
                    self.broadcast_population(Message::Committed { block });
                }
            }
            (RoundKind::Keyblock, Context::Keyblock(kb)) => {
                let required = self.cfg.rule.commit(self.chain.roster().total_shares());
                let signers = sig.mask.len() - sig.mask.count();
                if tag.era == self.chain.era()
                    && self.chain.attach_keyblock_signature(sig.clone(), required).is_ok()
                {
                    self.emit(Event::KeyblockSigned {
                        height: kb.height,
                        hash: tag.era,
                        signers,
                    });
                    let mut signed = kb.clone();
                    signed.signature = Some(sig);
                    self.broadcast_population(Message::SignedKeyblock {
                        block: Arc::new(signed),
                    });
                }
                self.propose();
            }
            _ => {}
        }
    }

    fn on_root_failed(&mut self, tag: RoundTag, e: CosiError) {
        self.emit(Event::RoundFailed {
            tag,
            reason: e.to_string(),
        });
        if tag.kind == RoundKind::Keyblock {
            self.propose();
            return;
        }
        let current = self.proposal.as_ref().is_some_and(|p| p.tag == tag);
        if !current || tag.era != self.chain.era() || tag.view != self.view {
            return;
        }
        let era_first = self.proposal.as_ref().is_some_and(|p| p.era_first);
        match (tag.kind, e) {
            (RoundKind::Prepare, CosiError::InsufficientParticipation { .. }) => {
                if !self.flat && self.cfg.tree_detection {
                    self.fall_back_to_flat();
                } else if era_first && !self.checkpointed {
                    self.start_checkpoint();
                } else if let Some(p) = &mut self.proposal {
                    p.phase = Phase::Dead;
                }
            }
            (RoundKind::Prepare, _) => self.restart_prepare(),
            (RoundKind::Commit, _) => {
                let poa = self.root_contexts.get(&tag).and_then(|c| match &**c {
                    Context::Proof(p) => Some(Arc::new(p.clone())),
                    _ => None,
                });
                match poa {
                    Some(poa) if tag.attempt < MAX_ATTEMPTS => {
                        let retry = RoundTag {
                            attempt: self.next_attempt(tag.slot()),
                            kind: RoundKind::Prepare,
                            ..tag
                        };
                        self.start_commit(retry, poa);
                    }
                    _ => {
                        if let Some(p) = &mut self.proposal {
                            p.phase = Phase::Dead;
                        }
                    }
                }
            }
            _ => {}
        }
    }

    // ---- leader

    fn propose(&mut self) {
        if self.cfg.behavior == Behavior::SilentLeader
            || !self.is_leader()
            || self.voted > self.view
            || self.checkpoint.as_ref().is_some_and(|c| !c.resolved)
        {
            return;
        }
        if self.proposal.as_ref().is_some_and(|p| p.phase != Phase::Dead) {
            return;
        }
        let era = self.chain.era();
        let height = self.chain.micro_height() + 1;
        let block = match &self.best_proof {
            Some(p) if p.height() == height && p.block.header.keyblock == era => p.block.clone(),
            _ => self.new_block(height, b"honest"),
        };
        let era_first = self.era_first_after_tip(&era);
        let tag = RoundTag {
            era,
            height,
            view: self.view,
            kind: RoundKind::Prepare,
            attempt: 0,
            flat: self.flat,
        };
        self.proposal = Some(Proposal {
            block,
            tag,
            phase: Phase::Prepare,
            proposed_at: self.now,
            era_first,
            acks: BTreeMap::new(),
        });
        if self.cfg.behavior == Behavior::EquivocatingLeader {
            self.equivocate(height);
        } else {
            self.restart_prepare();
        }
    }

    fn new_block(&self, height: u64, flavor: &[u8]) -> MicroBlock<G> {
        let era = self.chain.era();
        let tag = Hash256::of_parts([
            flavor,
            &self.cfg.id.to_le_bytes(),
            &era.0,
            &height.to_le_bytes(),
            &self.view.to_le_bytes(),
        ]);
        let bytes = self.cfg.block_bytes;
        MicroBlock::new(
            height,
            self.chain.micro_tip(),
            era,
            self.cfg.id,
            self.now / 1000,
            Payload::Synthetic {
                tx_count: bytes / self.cfg.tx_bytes.max(1),
                bytes,
                tag,
            },
        )
    }

    /// (Re)starts the prepare round for the current proposal with a fresh
    /// attempt number and the current topology.
    fn restart_prepare(&mut self) {
        let Some(p) = &self.proposal else {
            return;
        };
        let block = p.block.clone();
        let era_first = p.era_first;
        let slot = (self.chain.era(), block.header.height, self.view);
        let attempt = self.next_attempt(slot);
        if attempt >= MAX_ATTEMPTS {
            if let Some(p) = &mut self.proposal {
                p.phase = Phase::Dead;
            }
            return;
        }
        let tag = RoundTag {
            era: slot.0,
            height: slot.1,
            view: slot.2,
            kind: RoundKind::Prepare,
            attempt,
            flat: self.flat,
        };
        let parent = self.chain.microblocks().last().cloned();
        let hash = block.hash();
        let bytes = block.header.payload_bytes;
        let context = Arc::new(Context::Candidate { block, parent });
        let required = self.required(self.chain.roster().total_shares(), era_first);
        if let Some(p) = &mut self.proposal {
            p.tag = tag;
            p.phase = Phase::Prepare;
            p.acks.clear();
        }
        self.emit(Event::Proposed { tag, hash, bytes });
        self.root_contexts.insert(tag, context.clone());
        let message = signing_message(SignedKind::Prepare, &hash);
        let filter = self.split.get(&hash).cloned();
        if !self.start_root(tag, context, message, filter, required) {
            return;
        }
        let probing = !tag.flat
            && self.cfg.tree_detection
            && self.cfg.behavior == Behavior::Honest
            && self.proposal.as_ref().is_some_and(|p| p.tag == tag);
        if probing {
            if let Some(p) = &mut self.proposal {
                p.acks.insert(self.cfg.id, true);
            }
            self.broadcast_roster(Message::Probe { tag, hash }, false);
            self.timer((self.vc_base / 2).max(1), Timer::Ack { tag });
        }
    }

    fn equivocate(&mut self, height: u64) {
        let era = self.chain.era();
        let block = self.new_block(height, b"equivocation");
        let attempt = self.next_attempt((era, height, self.view));
        let tag = RoundTag {
            era,
            height,
            view: self.view,
            kind: RoundKind::Prepare,
            attempt,
            flat: self.flat,
        };
        // the two halves of the roster each see one candidate; colluders see both
        let ids = self.chain.roster().ids();
        let side = |parity: usize| -> Arc<BTreeSet<NodeId>> {
            Arc::new(
                ids.iter()
                    .enumerate()
                    .filter(|(i, _)| i % 2 == parity)
                    .map(|(_, &id)| id)
                    .chain(self.cfg.colluders.iter().copied())
                    .collect(),
            )
        };
        let (first, second) = (side(0), side(1));
        self.split.clear();
        if let Some(p) = &self.proposal {
            self.split.insert(p.block.hash(), first);
        }
        self.split.insert(block.hash(), second.clone());
        self.restart_prepare();
        let parent = self.chain.microblocks().last().cloned();
        let hash = block.hash();
        let era_first = self.era_first_after_tip(&era);
        let required = self.required(self.chain.roster().total_shares(), era_first);
        let context = Arc::new(Context::Candidate { block, parent });
        self.root_contexts.insert(tag, context.clone());
        self.emit(Event::Proposed {
            tag,
            hash,
            bytes: self.cfg.block_bytes,
        });
        let message = signing_message(SignedKind::Prepare, &hash);
        self.start_root(tag, context, message, Some(second), required);
    }

    fn start_commit(&mut self, prepare: RoundTag, poa: Arc<ProofOfAcceptance<G>>) {
        let tag = RoundTag {
            kind: RoundKind::Commit,
            ..prepare
        };
        let hash = poa.hash();
        let era_first = self.era_first_after_tip(&poa.block.header.keyblock);
        let required = self.required(self.chain.roster().total_shares(), era_first);
        if let Some(p) = &mut self.proposal {
            if p.block.hash() == hash {
                p.tag = tag;
                p.phase = Phase::Commit;
            }
        }
        let context = Arc::new(Context::Proof((*poa).clone()));
        self.root_contexts.insert(tag, context.clone());
        let message = signing_message(SignedKind::Commit, &hash);
        let filter = self.split.get(&hash).cloned();
        self.start_root(tag, context, message, filter, required);
    }

    fn on_probe(&mut self, from: NodeId, tag: RoundTag, hash: Hash256) {
        if self.cfg.behavior == Behavior::SubtreeCutter {
            self.send(from, Message::Ack { tag, hash, accept: true });
            return;
        }
        match self.verdicts.get(&tag) {
            Some(&accept) => self.send(from, Message::Ack { tag, hash, accept }),
            None => {
                if tag.era == self.chain.era() {
                    self.probes.insert(tag, from);
                }
            }
        }
    }

    fn on_ack(&mut self, from: NodeId, tag: RoundTag, accept: bool) {
        let Some(p) = &mut self.proposal else {
            return;
        };
        if p.tag != tag || p.phase != Phase::Prepare {
            return;
        }
        p.acks.insert(from, accept);
        if !accept {
            self.fall_back_to_flat();
        }
    }

    fn on_ack_timer(&mut self, tag: RoundTag) {
        let Some(p) = &self.proposal else {
            return;
        };
        if p.tag != tag || p.phase != Phase::Prepare {
            return;
        }
        let roster = self.chain.roster();
        let acked: u64 = p
            .acks
            .iter()
            .filter(|(_, &ok)| ok)
            .filter_map(|(id, _)| roster.position(*id))
            .map(|i| roster.members()[i].shares)
            .sum();
        if 3 * acked < 2 * roster.total_shares() {
            self.fall_back_to_flat();
        }
    }

    /// Abandons the tree for the rest of the era and retries flat.
    fn fall_back_to_flat(&mut self) {
        if self.flat {
            return;
        }
        self.flat = true;
        let era = self.chain.era();
        self.emit(Event::TreeFallback { era });
        if let Some(tag) = self.proposal.as_ref().map(|p| p.tag) {
            self.finish_slot(tag);
        }
        self.restart_prepare();
    }

    // ---- commits

    /// Appends a certified block if it extends the tip, buffering it if it is
    /// ahead. Returns whether the chain grew.
    fn accept_committed(&mut self, block: MicroBlock<G>, proposed_at: Option<Time>) -> bool {
        let height = block.header.height;
        let tip = self.chain.micro_height();
        if height <= tip {
            return false;
        }
        if height > tip + 1 {
            if self.pending_commits.len() < EARLY_LIMIT {
                self.pending_commits.insert(height, Arc::new(block));
            }
            return false;
        }
        let era = block.header.keyblock;
        let era_first = self.era_first_after_tip(&era);
        let rule = self.cfg.rule;
        let hash = block.hash();
        let tx_count = block.header.tx_count;
        let bytes = block.header.payload_bytes;
        if self
            .chain
            .append_certified(block, |r| era_first_block_rule(rule, r.total_shares(), era_first))
            .is_err()
        {
            return false;
        }
        self.emit(Event::Committed {
            era,
            height,
            hash,
            tx_count,
            bytes,
            era_first,
            proposed_at,
        });
        self.after_commit(height);
        if let Some(next) = self.pending_commits.remove(&(height + 1)) {
            self.accept_committed((*next).clone(), None);
        }
        true
    }

    fn after_commit(&mut self, height: u64) {
        self.vc_failures = 0;
        self.arm_view_timer();
        self.prepared.retain(|k, _| k.1 > height);
        self.commit_locks.retain(|h, _| *h > height);
        self.pending_commits.retain(|h, _| *h > height);
        if self.best_proof.as_ref().is_some_and(|p| p.height() <= height) {
            self.best_proof = None;
        }
        let done = self
            .proposal
            .as_ref()
            .is_some_and(|p| p.block.header.height <= height);
        if done {
            self.proposal = None;
            if self.is_leader() {
                let era = self.chain.era();
                let view = self.view;
                self.timer(
                    self.cfg.timing.block_interval_us.max(1),
                    Timer::Propose { era, view },
                );
            }
        }
        // round bookkeeping below the tip can go
        self.root_contexts.retain(|t, _| t.height > height);
        self.verdicts.retain(|t, _| t.height > height);
        self.finished.retain(|t| t.height > height || t.kind == RoundKind::Keyblock);
    }

    // ---- view change

    fn vote(&mut self, view: u32) {
        if view <= self.voted && view <= self.view {
            return;
        }
        if view > RoundTag::MAX_VIEW {
            return;
        }
        self.voted = self.voted.max(view);
        if self.cfg.behavior == Behavior::VoteWithholder {
            return;
        }
        let msg = Message::ViewChange {
            era: self.chain.era(),
            view,
            latest: self.chain.microblocks().last().cloned().map(Arc::new),
            proof: self.best_proof.clone(),
        };
        self.broadcast_roster(msg, true);
    }

    fn on_view_change(
        &mut self,
        from: NodeId,
        era: Hash256,
        view: u32,
        latest: Option<Arc<MicroBlock<G>>>,
        proof: Option<Arc<ProofOfAcceptance<G>>>,
    ) {
        if era != self.chain.era() || !self.chain.roster().contains(from) {
            return;
        }
        if let Some(b) = latest {
            self.accept_committed((*b).clone(), None);
        }
        if let Some(p) = proof {
            if p.height() == self.chain.micro_height() + 1
                && self.check_extends(&p.block, &p.block.header.keyblock).is_ok()
                && self.verify_proof(&p)
            {
                self.offer_proof(p);
            }
        }
        if view <= self.view {
            return;
        }
        self.votes.entry(view).or_default().insert(from);
        let roster = self.chain.roster();
        let weight: u64 = self.votes[&view]
            .iter()
            .filter_map(|id| roster.position(*id))
            .map(|i| roster.members()[i].shares)
            .sum();
        let f = roster.f();
        let needed = self.cfg.rule.view_change(roster.total_shares());
        if view > self.voted && weight > f {
            self.vote(view);
        }
        if weight >= needed {
            self.install_view(view);
        }
    }

    fn install_view(&mut self, view: u32) {
        self.view = view;
        self.voted = self.voted.max(view);
        self.votes.retain(|v, _| *v > view);
        self.proposal = None;
        self.checkpoint = None;
        let era = self.chain.era();
        let leader = self.leader(view);
        self.emit(Event::ViewInstalled { era, view, leader });
        self.arm_view_timer();
        self.replay_early();
        if leader == self.cfg.id {
            self.propose();
        }
    }

    fn replay_early(&mut self) {
        for (from, msg) in std::mem::take(&mut self.early) {
            self.on_message(from, msg);
        }
    }

    // ---- checkpoints

    fn start_checkpoint(&mut self) {
        self.checkpointed = true;
        self.nonce_counter += 1;
        let nonce = self.nonce_counter;
        let era = self.chain.era();
        let mut targets: BTreeSet<NodeId> = self.chain.roster().ids().into_iter().collect();
        if let Some(before) = &self.before_era {
            targets.extend(before.roster().ids());
        }
        targets.remove(&self.cfg.id);
        self.checkpoint = Some(Checkpoint {
            nonce,
            responders: [self.cfg.id].into_iter().collect(),
            blocks: Vec::new(),
            proofs: Vec::new(),
            resolved: false,
        });
        self.emit(Event::CheckpointRequested { era });
        for id in targets {
            self.send(id, Message::CheckpointRequest { era, nonce });
        }
        self.timer((self.vc_base / 2).max(1), Timer::Checkpoint { era, nonce });
    }

    /// Responder weight: shares in the current roster, or one for a member
    /// that only held a share in the previous era.
    fn checkpoint_weight(&self, responders: &BTreeSet<NodeId>) -> u64 {
        let roster = self.chain.roster();
        responders
            .iter()
            .map(|id| match roster.position(*id) {
                Some(i) => roster.members()[i].shares,
                None => self
                    .before_era
                    .as_ref()
                    .is_some_and(|b| b.roster().contains(*id)) as u64,
            })
            .sum()
    }

    fn on_checkpoint_response(
        &mut self,
        from: NodeId,
        nonce: u64,
        blocks: Vec<Arc<MicroBlock<G>>>,
        proof: Option<Arc<ProofOfAcceptance<G>>>,
    ) {
        let Some(c) = &mut self.checkpoint else {
            return;
        };
        if c.nonce != nonce || c.resolved {
            return;
        }
        c.responders.insert(from);
        c.blocks.extend(blocks);
        c.proofs.extend(proof);
        let responders = c.responders.clone();
        let f = self.chain.roster().f();
        let threshold = (2 * f + 1).min(self.chain.roster().total_shares());
        if self.checkpoint_weight(&responders) < threshold {
            return;
        }
        let mut c = self.checkpoint.take().expect("checkpoint present");
        c.resolved = true;
        c.blocks.sort_by_key(|b| b.header.height);
        let mut progress = true;
        while progress {
            progress = false;
            for b in &c.blocks {
                if b.header.height == self.chain.micro_height() + 1
                    && self.accept_committed((**b).clone(), None)
                {
                    progress = true;
                }
            }
        }
        for p in std::mem::take(&mut c.proofs) {
            if p.height() == self.chain.micro_height() + 1
                && self.check_extends(&p.block, &p.block.header.keyblock).is_ok()
                && self.verify_proof(&p)
            {
                self.offer_proof(p);
            }
        }
        self.checkpoint = Some(c);
        let era = self.chain.era();
        let height = self.chain.micro_height();
        self.emit(Event::CheckpointAdopted { era, height });
        self.proposal = None;
        self.propose();
    }

    // ---- keyblocks and eras

    fn on_keyblock(&mut self, kb: KeyBlock<G>) {
        let hash = kb.hash(&self.group);
        if hash == self.chain.era() {
            if kb.signature.is_some() {
                self.on_signed_keyblock(kb);
            }
            return;
        }
        if !kb.pow_valid(&self.group) {
            return;
        }
        let next = self.chain.key_height() + 1;
        if kb.height == next && kb.prev == self.chain.era() {
            let list = self.kb_candidates.entry(next).or_default();
            if !list.iter().any(|c| c.hash(&self.group) == hash) {
                list.push(kb);
            }
            if self.settling.insert(next) {
                let after = self.cfg.timing.settle_us.max(1);
                self.timer(after, Timer::Settle { height: next });
            }
            return;
        }
        if kb.height == next - 1 {
            // a competitor for the keyblock already adopted; kept for reorgs
            let list = self.kb_candidates.entry(kb.height).or_default();
            if !list.iter().any(|c| c.hash(&self.group) == hash) {
                list.push(kb);
            }
            return;
        }
        if kb.height == next && self.try_reorg(&kb.prev) {
            self.on_keyblock(kb);
        }
    }

    /// Switches to the sibling `parent` of the adopted keyblock, allowed only
    /// while nothing has been committed in the adopted era and it is unsigned.
    fn try_reorg(&mut self, parent: &Hash256) -> bool {
        let height = self.chain.key_height();
        let signed = self
            .chain
            .keyblocks()
            .last()
            .is_some_and(|k| k.signature.is_some());
        if signed || !self.chain.at_era_start() {
            return false;
        }
        let Some(sibling) = self
            .kb_candidates
            .get(&height)
            .and_then(|l| l.iter().find(|c| c.hash(&self.group) == *parent))
            .cloned()
        else {
            return false;
        };
        let Some(before) = self.before_era.take() else {
            return false;
        };
        self.chain = before;
        self.emit(Event::Reorganized { key_height: height });
        self.keyblock_locks.remove(&height);
        self.adopt(sibling);
        true
    }

    fn on_settle(&mut self, height: u64) {
        self.settling.remove(&height);
        if height != self.chain.key_height() + 1 {
            return;
        }
        let Some(list) = self.kb_candidates.get(&height) else {
            return;
        };
        let group = self.group.clone();
        let Ok(winner) = resolve_fork(list, |k| k.hash(&group)) else {
            return;
        };
        let winner = winner.clone();
        self.adopt(winner);
    }

    fn adopt(&mut self, kb: KeyBlock<G>) {
        let snapshot = self.chain.clone();
        if self.chain.apply_keyblock(kb.clone()).is_err() {
            return;
        }
        self.before_era = Some(snapshot);
        let era = self.chain.era();
        let before = self.before_era.as_ref().map(|c| c.era());
        self.view = 0;
        self.voted = 0;
        self.flat = self.cfg.start_flat;
        self.votes.clear();
        self.proposal = None;
        self.checkpoint = None;
        self.checkpointed = false;
        self.vc_failures = 0;
        self.best_proof = None;
        self.probes.clear();
        self.kb_candidates.retain(|h, _| *h + 1 >= kb.height);
        self.rounds
            .retain(|t, _| t.era == era || (Some(t.era) == before && t.kind == RoundKind::Commit));
        self.root_contexts
            .retain(|t, _| t.era == era || (Some(t.era) == before && t.kind == RoundKind::Commit));
        self.finished.clear();
        self.verdicts.clear();
        self.attempts.clear();
        self.vc_base = self.view_change_base();
        self.arm_view_timer();
        let leader = self.leader(0);
        self.emit(Event::EraStarted {
            era,
            key_height: kb.height,
            leader,
        });
        self.replay_early();
        if leader == self.cfg.id {
            self.begin_keyblock_round(kb);
        }
    }

    fn begin_keyblock_round(&mut self, kb: KeyBlock<G>) {
        if self.cfg.behavior == Behavior::SilentLeader {
            return;
        }
        let era = self.chain.era();
        let tag = RoundTag {
            era,
            height: kb.height,
            view: 0,
            kind: RoundKind::Keyblock,
            attempt: 0,
            flat: self.flat,
        };
        let required = self.cfg.rule.commit(self.chain.roster().total_shares());
        let mut unsigned = kb;
        unsigned.signature = None;
        let context = Arc::new(Context::Keyblock(unsigned));
        let message = signing_message(SignedKind::Keyblock, &era);
        if !self.start_root(tag, context, message, None, required) {
            self.propose();
        }
    }

    fn on_signed_keyblock(&mut self, kb: KeyBlock<G>) {
        let hash = kb.hash(&self.group);
        if hash != self.chain.era() {
            self.on_keyblock(kb);
            return;
        }
        let Some(sig) = kb.signature.clone() else {
            return;
        };
        if self
            .chain
            .keyblocks()
            .last()
            .is_some_and(|k| k.signature.is_some())
        {
            return;
        }
        let required = self.cfg.rule.commit(self.chain.roster().total_shares());
        let signers = sig.mask.len() - sig.mask.count();
        if self.chain.attach_keyblock_signature(sig, required).is_ok() {
            self.emit(Event::KeyblockSigned {
                height: kb.height,
                hash,
                signers,
            });
        }
    }
}

enum Admit {
    Yes,
    Later,
    No,
}

fn leader_in<G: Group>(window: &ShareWindow<G>, view: u32) -> NodeId {
    let len = window.len().max(1);
    window
        .recent(view as usize % len)
        .map_or(NodeId::MAX, |s| s.miner)
}

fn context_hash<G: Group>(group: &G, context: &Context<G>) -> Hash256 {
    match context {
        Context::Candidate { block, .. } => block.hash(),
        Context::Proof(p) => p.hash(),
        Context::Keyblock(kb) => kb.hash(group),
    }
}

fn context_payload<G: Group>(context: &Context<G>) -> u64 {
    match context {
        Context::Candidate { block, .. } => block.header.payload_bytes,
        _ => 0,
    }
}
