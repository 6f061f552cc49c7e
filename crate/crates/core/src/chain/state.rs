use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cosi::{verify_collective, CollectiveSignature};
use crate::crypto::Group;
use crate::hash::Hash256;
use crate::wire::{Reader, WireError, Writer};

use super::blocks::{signing_message, KeyBlock, MicroBlock, NodeId, SignedKind};
use super::reward::split_reward;
use super::window::{Roster, ShareWindow};
use super::ChainError;

/// Why a microblock cannot extend the chain. Each check has its own code.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("stale parent: tip is {expected:?}, block extends {got:?}")]
    StaleParent { expected: Hash256, got: Hash256 },
    #[error("height {got}, expected {expected}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("block names era {got:?}, current era is {expected:?}")]
    WrongEra { expected: Hash256, got: Hash256 },
    #[error("header does not match payload")]
    PayloadMismatch,
    #[error("missing collective signature")]
    MissingSignature,
    #[error("exception mask covers {got} members, roster has {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("collective signature does not verify")]
    BadSignature,
    #[error("signers hold {signed} shares, {required} required")]
    InsufficientSigners { signed: u64, required: u64 },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::StaleParent { .. } => "stale-parent",
            Violation::WrongHeight { .. } => "wrong-height",
            Violation::WrongEra { .. } => "wrong-era",
            Violation::PayloadMismatch => "payload-mismatch",
            Violation::MissingSignature => "missing-signature",
            Violation::MaskLength { .. } => "mask-length",
            Violation::BadSignature => "bad-signature",
            Violation::InsufficientSigners { .. } => "insufficient-signers",
        }
    }
}

/// One node's copy of both chains and the current membership.
#[derive(Debug, Clone)]
pub struct ChainState<G: Group> {
    group: G,
    keyblocks: Vec<Arc<KeyBlock<G>>>,
    key_hashes: Vec<Hash256>,
    microblocks: Vec<MicroBlock<G>>,
    window: ShareWindow<G>,
    roster: Arc<Roster<G>>,
    /// Roster of every era, indexed by key height.
    rosters: Vec<Arc<Roster<G>>>,
    keyblock_reward: u64,
    balances: BTreeMap<NodeId, u64>,
    discarded: u64,
}

impl<G: Group> ChainState<G> {
    /// Starts from `genesis` (height 0) with a share window of size `w`.
    /// Genesis credits a share like any other keyblock.
    pub fn new(group: G, w: usize, genesis: KeyBlock<G>) -> Result<Self, ChainError> {
        if genesis.height != 0 || genesis.prev != Hash256::ZERO {
            return Err(ChainError::BadGenesis);
        }
        let mut window = ShareWindow::new(w, Hash256::ZERO);
        window.update(&group, &genesis)?;
        let hash = genesis.hash(&group);
        Ok(Self {
            roster: Arc::new(window.roster()),
            rosters: vec![Arc::new(window.roster())],
            window,
            key_hashes: vec![hash],
            keyblocks: vec![Arc::new(genesis)],
            microblocks: Vec::new(),
            keyblock_reward: 0,
            balances: BTreeMap::new(),
            discarded: 0,
            group,
        })
    }

    /// Reward paid out when a co-signed keyblock is applied.
    pub fn with_keyblock_reward(mut self, reward: u64) -> Self {
        self.keyblock_reward = reward;
        self
    }

    pub fn group(&self) -> &G {
        &self.group
    }

    pub fn keyblocks(&self) -> &[Arc<KeyBlock<G>>] {
        &self.keyblocks
    }

    pub fn microblocks(&self) -> &[MicroBlock<G>] {
        &self.microblocks
    }

    pub fn window(&self) -> &ShareWindow<G> {
        &self.window
    }

    /// Membership for the current era.
    pub fn roster(&self) -> &Arc<Roster<G>> {
        &self.roster
    }

    pub fn key_height(&self) -> u64 {
        self.keyblocks.len() as u64 - 1
    }

    pub fn era(&self) -> Hash256 {
        *self.key_hashes.last().expect("genesis present")
    }

    pub fn keyblock_hash(&self, height: u64) -> Option<Hash256> {
        self.key_hashes.get(height as usize).copied()
    }

    pub fn micro_height(&self) -> u64 {
        self.microblocks.len() as u64
    }

    /// Hash of the last committed microblock, or zero before the first.
    pub fn micro_tip(&self) -> Hash256 {
        self.microblocks.last().map_or(Hash256::ZERO, |m| m.hash())
    }

    /// No microblock has been committed in the current era yet.
    pub fn at_era_start(&self) -> bool {
        self.microblocks
            .last()
            .is_none_or(|m| m.header.keyblock != self.era())
    }

    pub fn balances(&self) -> &BTreeMap<NodeId, u64> {
        &self.balances
    }

    pub fn discarded_rewards(&self) -> u64 {
        self.discarded
    }

    /// Structural checks on a keyblock extending the current key tip.
    pub fn check_keyblock(&self, kb: &KeyBlock<G>) -> Result<(), ChainError> {
        if kb.prev != self.era() {
            return Err(ChainError::DoesNotExtend {
                expected: self.era(),
                got: kb.prev,
            });
        }
        if kb.height != self.key_height() + 1 {
            return Err(ChainError::WrongHeight {
                expected: self.key_height() + 1,
                got: kb.height,
            });
        }
        if !kb.pow_valid(&self.group) {
            return Err(ChainError::InvalidProofOfWork);
        }
        Ok(())
    }

    /// Starts a new era. If the keyblock carries the new group's
    /// co-signature, the keyblock reward is split over that group, with the
    /// shares of non-signers discarded.
    pub fn apply_keyblock(&mut self, kb: KeyBlock<G>) -> Result<(), ChainError> {
        self.check_keyblock(&kb)?;
        self.window.update(&self.group, &kb)?;
        self.roster = Arc::new(self.window.roster());
        self.rosters.push(self.roster.clone());
        if let Some(sig) = &kb.signature {
            self.pay_reward(sig.mask.iter().collect::<Vec<_>>());
        }
        self.key_hashes.push(kb.hash(&self.group));
        self.keyblocks.push(Arc::new(kb));
        Ok(())
    }

    fn pay_reward(&mut self, excepted_positions: Vec<usize>) {
        let roster = self.roster.clone();
        let shares: Vec<(NodeId, u64)> = roster.members().iter().map(|m| (m.id, m.shares)).collect();
        let excepted: BTreeSet<NodeId> = excepted_positions
            .into_iter()
            .filter_map(|p| roster.members().get(p).map(|m| m.id))
            .collect();
        let split = split_reward(self.keyblock_reward, &shares, &excepted);
        for (id, amount) in split.paid {
            *self.balances.entry(id).or_default() += amount;
        }
        self.discarded += split.discarded;
    }

    /// Records the roster's co-signature on the current keyblock once it
    /// arrives, paying the keyblock reward. Only the newest keyblock can be
    /// signed this way, and only once.
    pub fn attach_keyblock_signature(
        &mut self,
        sig: CollectiveSignature<G>,
        required: u64,
    ) -> Result<(), Violation> {
        let kb = self.keyblocks.last().expect("genesis present");
        if kb.signature.is_some() {
            return Ok(());
        }
        let hash = self.era();
        self.check_signature(&self.roster, &sig, &signing_message(SignedKind::Keyblock, &hash), required)?;
        let excepted = sig.mask.iter().collect();
        Arc::make_mut(self.keyblocks.last_mut().expect("genesis present")).signature = Some(sig);
        self.pay_reward(excepted);
        Ok(())
    }

    /// Roster of the era started by the keyblock at `height`.
    pub fn roster_at(&self, height: u64) -> Option<&Arc<Roster<G>>> {
        self.rosters.get(height as usize)
    }

    pub fn key_height_of(&self, era: &Hash256) -> Option<u64> {
        self.key_hashes.iter().rposition(|h| h == era).map(|i| i as u64)
    }

    pub fn roster_of(&self, era: &Hash256) -> Option<&Arc<Roster<G>>> {
        self.key_height_of(era).and_then(|h| self.roster_at(h))
    }

    fn check_signature(
        &self,
        roster: &Roster<G>,
        sig: &CollectiveSignature<G>,
        message: &[u8],
        required: u64,
    ) -> Result<(), Violation> {
        if sig.mask.len() != roster.len() {
            return Err(Violation::MaskLength {
                expected: roster.len(),
                got: sig.mask.len(),
            });
        }
        match verify_collective(&self.group, &roster.keys(), sig, message) {
            Ok(true) => {}
            _ => return Err(Violation::BadSignature),
        }
        let signed = sig.signed_weight(&roster.weights());
        if signed < required {
            return Err(Violation::InsufficientSigners { signed, required });
        }
        Ok(())
    }

    /// Appends a committed microblock that may belong to an earlier era than
    /// the current one, as happens when a node catches up across a keyblock.
    /// The signature is checked against the roster of the block's own era;
    /// `required` maps that roster's total shares to the needed weight.
    pub fn append_certified(
        &mut self,
        block: MicroBlock<G>,
        required: impl Fn(&Roster<G>) -> u64,
    ) -> Result<(), Violation> {
        let h = &block.header;
        if h.prev != self.micro_tip() {
            return Err(Violation::StaleParent {
                expected: self.micro_tip(),
                got: h.prev,
            });
        }
        if h.height != self.micro_height() + 1 {
            return Err(Violation::WrongHeight {
                expected: self.micro_height() + 1,
                got: h.height,
            });
        }
        let era_height = self.key_height_of(&h.keyblock).ok_or(Violation::WrongEra {
            expected: self.era(),
            got: h.keyblock,
        })?;
        let tip_era = self
            .microblocks
            .last()
            .and_then(|m| self.key_height_of(&m.header.keyblock))
            .unwrap_or(0);
        if era_height < tip_era {
            return Err(Violation::WrongEra {
                expected: self.era(),
                got: h.keyblock,
            });
        }
        if !block.payload_consistent() {
            return Err(Violation::PayloadMismatch);
        }
        let sig = block.signature.as_ref().ok_or(Violation::MissingSignature)?;
        let roster = self.rosters[era_height as usize].clone();
        self.check_signature(
            &roster,
            sig,
            &signing_message(SignedKind::Commit, &block.hash()),
            required(&roster),
        )?;
        self.microblocks.push(block);
        Ok(())
    }

    pub fn validate_microblock(&self, block: &MicroBlock<G>) -> Result<(), Violation> {
        validate_microblock(block, self, self.roster.commit_quorum())
    }

    /// Validates and appends a committed microblock.
    pub fn append_microblock(&mut self, block: MicroBlock<G>, required: u64) -> Result<(), Violation> {
        validate_microblock(&block, self, required)?;
        self.microblocks.push(block);
        Ok(())
    }

    /// Appends without signature checks. For state replay from a trusted dump.
    pub fn push_microblock_unchecked(&mut self, block: MicroBlock<G>) {
        self.microblocks.push(block);
    }
}

/// Checks that `block` extends the committed tip within the current era and
/// carries a commit signature from signers holding at least `required` shares.
pub fn validate_microblock<G: Group>(
    block: &MicroBlock<G>,
    state: &ChainState<G>,
    required: u64,
) -> Result<(), Violation> {
    validate_unsigned(block, state)?;
    let sig = block.signature.as_ref().ok_or(Violation::MissingSignature)?;
    let roster = state.roster();
    if sig.mask.len() != roster.len() {
        return Err(Violation::MaskLength {
            expected: roster.len(),
            got: sig.mask.len(),
        });
    }
    let message = signing_message(SignedKind::Commit, &block.hash());
    match verify_collective(state.group(), &roster.keys(), sig, &message) {
        Ok(true) => {}
        _ => return Err(Violation::BadSignature),
    }
    let signed = sig.signed_weight(&roster.weights());
    if signed < required {
        return Err(Violation::InsufficientSigners { signed, required });
    }
    Ok(())
}

/// The checks a validator can make on an unsigned candidate.
pub fn validate_unsigned<G: Group>(block: &MicroBlock<G>, state: &ChainState<G>) -> Result<(), Violation> {
    let h = &block.header;
    if h.prev != state.micro_tip() {
        return Err(Violation::StaleParent {
            expected: state.micro_tip(),
            got: h.prev,
        });
    }
    if h.height != state.micro_height() + 1 {
        return Err(Violation::WrongHeight {
            expected: state.micro_height() + 1,
            got: h.height,
        });
    }
    if h.keyblock != state.era() {
        return Err(Violation::WrongEra {
            expected: state.era(),
            got: h.keyblock,
        });
    }
    if !block.payload_consistent() {
        return Err(Violation::PayloadMismatch);
    }
    Ok(())
}

/// One line of a chain dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChainRecord {
    Keyblock { height: u64, hash: Hash256, hex: String },
    Microblock { height: u64, hash: Hash256, hex: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Block<G: Group> {
    Key(KeyBlock<G>),
    Micro(MicroBlock<G>),
}

/// Line-delimited JSON dump: every keyblock, then every microblock, each as
/// its canonical encoding in hex alongside height and header hash.
pub fn dump_jsonl<G: Group>(state: &ChainState<G>) -> String {
    let g = state.group();
    let mut out = String::new();
    let mut push = |record: ChainRecord| {
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    };
    for kb in state.keyblocks() {
        let mut w = Writer::new();
        kb.encode(g, &mut w);
        push(ChainRecord::Keyblock {
            height: kb.height,
            hash: kb.hash(g),
            hex: hex::encode(w.finish()),
        });
    }
    for mb in state.microblocks() {
        let mut w = Writer::new();
        mb.encode(g, &mut w);
        push(ChainRecord::Microblock {
            height: mb.header.height,
            hash: mb.hash(),
            hex: hex::encode(w.finish()),
        });
    }
    out
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: bad hex")]
    Hex { line: usize },
    #[error("line {line}: {source}")]
    Wire { line: usize, source: WireError },
    #[error("line {line}: recorded hash does not match block")]
    HashMismatch { line: usize },
}

pub fn load_jsonl<G: Group>(group: &G, text: &str) -> Result<Vec<Block<G>>, DumpError> {
    let mut blocks = Vec::new();
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let record: ChainRecord =
            serde_json::from_str(raw).map_err(|source| DumpError::Json { line, source })?;
        let (hex_str, hash) = match &record {
            ChainRecord::Keyblock { hex, hash, .. } | ChainRecord::Microblock { hex, hash, .. } => {
                (hex, *hash)
            }
        };
        let bytes = hex::decode(hex_str).map_err(|_| DumpError::Hex { line })?;
        let mut r = Reader::new(&bytes);
        let wire = |source| DumpError::Wire { line, source };
        let block = match record {
            ChainRecord::Keyblock { .. } => {
                let kb = KeyBlock::decode(group, &mut r).map_err(wire)?;
                if kb.hash(group) != hash {
                    return Err(DumpError::HashMismatch { line });
                }
                Block::Key(kb)
            }
            ChainRecord::Microblock { .. } => {
                let mb = MicroBlock::decode(group, &mut r).map_err(wire)?;
                if mb.hash() != hash {
                    return Err(DumpError::HashMismatch { line });
                }
                Block::Micro(mb)
            }
        };
        r.finish().map_err(|source| DumpError::Wire { line, source })?;
        blocks.push(block);
    }
    Ok(blocks)
}
