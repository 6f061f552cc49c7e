use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{self, Group, KeyPair};
use crate::hash::Hash256;
use crate::wire::{Reader, WireError, Writer};

use super::signature::{CollectiveSignature, ExceptionMask};
use super::tree::CommTree;
use super::CosiError;

/// Identifies one signing round: the era it belongs to and a round counter
/// chosen by the leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoundId {
    pub era: Hash256,
    pub round: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CosiPhase {
    Announcement,
    Commitment,
    Challenge,
    Response,
}

impl CosiPhase {
    pub const ALL: [CosiPhase; 4] = [
        CosiPhase::Announcement,
        CosiPhase::Commitment,
        CosiPhase::Challenge,
        CosiPhase::Response,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> u8 {
        self as u8 + 1
    }

    /// Announcement and challenge flow from the root to the leaves.
    pub fn is_downward(self) -> bool {
        matches!(self, CosiPhase::Announcement | CosiPhase::Challenge)
    }
}

/// The four CoSi wire messages.
///
/// Layout: phase tag (u8), era hash (32 bytes), round (u64), then the
/// phase payload: the message to sign as a length-prefixed byte string, the
/// subtree aggregate commitment followed by the subtree exception mask,
/// the challenge scalar, or the subtree aggregate response.
#[derive(Clone, PartialEq, Eq)]
pub enum CosiMessage<G: Group> {
    Announcement { round: RoundId, message: Arc<[u8]> },
    Commitment { round: RoundId, commitment: G::Element, mask: ExceptionMask },
    Challenge { round: RoundId, challenge: G::Scalar },
    Response { round: RoundId, response: G::Scalar },
}

impl<G: Group> fmt::Debug for CosiMessage<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({:?})", self.phase(), self.round())
    }
}

impl<G: Group> CosiMessage<G> {
    pub fn round(&self) -> RoundId {
        match self {
            CosiMessage::Announcement { round, .. }
            | CosiMessage::Commitment { round, .. }
            | CosiMessage::Challenge { round, .. }
            | CosiMessage::Response { round, .. } => *round,
        }
    }

    pub fn phase(&self) -> CosiPhase {
        match self {
            CosiMessage::Announcement { .. } => CosiPhase::Announcement,
            CosiMessage::Commitment { .. } => CosiPhase::Commitment,
            CosiMessage::Challenge { .. } => CosiPhase::Challenge,
            CosiMessage::Response { .. } => CosiPhase::Response,
        }
    }

    pub fn encode(&self, group: &G, w: &mut Writer) {
        let round = self.round();
        w.u8(self.phase().tag()).hash(&round.era).u64(round.round);
        match self {
            CosiMessage::Announcement { message, .. } => {
                w.bytes(message);
            }
            CosiMessage::Commitment {
                commitment, mask, ..
            } => {
                w.element(group, commitment);
                mask.encode(w);
            }
            CosiMessage::Challenge { challenge, .. } => {
                w.scalar(group, challenge);
            }
            CosiMessage::Response { response, .. } => {
                w.scalar(group, response);
            }
        }
    }

    pub fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = r.u8()?;
        let round = RoundId {
            era: r.hash()?,
            round: r.u64()?,
        };
        Ok(match tag {
            1 => CosiMessage::Announcement {
                round,
                message: r.bytes()?.into(),
            },
            2 => CosiMessage::Commitment {
                round,
                commitment: r.element(group)?,
                mask: ExceptionMask::decode(r)?,
            },
            3 => CosiMessage::Challenge {
                round,
                challenge: r.scalar(group)?,
            },
            4 => CosiMessage::Response {
                round,
                response: r.scalar(group)?,
            },
            tag => {
                return Err(WireError::UnknownTag {
                    what: "cosi message",
                    tag,
                })
            }
        })
    }

    pub fn to_bytes(&self, group: &G) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(group, &mut w);
        w.finish()
    }

    pub fn encoded_len(&self, group: &G) -> usize {
        let header = 1 + 32 + 8;
        header
            + match self {
                CosiMessage::Announcement { message, .. } => 4 + message.len(),
                CosiMessage::Commitment { mask, .. } => {
                    group.element_len() + 4 + mask.len().div_ceil(8)
                }
                CosiMessage::Challenge { .. } | CosiMessage::Response { .. } => {
                    group.scalar_len()
                }
            }
    }
}

/// Per-round parameters shared by every participant.
#[derive(Clone)]
pub struct RoundConfig<G: Group> {
    pub round: RoundId,
    /// Seed from which each position's nonce is derived; see [`nonce_for`].
    pub nonce_seed: u64,
    /// Voting weight of each roster position. `None` means weight 1 each.
    pub weights: Option<Arc<[u64]>>,
    /// The leader aborts after the commitment phase if the signers' weight
    /// would fall below this.
    pub min_weight: u64,
    /// Replaces the hash-derived challenge. Test hook for hand-checked vectors.
    pub fixed_challenge: Option<G::Scalar>,
}

impl<G: Group> RoundConfig<G> {
    pub fn new(round: RoundId, nonce_seed: u64) -> Self {
        Self {
            round,
            nonce_seed,
            weights: None,
            min_weight: 1,
            fixed_challenge: None,
        }
    }

    fn weight_of(&self, mask: &ExceptionMask) -> u64 {
        match &self.weights {
            Some(w) => mask.signed_weight(w),
            None => (mask.len() - mask.count()) as u64,
        }
    }
}

impl<G: Group> fmt::Debug for RoundConfig<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoundConfig")
            .field("round", &self.round)
            .field("min_weight", &self.min_weight)
            .finish_non_exhaustive()
    }
}

/// Deterministic nonce for `position` in a round seeded with `seed`.
pub fn nonce_for<G: Group>(group: &G, seed: u64, position: usize) -> (G::Scalar, G::Element) {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(position as u64).to_le_bytes());
    key[16..].copy_from_slice(b"cosi-nonce-v1\0\0\0");
    crypto::commit_with_rng(group, &mut ChaCha20Rng::from_seed(key))
}

/// What the host must do after feeding an event to a [`Participant`].
#[derive(Debug, Clone)]
pub enum Action<G: Group> {
    Send { to: usize, msg: CosiMessage<G> },
    /// The announcement arrived; validate the message and call
    /// [`Participant::decide`], possibly after a verification delay.
    Validate { message: Arc<[u8]> },
    /// Children owe a reply for `phase`; arm a timer that ends in
    /// [`Participant::on_child_timeout`].
    AwaitChildren { phase: CosiPhase },
    /// Root only: the round produced a signature.
    Done(CollectiveSignature<G>),
    Failed(CosiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    Collecting,
    Committed,
    Responding,
    Finished,
}

/// One roster position's view of a CoSi round.
///
/// The engine is a pure state machine: every input returns the actions the
/// host should perform, so the same code runs inside the in-process driver and
/// the network simulator. Inputs that do not fit the current state (wrong
/// round, wrong sender, duplicates) are ignored.
pub struct Participant<G: Group> {
    group: G,
    tree: CommTree,
    pos: usize,
    key: KeyPair<G>,
    roster: Arc<[G::Element]>,
    cfg: RoundConfig<G>,
    nonce: (G::Scalar, G::Element),
    state: State,
    message: Option<Arc<[u8]>>,
    accepted: Option<bool>,
    pending: BTreeSet<usize>,
    child_commits: BTreeMap<usize, G::Element>,
    commitment: G::Element,
    mask: ExceptionMask,
    challenge: Option<G::Scalar>,
    response: G::Scalar,
}

impl<G: Group> fmt::Debug for Participant<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Participant")
            .field("pos", &self.pos)
            .field("state", &self.state)
            .field("pending", &self.pending)
            .finish_non_exhaustive()
    }
}

impl<G: Group> Participant<G> {
    pub fn new(
        group: G,
        tree: CommTree,
        pos: usize,
        key: KeyPair<G>,
        roster: Arc<[G::Element]>,
        cfg: RoundConfig<G>,
    ) -> Self {
        assert!(pos < tree.size(), "position outside the tree");
        assert_eq!(roster.len(), tree.size(), "roster/tree size mismatch");
        let nonce = nonce_for(&group, cfg.nonce_seed, pos);
        let identity = group.identity();
        let zero = group.scalar_zero();
        Self {
            mask: ExceptionMask::new(tree.size()),
            group,
            tree,
            pos,
            key,
            roster,
            cfg,
            nonce,
            state: State::Idle,
            message: None,
            accepted: None,
            pending: BTreeSet::new(),
            child_commits: BTreeMap::new(),
            commitment: identity,
            challenge: None,
            response: zero,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn round(&self) -> RoundId {
        self.cfg.round
    }

    pub fn is_finished(&self) -> bool {
        self.state == State::Finished
    }

    /// Children that still owe a message in the current phase.
    pub fn pending_children(&self) -> impl Iterator<Item = usize> + '_ {
        self.pending.iter().copied()
    }

    /// Subtree aggregate commitment, once the commitment phase has closed here.
    pub fn subtree_commitment(&self) -> Option<(G::Element, &ExceptionMask)> {
        matches!(
            self.state,
            State::Committed | State::Responding | State::Finished
        )
        .then_some((self.commitment, &self.mask))
    }

    /// Root entry point: announce `message` and start the round.
    pub fn start(&mut self, message: Arc<[u8]>) -> Vec<Action<G>> {
        assert_eq!(self.pos, 0, "only the root starts a round");
        self.announce(message)
    }

    pub fn on_announcement(&mut self, from: usize, round: RoundId, message: Arc<[u8]>) -> Vec<Action<G>> {
        if round != self.cfg.round || self.tree.parent(self.pos) != Some(from) {
            return Vec::new();
        }
        self.announce(message)
    }

    fn announce(&mut self, message: Arc<[u8]>) -> Vec<Action<G>> {
        if self.state != State::Idle {
            return Vec::new();
        }
        self.state = State::Collecting;
        self.message = Some(message.clone());
        let mut out: Vec<Action<G>> = self
            .tree
            .children(self.pos)
            .map(|c| Action::Send {
                to: c,
                msg: CosiMessage::Announcement {
                    round: self.cfg.round,
                    message: message.clone(),
                },
            })
            .collect();
        self.pending = self.tree.children(self.pos).collect();
        out.push(Action::Validate { message });
        if !self.pending.is_empty() {
            out.push(Action::AwaitChildren {
                phase: CosiPhase::Commitment,
            });
        }
        out
    }

    /// Records this node's verdict on the announced message. A rejecting node
    /// keeps relaying for its subtree but excepts itself.
    pub fn decide(&mut self, accept: bool) -> Vec<Action<G>> {
        if self.state != State::Collecting || self.accepted.is_some() {
            return Vec::new();
        }
        self.accepted = Some(accept);
        if !accept {
            self.mask.set(self.pos);
        }
        self.try_close_commitment()
    }

    pub fn on_commitment(
        &mut self,
        from: usize,
        round: RoundId,
        commitment: G::Element,
        mask: &ExceptionMask,
    ) -> Vec<Action<G>> {
        if round != self.cfg.round || self.state != State::Collecting || !self.pending.contains(&from) {
            return Vec::new();
        }
        // a child may only report exceptions inside its own subtree
        if mask.len() != self.tree.size() {
            return Vec::new();
        }
        let subtree: BTreeSet<usize> = self.tree.subtree(from).into_iter().collect();
        if mask.iter().any(|p| !subtree.contains(&p)) {
            return Vec::new();
        }
        self.pending.remove(&from);
        self.mask.union_with(mask);
        self.child_commits.insert(from, commitment);
        self.try_close_commitment()
    }

    /// The host's timer for outstanding children fired.
    ///
    /// While collecting commitments, every silent child's whole subtree is
    /// excepted. After the challenge has been fixed a missing response cannot
    /// be repaired, so the round fails here.
    pub fn on_child_timeout(&mut self) -> Vec<Action<G>> {
        match self.state {
            State::Collecting if !self.pending.is_empty() => {
                for child in std::mem::take(&mut self.pending) {
                    for p in self.tree.subtree(child) {
                        self.mask.set(p);
                    }
                }
                self.try_close_commitment()
            }
            State::Responding if !self.pending.is_empty() => {
                self.state = State::Finished;
                vec![Action::Failed(CosiError::MissingResponse(
                    self.pending.iter().copied().collect(),
                ))]
            }
            _ => Vec::new(),
        }
    }

    fn try_close_commitment(&mut self) -> Vec<Action<G>> {
        let Some(accepted) = self.accepted else {
            return Vec::new();
        };
        if self.state != State::Collecting || !self.pending.is_empty() {
            return Vec::new();
        }
        let own = accepted.then_some(&self.nonce.1);
        self.commitment = self
            .group
            .product(own.into_iter().chain(self.child_commits.values()));

        let Some(parent) = self.tree.parent(self.pos) else {
            return self.root_challenge();
        };
        self.state = State::Committed;
        vec![Action::Send {
            to: parent,
            msg: CosiMessage::Commitment {
                round: self.cfg.round,
                commitment: self.commitment,
                mask: self.mask.clone(),
            },
        }]
    }

    fn root_challenge(&mut self) -> Vec<Action<G>> {
        let weight = self.cfg.weight_of(&self.mask);
        if weight < self.cfg.min_weight || self.mask.count() == self.tree.size() {
            self.state = State::Finished;
            return vec![Action::Failed(CosiError::InsufficientParticipation {
                mask: self.mask.clone(),
                weight,
                required: self.cfg.min_weight,
            })];
        }
        let message = self.message.as_ref().expect("announced");
        let challenge = self
            .cfg
            .fixed_challenge
            .unwrap_or_else(|| crypto::challenge(&self.group, &self.commitment, message));
        self.begin_responses(challenge)
    }

    pub fn on_challenge(&mut self, from: usize, round: RoundId, challenge: G::Scalar) -> Vec<Action<G>> {
        if round != self.cfg.round
            || self.state != State::Committed
            || self.tree.parent(self.pos) != Some(from)
        {
            return Vec::new();
        }
        self.begin_responses(challenge)
    }

    fn begin_responses(&mut self, challenge: G::Scalar) -> Vec<Action<G>> {
        self.challenge = Some(challenge);
        self.state = State::Responding;
        self.response = if self.accepted == Some(true) {
            crypto::respond(&self.group, &self.key.secret, &self.nonce.0, &challenge)
        } else {
            self.group.scalar_zero()
        };
        self.pending = self.child_commits.keys().copied().collect();
        let mut out: Vec<Action<G>> = self
            .pending
            .iter()
            .map(|&c| Action::Send {
                to: c,
                msg: CosiMessage::Challenge {
                    round: self.cfg.round,
                    challenge,
                },
            })
            .collect();
        if self.pending.is_empty() {
            out.extend(self.close_responses());
        } else {
            out.push(Action::AwaitChildren {
                phase: CosiPhase::Response,
            });
        }
        out
    }

    pub fn on_response(&mut self, from: usize, round: RoundId, response: G::Scalar) -> Vec<Action<G>> {
        if round != self.cfg.round || self.state != State::Responding || !self.pending.remove(&from) {
            return Vec::new();
        }
        self.response = self.group.scalar_add(&self.response, &response);
        if self.pending.is_empty() {
            self.close_responses()
        } else {
            Vec::new()
        }
    }

    fn close_responses(&mut self) -> Vec<Action<G>> {
        self.state = State::Finished;
        if let Some(parent) = self.tree.parent(self.pos) {
            return vec![Action::Send {
                to: parent,
                msg: CosiMessage::Response {
                    round: self.cfg.round,
                    response: self.response,
                },
            }];
        }
        let sig = CollectiveSignature {
            commitment: self.commitment,
            challenge: self.challenge.expect("challenge fixed"),
            response: self.response,
            mask: self.mask.clone(),
        };
        match super::verify_aggregate(&self.group, &self.roster, &sig) {
            Ok(true) => vec![Action::Done(sig)],
            Ok(false) => vec![Action::Failed(CosiError::InvalidResponse)],
            Err(e) => vec![Action::Failed(e)],
        }
    }

    /// Dispatches a wire message to the matching handler.
    pub fn on_message(&mut self, from: usize, msg: &CosiMessage<G>) -> Vec<Action<G>> {
        match msg {
            CosiMessage::Announcement { round, message } => {
                self.on_announcement(from, *round, message.clone())
            }
            CosiMessage::Commitment {
                round,
                commitment,
                mask,
            } => self.on_commitment(from, *round, *commitment, mask),
            CosiMessage::Challenge { round, challenge } => self.on_challenge(from, *round, *challenge),
            CosiMessage::Response { round, response } => self.on_response(from, *round, *response),
        }
    }
}
