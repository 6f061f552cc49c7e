//! Advertisement-based block propagation.
//!
//! A node that learns a block announces its hash to every peer with `inv`.
//! A peer lacking it asks one advertiser for the header, checks the header's
//! proof-of-work, and only then fetches the body from that same peer. Other
//! advertisers are remembered as fallbacks if the first one does not answer.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use byzcoin_core::chain::KeyBlock;
use byzcoin_core::crypto::Group;
use byzcoin_core::Hash256;

use crate::graph::PeerGraph;
use crate::link::{LinkModel, Uplinks};
use crate::queue::{EventQueue, Time};

/// Something that can be propagated.
pub trait Block {
    fn id(&self) -> Hash256;
    /// The cheap check done on the header before fetching the body.
    fn header_valid(&self) -> bool;
    fn header_bytes(&self) -> u64;
    fn body_bytes(&self) -> u64;
}

/// A keyblock plus the size of the body that travels with it.
#[derive(Debug, Clone)]
pub struct KeyblockItem<G: Group> {
    pub block: KeyBlock<G>,
    pub hash: Hash256,
    pub pow_ok: bool,
    pub header_len: u64,
    pub body_len: u64,
}

impl<G: Group> KeyblockItem<G> {
    pub fn new(group: &G, block: KeyBlock<G>, body_len: u64) -> Self {
        Self {
            hash: block.hash(group),
            pow_ok: block.pow_valid(group),
            header_len: block.header_len(group) as u64,
            body_len,
            block,
        }
    }
}

impl<G: Group> Block for KeyblockItem<G> {
    fn id(&self) -> Hash256 {
        self.hash
    }
    fn header_valid(&self) -> bool {
        self.pow_ok
    }
    fn header_bytes(&self) -> u64 {
        self.header_len
    }
    fn body_bytes(&self) -> u64 {
        self.body_len
    }
}

pub const INV_BYTES: u64 = 36;
pub const REQUEST_BYTES: u64 = 36;

#[derive(Debug, Clone)]
pub enum GossipMsg<B> {
    Inv(Hash256),
    GetHeader(Hash256),
    Header(Arc<B>),
    GetBody(Hash256),
    Body(Arc<B>),
}

impl<B: Block> GossipMsg<B> {
    pub fn bytes(&self) -> u64 {
        match self {
            GossipMsg::Inv(_) => INV_BYTES,
            GossipMsg::GetHeader(_) | GossipMsg::GetBody(_) => REQUEST_BYTES,
            GossipMsg::Header(b) => b.header_bytes(),
            GossipMsg::Body(b) => b.header_bytes() + b.body_bytes(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GossipMsg::Inv(_) => "inv",
            GossipMsg::GetHeader(_) => "getheader",
            GossipMsg::Header(_) => "header",
            GossipMsg::GetBody(_) => "getbody",
            GossipMsg::Body(_) => "body",
        }
    }
}

#[derive(Debug, Clone)]
pub enum GossipOut<B> {
    Send { to: usize, msg: GossipMsg<B> },
    /// Check back on a fetch after `after`.
    Retry { after: Time, id: Hash256, attempt: u32 },
    /// A block with a valid header and its body is now held locally.
    Delivered(Arc<B>),
    /// A header failed validation; the block is dropped for good.
    Rejected(Hash256),
}

struct Fetch {
    peer: usize,
    attempt: u32,
    fallbacks: VecDeque<usize>,
}

/// One host's propagation state.
pub struct GossipNode<B> {
    me: usize,
    peers: Vec<usize>,
    have: HashMap<Hash256, Arc<B>>,
    rejected: HashSet<Hash256>,
    fetching: HashMap<Hash256, Fetch>,
    retry_after: Time,
}

impl<B: Block> GossipNode<B> {
    pub fn new(me: usize, peers: Vec<usize>, retry_after: Time) -> Self {
        Self {
            me,
            peers,
            have: HashMap::new(),
            rejected: HashSet::new(),
            fetching: HashMap::new(),
            retry_after,
        }
    }

    pub fn has(&self, id: &Hash256) -> bool {
        self.have.contains_key(id)
    }

    pub fn has_rejected(&self, id: &Hash256) -> bool {
        self.rejected.contains(id)
    }

    /// Starts propagating a locally produced block.
    pub fn publish(&mut self, block: Arc<B>) -> Vec<GossipOut<B>> {
        let mut out = Vec::new();
        self.store(block, None, &mut out);
        out
    }

    fn store(&mut self, block: Arc<B>, from: Option<usize>, out: &mut Vec<GossipOut<B>>) {
        let id = block.id();
        if self.have.contains_key(&id) {
            return;
        }
        self.fetching.remove(&id);
        self.have.insert(id, block.clone());
        for &p in &self.peers {
            if Some(p) != from {
                out.push(GossipOut::Send {
                    to: p,
                    msg: GossipMsg::Inv(id),
                });
            }
        }
        out.push(GossipOut::Delivered(block));
    }

    pub fn on_message(&mut self, from: usize, msg: GossipMsg<B>) -> Vec<GossipOut<B>> {
        let mut out = Vec::new();
        match msg {
            GossipMsg::Inv(id) => {
                if self.have.contains_key(&id) || self.rejected.contains(&id) {
                    return out;
                }
                if let Some(f) = self.fetching.get_mut(&id) {
                    if f.peer != from && !f.fallbacks.contains(&from) {
                        f.fallbacks.push_back(from);
                    }
                    return out;
                }
                self.fetching.insert(
                    id,
                    Fetch {
                        peer: from,
                        attempt: 0,
                        fallbacks: VecDeque::new(),
                    },
                );
                out.push(GossipOut::Send {
                    to: from,
                    msg: GossipMsg::GetHeader(id),
                });
                out.push(GossipOut::Retry {
                    after: self.retry_after,
                    id,
                    attempt: 0,
                });
            }
            GossipMsg::GetHeader(id) => {
                if let Some(b) = self.have.get(&id) {
                    out.push(GossipOut::Send {
                        to: from,
                        msg: GossipMsg::Header(b.clone()),
                    });
                }
            }
            GossipMsg::Header(b) => {
                let id = b.id();
                if self.have.contains_key(&id) || self.rejected.contains(&id) {
                    return out;
                }
                if !b.header_valid() {
                    self.rejected.insert(id);
                    self.fetching.remove(&id);
                    out.push(GossipOut::Rejected(id));
                    return out;
                }
                out.push(GossipOut::Send {
                    to: from,
                    msg: GossipMsg::GetBody(id),
                });
                // the peer answered; give the body its own deadline
                if let Some(f) = self.fetching.get_mut(&id) {
                    if f.peer == from {
                        f.attempt += 1;
                        out.push(GossipOut::Retry {
                            after: self.retry_after,
                            id,
                            attempt: f.attempt,
                        });
                    }
                }
            }
            GossipMsg::GetBody(id) => {
                if let Some(b) = self.have.get(&id) {
                    out.push(GossipOut::Send {
                        to: from,
                        msg: GossipMsg::Body(b.clone()),
                    });
                }
            }
            GossipMsg::Body(b) => {
                if b.header_valid() {
                    self.store(b, Some(from), &mut out);
                }
            }
        }
        out
    }

    /// A fetch timer fired: if the block still has not arrived, ask the next
    /// advertiser.
    pub fn on_retry(&mut self, id: Hash256, attempt: u32) -> Vec<GossipOut<B>> {
        let mut out = Vec::new();
        let Some(f) = self.fetching.get_mut(&id) else {
            return out;
        };
        if f.attempt != attempt {
            return out;
        }
        match f.fallbacks.pop_front() {
            Some(next) => {
                f.peer = next;
                f.attempt += 1;
                out.push(GossipOut::Send {
                    to: next,
                    msg: GossipMsg::GetHeader(id),
                });
                out.push(GossipOut::Retry {
                    after: self.retry_after,
                    id,
                    attempt: f.attempt,
                });
            }
            // wait for a fresh inv
            None => {
                self.fetching.remove(&id);
            }
        }
        out
    }

    pub fn id(&self) -> usize {
        self.me
    }
}

/// Message tallies from one propagation run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropagationReport {
    pub inv: usize,
    pub header_requests: usize,
    pub headers: usize,
    pub body_requests: usize,
    pub bodies: usize,
    pub rejected: usize,
    /// When each host first held the block.
    pub delivered_at: Vec<Option<Time>>,
    /// Hosts that advertised the block.
    pub advertisers: usize,
}

impl PropagationReport {
    pub fn reached(&self) -> usize {
        self.delivered_at.iter().filter(|t| t.is_some()).count()
    }

    pub fn last_delivery(&self) -> Option<Time> {
        self.delivered_at.iter().flatten().max().copied()
    }
}

/// Fetch deadline: a request and reply in flight, plus room for the peer to
/// serve the whole block to each of its neighbors first.
pub fn retry_after(link: &LinkModel, degree: u64, block_bytes: u64) -> Time {
    4 * link.one_way_us() + degree * link.serialization_us(block_bytes)
}

enum Ev<B> {
    Msg { to: usize, from: usize, msg: GossipMsg<B> },
    Retry { node: usize, id: Hash256, attempt: u32 },
}

/// Floods one block from `origin` over `graph` and counts the traffic.
/// `silent` hosts never answer requests, which exercises the fallbacks.
pub fn propagate<B: Block>(
    graph: &PeerGraph,
    link: LinkModel,
    origin: usize,
    block: Arc<B>,
    silent: &HashSet<usize>,
) -> PropagationReport {
    let n = graph.len();
    let degree = (0..n).map(|v| graph.degree(v)).max().unwrap_or(1) as u64;
    let retry = retry_after(&link, degree, block.header_bytes() + block.body_bytes());
    let mut nodes: Vec<GossipNode<B>> = (0..n)
        .map(|v| GossipNode::new(v, graph.neighbors(v).collect(), retry))
        .collect();
    let mut uplinks = Uplinks::new(link, n);
    let mut queue: EventQueue<Ev<B>> = EventQueue::new();
    let mut report = PropagationReport {
        delivered_at: vec![None; n],
        ..Default::default()
    };
    let mut pending = vec![(origin, nodes[origin].publish(block))];
    loop {
        for (node, outs) in pending.drain(..) {
            for out in outs {
                match out {
                    GossipOut::Send { to, msg } => {
                        match &msg {
                            GossipMsg::Inv(_) => report.inv += 1,
                            GossipMsg::GetHeader(_) => report.header_requests += 1,
                            GossipMsg::Header(_) => report.headers += 1,
                            GossipMsg::GetBody(_) => report.body_requests += 1,
                            GossipMsg::Body(_) => report.bodies += 1,
                        }
                        let t = uplinks.send(node, queue.now(), msg.bytes());
                        queue.schedule(t.delivery, Ev::Msg { to, from: node, msg });
                    }
                    GossipOut::Retry { after, id, attempt } => {
                        queue.schedule_in(after, Ev::Retry { node, id, attempt });
                    }
                    GossipOut::Delivered(_) => {
                        report.delivered_at[node] = Some(queue.now());
                        report.advertisers += 1;
                    }
                    GossipOut::Rejected(_) => report.rejected += 1,
                }
            }
        }
        let Some(ev) = queue.pop() else {
            break;
        };
        match ev.item {
            Ev::Msg { to, from, msg } => {
                let answering = matches!(msg, GossipMsg::GetHeader(_) | GossipMsg::GetBody(_));
                if answering && silent.contains(&to) {
                    continue;
                }
                pending.push((to, nodes[to].on_message(from, msg)));
            }
            Ev::Retry { node, id, attempt } => pending.push((node, nodes[node].on_retry(id, attempt))),
        }
    }
    report
}
