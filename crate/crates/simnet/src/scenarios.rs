//! Canned scenarios shared by the test suites and the command line.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use byzcoin_core::chain::{fault_bound, NodeId};
use byzcoin_core::consensus::{Event, Message, RoundKind, RoundTag};
use byzcoin_core::Hash256;

use crate::config::{AdversaryConfig, MiningConfig, ProfileKind, Quorum, ScenarioConfig, Topology};
use crate::metrics::MetricsReport;
use crate::queue::{Time, SECOND};
use crate::sim::Simulation;
use crate::SimError;

/// Small rosters with short links, so that a seeded suite stays quick.
pub fn small_config(w: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        name: format!("small-{w}-{seed}"),
        seed,
        hosts: w,
        branching: 3,
        block_bytes: 16 << 10,
        tx_bytes: 250,
        duration_s: 20.0,
        ..ScenarioConfig::default()
    };
    cfg.link.rtt_ms = 20.0;
    cfg
}

/// A seeded adversarial run: a random roster size, one profile, and at
/// most `f` shares under its control.
pub fn safety_config(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = *[5usize, 8, 11, 14].choose(&mut rng).expect("nonempty");
    let f = fault_bound(w as u64) as usize;
    let kind = ProfileKind::ALL[(seed % ProfileKind::ALL.len() as u64) as usize];
    let mut cfg = small_config(w, seed);
    cfg.name = format!("safety-{}-{w}-{seed}", kind.name());
    cfg.topology = if rng.gen_bool(0.5) { Topology::Tree } else { Topology::Flat };
    let count = rng.gen_range(1..=f);
    let mut adversary = AdversaryConfig {
        kind,
        nodes: Vec::new(),
        count: Some(count),
        max_delay_ms: None,
        extra_zero_bits: None,
        power: None,
    };
    match kind {
        ProfileKind::MessageDelayer => adversary.max_delay_ms = Some(rng.gen_range(10.0..500.0)),
        ProfileKind::SelfishMiner => {
            cfg.extra_nodes = 2;
            cfg.mining = Some(MiningConfig {
                interval_s: 8.0,
                tie_window_ms: Some(50.0),
                difficulty_bits: 1,
            });
            adversary.extra_zero_bits = Some(1);
            adversary.power = Some(0.3);
        }
        _ => {}
    }
    // leader attacks pick the newest miners; scatter the others
    if !matches!(kind, ProfileKind::SilentLeader | ProfileKind::EquivocatingLeader | ProfileKind::SubtreeCutter) {
        let mut ids: Vec<NodeId> = (0..w as NodeId).collect();
        ids.shuffle(&mut rng);
        adversary.nodes = ids[..count].to_vec();
        adversary.count = None;
    }
    cfg.adversaries.push(adversary);
    cfg
}

/// What happened around the staged era transition.
#[derive(Debug, Clone)]
pub struct EraTransition {
    pub quorum: Quorum,
    /// The stale leader's block skipping the old era's last block committed.
    pub skipped: bool,
    /// The stale leader's first attempt in the new era ran short of signers.
    pub first_attempt_failed: bool,
    pub checkpoint_adopted: bool,
    /// A new-era block extending the old era's last block committed.
    pub resumed: bool,
    pub report: MetricsReport,
}

pub const ERA_TRANSITION_W: usize = 11;

/// Stages the era transition with `f` Byzantine members, `f` stale honest
/// members and a stale incoming leader at `w = 3f + 2 = 11`.
///
/// Bootstrap order, oldest first: one member X that leaves with the next
/// keyblock, Byzantine B, up-to-date honest U, stale honest S, and the
/// current leader P. N is outside the roster. After `m_1` everything that
/// would tell S or N about `m_2` is dropped; right after `m_2` commits N
/// publishes a keyblock. N then leads a roster of N, B, S, U and P while
/// believing `m_1` is the tip.
pub fn era_transition(quorum: Quorum, seed: u64) -> Result<EraTransition, SimError> {
    const X: NodeId = 0;
    const B: [NodeId; 3] = [1, 2, 3];
    const S: [NodeId; 3] = [7, 8, 9];
    const P: NodeId = 10;
    const N: NodeId = 11;
    let mut cfg = small_config(ERA_TRANSITION_W, seed);
    cfg.name = format!("era-transition-{quorum:?}").to_lowercase();
    cfg.extra_nodes = 1;
    cfg.topology = Topology::Flat;
    cfg.quorum = quorum;
    cfg.block_interval_ms = 5_000.0;
    cfg.duration_s = 60.0;
    cfg.bootstrap_order = (X..=P).collect();
    cfg.adversaries.push(AdversaryConfig {
        kind: ProfileKind::EquivocatingLeader,
        nodes: B.to_vec(),
        count: None,
        max_delay_ms: None,
        extra_zero_bits: None,
        power: None,
    });
    let mut sim = Simulation::new(&cfg)?;
    let old_era = sim.node(P).chain().era();
    let stale: BTreeSet<NodeId> = S.iter().copied().chain([N]).collect();
    sim.set_filter(Box::new(move |_, _, to, msg| {
        if !stale.contains(&to) {
            return false;
        }
        match msg {
            Message::Cosi { msg, .. } => {
                let tag = RoundTag::from_round_id(msg.round());
                tag.is_some_and(|t| t.era == old_era && t.height >= 2 && t.kind != RoundKind::Keyblock)
            }
            Message::Committed { block } => block.header.height >= 2 && block.header.keyblock == old_era,
            Message::ViewChange { era, .. } => *era == old_era,
            _ => false,
        }
    }));

    let step: Time = SECOND / 10;
    let mut t = 0;
    let mut m2: Option<Hash256> = None;
    while m2.is_none() && t < 30 * SECOND {
        t += step;
        sim.run_until(t);
        m2 = sim.node(P).chain().microblocks().get(1).map(|b| b.hash());
    }
    let m2 = m2.ok_or_else(|| SimError::Config("old era never reached its second block".into()))?;
    sim.inject_keyblock(sim.now(), N);
    let report = sim.run();

    let mut out = EraTransition {
        quorum,
        skipped: false,
        first_attempt_failed: false,
        checkpoint_adopted: false,
        resumed: false,
        report,
    };
    for (_, node, e) in sim.events() {
        match e {
            Event::CertificateProduced { block, .. } if block.header.keyblock != old_era => {
                if block.header.height == 2 && block.hash() != m2 {
                    out.skipped = true;
                }
                if block.header.height == 3 && block.header.prev == m2 {
                    out.resumed = true;
                }
            }
            Event::RoundFailed { tag, .. } if *node == N && tag.era != old_era && tag.height == 2 => {
                out.first_attempt_failed = true;
            }
            Event::CheckpointAdopted { era, .. } if *node == N && *era != old_era => out.checkpoint_adopted = true,
            _ => {}
        }
    }
    Ok(out)
}

