use std::collections::{BTreeMap, BTreeSet};

use byzcoin_core::chain::{
    dump_jsonl, fork_index, load_jsonl, resolve_fork, resolve_fork_hashes, signing_message,
    split_reward, update_window, validate_microblock, Block, ChainState, KeyBlock, MicroBlock,
    NodeId, Payload, ShareWindow, SignedKind, Violation,
};
use byzcoin_core::cosi::{build_tree, run_round, RoundConfig, RoundId};
use byzcoin_core::crypto::{self, Ed25519Group, KeyPair};
use byzcoin_core::Hash256;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type G = Ed25519Group;

fn key(id: NodeId) -> KeyPair<G> {
    crypto::keygen(&Ed25519Group, u64::from(id) + 500)
}

fn keyblock(height: u64, prev: Hash256, miner: NodeId) -> KeyBlock<G> {
    KeyBlock {
        height,
        prev,
        miner,
        miner_key: key(miner).public,
        nonce: 0,
        difficulty_bits: 4,
        timestamp: height * 600_000,
        signature: None,
    }
    .solve(&Ed25519Group)
}

/// Chain whose window holds one share for each of miners `0..w`.
fn chain(w: usize) -> ChainState<G> {
    let g = Ed25519Group;
    let mut state = ChainState::new(g, w, keyblock(0, Hash256::ZERO, 0)).unwrap();
    for m in 1..w as NodeId {
        let kb = keyblock(u64::from(m), state.era(), m);
        state.apply_keyblock(kb).unwrap();
    }
    state
}

fn sign(state: &ChainState<G>, block: &mut MicroBlock<G>, silent: &[usize]) {
    let g = Ed25519Group;
    let roster = state.roster();
    let keys: Vec<_> = roster.ids().iter().map(|&id| key(id)).collect();
    let tree = build_tree(roster.len(), 8).unwrap();
    let msg = signing_message(SignedKind::Commit, &block.hash());
    let cfg = RoundConfig::new(
        RoundId {
            era: state.era(),
            round: block.header.height,
        },
        9,
    );
    let faults: BTreeSet<usize> = silent.iter().copied().collect();
    let sig = run_round(&g, tree, &keys, &msg, |_, _| true, &faults, cfg)
        .result
        .unwrap();
    block.signature = Some(sig);
}

fn next_block(state: &ChainState<G>) -> MicroBlock<G> {
    MicroBlock::new(
        state.micro_height() + 1,
        state.micro_tip(),
        state.era(),
        state.roster().ids()[0],
        1,
        Payload::Transactions(vec![std::sync::Arc::from(&b"tx"[..])]),
    )
}

#[test]
fn fork_vectors_match_independent_hash() {
    // Expected values computed with Python's hashlib: sorted pair, SHA-256 of
    // the concatenation, last bit of the digest.
    let a = Hash256::of(b"header-a");
    let b = Hash256::of(b"header-b");
    assert_eq!(a.to_hex(), "f3a8658ab5fa3501c81e7f2f8851553756231f251bbb39a3c2dfeb6d965ccb8c");
    let winner = "e8570936bf212337b4e6660b2510b9a0f22af4692eeb68dac09260ccf5a2b56f";
    assert_eq!(resolve_fork_hashes(&[a, b]).unwrap().to_hex(), winner);
    assert_eq!(resolve_fork_hashes(&[b, a]).unwrap().to_hex(), winner);
    // three candidates: two low bits of the digest, mod 3, gives index 1
    let c = Hash256::of(b"header-c");
    assert_eq!(resolve_fork_hashes(&[c, a, b]).unwrap().to_hex(), winner);
    let mut sorted = vec![a, b, c];
    sorted.sort();
    assert_eq!(fork_index(&sorted), 1);
}

#[test]
fn fork_resolution_over_keyblocks() {
    let g = Ed25519Group;
    let parent = Hash256::of(b"parent");
    let cands = [keyblock(5, parent, 1), keyblock(5, parent, 2)];
    let w1 = resolve_fork(&cands, |k| k.hash(&g)).unwrap().miner;
    let rev = [cands[1].clone(), cands[0].clone()];
    assert_eq!(resolve_fork(&rev, |k| k.hash(&g)).unwrap().miner, w1);
}

#[test]
fn two_candidate_forks_split_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 10_000;
    let mut low_wins = 0;
    for _ in 0..trials {
        let a = Hash256(rng.gen());
        let b = Hash256(rng.gen());
        if resolve_fork_hashes(&[a, b]).unwrap() == a.min(b) {
            low_wins += 1;
        }
    }
    let frac = low_wins as f64 / trials as f64;
    assert!((frac - 0.5).abs() <= 0.02, "lower hash won {frac}");
    // chi-square with one degree of freedom, 99.9% critical value 10.83
    let e = trials as f64 / 2.0;
    let chi2 = (low_wins as f64 - e).powi(2) / e + ((trials - low_wins) as f64 - e).powi(2) / e;
    assert!(chi2 < 10.83, "chi2 {chi2}");
}

#[test]
fn window_tracks_hash_power() {
    let w = 144;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut win: ShareWindow<G> = ShareWindow::new(w, Hash256::ZERO);
    let mut totals = [0u64; 3];
    let mut samples = 0u64;
    for i in 0..10 * w {
        let u: f64 = rng.gen();
        let miner = if u < 0.5 { 0 } else if u < 0.8 { 1 } else { 2 };
        win.push(miner, key(miner).public, Hash256::of(&(i as u64).to_le_bytes()));
        if i >= w {
            for (m, t) in totals.iter_mut().enumerate() {
                *t += win.voting_power(m as NodeId);
            }
            samples += w as u64;
        }
    }
    for (m, expect) in [0.5, 0.3, 0.2].iter().enumerate() {
        let frac = totals[m] as f64 / samples as f64;
        assert!((frac - expect).abs() <= 0.05, "miner {m}: {frac}");
    }
}

#[test]
fn update_window_checks_linkage() {
    let g = Ed25519Group;
    let win: ShareWindow<G> = ShareWindow::new(3, Hash256::ZERO);
    let kb = keyblock(0, Hash256::ZERO, 1);
    let next = update_window(&g, &win, &kb).unwrap();
    assert_eq!(next.tip(), kb.hash(&g));
    assert!(update_window(&g, &next, &keyblock(1, Hash256::of(b"elsewhere"), 2)).is_err());
}

#[test]
fn microblock_validation() {
    let state = chain(11);
    assert_eq!(state.roster().f(), 3);
    assert_eq!(state.roster().commit_quorum(), 8);

    let mut ok = next_block(&state);
    sign(&state, &mut ok, &[]);
    validate_microblock(&ok, &state, 8).unwrap();

    let mut state2 = state.clone();
    state2.append_microblock(ok.clone(), 8).unwrap();
    let mut b2 = next_block(&state2);
    sign(&state2, &mut b2, &[]);
    state2.append_microblock(b2, 8).unwrap();

    // a block pointing at the grandparent
    let mut stale = MicroBlock::new(3, ok.header.prev, state2.era(), 0, 5, Payload::empty());
    sign(&state2, &mut stale, &[]);
    assert_eq!(
        validate_microblock(&stale, &state2, 8).unwrap_err().code(),
        "stale-parent"
    );

    // f = 3 silent members leaves 8 shares: exactly the quorum
    let mut at_threshold = next_block(&state);
    sign(&state, &mut at_threshold, &[8, 9, 10]);
    validate_microblock(&at_threshold, &state, 8).unwrap();

    // f + 1 missing shares
    let mut short = next_block(&state);
    sign(&state, &mut short, &[7, 8, 9, 10]);
    assert_eq!(
        validate_microblock(&short, &state, 8),
        Err(Violation::InsufficientSigners {
            signed: 7,
            required: 8
        })
    );

    let mut tampered = ok.clone();
    tampered.header.timestamp += 1;
    assert!(matches!(
        validate_microblock(&tampered, &state, 8),
        Err(Violation::BadSignature)
    ));
    let mut unsigned = ok.clone();
    unsigned.signature = None;
    assert_eq!(
        validate_microblock(&unsigned, &state, 8),
        Err(Violation::MissingSignature)
    );
    let mut wrong_era = next_block(&state);
    wrong_era.header.keyblock = Hash256::of(b"x");
    assert_eq!(
        validate_microblock(&wrong_era, &state, 8).unwrap_err().code(),
        "wrong-era"
    );
}

#[test]
fn keyblock_rewards_discard_non_signers() {
    let g = Ed25519Group;
    let base = chain(4).with_keyblock_reward(100);
    let mut state = base.clone();
    let mut kb = keyblock(4, state.era(), 9);
    // new roster after kb: miners 9, 3, 2, 1 (miner 0 expires)
    let ids = [9, 3, 2, 1];
    let keys: Vec<_> = ids.iter().map(|&i| key(i)).collect();
    let msg = signing_message(SignedKind::Keyblock, &kb.hash(&g));
    let cfg = RoundConfig::new(RoundId { era: kb.hash(&g), round: 0 }, 1);
    kb.signature = Some(
        run_round(&g, build_tree(4, 8).unwrap(), &keys, &msg, |_, _| true, &BTreeSet::from([3]), cfg)
            .result
            .unwrap(),
    );
    state.apply_keyblock(kb).unwrap();
    assert_eq!(state.roster().ids(), ids.to_vec());
    assert_eq!(state.balances(), &BTreeMap::from([(2, 25), (3, 25), (9, 25)]));
    assert_eq!(state.discarded_rewards(), 25);
}

#[test]
fn apply_keyblock_rejects_bad_blocks() {
    let mut state = chain(3);
    let tip_height = state.key_height();
    assert!(state
        .apply_keyblock(keyblock(tip_height + 1, Hash256::of(b"nope"), 1))
        .is_err());
    let mut weak = keyblock(tip_height + 1, state.era(), 1);
    weak.difficulty_bits = 40;
    assert!(state.apply_keyblock(weak).is_err());
}

#[test]
fn jsonl_round_trip() {
    let mut state = chain(5);
    let mut b = next_block(&state);
    sign(&state, &mut b, &[2]);
    state.append_microblock(b, 4).unwrap();
    let dump = dump_jsonl(&state);
    assert_eq!(dump.lines().count(), 6);
    let blocks = load_jsonl(&Ed25519Group, &dump).unwrap();
    assert_eq!(blocks.len(), 6);
    assert!(matches!(&blocks[5], Block::Micro(m) if m.signature.as_ref().unwrap().mask.count() == 1));
    assert_eq!(dump_jsonl(&state), dump);

    let corrupted = dump.replacen("\"hex\":\"4b", "\"hex\":\"4c", 1);
    assert!(load_jsonl(&Ed25519Group, &corrupted).is_err());
    assert!(load_jsonl(&Ed25519Group, "{\"kind\":\"keyblock\",\"x\":1}").is_err());
}

proptest! {
    #[test]
    fn rewards_are_conserved(
        total in 0u64..1_000_000,
        shares in proptest::collection::vec((0u32..20, 1u64..50), 1..12),
        excepted in proptest::collection::btree_set(0u32..20, 0..5),
    ) {
        let split = split_reward(total, &shares, &excepted);
        prop_assert_eq!(split.total(), total);
        prop_assert!(split.paid.keys().all(|id| !excepted.contains(id)));
        // each member within one unit of its exact proportional share
        let mut merged: BTreeMap<u32, u64> = BTreeMap::new();
        for &(id, s) in &shares { *merged.entry(id).or_default() += s; }
        let weight: u64 = merged.values().sum();
        for (id, amount) in &split.paid {
            let exact = total as f64 * merged[id] as f64 / weight as f64;
            prop_assert!((*amount as f64 - exact).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn shares_are_conserved(w in 1usize..40, miners in proptest::collection::vec(0u32..6, 0..120)) {
        let mut win: ShareWindow<G> = ShareWindow::new(w, Hash256::ZERO);
        for (i, &m) in miners.iter().enumerate() {
            win.push(m, key(m).public, Hash256::of(&(i as u64).to_le_bytes()));
        }
        let total: u64 = (0..6).map(|m| win.voting_power(m)).sum();
        prop_assert_eq!(total as usize, w.min(miners.len()));
        prop_assert_eq!(win.roster().weights().iter().sum::<u64>(), total);
    }

    #[test]
    fn fork_winner_is_permutation_invariant(seeds in proptest::collection::vec(any::<u64>(), 1..9), rot in 0usize..8) {
        let mut hashes: Vec<Hash256> = seeds.iter().map(|s| Hash256::of(&s.to_le_bytes())).collect();
        let first = resolve_fork_hashes(&hashes).unwrap();
        let r = rot % hashes.len();
        hashes.rotate_left(r);
        hashes.reverse();
        prop_assert_eq!(resolve_fork_hashes(&hashes).unwrap(), first);
        prop_assert!(hashes.contains(&first));
    }
}
