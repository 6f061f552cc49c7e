//! After-the-fact safety check over everything a run produced.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::Serialize;

use byzcoin_core::chain::{signing_message, ChainState, MicroBlock, SignedKind};
use byzcoin_core::consensus::QuorumRule;
use byzcoin_core::cosi::verify_collective;
use byzcoin_core::crypto::Group;
use byzcoin_core::Hash256;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub safe: bool,
    /// Distinct certified blocks examined.
    pub certificates: usize,
    /// Certificates that fail verification or fall short of the quorum.
    pub invalid: usize,
    /// Heights holding two or more valid certificates for different blocks.
    pub conflicting_heights: Vec<u64>,
    /// Chains that disagree with the first chain at some common height.
    pub divergent_chains: usize,
}

/// Verifies every certificate against its era's roster and the configured
/// quorum, then looks for competing certificates and inconsistent chains.
pub fn audit<'a, G: Group + 'a>(
    group: &G,
    rule: QuorumRule,
    chains: &[&ChainState<G>],
    certified: impl IntoIterator<Item = &'a Arc<MicroBlock<G>>>,
) -> AuditReport {
    let mut report = AuditReport::default();
    let mut seen = HashSet::new();
    let mut valid: BTreeMap<u64, BTreeSet<Hash256>> = BTreeMap::new();
    let from_chains = chains.iter().flat_map(|c| c.microblocks().iter());
    let blocks = certified.into_iter().map(|b| &**b).chain(from_chains);
    for block in blocks {
        let hash = block.hash();
        if !seen.insert(hash) {
            continue;
        }
        report.certificates += 1;
        if certificate_valid(group, rule, chains, block, hash) {
            valid.entry(block.header.height).or_default().insert(hash);
        } else {
            report.invalid += 1;
        }
    }
    report.conflicting_heights = valid
        .iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(h, _)| *h)
        .collect();
    if let Some(first) = chains.first() {
        let reference = first.microblocks();
        report.divergent_chains = chains[1..]
            .iter()
            .filter(|c| {
                c.microblocks()
                    .iter()
                    .zip(reference)
                    .any(|(a, b)| a.hash() != b.hash())
            })
            .count();
    }
    report.safe = report.conflicting_heights.is_empty() && report.divergent_chains == 0;
    report
}

fn certificate_valid<G: Group>(
    group: &G,
    rule: QuorumRule,
    chains: &[&ChainState<G>],
    block: &MicroBlock<G>,
    hash: Hash256,
) -> bool {
    let Some(sig) = &block.signature else {
        return false;
    };
    let Some(roster) = chains.iter().find_map(|c| c.roster_of(&block.header.keyblock)) else {
        return false;
    };
    let msg = signing_message(SignedKind::Commit, &hash);
    let verified = verify_collective(group, &roster.keys(), sig, &msg).unwrap_or(false);
    verified && sig.signed_weight(&roster.weights()) >= rule.commit(roster.total_shares())
}
