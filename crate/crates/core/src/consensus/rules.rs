use crate::chain::{commit_quorum, era_first_quorum, fault_bound};

/// How many shares must co-sign a microblock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum QuorumRule {
    /// Any two quorums overlap in at least `f + 1` shares; the era's first
    /// microblock needs at least `2f + 2`. See [`commit_quorum`].
    #[default]
    Intersecting,
    /// Textbook `2f + 1` for every block, optionally bumping the era's first
    /// microblock to `2f + 2`. With `w = 3f + 2` two `2f + 1` quorums can
    /// overlap in only `f` shares, so this variant exists to demonstrate the
    /// failures it allows and is not meant for real runs.
    Classic { era_first_bump: bool },
}

impl QuorumRule {
    pub fn commit(self, total_shares: u64) -> u64 {
        match self {
            QuorumRule::Intersecting => commit_quorum(total_shares),
            QuorumRule::Classic { .. } => (2 * fault_bound(total_shares) + 1).min(total_shares),
        }
    }

    pub fn era_first(self, total_shares: u64) -> u64 {
        match self {
            QuorumRule::Intersecting => era_first_quorum(total_shares),
            QuorumRule::Classic { era_first_bump: true } => {
                (2 * fault_bound(total_shares) + 2).min(total_shares)
            }
            QuorumRule::Classic { era_first_bump: false } => self.commit(total_shares),
        }
    }

    /// Weight of view-change votes needed to install a new view.
    pub fn view_change(self, total_shares: u64) -> u64 {
        self.commit(total_shares)
    }

    pub fn name(self) -> &'static str {
        match self {
            QuorumRule::Intersecting => "intersecting",
            QuorumRule::Classic { era_first_bump: true } => "classic-2f1-bump",
            QuorumRule::Classic { era_first_bump: false } => "classic-2f1",
        }
    }
}

/// Quorum a candidate needs, given whether it is the first microblock of its
/// era. In a fresh chain's first era there is no earlier history to skip, so
/// the bump is harmless and kept for uniformity.
pub fn era_first_block_rule(rule: QuorumRule, total_shares: u64, era_first: bool) -> u64 {
    if era_first {
        rule.era_first(total_shares)
    } else {
        rule.commit(total_shares)
    }
}
