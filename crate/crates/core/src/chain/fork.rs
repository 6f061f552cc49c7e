use crate::hash::Hash256;

use super::ChainError;

/// Index of the winner in the sorted, deduplicated candidate hashes.
///
/// The sorted hashes are concatenated and hashed; the last
/// `ceil(log2 k)` bits of that digest, reduced mod `k`, pick the winner.
/// Input order does not matter, and a miner cannot steer the outcome without
/// redoing the proof-of-work behind its header hash.
pub fn fork_index(sorted: &[Hash256]) -> usize {
    let k = sorted.len();
    if k <= 1 {
        return 0;
    }
    let digest = Hash256::of_parts(sorted.iter().map(|h| &h.0[..]));
    let bits = usize::BITS - (k - 1).leading_zeros();
    let tail = u64::from_be_bytes(digest.0[24..].try_into().expect("8 bytes"));
    let masked = if bits >= 64 { tail } else { tail & ((1u64 << bits) - 1) };
    (masked % k as u64) as usize
}

/// Deterministically picks one of several competing header hashes.
pub fn resolve_fork_hashes(candidates: &[Hash256]) -> Result<Hash256, ChainError> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(ChainError::NoCandidates);
    }
    Ok(sorted[fork_index(&sorted)])
}

/// [`resolve_fork_hashes`] over arbitrary candidates identified by `hash`.
pub fn resolve_fork<'a, T>(
    candidates: &'a [T],
    hash: impl Fn(&T) -> Hash256,
) -> Result<&'a T, ChainError> {
    let hashes: Vec<Hash256> = candidates.iter().map(&hash).collect();
    let winner = resolve_fork_hashes(&hashes)?;
    Ok(&candidates[hashes.iter().position(|h| *h == winner).expect("winner is a candidate")])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_empty() {
        let h = Hash256::of(b"a");
        assert_eq!(resolve_fork_hashes(&[h]).unwrap(), h);
        assert_eq!(resolve_fork_hashes(&[h, h]).unwrap(), h);
        assert_eq!(resolve_fork_hashes(&[]), Err(ChainError::NoCandidates));
    }

    #[test]
    fn bit_width() {
        // k = 3 uses two bits; index must stay in range
        for i in 0..50u64 {
            let cands: Vec<_> = (0..3).map(|j| Hash256::of(&(i * 10 + j).to_le_bytes())).collect();
            let mut sorted = cands.clone();
            sorted.sort();
            assert!(fork_index(&sorted) < 3);
        }
    }
}
