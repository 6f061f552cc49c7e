//! Monte Carlo of block withholding against two fork-resolution rules.
//!
//! Each episode starts from a common tip. With probability `c` the attacker
//! finds the next block. Its hash is uniform below the target; if it also
//! clears `n` extra zero bits the attacker withholds it until an honest miner
//! publishes a competitor at the same height, then releases it and the fork
//! is resolved. A won race credits the block and the episode continues from
//! the attacker's tip; a lost race or an honest block ends it. Unlucky blocks
//! are published at once and credited. Revenue is attacker blocks per
//! episode, comparable with the honest expectation `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use byzcoin_core::chain::resolve_fork_hashes;
use byzcoin_core::Hash256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    /// The competing block with the smaller hash wins.
    SmallestHash,
    /// Sort the candidates' hashes, hash the list, pick by that digest.
    ByzCoin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfishReport {
    pub resolution: Resolution,
    pub c: f64,
    pub n: u32,
    pub episodes: u64,
    pub forks: u64,
    pub forks_won: u64,
    pub attacker_blocks: u64,
    pub revenue: f64,
}

fn random_hash<R: Rng>(rng: &mut R) -> Hash256 {
    let mut b = [0u8; 32];
    rng.fill(&mut b);
    Hash256(b)
}

/// Runs episodes until `forks` races have been resolved.
pub fn simulate_selfish(c: f64, n: u32, resolution: Resolution, forks: u64, seed: u64) -> SelfishReport {
    assert!(c > 0.0 && c < 1.0, "c must lie in (0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lucky_below = 0.5f64.powi(n as i32);
    let mut report = SelfishReport {
        resolution,
        c,
        n,
        episodes: 0,
        forks: 0,
        forks_won: 0,
        attacker_blocks: 0,
        revenue: 0.0,
    };
    while report.forks < forks {
        report.episodes += 1;
        loop {
            if !rng.gen_bool(c) {
                break;
            }
            // hashes as fractions of the target
            let attacker: f64 = rng.gen();
            if attacker >= lucky_below {
                report.attacker_blocks += 1;
                break;
            }
            report.forks += 1;
            let won = match resolution {
                Resolution::SmallestHash => attacker < rng.gen::<f64>(),
                Resolution::ByzCoin => {
                    let ours = random_hash(&mut rng);
                    let theirs = random_hash(&mut rng);
                    resolve_fork_hashes(&[ours, theirs]).expect("two candidates") == ours
                }
            };
            if !won {
                break;
            }
            report.forks_won += 1;
            report.attacker_blocks += 1;
        }
    }
    report.revenue = report.attacker_blocks as f64 / report.episodes as f64;
    report
}
