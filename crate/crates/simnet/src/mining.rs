use rand::Rng;
use rand_distr::{Distribution, Exp};

use byzcoin_core::chain::NodeId;

use crate::queue::{Time, SECOND};
use crate::SimError;

/// Hash-power split over the miners.
#[derive(Debug, Clone, PartialEq)]
pub struct MinerModel {
    powers: Vec<(NodeId, f64)>,
    interval_s: f64,
}

/// A keyblock found this round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Found {
    pub miner: NodeId,
    pub after: Time,
}

impl MinerModel {
    /// Fractions must be nonnegative and sum to one.
    pub fn new(powers: Vec<(NodeId, f64)>, interval_s: f64) -> Result<Self, SimError> {
        let total: f64 = powers.iter().map(|p| p.1).sum();
        if powers.iter().any(|p| !(p.1 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!("hash-power fractions sum to {total}, not 1")));
        }
        if !(interval_s > 0.0) {
            return Err(SimError::Config("mining interval must be positive".into()));
        }
        Ok(Self { powers, interval_s })
    }

    /// Equal power for every miner.
    pub fn uniform(miners: &[NodeId], interval_s: f64) -> Result<Self, SimError> {
        let share = 1.0 / miners.len() as f64;
        Self::new(miners.iter().map(|&m| (m, share)).collect(), interval_s)
    }

    pub fn powers(&self) -> &[(NodeId, f64)] {
        &self.powers
    }

    pub fn interval_s(&self) -> f64 {
        self.interval_s
    }

    /// One mining race: each miner draws an exponential time with rate
    /// `fraction / interval`. The earliest wins; anyone else finishing within
    /// `tie_window` of the winner has not heard of it yet and also publishes,
    /// which yields concurrent keyblocks. Sorted by time.
    pub fn race<R: Rng>(&self, rng: &mut R, tie_window: Time) -> Vec<Found> {
        let mut draws: Vec<Found> = self
            .powers
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|&(miner, power)| {
                let exp = Exp::new(power / self.interval_s).expect("positive rate");
                let secs: f64 = exp.sample(rng);
                Found {
                    miner,
                    after: (secs * SECOND as f64).round() as Time,
                }
            })
            .collect();
        draws.sort_by_key(|f| (f.after, f.miner));
        let Some(first) = draws.first().copied() else {
            return Vec::new();
        };
        draws.retain(|f| f.after <= first.after + tie_window);
        draws
    }
}
