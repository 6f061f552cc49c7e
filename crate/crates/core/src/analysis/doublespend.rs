use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::gamma_lr;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleSpend {
    pub probability: f64,
    /// The attacker has at least half the hash power and wins eventually
    /// regardless of `z`.
    pub attacker_dominant: bool,
}

/// Probability that an attacker with hash-power fraction `q` overtakes the
/// honest chain after the merchant waited for `z` confirmations, using the
/// Poisson/gambler's-ruin model with `λ = z·q/p`:
///
/// `P = 1 − Σ_{k=0}^{z} λ^k e^{−λ} / k! · (1 − (q/p)^{z−k})`.
///
/// Evaluated as `Pr[Poisson(λ) > z] + Σ_k pois(k) (q/p)^{z−k}` so every term is
/// nonnegative and nothing cancels for large `z`.
pub fn double_spend_probability(q: f64, z: u64) -> Result<DoubleSpend, AnalysisError> {
    if !(0.0..1.0).contains(&q) || q.is_nan() {
        return Err(AnalysisError::OutOfRange {
            name: "q",
            value: q,
            expected: "[0, 1)",
        });
    }
    if q >= 0.5 {
        return Ok(DoubleSpend {
            probability: 1.0,
            attacker_dominant: true,
        });
    }
    let probability = if z == 0 {
        1.0
    } else if q == 0.0 {
        0.0
    } else {
        let p = 1.0 - q;
        let lambda = z as f64 * q / p;
        let ln_ratio = (q / p).ln();
        let ln_lambda = lambda.ln();
        let tail = gamma_lr(z as f64 + 1.0, lambda);
        let catch_up: f64 = (0..=z)
            .map(|k| {
                let ln_pois = k as f64 * ln_lambda - lambda - ln_factorial(k);
                (ln_pois + (z - k) as f64 * ln_ratio).exp()
            })
            .sum();
        (tail + catch_up).clamp(0.0, 1.0)
    };
    Ok(DoubleSpend {
        probability,
        attacker_dominant: false,
    })
}

/// Smallest `z` whose double-spend probability is at most `target`.
pub fn required_wait(q: f64, target: f64) -> Result<u64, AnalysisError> {
    if !(0.0..=1.0).contains(&target) || target.is_nan() {
        return Err(AnalysisError::OutOfRange {
            name: "target",
            value: target,
            expected: "[0, 1]",
        });
    }
    if q >= 0.5 && target < 1.0 {
        return Err(AnalysisError::Unattainable { q });
    }
    // P decays geometrically in z, so this terminates for any q < 0.5
    // with target > 0; the cap guards target = 0.
    const LIMIT: u64 = 1_000_000;
    for z in 0..LIMIT {
        if double_spend_probability(q, z)?.probability <= target {
            return Ok(z);
        }
    }
    Err(AnalysisError::Unattainable { q })
}
