use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfishGain {
    /// Expected revenue fraction `G`.
    pub gain: f64,
    /// Withholding pays more than honest mining (`G > c`).
    pub profitable: bool,
}

/// The coefficients `(A, B)` of the fixed point `G = c·(A + B·G)`.
///
/// A miner whose withheld block has `n` extra zero bits wins a
/// smallest-hash race with probability `1 − 2^{−n−1}`; with `n = 0` that is
/// a fair coin, which is what deterministic fork resolution gives everyone.
pub fn coefficients(n: u32) -> (f64, f64) {
    let lucky = 0.5f64.powi(n as i32);
    let win = 1.0 - 0.5f64.powi(n as i32 + 1);
    let b = lucky * win;
    ((1.0 - lucky) + b, b)
}

/// Solves `G = c·[(1 − 2^{−n}) + 2^{−n}(1 − 2^{−n−1})(1 + G)]` in closed form,
/// `G = c·A / (1 − c·B)`.
pub fn selfish_mining_gain(c: f64, n: u32) -> Result<SelfishGain, AnalysisError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(AnalysisError::OutOfRange {
            name: "c",
            value: c,
            expected: "(0, 1)",
        });
    }
    let (a, b) = coefficients(n);
    let denom = 1.0 - c * b;
    if denom <= 0.0 {
        return Err(AnalysisError::Diverges);
    }
    let gain = c * a / denom;
    Ok(SelfishGain {
        gain,
        profitable: gain > c,
    })
}

/// `G − c·(A + B·G)`: zero at the fixed point.
pub fn fixed_point_residual(c: f64, n: u32, gain: f64) -> f64 {
    let (a, b) = coefficients(n);
    gain - c * (a + b * gain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_values() {
        // n = 2: A = 3/4 + 1/4 * 7/8, B = 7/32
        let (a, b) = coefficients(2);
        assert!((a - 31.0 / 32.0).abs() < 1e-15);
        assert!((b - 7.0 / 32.0).abs() < 1e-15);
        // n = 0: a coin flip
        assert_eq!(coefficients(0), (0.5, 0.5));
    }

    #[test]
    fn fixed_point_iteration_agrees() {
        for &(c, n) in &[(0.25, 0u32), (0.25, 2), (0.4, 5), (0.1, 1)] {
            let mut g = 0.0;
            for _ in 0..200 {
                let (a, b) = coefficients(n);
                g = c * (a + b * g);
            }
            let closed = selfish_mining_gain(c, n).unwrap().gain;
            assert!((g - closed).abs() < 1e-12, "c={c} n={n}");
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(selfish_mining_gain(0.0, 2).is_err());
        assert!(selfish_mining_gain(1.0, 2).is_err());
    }
}
