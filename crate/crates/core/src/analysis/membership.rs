use statrs::function::factorial::ln_binomial;

use super::AnalysisError;

/// Window sizes and Byzantine-pick probabilities of the published
/// proof-of-membership table.
pub const TABLE_WINDOWS: [u64; 6] = [12, 100, 144, 288, 1008, 2016];
pub const TABLE_PROBABILITIES: [f64; 2] = [0.25, 0.30];

/// Published cells, rows by probability and columns by window.
pub const PUBLISHED_TABLE: [[f64; 6]; 2] = [
    [0.842, 0.972, 0.990, 0.999, 0.999, 1.000],
    [0.723, 0.779, 0.832, 0.902, 0.989, 0.999],
];

fn ln_term(w: u64, k: u64, ln_p: f64, ln_q: f64) -> f64 {
    ln_binomial(w, k) + k as f64 * ln_p + (w - k) as f64 * ln_q
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `Pr[X <= c]` for `X ~ Binomial(w, p)`, summed in log space.
///
/// When `c` sits above the mean the upper tail is the small quantity, so it is
/// summed instead and subtracted from one.
pub fn binomial_cdf(w: u64, p: f64, c: u64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(AnalysisError::OutOfRange {
            name: "p",
            value: p,
            expected: "[0, 1]",
        });
    }
    if c >= w || p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
    let mean = w as f64 * p;
    let value = if (c as f64) < mean {
        log_sum_exp((0..=c).map(|k| ln_term(w, k, ln_p, ln_q))).exp()
    } else {
        1.0 - log_sum_exp((c + 1..=w).map(|k| ln_term(w, k, ln_p, ln_q))).exp()
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Probability that a window of `w` shares, each Byzantine independently
/// with probability `p`, holds at most `floor(w / 3)` Byzantine shares.
pub fn membership_safety(w: u64, p: f64) -> Result<f64, AnalysisError> {
    if w == 0 {
        return Err(AnalysisError::OutOfRange {
            name: "w",
            value: 0.0,
            expected: ">= 1",
        });
    }
    binomial_cdf(w, p, w / 3)
}

/// Truncates toward zero at `decimals` places. The published table was
/// produced this way rather than by rounding.
pub fn truncate(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // nudge by a few ulps so values like 0.9 * 1000 = 899.999... stay put
    ((x * scale) * (1.0 + 4.0 * f64::EPSILON)).floor() / scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableCell {
    pub w: u64,
    pub p: f64,
    pub exact: f64,
    /// `exact` truncated to three decimals, as the table prints it.
    pub printed: f64,
    pub published: f64,
}

pub fn published_table() -> Vec<TableCell> {
    let mut cells = Vec::with_capacity(12);
    for (row, &p) in TABLE_PROBABILITIES.iter().enumerate() {
        for (col, &w) in TABLE_WINDOWS.iter().enumerate() {
            let exact = membership_safety(w, p).expect("valid table parameters");
            cells.push(TableCell {
                w,
                p,
                exact,
                printed: truncate(exact, 3),
                published: PUBLISHED_TABLE[row][col],
            });
        }
    }
    cells
}
