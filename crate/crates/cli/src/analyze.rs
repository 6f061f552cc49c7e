//! Tables for the closed-form calculators.

use byzcoin_core::analysis::{
    double_spend_probability, membership_safety, published_table, selfish_mining_gain, truncate, AnalysisError,
};
use byzcoin_simnet::{simulate_selfish, Resolution};

use crate::table::Table;

/// Attacker fractions plotted by default.
pub const DEFAULT_Q: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
pub const DEFAULT_Z_MAX: u64 = 12;
pub const DEFAULT_C: [f64; 9] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];
pub const DEFAULT_N: [u32; 4] = [0, 1, 2, 4];

/// One row per `(q, z)`.
pub fn doublespend(qs: &[f64], zs: &[u64]) -> Result<Table, AnalysisError> {
    let mut t = Table::new(["q", "z", "probability", "attacker_dominant"]);
    for &q in qs {
        for &z in zs {
            let d = double_spend_probability(q, z)?;
            t.push(vec![
                q.to_string(),
                z.to_string(),
                format!("{:.10}", d.probability),
                d.attacker_dominant.to_string(),
            ]);
        }
    }
    Ok(t)
}

/// The twelve published cells next to the computed values.
pub fn membership_published_table() -> Table {
    let mut t = Table::new(["p", "w", "computed", "printed", "published", "match"]);
    for c in published_table() {
        t.push(vec![
            format!("{:.2}", c.p),
            c.w.to_string(),
            format!("{:.6}", c.exact),
            format!("{:.3}", c.printed),
            format!("{:.3}", c.published),
            ((c.printed - c.published).abs() < 5e-4).to_string(),
        ]);
    }
    t
}

pub fn membership(ws: &[u64], ps: &[f64]) -> Result<Table, AnalysisError> {
    let mut t = Table::new(["p", "w", "safety", "printed"]);
    for &p in ps {
        for &w in ws {
            let s = membership_safety(w, p)?;
            t.push(vec![
                p.to_string(),
                w.to_string(),
                format!("{s:.6}"),
                format!("{:.3}", truncate(s, 3)),
            ]);
        }
    }
    Ok(t)
}

pub fn selfish(cs: &[f64], ns: &[u32]) -> Result<Table, AnalysisError> {
    let mut t = Table::new(["c", "n", "gain", "profitable"]);
    for &n in ns {
        for &c in cs {
            let g = selfish_mining_gain(c, n)?;
            t.push(vec![c.to_string(), n.to_string(), format!("{:.4}", g.gain), g.profitable.to_string()]);
        }
    }
    Ok(t)
}

/// Monte Carlo revenue under both fork-resolution rules, next to the
/// closed form for smallest-hash-wins.
pub fn selfish_simulated(cs: &[f64], ns: &[u32], forks: u64, seed: u64) -> Result<Table, AnalysisError> {
    let mut t = Table::new(["c", "n", "resolution", "forks", "revenue", "closed_form"]);
    for &n in ns {
        for &c in cs {
            let closed = selfish_mining_gain(c, n)?.gain;
            for resolution in [Resolution::SmallestHash, Resolution::ByzCoin] {
                let r = simulate_selfish(c, n, resolution, forks, seed);
                let label = match resolution {
                    Resolution::SmallestHash => "smallest-hash",
                    Resolution::ByzCoin => "byzcoin",
                };
                let closed = match resolution {
                    Resolution::SmallestHash => format!("{closed:.4}"),
                    Resolution::ByzCoin => String::new(),
                };
                t.push(vec![
                    c.to_string(),
                    n.to_string(),
                    label.into(),
                    r.forks.to_string(),
                    format!("{:.4}", r.revenue),
                    closed,
                ]);
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_cells_all_match() {
        let t = membership_published_table();
        assert_eq!(t.rows.len(), 12);
        assert!(t.rows.iter().all(|r| r[5] == "true"), "{}", t.to_text());
    }

    #[test]
    fn no_attacker_no_double_spend() {
        let t = doublespend(&[0.0], &[6]).unwrap();
        assert_eq!(t.rows[0][2].parse::<f64>().unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_is_an_error() {
        assert!(selfish(&[1.5], &[0]).is_err());
        assert!(doublespend(&[1.0], &[1]).is_err());
    }
}
