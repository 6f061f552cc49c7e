use byzcoin_core::analysis::{
    double_spend_probability, fixed_point_residual, membership_safety, published_table, required_wait,
    selfish_mining_gain,
};
use proptest::prelude::*;

/// Direct summation at 50 significant digits (mpmath), frozen.
const DOUBLE_SPEND: [(f64, u64, f64); 5] = [
    (0.1, 2, 0.050977892839338624),
    (0.1, 6, 0.00024280274536288625),
    (0.3, 10, 0.041660479968979306),
    (0.25, 5, 0.078357012079675103),
    (0.45, 20, 0.53655358161914423),
];

/// Exact binomial sums at 50 digits (mpmath), frozen: (w, p = 0.25, p = 0.30).
const MEMBERSHIP: [(u64, f64, f64); 6] = [
    (12, 0.842356324195862, 0.72365546953),
    (100, 0.972405435869905, 0.779257761242259),
    (144, 0.990398708191796, 0.832681948928449),
    (288, 0.999396920157338, 0.902058774209327),
    (1008, 0.999999998720042, 0.989953239268118),
    (2016, 1.0, 0.999444060276577),
];

#[test]
fn double_spend_matches_high_precision_oracle() {
    for (q, z, want) in DOUBLE_SPEND {
        let got = double_spend_probability(q, z).unwrap().probability;
        assert!((got - want).abs() < 1e-12 * want.max(1e-3), "q={q} z={z}: {got} vs {want}");
    }
}

#[test]
fn required_wait_matches_scan_oracle() {
    // smallest z with P <= 0.001, from the same mpmath oracle
    let want = [(0.0, 1), (0.05, 4), (0.1, 5), (0.15, 8), (0.2, 11), (0.25, 15), (0.3, 24), (0.35, 41), (0.4, 89), (0.45, 340)];
    let mut last = 0;
    for (q, z) in want {
        let got = required_wait(q, 0.001).unwrap();
        assert_eq!(got, z, "q={q}");
        assert!(got >= last);
        last = got;
    }
}

#[test]
fn double_spend_is_monotone_on_grid() {
    // 50 values of q in [0, 0.49], z in 0..20
    for zi in 0..20u64 {
        let mut prev = -1.0;
        for qi in 0..50 {
            let q = qi as f64 * 0.01;
            let p = double_spend_probability(q, zi).unwrap().probability;
            assert!(p >= prev - 1e-15, "q={q} z={zi}");
            prev = p;
        }
    }
    for qi in 0..50 {
        let q = qi as f64 * 0.01;
        let mut prev = 2.0;
        for z in 0..20 {
            let p = double_spend_probability(q, z).unwrap().probability;
            assert!(p <= prev + 1e-15, "q={q} z={z}");
            prev = p;
        }
    }
}

#[test]
fn membership_matches_exact_sums() {
    for (w, p25, p30) in MEMBERSHIP {
        assert!((membership_safety(w, 0.25).unwrap() - p25).abs() < 1e-12, "w={w}");
        assert!((membership_safety(w, 0.30).unwrap() - p30).abs() < 1e-12, "w={w}");
    }
}

#[test]
fn printed_table_reproduces_published_cells() {
    let cells = published_table();
    assert_eq!(cells.len(), 12);
    for c in &cells {
        assert!((c.printed - c.published).abs() <= 0.0005, "{c:?}");
    }
    // the published cells are truncated, not rounded: four of them sit more
    // than half a unit below the exact value
    let off: Vec<_> = cells
        .iter()
        .filter(|c| (c.exact - c.published).abs() > 0.0005)
        .map(|c| (c.w, c.p))
        .collect();
    assert_eq!(off, vec![(1008, 0.25), (12, 0.30), (144, 0.30), (1008, 0.30)]);
}

#[test]
fn selfish_closed_form() {
    let g = selfish_mining_gain(0.25, 2).unwrap();
    assert!((g.gain - 0.2562).abs() < 0.0001);
    assert!((g.gain - 0.2421875 / 0.9453125).abs() < 1e-15);
    assert!(g.profitable);
    let g0 = selfish_mining_gain(0.25, 0).unwrap();
    assert!((g0.gain - 0.125 / 0.875).abs() < 1e-15);
    assert!(!g0.profitable);
    for i in 1..100 {
        let c = i as f64 / 100.0;
        assert!(!selfish_mining_gain(c, 0).unwrap().profitable, "c={c}");
    }
}

proptest! {
    #[test]
    fn fixed_point_residual_vanishes(c in 0.001f64..0.999, n in 0u32..30) {
        let g = selfish_mining_gain(c, n).unwrap();
        prop_assert!(fixed_point_residual(c, n, g.gain).abs() < 1e-12);
    }

    #[test]
    fn membership_is_a_probability(w in 1u64..3000, p in 0.0f64..1.0) {
        let v = membership_safety(w, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
