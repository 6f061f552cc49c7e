use byzcoin_simnet::{simulate_selfish, Resolution};

#[test]
fn smallest_hash_rewards_withholding() {
    let r = simulate_selfish(0.25, 2, Resolution::SmallestHash, 10_000, 1);
    assert!((r.revenue - 0.2562).abs() < 0.01, "{}", r.revenue);
    assert_eq!(r.forks, 10_000);
}

#[test]
fn byzcoin_resolution_does_not() {
    for n in [0, 1, 2, 4] {
        let r = simulate_selfish(0.25, n, Resolution::ByzCoin, 10_000, 2);
        assert!(r.revenue <= 0.25 + 0.02, "n={n}: {}", r.revenue);
        let won = r.forks_won as f64 / r.forks as f64;
        assert!((won - 0.5).abs() < 0.02, "n={n}: won {won}");
    }
}
