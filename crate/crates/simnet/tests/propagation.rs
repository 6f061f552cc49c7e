//! Header-first block propagation over random peer graphs.

use std::collections::HashSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use byzcoin_simnet::gossip::{propagate, Block};
use byzcoin_simnet::graph::PeerGraph;
use byzcoin_simnet::LinkModel;
use byzcoin_core::Hash256;

struct Blob {
    id: Hash256,
    valid: bool,
}

impl Block for Blob {
    fn id(&self) -> Hash256 {
        self.id
    }
    fn header_valid(&self) -> bool {
        self.valid
    }
    fn header_bytes(&self) -> u64 {
        80
    }
    fn body_bytes(&self) -> u64 {
        1 << 20
    }
}

fn blob(valid: bool) -> Arc<Blob> {
    Arc::new(Blob {
        id: Hash256::of(if valid { b"good" } else { b"bad" }),
        valid,
    })
}

fn graph(seed: u64) -> PeerGraph {
    PeerGraph::random_regular(64, 8, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn every_other_host_gets_the_body_once() {
    for seed in 0..5 {
        let g = graph(seed);
        let r = propagate(&g, LinkModel::default(), 0, blob(true), &HashSet::new());
        assert_eq!(r.reached(), 64);
        assert_eq!(r.bodies, 63, "{r:?}");
        assert_eq!(r.body_requests, 63);
        assert!(r.inv <= 2 * g.edge_count());
    }
}

#[test]
fn bad_header_stops_at_the_first_hop() {
    let g = graph(1);
    let r = propagate(&g, LinkModel::default(), 0, blob(false), &HashSet::new());
    assert_eq!(r.bodies, 0);
    assert_eq!(r.body_requests, 0);
    assert_eq!(r.reached(), 1);
    // only the origin ever advertised it
    assert_eq!(r.inv, g.degree(0));
    assert_eq!(r.rejected, g.degree(0));
}

#[test]
fn silent_advertisers_are_bypassed() {
    let g = graph(2);
    let silent: HashSet<usize> = g.neighbors(0).take(4).collect();
    let r = propagate(&g, LinkModel::default(), 0, blob(true), &silent);
    // silent hosts still receive and advertise, they just never serve
    assert_eq!(r.reached(), 64);
    assert!(r.header_requests > r.headers);
}

#[test]
fn delivery_tracks_hop_distance() {
    let g = graph(3);
    let link = LinkModel::default();
    let r = propagate(&g, link, 0, blob(true), &HashSet::new());
    let hops = g.bfs(0);
    for v in 1..64 {
        let t = r.delivered_at[v].unwrap();
        let per_hop = 3 * link.one_way_us();
        assert!(t >= hops[v].unwrap() as u64 * per_hop, "host {v}");
    }
}
