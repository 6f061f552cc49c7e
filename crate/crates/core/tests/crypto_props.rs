use byzcoin_core::crypto::{self, Ed25519Group, Group, ToyGroup};
use proptest::prelude::*;

#[test]
fn toy_completeness_is_exhaustive() {
    let g = ToyGroup::standard();
    for x in g.scalars() {
        for v in g.scalars() {
            for c in g.scalars() {
                let r = crypto::respond(&g, &x, &v, &c);
                assert!(crypto::verify(&g, &g.pow_generator(&x), &g.pow_generator(&v), &c, &r));
            }
        }
    }
}

#[test]
fn toy_soundness_passes_exactly_one_response_in_q() {
    let g = ToyGroup::standard();
    for x in g.scalars() {
        for v in g.scalars() {
            for c in g.scalars() {
                let (big_x, big_v) = (g.pow_generator(&x), g.pow_generator(&v));
                let passing = g
                    .scalars()
                    .filter(|r| crypto::verify(&g, &big_x, &big_v, &c, r))
                    .count();
                assert_eq!(passing, 1);
            }
        }
    }
}

#[test]
fn toy_homomorphism_for_two_and_three_signers() {
    let g = ToyGroup::standard();
    let c = g.scalar(7);
    let scalars: Vec<_> = g.scalars().collect();
    for &x1 in &scalars {
        for &x2 in &scalars {
            for &v1 in &scalars {
                for &v2 in &scalars {
                    let r = g.scalar_add(
                        &crypto::respond(&g, &x1, &v1, &c),
                        &crypto::respond(&g, &x2, &v2, &c),
                    );
                    let agg_x = g.mul(&g.pow_generator(&x1), &g.pow_generator(&x2));
                    let agg_v = g.mul(&g.pow_generator(&v1), &g.pow_generator(&v2));
                    assert!(crypto::verify(&g, &agg_x, &agg_v, &c, &r));
                }
            }
        }
    }
    // three signers over every challenge, fixed keys and random nonces
    for c in g.scalars() {
        let xs = [1u64, 4, 9].map(|x| g.scalar(x));
        let vs = [2u64, 3, 10].map(|v| g.scalar(v));
        let r = g.scalar_sum(&[0, 1, 2].map(|i| crypto::respond(&g, &xs[i], &vs[i], &c)));
        let agg_x = g.product(&xs.map(|x| g.pow_generator(&x)));
        let agg_v = g.product(&vs.map(|v| g.pow_generator(&v)));
        assert!(crypto::verify(&g, &agg_x, &agg_v, &c, &r));
    }
}

#[test]
fn injected_fixed_challenge_reproduces_hand_vector() {
    // x=3, v=4 with the test challenge c=5 gives r=8 and verifies
    let g = ToyGroup::standard();
    let key = crypto::KeyPair::from_secret(&g, g.scalar(3));
    let c = g.scalar(5);
    let r = crypto::respond(&g, &key.secret, &g.scalar(4), &c);
    assert_eq!(r.value(), 8);
    assert!(crypto::verify(&g, &key.public, &g.pow_generator(&g.scalar(4)), &c, &r));
}

proptest! {
    #[test]
    fn ed25519_encodings_round_trip(seed in any::<u64>()) {
        let g = Ed25519Group;
        let key = crypto::keygen(&g, seed);
        let e = g.element_bytes(&key.public);
        prop_assert_eq!(g.decode_element(&e).unwrap(), key.public);
        let s = g.scalar_bytes(&key.secret);
        prop_assert_eq!(g.decode_scalar(&s).unwrap(), key.secret);
    }

    #[test]
    fn toy_encodings_round_trip(k in 0u64..11) {
        let g = ToyGroup::standard();
        let e = g.pow_generator(&g.scalar(k));
        prop_assert_eq!(g.decode_element(&g.element_bytes(&e)).unwrap(), e);
        prop_assert_eq!(g.decode_scalar(&g.scalar_bytes(&g.scalar(k))).unwrap(), g.scalar(k));
    }

    #[test]
    fn ed25519_sign_verify(seed in any::<u64>(), nonce_seed in any::<u64>(), msg in proptest::collection::vec(any::<u8>(), 0..64)) {
        let g = Ed25519Group;
        let key = crypto::keygen(&g, seed);
        let (v, big_v) = crypto::commit(&g, nonce_seed);
        let c = crypto::challenge(&g, &big_v, &msg);
        let r = crypto::respond(&g, &key.secret, &v, &c);
        prop_assert!(crypto::verify(&g, &key.public, &big_v, &c, &r));
        let r_bad = g.scalar_add(&r, &g.scalar_from_u64(1));
        prop_assert!(!crypto::verify(&g, &key.public, &big_v, &c, &r_bad));
    }
}
