use rand::RngCore;

use super::{CryptoError, Group, GroupParams};

/// Integer in `[0, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToyScalar(pub(super) u64);

impl ToyScalar {
    pub fn value(self) -> u64 {
        self.0
    }
}

/// Residue mod `p` lying in the order-`q` subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToyElement(pub(super) u64);

impl ToyElement {
    pub fn value(self) -> u64 {
        self.0
    }
}

/// Schnorr group: the order-`q` subgroup of `Z_p^*` for a safe prime
/// `p = 2q + 1`, generated by `g`.
///
/// Small enough to enumerate every scalar, which is the point: tests check
/// completeness and soundness exhaustively here. Offers no security.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyGroup {
    p: u64,
    q: u64,
    g: u64,
    width: usize,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc
}

impl ToyGroup {
    /// The hand-checkable group used by the test vectors: p = 23, q = 11, G = 2.
    pub fn standard() -> Self {
        Self::new(23, 11, 2).expect("standard toy parameters are valid")
    }

    pub fn new(p: u64, q: u64, g: u64) -> Result<Self, CryptoError> {
        if p >= 1 << 31 {
            return Err(CryptoError::InvalidParams(format!("modulus {p} too large")));
        }
        if !is_prime(q) || !is_prime(p) || p != 2 * q + 1 {
            return Err(CryptoError::InvalidParams(format!(
                "p={p}, q={q} is not a safe-prime pair"
            )));
        }
        if g <= 1 || g >= p || mod_pow(g, q, p) != 1 {
            return Err(CryptoError::InvalidParams(format!(
                "g={g} does not have order {q} mod {p}"
            )));
        }
        let bits = 64 - (p - 1).leading_zeros() as usize;
        Ok(Self {
            p,
            q,
            g,
            width: bits.div_ceil(8),
        })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn order(&self) -> u64 {
        self.q
    }

    pub fn scalar(&self, v: u64) -> ToyScalar {
        ToyScalar(v % self.q)
    }

    /// Checked constructor for an element given as a residue mod `p`.
    pub fn element(&self, v: u64) -> Result<ToyElement, CryptoError> {
        if v == 0 || v >= self.p {
            return Err(CryptoError::MalformedElement("residue out of range"));
        }
        if mod_pow(v, self.q, self.p) != 1 {
            return Err(CryptoError::MalformedElement("not in the prime-order subgroup"));
        }
        Ok(ToyElement(v))
    }

    /// Every scalar `0..q`.
    pub fn scalars(&self) -> impl Iterator<Item = ToyScalar> + '_ {
        (0..self.q).map(ToyScalar)
    }

    fn put_fixed(&self, v: u64, out: &mut Vec<u8>) {
        out.extend_from_slice(&v.to_le_bytes()[..self.width]);
    }

    fn get_fixed(&self, bytes: &[u8]) -> Option<u64> {
        if bytes.len() != self.width {
            return None;
        }
        let mut buf = [0u8; 8];
        buf[..self.width].copy_from_slice(bytes);
        Some(u64::from_le_bytes(buf))
    }
}

impl Group for ToyGroup {
    type Scalar = ToyScalar;
    type Element = ToyElement;

    fn params(&self) -> GroupParams {
        GroupParams {
            name: "toy-schnorr",
            descriptor: format!("Z_{}^*", self.p),
            generator: self.element_bytes(&ToyElement(self.g)),
            order: self.q.to_string(),
            security_bits: 0,
        }
    }

    fn identity(&self) -> ToyElement {
        ToyElement(1)
    }

    fn generator(&self) -> ToyElement {
        ToyElement(self.g)
    }

    fn mul(&self, a: &ToyElement, b: &ToyElement) -> ToyElement {
        ToyElement(a.0 * b.0 % self.p)
    }

    fn invert(&self, a: &ToyElement) -> ToyElement {
        // a^(q-1) is the inverse inside the order-q subgroup
        ToyElement(mod_pow(a.0, self.q - 1, self.p))
    }

    fn pow(&self, base: &ToyElement, k: &ToyScalar) -> ToyElement {
        ToyElement(mod_pow(base.0, k.0, self.p))
    }

    fn scalar_from_u64(&self, v: u64) -> ToyScalar {
        ToyScalar(v % self.q)
    }

    fn scalar_add(&self, a: &ToyScalar, b: &ToyScalar) -> ToyScalar {
        ToyScalar((a.0 + b.0) % self.q)
    }

    fn scalar_mul(&self, a: &ToyScalar, b: &ToyScalar) -> ToyScalar {
        ToyScalar(a.0 * b.0 % self.q)
    }

    fn scalar_from_le_bytes(&self, bytes: &[u8]) -> ToyScalar {
        let acc = bytes
            .iter()
            .rev()
            .fold(0u64, |acc, &b| (acc * 256 + u64::from(b)) % self.q);
        ToyScalar(acc)
    }

    fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> ToyScalar {
        // rejection sampling keeps the distribution uniform
        let zone = u64::MAX - u64::MAX % self.q;
        loop {
            let v = rng.next_u64();
            if v < zone {
                return ToyScalar(v % self.q);
            }
        }
    }

    fn scalar_len(&self) -> usize {
        self.width
    }

    fn encode_scalar(&self, s: &ToyScalar, out: &mut Vec<u8>) {
        self.put_fixed(s.0, out);
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Result<ToyScalar, CryptoError> {
        let v = self
            .get_fixed(bytes)
            .ok_or(CryptoError::MalformedScalar("wrong length"))?;
        if v >= self.q {
            return Err(CryptoError::MalformedScalar("not reduced"));
        }
        Ok(ToyScalar(v))
    }

    fn element_len(&self) -> usize {
        self.width
    }

    fn encode_element(&self, e: &ToyElement, out: &mut Vec<u8>) {
        self.put_fixed(e.0, out);
    }

    fn decode_element(&self, bytes: &[u8]) -> Result<ToyElement, CryptoError> {
        let v = self
            .get_fixed(bytes)
            .ok_or(CryptoError::MalformedElement("wrong length"))?;
        self.element(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(ToyGroup::new(23, 11, 1).is_err());
        assert!(ToyGroup::new(23, 11, 5).is_err()); // 5 generates the full group of order 22
        assert!(ToyGroup::new(21, 10, 2).is_err());
        assert!(ToyGroup::new(47, 23, 2).is_ok());
    }

    #[test]
    fn subgroup_has_order_q() {
        let g = ToyGroup::standard();
        let elements: std::collections::BTreeSet<_> =
            g.scalars().map(|k| g.pow_generator(&k)).collect();
        assert_eq!(elements.len(), 11);
        for e in &elements {
            assert_eq!(g.pow(e, &g.scalar(11)), g.identity());
            assert_eq!(g.mul(e, &g.invert(e)), g.identity());
        }
    }

    #[test]
    fn non_members_fail_to_decode() {
        let g = ToyGroup::standard();
        // 5 is a quadratic non-residue mod 23, so it is outside the subgroup
        assert!(g.decode_element(&[5]).is_err());
        assert!(g.decode_element(&[0]).is_err());
        assert!(g.decode_element(&[23]).is_err());
        assert!(g.decode_element(&[8, 0]).is_err());
        assert_eq!(g.decode_element(&[8]).unwrap(), ToyElement(8));
        assert!(g.decode_scalar(&[11]).is_err());
    }

    #[test]
    fn le_reduction_matches_integer_arithmetic() {
        let g = ToyGroup::standard();
        // 0x0102 = 258 = 23*11 + 5
        assert_eq!(g.scalar_from_le_bytes(&[0x02, 0x01]), ToyScalar(258 % 11));
    }
}
