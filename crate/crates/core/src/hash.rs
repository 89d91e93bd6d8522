//! The single hash function of the protocol and its canonical encoding.
//!
//! Every digest in the system (transaction ids, block digests, commitments,
//! beacons, lottery draws) comes out of [`HashDigest::of`], which is SHA-256.
//! Structured values are hashed through an [`Encoder`]: fields are written in
//! declaration order, integers big-endian at fixed width, digests raw, and
//! every variable-length field is prefixed with its `u32` length.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

/// 256-bit opaque digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HashDigest(pub [u8; 32]);

impl HashDigest {
    pub const ZERO: HashDigest = HashDigest([0u8; 32]);
    pub const BITS: u32 = 256;

    pub fn of(bytes: &[u8]) -> Self {
        let out = Sha256::digest(bytes);
        let mut buf = [0u8; 32];
        buf.copy_from_slice(&out);
        HashDigest(buf)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut buf = [0u8; 32];
        hex::decode_to_slice(s, &mut buf).ok()?;
        Some(HashDigest(buf))
    }

    /// Flip one bit, used by tamper tests.
    pub fn with_bit_flipped(mut self, bit: usize) -> Self {
        self.0[(bit / 8) % 32] ^= 1 << (bit % 8);
        self
    }
}

impl fmt::Debug for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..16])
    }
}

impl fmt::Display for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Length-prefixed canonical serializer.
#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts with a domain tag so digests of different record types never collide.
    pub fn tagged(tag: &str) -> Self {
        let mut enc = Self::new();
        enc.bytes(tag.as_bytes());
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u128(&mut self, v: u128) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn digest(&mut self, d: &HashDigest) -> &mut Self {
        self.buf.extend_from_slice(&d.0);
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    /// Writes the element count of a list; elements follow.
    pub fn len(&mut self, n: usize) -> &mut Self {
        self.u32(n as u32)
    }

    pub fn option<T>(&mut self, v: Option<&T>, f: impl FnOnce(&mut Self, &T)) -> &mut Self {
        match v {
            None => {
                self.u8(0);
            }
            Some(x) => {
                self.u8(1);
                f(self, x);
            }
        }
        self
    }

    pub fn put<T: Canonical + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn digest_of(&self) -> HashDigest {
        HashDigest::of(&self.buf)
    }
}

/// Types with a canonical byte form.
pub trait Canonical {
    fn encode(&self, enc: &mut Encoder);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn canonical_digest(&self) -> HashDigest {
        HashDigest::of(&self.canonical_bytes())
    }
}

impl Canonical for HashDigest {
    fn encode(&self, enc: &mut Encoder) {
        enc.digest(self);
    }
}

impl Canonical for [u8] {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self);
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.len(self.len());
        for item in self {
            item.encode(enc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            HashDigest::of(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn length_prefix_separates_fields() {
        let mut a = Encoder::new();
        a.bytes(b"ab").bytes(b"c");
        let mut b = Encoder::new();
        b.bytes(b"a").bytes(b"bc");
        assert_ne!(a.digest_of(), b.digest_of());
    }

    #[test]
    fn hex_round_trip() {
        let d = HashDigest::of(b"w1");
        assert_eq!(HashDigest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(HashDigest::from_hex("zz"), None);
    }
}
