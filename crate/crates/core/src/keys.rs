//! Participant identities and the keyed-hash signature stand-in.
//!
//! A participant's public identity is `hash(secret_key)`. Signing a message is
//! `hash(secret_key ‖ message)`: deterministic, uniform and impossible to
//! compute without the secret. Nothing public can check such a signature, so
//! verification goes through a [`SignatureOracle`]; inside the single-process
//! simulator that oracle is a [`KeyRegistry`] holding every secret.

use alloc::collections::BTreeMap;
use core::fmt;
use core::str::FromStr;

use crate::hash::{Encoder, HashDigest};

/// Public key of a participant.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ParticipantId(pub HashDigest);

impl ParticipantId {
    pub fn digest(&self) -> &HashDigest {
        &self.0
    }
}

impl fmt::Debug for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P({:?})", self.0)
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl FromStr for ParticipantId {
    type Err = &'static str;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HashDigest::from_hex(s).map(ParticipantId).ok_or("bad participant id")
    }
}

impl FromStr for HashDigest {
    type Err = &'static str;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HashDigest::from_hex(s).ok_or("bad digest")
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(ParticipantId);
#[cfg(feature = "serde")]
crate::serde_util::string_serde!(HashDigest);

/// 256-bit secret. Simulation only.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SecretKey(pub [u8; 32]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl fmt::Display for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for SecretKey {
    type Err = &'static str;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HashDigest::from_hex(s).map(|d| SecretKey(d.0)).ok_or("bad secret key")
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(SecretKey);

impl SecretKey {
    pub fn public(&self) -> ParticipantId {
        ParticipantId(HashDigest::of(&self.0))
    }

    /// Deterministic signature stand-in.
    pub fn sign(&self, message: &[u8]) -> HashDigest {
        let mut enc = Encoder::tagged("sig");
        enc.digest(&HashDigest(self.0)).bytes(message);
        enc.digest_of()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Keypair {
    pub secret: SecretKey,
    pub public: ParticipantId,
}

impl Keypair {
    pub fn from_secret(secret: SecretKey) -> Self {
        Keypair {
            secret,
            public: secret.public(),
        }
    }

    /// Derives a key from arbitrary seed material.
    pub fn derive(seed: &[u8]) -> Self {
        let mut enc = Encoder::tagged("keygen");
        enc.bytes(seed);
        Self::from_secret(SecretKey(enc.digest_of().0))
    }
}

/// Checks stand-in signatures.
pub trait SignatureOracle {
    fn check(&self, signer: &ParticipantId, message: &[u8], signature: &HashDigest) -> bool;
}

/// All secrets of a simulated population, keyed by public id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyRegistry {
    secrets: BTreeMap<ParticipantId, SecretKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &Keypair) {
        self.secrets.insert(key.public, key.secret);
    }

    pub fn secret(&self, p: &ParticipantId) -> Option<&SecretKey> {
        self.secrets.get(p)
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }
}

impl FromIterator<Keypair> for KeyRegistry {
    fn from_iter<I: IntoIterator<Item = Keypair>>(iter: I) -> Self {
        let mut reg = KeyRegistry::new();
        for k in iter {
            reg.insert(&k);
        }
        reg
    }
}

impl SignatureOracle for KeyRegistry {
    fn check(&self, signer: &ParticipantId, message: &[u8], signature: &HashDigest) -> bool {
        match self.secrets.get(signer) {
            Some(secret) => secret.sign(message) == *signature,
            None => false,
        }
    }
}
