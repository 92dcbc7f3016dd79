//! Signatures for the simulator.
//!
//! The default [`KeyedDigest`] scheme tags a message with `H(secret || message)`.
//! Verification goes through a [`KeyRing`], which holds the scheme and the public
//! keys but never hands out secrets, so code that only owns its own [`KeyPair`]
//! (adversary scripts included) has no way to produce a tag for another replica.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::types::ReplicaId;

pub type Digest = [u8; 32];

pub fn digest(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

pub fn digest_parts(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer: ReplicaId,
    pub payload_digest: Digest,
    pub tag: Digest,
}

impl Signature {
    /// Placeholder carried by synthetic objects (genesis) that are never verified.
    pub fn synthetic(signer: ReplicaId) -> Self {
        Signature {
            signer,
            payload_digest: [0; 32],
            tag: [0; 32],
        }
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Sig({}, {:02x}{:02x}{:02x}{:02x})",
            self.signer, self.tag[0], self.tag[1], self.tag[2], self.tag[3]
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub replica: ReplicaId,
    pub fingerprint: Digest,
}

/// A replica's signing key. Deliberately neither `Clone` nor `Debug`-printable.
pub struct KeyPair {
    replica: ReplicaId,
    secret: [u8; 32],
    public: PublicKey,
}

impl KeyPair {
    pub fn replica(&self) -> ReplicaId {
        self.replica
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    /// Raw secret material, for alternative [`SignatureScheme`] implementations.
    pub fn secret(&self) -> &[u8; 32] {
        &self.secret
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("replica", &self.replica)
            .finish_non_exhaustive()
    }
}

pub trait SignatureScheme: Send + Sync {
    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature;
    fn verify(&self, public: &PublicKey, message: &[u8], sig: &Signature) -> bool;
}

/// Keyed-digest simulation of a signature scheme.
pub struct KeyedDigest {
    secrets: BTreeMap<ReplicaId, [u8; 32]>,
}

fn keyed_tag(secret: &[u8; 32], message: &[u8]) -> Digest {
    digest_parts(&[b"pbg/sig", secret, message])
}

fn fingerprint(secret: &[u8; 32]) -> Digest {
    digest_parts(&[b"pbg/pk", secret])
}

impl SignatureScheme for KeyedDigest {
    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature {
        Signature {
            signer: key.replica,
            payload_digest: digest(message),
            tag: keyed_tag(&key.secret, message),
        }
    }

    fn verify(&self, public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        if sig.signer != public.replica {
            return false;
        }
        let Some(secret) = self.secrets.get(&public.replica) else {
            return false;
        };
        fingerprint(secret) == public.fingerprint
            && sig.payload_digest == digest(message)
            && sig.tag == keyed_tag(secret, message)
    }
}

/// Public verification material for a committee.
#[derive(Clone)]
pub struct KeyRing {
    scheme: Arc<dyn SignatureScheme>,
    publics: Vec<PublicKey>,
}

impl KeyRing {
    pub fn new(scheme: Arc<dyn SignatureScheme>, publics: Vec<PublicKey>) -> Self {
        KeyRing { scheme, publics }
    }

    pub fn public(&self, replica: ReplicaId) -> Option<&PublicKey> {
        self.publics.get(replica.index())
    }

    pub fn len(&self) -> usize {
        self.publics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.publics.is_empty()
    }

    pub fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature {
        self.scheme.sign(key, message)
    }

    /// Verifies `sig` against the registered key of `sig.signer`.
    pub fn verify(&self, message: &[u8], sig: &Signature) -> bool {
        match self.public(sig.signer) {
            Some(pk) => self.scheme.verify(pk, message, sig),
            None => false,
        }
    }

    pub fn verify_with(&self, public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        self.scheme.verify(public, message, sig)
    }
}

impl fmt::Debug for KeyRing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRing")
            .field("members", &self.publics.len())
            .finish_non_exhaustive()
    }
}

/// Deterministically generates one key pair per replica under the keyed-digest
/// scheme and returns the matching key ring.
pub fn generate_keys(n: usize, seed: u64) -> (KeyRing, Vec<KeyPair>) {
    let mut secrets = BTreeMap::new();
    let mut pairs = Vec::with_capacity(n);
    let mut publics = Vec::with_capacity(n);
    for i in 0..n {
        let replica = ReplicaId(i as u32);
        let secret = digest_parts(&[
            b"pbg/keygen",
            &seed.to_be_bytes(),
            &(i as u64).to_be_bytes(),
        ]);
        let public = PublicKey {
            replica,
            fingerprint: fingerprint(&secret),
        };
        secrets.insert(replica, secret);
        publics.push(public);
        pairs.push(KeyPair {
            replica,
            secret,
            public,
        });
    }
    let scheme: Arc<dyn SignatureScheme> = Arc::new(KeyedDigest { secrets });
    (KeyRing::new(scheme, publics), pairs)
}
