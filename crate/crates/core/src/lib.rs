//! Deterministic simulation core for prudent, certificate-decoupled chained BFT
//! consensus.
//!
//! The crate is `no_std` (it only needs `alloc`) and contains everything that is
//! pure protocol or simulation logic:
//!
//! * [`types`], [`rank`], [`store`] and [`codec`]: blocks, votes, certificates,
//!   the block ranking rules, the per-replica block store and the canonical byte
//!   encoding used for digests and signatures.
//! * [`crypto`]: a keyed-digest signature scheme behind a pluggable trait.
//! * [`validation`]: explicit (self-contained) block validity and the recursive
//!   traceback validation with equivocation and prudence detection.
//! * [`replica`]: the replica state machine for the prudent protocol, its
//!   vote-broadcast/boost-commit variant and the comparison baselines.
//! * [`baselines`]: commit rules and validation used by Fast-HotStuff, Chained
//!   HotStuff and the naive (non-traceback) validator.
//! * [`sim`]: the discrete-event network, fault plans, adversary scripts and the
//!   trace all properties are checked against.
//!
//! File formats, the experiment harness and the CLI live in the `pbeegees-lab`
//! crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod codec;
pub mod crypto;
pub mod error;
pub mod rank;
pub mod replica;
pub mod sim;
pub mod store;
pub mod types;
pub mod validation;

#[cfg(test)]
pub(crate) mod testkit;

pub use error::{CertError, ChainError, ReplicaError, SimError, ValidationError};
pub use types::{
    Block, BlockId, Committee, Origin, QuorumCert, ReplicaId, TimeoutCert, TimeoutMsg, View,
    Vote, VoteType,
};
