use thiserror::Error;

use crate::types::{BlockId, ReplicaId, View};

/// Failures of ancestry and lookup queries against a block store.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
}

/// Rejections raised while assembling a quorum or timeout certificate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("replica {0} appears more than once")]
    DuplicateSigner(ReplicaId),
    #[error("certificate mixes votes for different (view, block, type) triples")]
    MixedVotes,
    #[error("timeout messages refer to different views")]
    MixedViews,
    #[error("only {got} distinct signers, {need} required")]
    Insufficient { got: usize, need: usize },
    #[error("signer {0} is not a member of the committee")]
    UnknownSigner(ReplicaId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("malformed certificate in block {block}: {reason}")]
    MalformedCert { block: BlockId, reason: &'static str },
}

impl From<ChainError> for ValidationError {
    fn from(err: ChainError) -> Self {
        match err {
            ChainError::UnknownBlock(id) => ValidationError::UnknownBlock(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("replica {me} is not the leader of view {view} (leader is {leader})")]
    NotLeader {
        me: ReplicaId,
        view: View,
        leader: ReplicaId,
    },
    #[error("certificate for view {cert} cannot justify a proposal in view {view}")]
    StaleCertificate { cert: View, view: View },
    #[error("every timeout candidate failed validation")]
    NoValidParent,
    #[error("holding {have} usable timeout messages, {need} required")]
    AwaitingTimeouts { have: usize, need: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Cert(#[from] CertError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no progress for {window_ms} ms (stalled at t={at_ms} ms)")]
    HorizonExceeded { at_ms: u64, window_ms: u64 },
    #[error("invalid simulation config: {0}")]
    Config(&'static str),
}
