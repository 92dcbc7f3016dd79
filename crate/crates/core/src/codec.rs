//! Canonical byte encoding for signing and digesting.
//!
//! Integers are big-endian and fixed width, variable-length fields carry a `u32`
//! length prefix, optional fields a one-byte presence tag, and every top-level
//! payload starts with a domain string so a signature over one kind of message
//! never verifies as another.

use alloc::vec::Vec;

use crate::crypto::{digest, Signature};
use crate::types::{
    Block, BlockContents, BlockId, Origin, QuorumCert, ReplicaId, TimeoutCert, TimeoutMsg, View,
    Vote, VoteType,
};

const VOTE_DOMAIN: &[u8] = b"pbg/vote/v1";
const TIMEOUT_DOMAIN: &[u8] = b"pbg/timeout/v1";
const BLOCK_DOMAIN: &[u8] = b"pbg/block/v1";
const TC_DOMAIN: &[u8] = b"pbg/tc/v1";
const TMO_SET_DOMAIN: &[u8] = b"pbg/tmo-set/v1";

/// Appends the canonical encoding of `self` to a buffer.
pub trait Encode {
    fn encode(&self, out: &mut Vec<u8>);

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }
}

fn put_u8(out: &mut Vec<u8>, x: u8) {
    out.push(x);
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_be_bytes());
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_be_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

impl Encode for ReplicaId {
    fn encode(&self, out: &mut Vec<u8>) {
        put_u32(out, self.0);
    }
}

impl Encode for View {
    fn encode(&self, out: &mut Vec<u8>) {
        put_u64(out, self.0);
    }
}

impl Encode for BlockId {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Encode for VoteType {
    fn encode(&self, out: &mut Vec<u8>) {
        put_u8(out, self.code());
    }
}

impl Encode for Origin {
    fn encode(&self, out: &mut Vec<u8>) {
        put_u8(
            out,
            match self {
                Origin::ByVotes => 0,
                Origin::ByTimeout => 1,
            },
        );
    }
}

impl Encode for Signature {
    fn encode(&self, out: &mut Vec<u8>) {
        self.signer.encode(out);
        out.extend_from_slice(&self.payload_digest);
        out.extend_from_slice(&self.tag);
    }
}

impl Encode for Vote {
    fn encode(&self, out: &mut Vec<u8>) {
        self.voter.encode(out);
        self.view.encode(out);
        self.block.encode(out);
        self.vtype.encode(out);
        self.sig.encode(out);
    }
}

impl Encode for QuorumCert {
    fn encode(&self, out: &mut Vec<u8>) {
        self.view().encode(out);
        self.block().encode(out);
        self.qtype().encode(out);
        put_u32(out, self.votes().len() as u32);
        for vote in self.votes() {
            vote.encode(out);
        }
    }
}

/// The embedded high-vote block is referenced by identity; its contents are
/// covered by that identity.
impl Encode for TimeoutMsg {
    fn encode(&self, out: &mut Vec<u8>) {
        self.sender.encode(out);
        self.view.encode(out);
        self.high_vote.id().encode(out);
        self.sig.encode(out);
    }
}

impl Encode for TimeoutCert {
    fn encode(&self, out: &mut Vec<u8>) {
        self.view().encode(out);
        put_u32(out, self.msgs().len() as u32);
        for msg in self.msgs() {
            msg.encode(out);
        }
    }
}

impl Encode for Block {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id().encode(out);
        out.extend_from_slice(&block_header(self.contents()));
        self.qc().encode(out);
        match self.tc() {
            Some(tc) => {
                put_u8(out, 1);
                tc.encode(out);
            }
            None => put_u8(out, 0),
        }
        match self.tmo_set() {
            Some(set) => {
                put_u8(out, 1);
                put_u32(out, set.len() as u32);
                for msg in set {
                    msg.encode(out);
                }
            }
            None => put_u8(out, 0),
        }
        put_bytes(out, self.payload());
        self.sig().encode(out);
    }
}

pub fn vote_payload(voter: ReplicaId, view: View, block: BlockId, vtype: VoteType) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    put_bytes(&mut out, VOTE_DOMAIN);
    voter.encode(&mut out);
    view.encode(&mut out);
    block.encode(&mut out);
    vtype.encode(&mut out);
    out
}

pub fn timeout_payload(sender: ReplicaId, view: View, high_vote: BlockId) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    put_bytes(&mut out, TIMEOUT_DOMAIN);
    sender.encode(&mut out);
    view.encode(&mut out);
    high_vote.encode(&mut out);
    out
}

/// Bytes hashed into a timeout certificate's digest.
pub fn tc_summary(tc: &TimeoutCert) -> Vec<u8> {
    let mut out = Vec::new();
    put_bytes(&mut out, TC_DOMAIN);
    tc.encode(&mut out);
    out
}

fn tmo_set_digest(set: &[alloc::sync::Arc<TimeoutMsg>]) -> [u8; 32] {
    let mut out = Vec::new();
    put_bytes(&mut out, TMO_SET_DOMAIN);
    put_u32(&mut out, set.len() as u32);
    for msg in set {
        msg.encode(&mut out);
    }
    digest(&out)
}

/// The header a block identity is computed from: proposer, view, parent, QC
/// reference, certified block, TC digest, timeout-set digest, hollow-chain
/// counter, payload digest and origin.
pub fn block_header(contents: &BlockContents) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    put_bytes(&mut out, BLOCK_DOMAIN);
    contents.proposer.encode(&mut out);
    contents.view.encode(&mut out);
    contents.parent.encode(&mut out);
    contents.qc.view().encode(&mut out);
    contents.qc.block().encode(&mut out);
    contents.qc.qtype().encode(&mut out);
    contents.qc.block().encode(&mut out);
    match &contents.tc {
        Some(tc) => {
            put_u8(&mut out, 1);
            out.extend_from_slice(&tc.digest());
        }
        None => put_u8(&mut out, 0),
    }
    match &contents.tmo_set {
        Some(set) => {
            put_u8(&mut out, 1);
            out.extend_from_slice(&tmo_set_digest(set));
        }
        None => put_u8(&mut out, 0),
    }
    put_u32(&mut out, contents.cnt_tmo);
    out.extend_from_slice(&digest(&contents.payload));
    contents.origin().encode(&mut out);
    out
}
