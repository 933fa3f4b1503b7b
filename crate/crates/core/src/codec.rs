//! Bit-exact wire formats for the two multicast packet types, the header
//! digest, and the signature scheme interface with its deterministic mock.
//!
//! Layouts (all integers big-endian):
//!
//! ```text
//! block header, 80 bytes
//!   0..4    version          u32
//!   4..36   parent_hash      256-bit digest
//!   36..68  merkle_root      256-bit opaque commitment
//!   68..72  timestamp        u32
//!   72..76  difficulty_bits  u32
//!   76..80  nonce            u32
//!
//! signature, 64 bytes
//!   0..2    server_id        u16
//!   2..10   height           u64
//!   10..64  tag              432-bit signature material
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Encoded block header length in bytes.
pub const HEADER_LEN: usize = 80;
/// Encoded signature packet length in bytes.
pub const SIGNATURE_LEN: usize = 64;
/// Signature tag length in bytes (432 bits).
pub const TAG_LEN: usize = 54;

/// Block packet length in bits, as used by the analytical model.
pub const HEADER_BITS: u32 = (HEADER_LEN * 8) as u32;
/// Signature packet length in bits, as used by the analytical model.
pub const SIGNATURE_BITS: u32 = (SIGNATURE_LEN * 8) as u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("server {0} is not in the key table")]
    UnknownServer(u16),
}

/// 256-bit digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest(")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// 432-bit signature tag.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag(pub [u8; TAG_LEN]);

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag(")?;
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

// First four SHA-512 initial hash values.
const IV: [u64; 4] = [
    0x6a09_e667_f3bc_c908,
    0xbb67_ae85_84ca_a73b,
    0x3c6e_f372_fe94_f82b,
    0xa54f_f53a_5f1d_36f1,
];

#[inline]
fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Non-cryptographic 256-bit digest over arbitrary bytes.
///
/// The input is zero-padded to whole 64-bit big-endian words and followed by
/// a word holding the byte length. Word `n` is folded into lane `n % 4` with
/// `lane = mix64(lane ^ word)`, then added into the next lane. Four
/// finalization rounds set `lane[i] = mix64(lane[i] ^ rotl(lane[i+1], 23) ^
/// lane[i+3])`. Each step is a bijection of the state for fixed other
/// inputs, so inputs of equal length that differ in one word always produce
/// different digests. The output is the four lanes, big-endian.
pub fn digest256(input: &[u8]) -> Digest {
    let mut lanes = IV;
    let mut absorb = |n: usize, word: u64| {
        let i = n % 4;
        lanes[i] = mix64(lanes[i] ^ word);
        lanes[(i + 1) % 4] = lanes[(i + 1) % 4].wrapping_add(lanes[i]);
    };
    let mut n = 0;
    for chunk in input.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        absorb(n, u64::from_be_bytes(word));
        n += 1;
    }
    absorb(n, input.len() as u64);
    for _ in 0..4 {
        for i in 0..4 {
            lanes[i] = mix64(lanes[i] ^ lanes[(i + 1) % 4].rotate_left(23) ^ lanes[(i + 3) % 4]);
        }
    }
    let mut out = [0u8; 32];
    for (dst, lane) in out.chunks_exact_mut(8).zip(lanes) {
        dst.copy_from_slice(&lane.to_be_bytes());
    }
    Digest(out)
}

/// Block header in Bitcoin's 80-byte layout. Apart from `parent_hash`, the
/// fields are opaque to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct WireBlockHeader {
    pub version: u32,
    pub parent_hash: Digest,
    pub merkle_root: [u8; 32],
    pub timestamp: u32,
    pub difficulty_bits: u32,
    pub nonce: u32,
}

impl WireBlockHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&self.version.to_be_bytes());
        out[4..36].copy_from_slice(&self.parent_hash.0);
        out[36..68].copy_from_slice(&self.merkle_root);
        out[68..72].copy_from_slice(&self.timestamp.to_be_bytes());
        out[72..76].copy_from_slice(&self.difficulty_bits.to_be_bytes());
        out[76..80].copy_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let bytes: &[u8; HEADER_LEN] = bytes.try_into().map_err(|_| CodecError::BadLength {
            expected: HEADER_LEN,
            actual: bytes.len(),
        })?;
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let mut parent = [0u8; 32];
        parent.copy_from_slice(&bytes[4..36]);
        let mut merkle_root = [0u8; 32];
        merkle_root.copy_from_slice(&bytes[36..68]);
        Ok(WireBlockHeader {
            version: u32_at(0),
            parent_hash: Digest(parent),
            merkle_root,
            timestamp: u32_at(68),
            difficulty_bits: u32_at(72),
            nonce: u32_at(76),
        })
    }
}

/// Digest of the 80-byte header encoding.
pub fn header_digest(header: &WireBlockHeader) -> Digest {
    digest256(&header.encode())
}

/// Signature packet: one server's signature over the header at `height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WireSignature {
    pub server_id: u16,
    pub height: u64,
    pub tag: Tag,
}

impl WireSignature {
    pub fn encode(&self) -> [u8; SIGNATURE_LEN] {
        let mut out = [0u8; SIGNATURE_LEN];
        out[0..2].copy_from_slice(&self.server_id.to_be_bytes());
        out[2..10].copy_from_slice(&self.height.to_be_bytes());
        out[10..].copy_from_slice(&self.tag.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let bytes: &[u8; SIGNATURE_LEN] = bytes.try_into().map_err(|_| CodecError::BadLength {
            expected: SIGNATURE_LEN,
            actual: bytes.len(),
        })?;
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&bytes[10..]);
        Ok(WireSignature {
            server_id: u16::from_be_bytes([bytes[0], bytes[1]]),
            height: u64::from_be_bytes(bytes[2..10].try_into().unwrap()),
            tag: Tag(tag),
        })
    }
}

/// Signs and verifies header digests on behalf of servers `1..=V`.
///
/// Implementations own their key material; callers only name the server.
pub trait SignatureScheme {
    fn sign(&self, server_id: u16, digest: &Digest) -> Result<Tag, CodecError>;

    /// `false` for unknown servers as well as for bad tags.
    fn verify(&self, server_id: u16, digest: &Digest, tag: &Tag) -> bool;
}

/// Deterministic keyed-digest stand-in for public-key signatures.
///
/// Server `i` has secret `digest256("repauth-mock-key" ‖ key_seed ‖ i)` with
/// `key_seed` as u64 and `i` as u16, both big-endian. A tag is the first 54
/// bytes of `digest256(secret ‖ digest ‖ 0x00) ‖ digest256(secret ‖ digest ‖ 0x01)`.
/// Verification recomputes the tag, so "public" and secret keys coincide.
#[derive(Debug, Clone)]
pub struct MockScheme {
    secrets: Vec<Digest>,
}

impl MockScheme {
    /// Key table for servers `1..=servers`.
    pub fn new(servers: u16, key_seed: u64) -> Self {
        let secrets = (1..=servers)
            .map(|id| {
                let mut buf = Vec::with_capacity(26);
                buf.extend_from_slice(b"repauth-mock-key");
                buf.extend_from_slice(&key_seed.to_be_bytes());
                buf.extend_from_slice(&id.to_be_bytes());
                digest256(&buf)
            })
            .collect();
        MockScheme { secrets }
    }

    pub fn servers(&self) -> u16 {
        self.secrets.len() as u16
    }

    fn secret(&self, server_id: u16) -> Option<&Digest> {
        (server_id as usize)
            .checked_sub(1)
            .and_then(|i| self.secrets.get(i))
    }

    fn tag_with(secret: &Digest, digest: &Digest) -> Tag {
        let mut buf = [0u8; 65];
        buf[..32].copy_from_slice(&secret.0);
        buf[32..64].copy_from_slice(&digest.0);
        let lo = digest256(&buf);
        buf[64] = 1;
        let hi = digest256(&buf);
        let mut tag = [0u8; TAG_LEN];
        tag[..32].copy_from_slice(&lo.0);
        tag[32..].copy_from_slice(&hi.0[..TAG_LEN - 32]);
        Tag(tag)
    }
}

impl SignatureScheme for MockScheme {
    fn sign(&self, server_id: u16, digest: &Digest) -> Result<Tag, CodecError> {
        let secret = self
            .secret(server_id)
            .ok_or(CodecError::UnknownServer(server_id))?;
        Ok(Self::tag_with(secret, digest))
    }

    fn verify(&self, server_id: u16, digest: &Digest, tag: &Tag) -> bool {
        match self.secret(server_id) {
            Some(secret) => Self::tag_with(secret, digest) == *tag,
            None => false,
        }
    }
}

/// `MockScheme::sign` as a free function.
pub fn mock_sign(scheme: &MockScheme, server_id: u16, digest: &Digest) -> Result<Tag, CodecError> {
    scheme.sign(server_id, digest)
}

/// `MockScheme::verify` as a free function.
pub fn mock_verify(scheme: &MockScheme, server_id: u16, digest: &Digest, tag: &Tag) -> bool {
    scheme.verify(server_id, digest, tag)
}
