//! Header chaining and per-client authentication state.
//!
//! A client holds a prefix of the chain that is fully linked back to the
//! genesis block (its *chained tip*), possibly some later headers that do not
//! link yet because an intermediate one is missing, and the highest height
//! authenticated by a trusted signature (its *auth tip*). A signature at
//! height `g` authenticates every height `<= g` once all of `0..=g` are
//! chained, so one signature amortizes over a run of unsigned headers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::codec::{
    digest256, header_digest, CodecError, Digest, SignatureScheme, WireBlockHeader, WireSignature,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("header at height {child} cannot follow height {parent}")]
    HeightMismatch { child: u64, parent: u64 },
    #[error("header at height {height} does not link to its neighbour")]
    BadLink { height: u64 },
    #[error("signature from server {server_id} at height {height} does not verify")]
    BadSignature { server_id: u16, height: u64 },
    #[error("resync carries no headers")]
    EmptyResync,
    #[error("resync tip {tip} is behind the chained tip {chained}")]
    StaleResync { tip: u64, chained: u64 },
    #[error("registered server {0} is not in the trusted set")]
    UntrustedRegistration(u16),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// A block header together with its height and digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    height: u64,
    wire: WireBlockHeader,
    hash: Digest,
}

impl BlockHeader {
    pub fn new(height: u64, wire: WireBlockHeader) -> Self {
        BlockHeader {
            height,
            wire,
            hash: header_digest(&wire),
        }
    }

    /// Height 0 with an all-zero parent hash.
    pub fn genesis() -> Self {
        Self::new(0, Self::wire_for(0, Digest::ZERO))
    }

    /// Deterministic successor; only `parent_hash` matters to the model.
    pub fn next(&self) -> Self {
        let height = self.height + 1;
        Self::new(height, Self::wire_for(height, self.hash))
    }

    fn wire_for(height: u64, parent_hash: Digest) -> WireBlockHeader {
        WireBlockHeader {
            version: 1,
            parent_hash,
            merkle_root: digest256(&height.to_be_bytes()).0,
            timestamp: height as u32,
            difficulty_bits: 0x1d00_ffff,
            nonce: (height as u32).wrapping_mul(0x9e37_79b9),
        }
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn parent_hash(&self) -> Digest {
        self.wire.parent_hash
    }

    pub fn hash(&self) -> Digest {
        self.hash
    }

    pub fn wire(&self) -> &WireBlockHeader {
        &self.wire
    }
}

/// `len` headers starting at genesis.
pub fn build_chain(len: usize) -> Vec<BlockHeader> {
    std::iter::successors(Some(BlockHeader::genesis()), |h| Some(h.next()))
        .take(len)
        .collect()
}

/// A server's signature over the header at `height`.
pub type SignatureRecord = WireSignature;

pub fn sign_header<S: SignatureScheme>(
    scheme: &S,
    server_id: u16,
    header: &BlockHeader,
) -> Result<SignatureRecord, CodecError> {
    Ok(SignatureRecord {
        server_id,
        height: header.height,
        tag: scheme.sign(server_id, &header.hash)?,
    })
}

pub fn verify_link(child: &BlockHeader, parent: &BlockHeader) -> Result<bool, ChainError> {
    if parent.height.checked_add(1) != Some(child.height) {
        return Err(ChainError::HeightMismatch {
            child: child.height,
            parent: parent.height,
        });
    }
    Ok(child.parent_hash() == parent.hash)
}

/// Received lag `d^r` and authenticated lag `d^a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lags {
    pub received: u64,
    pub authenticated: u64,
}

/// Authentication state of one client.
#[derive(Debug, Clone)]
pub struct AuthTracker {
    trusted: BTreeSet<u16>,
    registered: u16,
    deadline: u32,
    height: u64,
    /// Digests of chained heights `chained_base..=chained_tip`.
    chained: VecDeque<Digest>,
    chained_base: u64,
    auth_tip: u64,
    /// Held headers above the chained tip that do not link yet.
    ahead: BTreeMap<u64, BlockHeader>,
    /// Trusted signatures above the chained tip, at most `deadline + 1`.
    pending: BTreeMap<u64, SignatureRecord>,
}

impl AuthTracker {
    /// A client synchronized at `start`, which counts as chained and
    /// authenticated.
    pub fn new(
        start: &BlockHeader,
        trusted: impl IntoIterator<Item = u16>,
        registered: u16,
        deadline: u32,
    ) -> Result<Self, ChainError> {
        let trusted: BTreeSet<u16> = trusted.into_iter().collect();
        if !trusted.contains(&registered) {
            return Err(ChainError::UntrustedRegistration(registered));
        }
        Ok(AuthTracker {
            trusted,
            registered,
            deadline,
            height: start.height,
            chained: VecDeque::from([start.hash]),
            chained_base: start.height,
            auth_tip: start.height,
            ahead: BTreeMap::new(),
            pending: BTreeMap::new(),
        })
    }

    pub fn trusted(&self) -> &BTreeSet<u16> {
        &self.trusted
    }

    pub fn registered_server(&self) -> u16 {
        self.registered
    }

    /// Latest chain height known to the client.
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn chained_tip(&self) -> u64 {
        self.chained_base + self.chained.len() as u64 - 1
    }

    pub fn auth_tip(&self) -> u64 {
        self.auth_tip
    }

    pub fn lags(&self) -> Lags {
        Lags {
            received: self.height - self.chained_tip(),
            authenticated: self.height - self.auth_tip,
        }
    }

    /// One-bit feedback condition: `d^a > d`.
    pub fn needs_feedback(&self, deadline: u32) -> bool {
        self.lags().authenticated > deadline as u64
    }

    /// Learns that the chain has reached `height`.
    pub fn advance_to(&mut self, height: u64) -> Lags {
        self.height = self.height.max(height);
        self.prune();
        self.lags()
    }

    fn tip_hash(&self) -> Digest {
        *self.chained.back().expect("chain window is never empty")
    }

    fn digest_at(&self, height: u64) -> Option<Digest> {
        if height <= self.chained_tip() {
            let offset = height.checked_sub(self.chained_base)?;
            self.chained.get(offset as usize).copied()
        } else {
            self.ahead.get(&height).map(|h| h.hash)
        }
    }

    /// Stores a received header and extends the chained prefix as far as
    /// possible. Headers at or below the chained tip are ignored.
    pub fn record_block<S: SignatureScheme>(
        &mut self,
        header: &BlockHeader,
        scheme: &S,
    ) -> Result<Lags, ChainError> {
        let g = header.height;
        let tip = self.chained_tip();
        if g <= tip {
            self.height = self.height.max(g);
            return Ok(self.lags());
        }
        if g == tip + 1 {
            if header.parent_hash() != self.tip_hash() {
                return Err(ChainError::BadLink { height: g });
            }
        } else {
            if let Some(parent) = self.ahead.get(&(g - 1)) {
                if parent.hash != header.parent_hash() {
                    return Err(ChainError::BadLink { height: g });
                }
            }
            if let Some(child) = self.ahead.get(&(g + 1)) {
                if child.parent_hash() != header.hash {
                    return Err(ChainError::BadLink { height: g + 1 });
                }
            }
        }
        self.height = self.height.max(g);
        self.ahead.insert(g, *header);
        self.extend_chain();
        self.apply_pending(scheme);
        self.prune();
        Ok(self.lags())
    }

    fn extend_chain(&mut self) {
        while let Some(next) = self.ahead.remove(&(self.chained_tip() + 1)) {
            if next.parent_hash() != self.tip_hash() {
                // Conflicting header that slipped in ahead of its parent.
                break;
            }
            self.chained.push_back(next.hash);
        }
    }

    fn apply_pending<S: SignatureScheme>(&mut self, scheme: &S) {
        let tip = self.chained_tip();
        while let Some(entry) = self.pending.first_entry() {
            if *entry.key() > tip {
                break;
            }
            let sig = entry.remove();
            let verified = self
                .digest_at(sig.height)
                .is_some_and(|digest| scheme.verify(sig.server_id, &digest, &sig.tag));
            if verified {
                self.auth_tip = self.auth_tip.max(sig.height);
            }
        }
    }

    /// Applies a signature. Signatures from servers outside the trusted set
    /// are verified when the signed header is held and then dropped.
    /// Trusted signatures above the chained tip wait until the gap closes.
    pub fn record_signature<S: SignatureScheme>(
        &mut self,
        sig: &SignatureRecord,
        scheme: &S,
    ) -> Result<Lags, ChainError> {
        let bad = ChainError::BadSignature {
            server_id: sig.server_id,
            height: sig.height,
        };
        let digest = self.digest_at(sig.height);
        if let Some(digest) = digest {
            if !scheme.verify(sig.server_id, &digest, &sig.tag) {
                return Err(bad);
            }
        }
        if !self.trusted.contains(&sig.server_id) {
            return Ok(self.lags());
        }
        self.height = self.height.max(sig.height);
        if sig.height <= self.chained_tip() {
            if digest.is_some() {
                self.auth_tip = self.auth_tip.max(sig.height);
            }
        } else {
            self.pending.insert(sig.height, *sig);
            while self.pending.len() > self.deadline as usize + 1 {
                self.pending.pop_first();
            }
        }
        self.prune();
        Ok(self.lags())
    }

    /// Replaces the recent history with the base station's copy of the
    /// newest headers plus one signature over the last of them.
    pub fn resync<S: SignatureScheme>(
        &mut self,
        headers: &[BlockHeader],
        sig: &SignatureRecord,
        scheme: &S,
    ) -> Result<Lags, ChainError> {
        let (first, newest) = match (headers.first(), headers.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(ChainError::EmptyResync),
        };
        for pair in headers.windows(2) {
            if !verify_link(&pair[1], &pair[0])? {
                return Err(ChainError::BadLink {
                    height: pair[1].height,
                });
            }
        }
        let bad = ChainError::BadSignature {
            server_id: sig.server_id,
            height: sig.height,
        };
        if sig.height != newest.height
            || !self.trusted.contains(&sig.server_id)
            || !scheme.verify(sig.server_id, &newest.hash, &sig.tag)
        {
            return Err(bad);
        }
        if newest.height < self.chained_tip() {
            return Err(ChainError::StaleResync {
                tip: newest.height,
                chained: self.chained_tip(),
            });
        }
        if let Some(parent) = first.height.checked_sub(1) {
            if parent <= self.chained_tip() {
                if let Some(held) = self.digest_at(parent) {
                    if held != first.parent_hash() {
                        return Err(ChainError::BadLink {
                            height: first.height,
                        });
                    }
                }
            }
        }

        self.chained = headers.iter().map(|h| h.hash).collect();
        self.chained_base = first.height;
        self.auth_tip = newest.height;
        self.height = self.height.max(newest.height);
        self.ahead = self.ahead.split_off(&(newest.height + 1));
        self.pending = self.pending.split_off(&(newest.height + 1));
        self.extend_chain();
        self.apply_pending(scheme);
        self.prune();
        Ok(self.lags())
    }

    // Authenticated heights older than h - d - 1 are no longer needed.
    fn prune(&mut self) {
        let keep_from = self
            .auth_tip
            .min(self.height.saturating_sub(self.deadline as u64 + 1));
        while self.chained_base < keep_from && self.chained.len() > 1 {
            self.chained.pop_front();
            self.chained_base += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::MockScheme;

    fn setup(len: usize) -> (Vec<BlockHeader>, MockScheme) {
        (build_chain(len), MockScheme::new(4, 99))
    }

    fn tracker(chain: &[BlockHeader], d: u32) -> AuthTracker {
        AuthTracker::new(&chain[0], [1, 2], 1, d).unwrap()
    }

    #[test]
    fn genesis_has_zero_parent() {
        let g = BlockHeader::genesis();
        assert_eq!(g.height(), 0);
        assert_eq!(g.parent_hash(), Digest::ZERO);
    }

    #[test]
    fn verify_link_cases() {
        let chain = build_chain(3);
        assert_eq!(verify_link(&chain[1], &chain[0]), Ok(true));
        let mut wire = *chain[2].wire();
        wire.parent_hash.0[0] ^= 1;
        let corrupted = BlockHeader::new(2, wire);
        assert_eq!(verify_link(&corrupted, &chain[1]), Ok(false));
        assert!(matches!(
            verify_link(&chain[2], &chain[0]),
            Err(ChainError::HeightMismatch {
                child: 2,
                parent: 0
            })
        ));
    }

    #[test]
    fn generated_chain_links_pairwise() {
        let chain = build_chain(10);
        for pair in chain.windows(2) {
            assert_eq!(verify_link(&pair[1], &pair[0]), Ok(true));
        }
    }

    #[test]
    fn registration_must_be_trusted() {
        let chain = build_chain(1);
        assert_eq!(
            AuthTracker::new(&chain[0], [2], 1, 4).unwrap_err(),
            ChainError::UntrustedRegistration(1)
        );
    }

    #[test]
    fn gap_blocks_do_not_chain() {
        let (chain, scheme) = setup(4);
        let mut t = tracker(&chain, 10);
        t.record_block(&chain[1], &scheme).unwrap();
        t.record_block(&chain[3], &scheme).unwrap();
        assert_eq!(t.chained_tip(), 1);
        assert_eq!(
            t.lags(),
            Lags {
                received: 2,
                authenticated: 3
            }
        );
        t.record_block(&chain[2], &scheme).unwrap();
        assert_eq!(t.chained_tip(), 3);
    }

    #[test]
    fn bad_link_is_rejected() {
        let (chain, scheme) = setup(3);
        let mut t = tracker(&chain, 10);
        t.record_block(&chain[1], &scheme).unwrap();
        let mut wire = *chain[2].wire();
        wire.parent_hash = Digest([9; 32]);
        let forged = BlockHeader::new(2, wire);
        assert_eq!(
            t.record_block(&forged, &scheme),
            Err(ChainError::BadLink { height: 2 })
        );
        assert_eq!(t.chained_tip(), 1);
    }

    #[test]
    fn bad_link_against_buffered_child() {
        let (chain, scheme) = setup(4);
        let mut t = tracker(&chain, 10);
        t.record_block(&chain[3], &scheme).unwrap();
        let forged = BlockHeader::new(2, WireBlockHeader::default());
        assert_eq!(
            t.record_block(&forged, &scheme),
            Err(ChainError::BadLink { height: 3 })
        );
    }

    #[test]
    fn signature_authenticates_chained_prefix() {
        let (chain, scheme) = setup(6);
        let mut t = tracker(&chain, 10);
        for h in &chain[1..=5] {
            t.record_block(h, &scheme).unwrap();
        }
        assert_eq!(
            t.lags(),
            Lags {
                received: 0,
                authenticated: 5
            }
        );
        let sig = sign_header(&scheme, 2, &chain[4]).unwrap();
        assert_eq!(
            t.record_signature(&sig, &scheme).unwrap(),
            Lags {
                received: 0,
                authenticated: 1
            }
        );
    }

    #[test]
    fn untrusted_signature_has_no_effect() {
        let (chain, scheme) = setup(3);
        let mut t = tracker(&chain, 10);
        t.record_block(&chain[1], &scheme).unwrap();
        let before = t.lags();
        let sig = sign_header(&scheme, 3, &chain[1]).unwrap();
        assert_eq!(t.record_signature(&sig, &scheme).unwrap(), before);
        assert_eq!(t.auth_tip(), 0);
    }

    #[test]
    fn forged_signature_is_rejected() {
        let (chain, scheme) = setup(3);
        let mut t = tracker(&chain, 10);
        t.record_block(&chain[1], &scheme).unwrap();
        let mut sig = sign_header(&scheme, 1, &chain[1]).unwrap();
        sig.tag.0[0] ^= 0x80;
        assert_eq!(
            t.record_signature(&sig, &scheme),
            Err(ChainError::BadSignature {
                server_id: 1,
                height: 1
            })
        );
        // an untrusted server's bad tag is still caught when the header is held
        let mut sig = sign_header(&scheme, 4, &chain[1]).unwrap();
        sig.tag.0[3] ^= 1;
        assert!(t.record_signature(&sig, &scheme).is_err());
    }

    #[test]
    fn early_signature_is_buffered_until_chain_closes() {
        let (chain, scheme) = setup(4);
        let mut t = tracker(&chain, 10);
        t.record_block(&chain[1], &scheme).unwrap();
        let sig = sign_header(&scheme, 1, &chain[3]).unwrap();
        t.record_signature(&sig, &scheme).unwrap();
        assert_eq!(t.auth_tip(), 0);
        t.record_block(&chain[3], &scheme).unwrap();
        assert_eq!(t.auth_tip(), 0);
        t.record_block(&chain[2], &scheme).unwrap();
        assert_eq!(t.auth_tip(), 3);
        assert_eq!(
            t.lags(),
            Lags {
                received: 0,
                authenticated: 0
            }
        );
    }

    #[test]
    fn buffered_forgery_is_dropped_when_chained() {
        let (chain, scheme) = setup(3);
        let mut t = tracker(&chain, 10);
        let mut sig = sign_header(&scheme, 1, &chain[2]).unwrap();
        sig.tag.0[10] ^= 4;
        t.record_signature(&sig, &scheme).unwrap();
        t.record_block(&chain[1], &scheme).unwrap();
        t.record_block(&chain[2], &scheme).unwrap();
        assert_eq!(t.chained_tip(), 2);
        assert_eq!(t.auth_tip(), 0);
    }

    #[test]
    fn pending_buffer_is_bounded() {
        let (chain, scheme) = setup(12);
        let mut t = tracker(&chain, 3);
        for h in &chain[2..12] {
            t.record_signature(&sign_header(&scheme, 1, h).unwrap(), &scheme)
                .unwrap();
        }
        assert_eq!(t.pending.len(), 4);
        assert_eq!(*t.pending.keys().next().unwrap(), 8);
    }

    #[test]
    fn feedback_threshold_is_strict() {
        let (chain, scheme) = setup(7);
        let mut t = tracker(&chain, 4);
        t.advance_to(4);
        assert!(!t.needs_feedback(4));
        t.advance_to(5);
        assert!(t.needs_feedback(4));
        t.record_block(&chain[1], &scheme).unwrap();
        assert!(t.needs_feedback(4));
    }

    #[test]
    fn resync_resets_lags() {
        let (chain, scheme) = setup(12);
        let d = 4;
        let mut t = tracker(&chain, d);
        t.advance_to(d as u64 + 1);
        assert!(t.needs_feedback(d));
        let window = &chain[1..=5];
        let sig = sign_header(&scheme, 1, &chain[5]).unwrap();
        assert_eq!(
            t.resync(window, &sig, &scheme).unwrap(),
            Lags {
                received: 0,
                authenticated: 0
            }
        );
        // the lag grows by at most one per period afterwards
        for h in 6..=9 {
            t.advance_to(h);
            assert!(!t.needs_feedback(d));
        }
        t.advance_to(10);
        assert!(t.needs_feedback(d));
    }

    #[test]
    fn resync_errors() {
        let (chain, scheme) = setup(8);
        let mut t = tracker(&chain, 4);
        let sig = sign_header(&scheme, 1, &chain[5]).unwrap();
        assert_eq!(t.resync(&[], &sig, &scheme), Err(ChainError::EmptyResync));
        // signature over the wrong header
        let early = sign_header(&scheme, 1, &chain[4]).unwrap();
        assert!(matches!(
            t.resync(&chain[1..=5], &early, &scheme),
            Err(ChainError::BadSignature { .. })
        ));
        // untrusted signer
        let other = sign_header(&scheme, 3, &chain[5]).unwrap();
        assert!(matches!(
            t.resync(&chain[1..=5], &other, &scheme),
            Err(ChainError::BadSignature { .. })
        ));
        // broken window
        let mut window = chain[1..=5].to_vec();
        window[2] = BlockHeader::new(3, WireBlockHeader::default());
        assert!(matches!(
            t.resync(&window, &sig, &scheme),
            Err(ChainError::BadLink { .. })
        ));
        // window that contradicts the held prefix
        let foreign = BlockHeader::new(1, WireBlockHeader::default());
        let mut fork = vec![foreign];
        for _ in 0..4 {
            let next = fork.last().unwrap().next();
            fork.push(next);
        }
        let fork_sig = sign_header(&scheme, 1, &fork[4]).unwrap();
        assert!(matches!(
            t.resync(&fork, &fork_sig, &scheme),
            Err(ChainError::BadLink { height: 1 })
        ));
    }

    #[test]
    fn stale_resync_is_rejected() {
        let (chain, scheme) = setup(8);
        let mut t = tracker(&chain, 4);
        for h in &chain[1..=6] {
            t.record_block(h, &scheme).unwrap();
        }
        let sig = sign_header(&scheme, 1, &chain[3]).unwrap();
        assert!(matches!(
            t.resync(&chain[1..=3], &sig, &scheme),
            Err(ChainError::StaleResync { .. })
        ));
    }

    #[test]
    fn resync_picks_up_buffered_headers() {
        let (chain, scheme) = setup(10);
        let mut t = tracker(&chain, 4);
        t.record_block(&chain[7], &scheme).unwrap();
        t.record_block(&chain[8], &scheme).unwrap();
        let sig = sign_header(&scheme, 1, &chain[6]).unwrap();
        t.resync(&chain[2..=6], &sig, &scheme).unwrap();
        assert_eq!(t.chained_tip(), 8);
        assert_eq!(t.auth_tip(), 6);
    }

    #[test]
    fn pruning_keeps_unauthenticated_history() {
        let (chain, scheme) = setup(40);
        let mut t = tracker(&chain, 3);
        for h in &chain[1..40] {
            t.record_block(h, &scheme).unwrap();
        }
        // nothing authenticated since genesis: nothing may be pruned
        assert_eq!(t.chained.len(), 40);
        let sig = sign_header(&scheme, 2, &chain[30]).unwrap();
        t.record_signature(&sig, &scheme).unwrap();
        assert_eq!(t.chained_base, 30);
        assert_eq!(t.chained_tip(), 39);
    }
}
