//! Golden vectors for the wire formats and digest.
//!
//! `tests/fixtures/golden.hex` holds one `name hex` pair per line. Run with
//! `REPAUTH_REGEN_GOLDEN=1` to rewrite it after an intentional format change.

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use repauth::chain::{build_chain, verify_link, BlockHeader};
use repauth::codec::{
    digest256, header_digest, CodecError, Digest, MockScheme, SignatureScheme, Tag,
    WireBlockHeader, WireSignature, HEADER_LEN, SIGNATURE_LEN, TAG_LEN,
};

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden.hex")
}

fn sample_header() -> WireBlockHeader {
    let mut merkle_root = [0u8; 32];
    for (i, b) in merkle_root.iter_mut().enumerate() {
        *b = i as u8;
    }
    WireBlockHeader {
        version: 0x2000_0000,
        parent_hash: Digest([0xab; 32]),
        merkle_root,
        timestamp: 1_231_006_505,
        difficulty_bits: 0x1d00_ffff,
        nonce: 2_083_236_893,
    }
}

fn vectors() -> BTreeMap<&'static str, Vec<u8>> {
    let zero = WireBlockHeader::default();
    let sample = sample_header();
    let scheme = MockScheme::new(20, 42);
    let tag = scheme.sign(1, &header_digest(&sample)).unwrap();
    let sig = WireSignature {
        server_id: 1,
        height: 0x0102_0304_0506_0708,
        tag,
    };
    let chain = build_chain(3);
    let mut v = BTreeMap::new();
    v.insert("digest_empty", digest256(&[]).0.to_vec());
    v.insert("digest_abc", digest256(b"abc").0.to_vec());
    v.insert("zero_header_encoding", zero.encode().to_vec());
    v.insert("zero_header_digest", header_digest(&zero).0.to_vec());
    v.insert("sample_header_encoding", sample.encode().to_vec());
    v.insert("sample_header_digest", header_digest(&sample).0.to_vec());
    v.insert("mock_tag_server1_seed42", tag.0.to_vec());
    v.insert("signature_encoding", sig.encode().to_vec());
    v.insert("chain_genesis_digest", chain[0].hash().0.to_vec());
    v.insert("chain_block2_digest", chain[2].hash().0.to_vec());
    v
}

fn load() -> BTreeMap<String, String> {
    std::fs::read_to_string(fixture_path())
        .expect("golden fixture present")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, value) = l.split_once(' ').expect("`name hex` line");
            (name.to_string(), value.trim().to_string())
        })
        .collect()
}

#[test]
fn golden_vectors_are_stable() {
    let computed = vectors();
    if std::env::var_os("REPAUTH_REGEN_GOLDEN").is_some() {
        let mut out = String::from("# name hex\n");
        for (name, bytes) in &computed {
            out.push_str(&format!("{name} {}\n", hex::encode(bytes)));
        }
        std::fs::write(fixture_path(), out).unwrap();
    }
    let stored = load();
    assert_eq!(stored.len(), computed.len());
    for (name, bytes) in &computed {
        assert_eq!(stored.get(*name), Some(&hex::encode(bytes)), "{name}");
    }
}

#[test]
fn golden_encodings_decode_back() {
    let stored = load();
    let header = hex::decode(&stored["sample_header_encoding"]).unwrap();
    assert_eq!(header.len(), HEADER_LEN);
    assert_eq!(WireBlockHeader::decode(&header).unwrap(), sample_header());
    let sig = hex::decode(&stored["signature_encoding"]).unwrap();
    assert_eq!(sig.len(), SIGNATURE_LEN);
    let decoded = WireSignature::decode(&sig).unwrap();
    assert_eq!(decoded.height, 0x0102_0304_0506_0708);
    let scheme = MockScheme::new(20, 42);
    assert!(scheme.verify(1, &header_digest(&sample_header()), &decoded.tag));
}

#[test]
fn decode_rejects_every_wrong_length() {
    for len in (0..200).filter(|&l| l != HEADER_LEN) {
        assert!(matches!(
            WireBlockHeader::decode(&vec![0; len]),
            Err(CodecError::BadLength { expected: 80, .. })
        ));
    }
    for len in (0..200).filter(|&l| l != SIGNATURE_LEN) {
        assert!(WireSignature::decode(&vec![0; len]).is_err());
    }
}

fn arb_header() -> impl Strategy<Value = WireBlockHeader> {
    (
        any::<u32>(),
        any::<[u8; 32]>(),
        any::<[u8; 32]>(),
        any::<u32>(),
        any::<u32>(),
        any::<u32>(),
    )
        .prop_map(
            |(version, parent, merkle_root, timestamp, difficulty_bits, nonce)| WireBlockHeader {
                version,
                parent_hash: Digest(parent),
                merkle_root,
                timestamp,
                difficulty_bits,
                nonce,
            },
        )
}

fn arb_signature() -> impl Strategy<Value = WireSignature> {
    (
        any::<u16>(),
        any::<u64>(),
        proptest::collection::vec(any::<u8>(), TAG_LEN),
    )
        .prop_map(|(server_id, height, tag)| WireSignature {
            server_id,
            height,
            tag: Tag(tag.try_into().unwrap()),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn header_roundtrip(h in arb_header()) {
        let bytes = h.encode();
        prop_assert_eq!(bytes.len(), 80);
        prop_assert_eq!(WireBlockHeader::decode(&bytes).unwrap(), h);
    }

    #[test]
    fn signature_roundtrip(s in arb_signature()) {
        let bytes = s.encode();
        prop_assert_eq!(bytes.len(), 64);
        prop_assert_eq!(WireSignature::decode(&bytes).unwrap(), s);
    }
}

proptest! {
    #[test]
    fn one_bit_flip_changes_digest(h in arb_header(), bit in 0usize..640) {
        let mut bytes = h.encode();
        let before = digest256(&bytes);
        bytes[bit / 8] ^= 1 << (bit % 8);
        prop_assert_ne!(digest256(&bytes), before);
    }

    #[test]
    fn chained_headers_link(len in 2usize..40) {
        let chain = build_chain(len);
        for pair in chain.windows(2) {
            prop_assert!(verify_link(&pair[1], &pair[0]).unwrap());
            prop_assert_eq!(pair[1].parent_hash(), header_digest(pair[0].wire()));
        }
        prop_assert_eq!(chain[0], BlockHeader::genesis());
    }
}
