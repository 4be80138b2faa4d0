use aes::{Aes128, Aes256};
use cmac::{Cmac, Mac};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use super::{CryptoError, KeyRole, KeySize, SymmetricKey};

/// Full 16-octet CMAC output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AuthTag(pub [u8; 16]);

impl AuthTag {
    pub fn truncated(&self, len: usize) -> &[u8] {
        &self.0[..len.min(16)]
    }
}

fn cmac_raw(key: &[u8], parts: &[&[u8]]) -> [u8; 16] {
    macro_rules! run {
        ($cipher:ty) => {{
            let mut mac = <Cmac<$cipher> as Mac>::new_from_slice(key).expect("key length checked");
            for p in parts {
                mac.update(p);
            }
            mac.finalize().into_bytes().into()
        }};
    }
    match key.len() {
        16 => run!(Aes128),
        32 => run!(Aes256),
        n => panic!("CMAC key of {n} octets"),
    }
}

/// AES-CMAC over `message` (NIST SP 800-38B).
pub fn cmac_tag(key: &SymmetricKey, message: &[u8]) -> AuthTag {
    AuthTag(cmac_raw(key.material(), &[message]))
}

/// Constant-time comparison of `tag` against the recomputed CMAC prefix.
pub fn verify_tag(key: &SymmetricKey, message: &[u8], tag: &[u8]) -> bool {
    if tag.is_empty() || tag.len() > 16 {
        return false;
    }
    let expected = cmac_tag(key, message);
    expected.truncated(tag.len()).ct_eq(tag).into()
}

pub const KDF_LABELS: [&str; 4] = ["PTK", "KCK", "KMAC", "GTKWRAP"];

/// Input keying material for [`derive_key`].
#[derive(Clone, Copy)]
pub enum KdfBase<'a> {
    Key(&'a SymmetricKey),
    /// Raw 32-octet secret, e.g. an ECDH x-coordinate; keys AES-256-CMAC.
    Secret(&'a [u8; 32]),
}

impl KdfBase<'_> {
    fn material(&self) -> &[u8] {
        match self {
            KdfBase::Key(k) => k.material(),
            KdfBase::Secret(s) => &s[..],
        }
    }
}

fn role_for_label(label: &str) -> Option<KeyRole> {
    match label {
        "PTK" => Some(KeyRole::Ptk),
        "KCK" | "GTKWRAP" => Some(KeyRole::Kck),
        "KMAC" => Some(KeyRole::Mk),
        _ => None,
    }
}

/// CMAC counter-mode expansion: `block_i = CMAC(base, i || label || context)`
/// for i = 1, 2, ... (one octet), concatenated and truncated to `out_bits`.
pub fn derive_key(
    base: KdfBase<'_>,
    label: &str,
    context: &[u8],
    out_bits: KeySize,
) -> Result<SymmetricKey, CryptoError> {
    let role = role_for_label(label).ok_or_else(|| CryptoError::UnknownLabel(label.to_string()))?;
    let blocks = out_bits.octets().div_ceil(16);
    let mut material = Vec::with_capacity(blocks * 16);
    for i in 1..=blocks as u8 {
        material.extend_from_slice(&cmac_raw(base.material(), &[&[i], label.as_bytes(), context]));
    }
    material.truncate(out_bits.octets());
    SymmetricKey::new(out_bits, material, role)
}

/// Tag algorithm slot for key-confirmation MACs.
///
/// `HashThenCmac` compresses messages longer than two cipher blocks with
/// SHA-256 first, so CMAC always runs over exactly two blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TagAlgorithm {
    #[default]
    Cmac,
    HashThenCmac,
}

impl TagAlgorithm {
    pub const LONG_MESSAGE_THRESHOLD: usize = 32;

    pub fn tag(self, key: &SymmetricKey, message: &[u8]) -> AuthTag {
        match self {
            TagAlgorithm::HashThenCmac if message.len() > Self::LONG_MESSAGE_THRESHOLD => {
                let digest = Sha256::digest(message);
                AuthTag(cmac_raw(key.material(), &[b"H256", &digest]))
            }
            _ => cmac_tag(key, message),
        }
    }

    pub fn verify(self, key: &SymmetricKey, message: &[u8], tag: &[u8]) -> bool {
        if tag.is_empty() || tag.len() > 16 {
            return false;
        }
        self.tag(key, message).truncated(tag.len()).ct_eq(tag).into()
    }

    /// Number of AES block invocations CMAC performs for a message.
    pub fn block_calls(self, message_len: usize) -> usize {
        match self {
            TagAlgorithm::HashThenCmac if message_len > Self::LONG_MESSAGE_THRESHOLD => 3,
            _ => message_len.div_ceil(16).max(1) + 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aes::cipher::{BlockEncrypt, KeyInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn k128(hexs: &str) -> SymmetricKey {
        SymmetricKey::new(KeySize::K128, hex::decode(hexs).unwrap(), KeyRole::Kck).unwrap()
    }

    // Independent CMAC built from the raw AES block function (subkeys by
    // doubling in GF(2^128)), used to cross-check the KDF.
    fn reference_cmac(key: &[u8], msg: &[u8]) -> [u8; 16] {
        fn enc(key: &[u8], block: [u8; 16]) -> [u8; 16] {
            let mut b = aes::Block::from(block);
            match key.len() {
                16 => Aes128::new_from_slice(key).unwrap().encrypt_block(&mut b),
                _ => Aes256::new_from_slice(key).unwrap().encrypt_block(&mut b),
            }
            b.into()
        }
        fn dbl(v: [u8; 16]) -> [u8; 16] {
            let x = u128::from_be_bytes(v);
            let r = (x << 1) ^ if x >> 127 == 1 { 0x87 } else { 0 };
            r.to_be_bytes()
        }
        let l = enc(key, [0; 16]);
        let k1 = dbl(l);
        let k2 = dbl(k1);
        let n = msg.len().div_ceil(16).max(1);
        let complete = !msg.is_empty() && msg.len() % 16 == 0;
        let mut x = [0u8; 16];
        for i in 0..n {
            let mut block = [0u8; 16];
            let chunk = &msg[i * 16..msg.len().min(i * 16 + 16)];
            block[..chunk.len()].copy_from_slice(chunk);
            if i == n - 1 {
                let sub = if complete { k1 } else { block[chunk.len()] = 0x80; k2 };
                for j in 0..16 {
                    block[j] ^= sub[j];
                }
            }
            for j in 0..16 {
                x[j] ^= block[j];
            }
            x = enc(key, x);
        }
        x
    }

    fn reference_kdf(base: &[u8], label: &str, ctx: &[u8], out: usize) -> Vec<u8> {
        let mut v: Vec<u8> = (1..=out.div_ceil(16) as u8)
            .flat_map(|i| reference_cmac(base, &[&[i], label.as_bytes(), ctx].concat()))
            .collect();
        v.truncate(out);
        v
    }

    #[test]
    fn rfc4493_vectors_against_both_routes() {
        let key = k128("2b7e151628aed2a6abf7158809cf4f3c");
        let msg = hex::decode("6bc1bee22e409f96e93d7e117393172a").unwrap();
        let tag = cmac_tag(&key, &msg);
        assert_eq!(hex::encode(tag.0), "070a16b46b4d4144f79bdd9dd04a287c");
        assert_eq!(reference_cmac(key.material(), &msg), tag.0);
        assert_eq!(hex::encode(cmac_tag(&key, b"").0), "bb1d6929e95937287fa37d129b756746");
    }

    #[test]
    fn tags_deterministic_and_bit_sensitive() {
        let key = k128("000102030405060708090a0b0c0d0e0f");
        let msg = b"association request".to_vec();
        assert_eq!(cmac_tag(&key, &msg), cmac_tag(&key, &msg));
        for bit in 0..msg.len() * 8 {
            let mut m = msg.clone();
            m[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(cmac_tag(&key, &m), cmac_tag(&key, &msg));
        }
        let t = cmac_tag(&key, &msg);
        assert!(verify_tag(&key, &msg, t.truncated(8)));
        assert!(verify_tag(&key, &msg, &t.0));
        let mut bad = t.0;
        bad[0] ^= 1;
        assert!(!verify_tag(&key, &msg, &bad));
        assert!(!verify_tag(&key, &msg, &[]));
    }

    #[test]
    fn derive_key_matches_independent_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for i in 0..100 {
            let label = KDF_LABELS[i % 4];
            let ctx: Vec<u8> = (0..rng.gen_range(0..48)).map(|_| rng.gen()).collect();
            let out = if i % 2 == 0 { KeySize::K128 } else { KeySize::K256 };
            if i % 3 == 0 {
                let secret: [u8; 32] = rng.gen();
                let k = derive_key(KdfBase::Secret(&secret), label, &ctx, out).unwrap();
                assert_eq!(k.material(), &reference_kdf(&secret, label, &ctx, out.octets())[..]);
            } else {
                let base = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Mk).unwrap();
                let k = derive_key(KdfBase::Key(&base), label, &ctx, out).unwrap();
                assert_eq!(
                    k.material(),
                    &reference_kdf(base.material(), label, &ctx, out.octets())[..]
                );
            }
        }
    }

    #[test]
    fn labels_separate_outputs() {
        let base = k128("000102030405060708090a0b0c0d0e0f");
        let ctx = b"ctx";
        let keys: Vec<_> = KDF_LABELS
            .iter()
            .map(|l| derive_key(KdfBase::Key(&base), l, ctx, KeySize::K128).unwrap())
            .collect();
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i].material(), keys[j].material());
            }
        }
        let wide = derive_key(KdfBase::Key(&base), "PTK", ctx, KeySize::K256).unwrap();
        assert_eq!(wide.material().len(), 32);
        assert_eq!(wide.role(), KeyRole::Ptk);
        assert!(matches!(
            derive_key(KdfBase::Key(&base), "BOGUS", ctx, KeySize::K128),
            Err(CryptoError::UnknownLabel(_))
        ));
    }

    #[test]
    fn long_message_tag_slot() {
        let key = k128("2b7e151628aed2a6abf7158809cf4f3c");
        let short = [7u8; 20];
        let long = [7u8; 200];
        assert_eq!(TagAlgorithm::HashThenCmac.tag(&key, &short), cmac_tag(&key, &short));
        let t = TagAlgorithm::HashThenCmac.tag(&key, &long);
        assert_ne!(t, cmac_tag(&key, &long));
        assert!(TagAlgorithm::HashThenCmac.verify(&key, &long, &t.0));
        assert!(!TagAlgorithm::Cmac.verify(&key, &long, &t.0));
        assert_eq!(TagAlgorithm::Cmac.block_calls(200), 14);
        assert_eq!(TagAlgorithm::HashThenCmac.block_calls(200), 3);
    }
}
