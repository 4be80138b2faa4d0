use std::collections::HashSet;

use aes::{Aes128, Aes256};
use ccm::aead::generic_array::GenericArray;
use ccm::aead::{AeadInPlace, KeyInit};
use ccm::consts::{U10, U12, U13, U14, U16, U4, U6, U8};
use ccm::Ccm;

use super::{CipherFunction, CryptoError, SymmetricKey};
use crate::frame::{Nonce, NONCE_LEN};

/// MIC length on data and management frames.
pub const MIC_LEN_FRAME: usize = 8;
/// MIC length on handshake confirmations and the sealed keystore.
pub const MIC_LEN_CONFIRM: usize = 16;

const MAX_PLAINTEXT: usize = 0xFFFF;

fn check_key(cipher: CipherFunction, key: &SymmetricKey) -> Result<(), CryptoError> {
    if cipher == CipherFunction::Camellia128Ccm {
        return Err(CryptoError::UnsupportedCipher(cipher));
    }
    if key.material().len() != cipher.key_size().octets() {
        return Err(CryptoError::KeyMismatch { cipher, got: key.material().len() });
    }
    Ok(())
}

macro_rules! with_ccm {
    ($cipher:expr, $key:expr, $mic:expr, |$c:ident| $body:expr) => {{
        macro_rules! inner {
            ($blk:ty, $tag:ty) => {{
                let $c = Ccm::<$blk, $tag, U13>::new_from_slice($key).expect("key length checked");
                $body
            }};
        }
        match ($cipher, $mic) {
            (CipherFunction::Aes128Ccm, 4) => inner!(Aes128, U4),
            (CipherFunction::Aes128Ccm, 6) => inner!(Aes128, U6),
            (CipherFunction::Aes128Ccm, 8) => inner!(Aes128, U8),
            (CipherFunction::Aes128Ccm, 10) => inner!(Aes128, U10),
            (CipherFunction::Aes128Ccm, 12) => inner!(Aes128, U12),
            (CipherFunction::Aes128Ccm, 14) => inner!(Aes128, U14),
            (CipherFunction::Aes128Ccm, 16) => inner!(Aes128, U16),
            (CipherFunction::Aes256Ccm, 4) => inner!(Aes256, U4),
            (CipherFunction::Aes256Ccm, 6) => inner!(Aes256, U6),
            (CipherFunction::Aes256Ccm, 8) => inner!(Aes256, U8),
            (CipherFunction::Aes256Ccm, 10) => inner!(Aes256, U10),
            (CipherFunction::Aes256Ccm, 12) => inner!(Aes256, U12),
            (CipherFunction::Aes256Ccm, 14) => inner!(Aes256, U14),
            (CipherFunction::Aes256Ccm, 16) => inner!(Aes256, U16),
            (CipherFunction::Camellia128Ccm, _) => {
                return Err(CryptoError::UnsupportedCipher(CipherFunction::Camellia128Ccm))
            }
            (_, m) => return Err(CryptoError::BadMicLength(m)),
        }
    }};
}

/// CCM (NIST SP 800-38C) encryption with a 13-octet nonce.
///
/// Stateless; callers that must not reuse nonces go through [`Sealer`].
/// An empty plaintext yields an empty ciphertext and an authentication-only MIC.
pub fn ccm_seal(
    cipher: CipherFunction,
    key: &SymmetricKey,
    nonce: &Nonce,
    aad: &[u8],
    plaintext: &[u8],
    mic_len: usize,
) -> Result<(Vec<u8>, Vec<u8>), CryptoError> {
    check_key(cipher, key)?;
    if plaintext.len() > MAX_PLAINTEXT {
        return Err(CryptoError::MessageTooLong);
    }
    let mut buf = plaintext.to_vec();
    let n = GenericArray::<u8, U13>::from_slice(nonce.as_bytes());
    let tag: Vec<u8> = with_ccm!(cipher, key.material(), mic_len, |c| {
        c.encrypt_in_place_detached(n, aad, &mut buf)
            .map_err(|_| CryptoError::MessageTooLong)?
            .to_vec()
    });
    Ok((buf, tag))
}

/// CCM decryption; releases plaintext only when the MIC verifies.
pub fn ccm_open(
    cipher: CipherFunction,
    key: &SymmetricKey,
    nonce: &Nonce,
    aad: &[u8],
    ciphertext: &[u8],
    mic: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    check_key(cipher, key)?;
    let mut buf = ciphertext.to_vec();
    let n = GenericArray::<u8, U13>::from_slice(nonce.as_bytes());
    with_ccm!(cipher, key.material(), mic.len(), |c| {
        c.decrypt_in_place_detached(n, aad, &mut buf, GenericArray::from_slice(mic))
            .map_err(|_| CryptoError::AuthFailure)?
    });
    Ok(buf)
}

/// A CCM key that refuses to seal twice under the same nonce.
pub struct Sealer {
    cipher: CipherFunction,
    key: SymmetricKey,
    used: HashSet<[u8; NONCE_LEN]>,
}

impl Sealer {
    pub fn new(cipher: CipherFunction, key: SymmetricKey) -> Result<Self, CryptoError> {
        check_key(cipher, &key)?;
        Ok(Self { cipher, key, used: HashSet::new() })
    }

    pub fn cipher(&self) -> CipherFunction {
        self.cipher
    }

    pub fn key(&self) -> &SymmetricKey {
        &self.key
    }

    pub fn seal(
        &mut self,
        nonce: &Nonce,
        aad: &[u8],
        plaintext: &[u8],
        mic_len: usize,
    ) -> Result<(Vec<u8>, Vec<u8>), CryptoError> {
        if self.used.contains(nonce.as_bytes()) {
            return Err(CryptoError::NonceReuse);
        }
        let out = ccm_seal(self.cipher, &self.key, nonce, aad, plaintext, mic_len)?;
        self.used.insert(*nonce.as_bytes());
        Ok(out)
    }

    pub fn open(
        &self,
        nonce: &Nonce,
        aad: &[u8],
        ciphertext: &[u8],
        mic: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        ccm_open(self.cipher, &self.key, nonce, aad, ciphertext, mic)
    }

    pub fn nonces_used(&self) -> usize {
        self.used.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyRole, KeySize};
    use crate::frame::{build_nonce, Address, SequencePair};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn key(bits: KeySize, seed: u64) -> SymmetricKey {
        SymmetricKey::random(&mut ChaCha20Rng::seed_from_u64(seed), bits, KeyRole::Ptk).unwrap()
    }

    fn nonce(low: u16) -> Nonce {
        build_nonce(Address(1), Address(0xFF00), 0x23, SequencePair::new(0, low))
    }

    #[test]
    fn auth_only_has_empty_ciphertext() {
        let k = key(KeySize::K128, 1);
        let (ct, mic) =
            ccm_seal(CipherFunction::Aes128Ccm, &k, &nonce(1), b"whole frame", b"", 8).unwrap();
        assert!(ct.is_empty());
        assert_eq!(mic.len(), 8);
        assert_eq!(
            ccm_open(CipherFunction::Aes128Ccm, &k, &nonce(1), b"whole frame", &ct, &mic).unwrap(),
            Vec::<u8>::new()
        );
    }

    #[test]
    fn sealer_rejects_nonce_reuse() {
        let mut s = Sealer::new(CipherFunction::Aes128Ccm, key(KeySize::K128, 2)).unwrap();
        s.seal(&nonce(1), b"", b"a", 8).unwrap();
        assert_eq!(s.seal(&nonce(1), b"", b"b", 8), Err(CryptoError::NonceReuse));
        s.seal(&nonce(2), b"", b"b", 8).unwrap();
        assert_eq!(s.nonces_used(), 2);
    }

    #[test]
    fn camellia_slot_is_unsupported() {
        let k = key(KeySize::K128, 3);
        assert_eq!(
            ccm_seal(CipherFunction::Camellia128Ccm, &k, &nonce(1), b"", b"x", 8),
            Err(CryptoError::UnsupportedCipher(CipherFunction::Camellia128Ccm))
        );
        assert!(matches!(
            Sealer::new(CipherFunction::Camellia128Ccm, k),
            Err(CryptoError::UnsupportedCipher(_))
        ));
    }

    #[test]
    fn key_size_must_match_cipher() {
        let k = key(KeySize::K128, 4);
        assert!(matches!(
            ccm_seal(CipherFunction::Aes256Ccm, &k, &nonce(1), b"", b"x", 8),
            Err(CryptoError::KeyMismatch { .. })
        ));
        let k = key(KeySize::K128, 4);
        assert_eq!(
            ccm_seal(CipherFunction::Aes128Ccm, &k, &nonce(1), b"", b"x", 7),
            Err(CryptoError::BadMicLength(7))
        );
    }

    #[test]
    fn wrong_keys_never_open() {
        let k = key(KeySize::K128, 5);
        let (ct, mic) =
            ccm_seal(CipherFunction::Aes128Ccm, &k, &nonce(9), b"hdr", b"heart rate 72", 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        let mut accepted = 0;
        for _ in 0..1000 {
            let wrong = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Ptk).unwrap();
            if ccm_open(CipherFunction::Aes128Ccm, &wrong, &nonce(9), b"hdr", &ct, &mic).is_ok() {
                accepted += 1;
            }
        }
        assert_eq!(accepted, 0);
    }

    #[test]
    fn every_single_bit_flip_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for bits in [KeySize::K128, KeySize::K256] {
            let cipher = if bits == KeySize::K128 {
                CipherFunction::Aes128Ccm
            } else {
                CipherFunction::Aes256Ccm
            };
            let k = SymmetricKey::random(&mut rng, bits, KeyRole::Ptk).unwrap();
            let aad: Vec<u8> = (0..10).map(|_| rng.gen()).collect();
            let pt: Vec<u8> = (0..20).map(|_| rng.gen()).collect();
            let n = nonce(3);
            let (ct, mic) = ccm_seal(cipher, &k, &n, &aad, &pt, 8).unwrap();
            for i in 0..ct.len() * 8 {
                let mut c = ct.clone();
                c[i / 8] ^= 1 << (i % 8);
                assert_eq!(ccm_open(cipher, &k, &n, &aad, &c, &mic), Err(CryptoError::AuthFailure));
            }
            for i in 0..aad.len() * 8 {
                let mut a = aad.clone();
                a[i / 8] ^= 1 << (i % 8);
                assert_eq!(ccm_open(cipher, &k, &n, &a, &ct, &mic), Err(CryptoError::AuthFailure));
            }
            for i in 0..mic.len() * 8 {
                let mut m = mic.clone();
                m[i / 8] ^= 1 << (i % 8);
                assert_eq!(ccm_open(cipher, &k, &n, &aad, &ct, &m), Err(CryptoError::AuthFailure));
            }
            for i in 0..NONCE_LEN * 8 {
                let mut nb = n.0;
                nb[i / 8] ^= 1 << (i % 8);
                assert_eq!(
                    ccm_open(cipher, &k, &Nonce(nb), &aad, &ct, &mic),
                    Err(CryptoError::AuthFailure)
                );
            }
        }
    }

    proptest! {
        #[test]
        fn open_inverts_seal(
            material in proptest::collection::vec(any::<u8>(), 32),
            wide in any::<bool>(),
            n in any::<[u8; 13]>(),
            aad in proptest::collection::vec(any::<u8>(), 0..64),
            pt in proptest::collection::vec(any::<u8>(), 0..300),
            long_mic in any::<bool>(),
        ) {
            let (cipher, k) = if wide {
                (CipherFunction::Aes256Ccm, SymmetricKey::new(KeySize::K256, material, KeyRole::Ptk).unwrap())
            } else {
                (CipherFunction::Aes128Ccm, SymmetricKey::new(KeySize::K128, material[..16].to_vec(), KeyRole::Ptk).unwrap())
            };
            let mic_len = if long_mic { MIC_LEN_CONFIRM } else { MIC_LEN_FRAME };
            let (ct, mic) = ccm_seal(cipher, &k, &Nonce(n), &aad, &pt, mic_len).unwrap();
            prop_assert_eq!(ct.len(), pt.len());
            prop_assert_eq!(ccm_open(cipher, &k, &Nonce(n), &aad, &ct, &mic).unwrap(), pt);
        }
    }
}
