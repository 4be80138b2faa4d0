//! Cryptographic primitives used by the association protocols and the secure
//! channel: P-256 ECDH, AES-CMAC, a CMAC counter-mode KDF and AES-CCM.

mod ccm;
mod ecdh;
mod mac;
pub mod vectors;

use std::fmt;

use thiserror::Error;
use zeroize::Zeroize;

pub use self::ccm::{ccm_open, ccm_seal, Sealer, MIC_LEN_CONFIRM, MIC_LEN_FRAME};
pub use self::ecdh::{
    blind_point, derive_shared_secret, generate_keypair, password_scalar, unblind_point, KeyPair,
    PublicPoint,
};
pub use self::mac::{cmac_tag, derive_key, verify_tag, AuthTag, KdfBase, TagAlgorithm, KDF_LABELS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("entropy source failed")]
    EntropyFailure,
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("unknown key derivation label {0:?}")]
    UnknownLabel(String),
    #[error("nonce reused under the same key")]
    NonceReuse,
    #[error("authentication failed")]
    AuthFailure,
    #[error("cipher {0} is not supported by this build")]
    UnsupportedCipher(CipherFunction),
    #[error("key of {got} octets does not fit {cipher}")]
    KeyMismatch { cipher: CipherFunction, got: usize },
    #[error("unsupported MIC length {0}")]
    BadMicLength(usize),
    #[error("message too long for a 13-octet CCM nonce")]
    MessageTooLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeySize {
    K128,
    K256,
}

impl KeySize {
    pub fn octets(self) -> usize {
        match self {
            KeySize::K128 => 16,
            KeySize::K256 => 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyRole {
    Mk,
    Ptk,
    Gtk,
    Kck,
}

impl KeyRole {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyRole::Mk => "MK",
            KeyRole::Ptk => "PTK",
            KeyRole::Gtk => "GTK",
            KeyRole::Kck => "KCK",
        }
    }
}

/// Cipher function field of the security suite selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CipherFunction {
    Aes128Ccm,
    Aes256Ccm,
    /// Slot only; every operation reports [`CryptoError::UnsupportedCipher`].
    Camellia128Ccm,
}

impl CipherFunction {
    pub fn key_size(self) -> KeySize {
        match self {
            CipherFunction::Aes256Ccm => KeySize::K256,
            _ => KeySize::K128,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            CipherFunction::Aes128Ccm => 0,
            CipherFunction::Camellia128Ccm => 1,
            CipherFunction::Aes256Ccm => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CipherFunction::Aes128Ccm),
            1 => Some(CipherFunction::Camellia128Ccm),
            2 => Some(CipherFunction::Aes256Ccm),
            _ => None,
        }
    }
}

impl fmt::Display for CipherFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CipherFunction::Aes128Ccm => "AES-128-CCM",
            CipherFunction::Aes256Ccm => "AES-256-CCM",
            CipherFunction::Camellia128Ccm => "Camellia-128-CCM",
        };
        f.write_str(s)
    }
}

/// Secret symmetric key material tagged with its size and hierarchy role.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey {
    bits: KeySize,
    material: Vec<u8>,
    role: KeyRole,
}

impl SymmetricKey {
    pub fn new(bits: KeySize, material: Vec<u8>, role: KeyRole) -> Result<Self, CryptoError> {
        if material.len() != bits.octets() {
            return Err(CryptoError::KeyMismatch {
                cipher: match bits {
                    KeySize::K128 => CipherFunction::Aes128Ccm,
                    KeySize::K256 => CipherFunction::Aes256Ccm,
                },
                got: material.len(),
            });
        }
        Ok(Self { bits, material, role })
    }

    pub fn from_array<const N: usize>(material: [u8; N], role: KeyRole) -> Self {
        let bits = match N {
            16 => KeySize::K128,
            32 => KeySize::K256,
            _ => panic!("symmetric keys are 16 or 32 octets"),
        };
        Self { bits, material: material.to_vec(), role }
    }

    pub fn random<R: rand::RngCore + rand::CryptoRng>(
        rng: &mut R,
        bits: KeySize,
        role: KeyRole,
    ) -> Result<Self, CryptoError> {
        let mut material = vec![0u8; bits.octets()];
        rng.try_fill_bytes(&mut material)
            .map_err(|_| CryptoError::EntropyFailure)?;
        Ok(Self { bits, material, role })
    }

    pub fn bits(&self) -> KeySize {
        self.bits
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn material(&self) -> &[u8] {
        &self.material
    }

    pub fn with_role(mut self, role: KeyRole) -> Self {
        self.role = role;
        self
    }

    /// Public identifier of the key; never reveals material.
    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(b"sym", &self.material)
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricKey")
            .field("bits", &self.bits)
            .field("role", &self.role)
            .field("fingerprint", &self.fingerprint())
            .finish()
    }
}

impl Drop for SymmetricKey {
    fn drop(&mut self) {
        self.material.zeroize();
    }
}

/// 16-octet truncated SHA-256 identity of a key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fingerprint(pub [u8; 16]);

impl Fingerprint {
    pub fn of(domain: &[u8], bytes: &[u8]) -> Self {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(b"mbansec-fp:");
        h.update(domain);
        h.update(bytes);
        let d = h.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&d[..16]);
        Fingerprint(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let v = hex::decode(s).ok()?;
        let arr: [u8; 16] = v.try_into().ok()?;
        Some(Fingerprint(arr))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
