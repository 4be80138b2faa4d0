//! Embedded known-answer vectors and the `vectors` self-test.
//!
//! Sources: NIST SP 800-38B / RFC 4493 (AES-CMAC), NIST SP 800-38C example 4
//! and RFC 3610 packet vectors 1-2 (CCM, 13-octet nonce), NIST CAVS KAS ECC
//! CDH P-256 (COUNT = 0).

use super::{
    ccm_open, ccm_seal, cmac_tag, derive_shared_secret, CipherFunction, KeyPair, KeyRole, KeySize,
    PublicPoint, SymmetricKey,
};
use crate::frame::Nonce;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorResult {
    pub name: &'static str,
    pub passed: bool,
}

fn h(s: &str) -> Vec<u8> {
    hex::decode(s).expect("embedded vector is valid hex")
}

fn key(s: &str) -> SymmetricKey {
    let m = h(s);
    let bits = if m.len() == 16 { KeySize::K128 } else { KeySize::K256 };
    SymmetricKey::new(bits, m, KeyRole::Kck).expect("embedded key length")
}

const CMAC_KEY_128: &str = "2b7e151628aed2a6abf7158809cf4f3c";
const CMAC_KEY_256: &str = "603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4";
const CMAC_MSG: &str = "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51\
30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710";

const CMAC_CASES: [(&str, &str, usize, &str); 6] = [
    ("cmac-aes128-len0", CMAC_KEY_128, 0, "bb1d6929e95937287fa37d129b756746"),
    ("cmac-aes128-len16", CMAC_KEY_128, 16, "070a16b46b4d4144f79bdd9dd04a287c"),
    ("cmac-aes128-len40", CMAC_KEY_128, 40, "dfa66747de9ae63030ca32611497c827"),
    ("cmac-aes128-len64", CMAC_KEY_128, 64, "51f0bebf7e3b9d92fc49741779363cfe"),
    ("cmac-aes256-len0", CMAC_KEY_256, 0, "028962f61b7bf89efc6b551f4667d983"),
    ("cmac-aes256-len16", CMAC_KEY_256, 16, "28a7023f452e8f82bd4bf28d8c37c35c"),
];

struct CcmCase {
    name: &'static str,
    key: &'static str,
    nonce: &'static str,
    aad: fn() -> Vec<u8>,
    plaintext: &'static str,
    // ciphertext || tag
    output: &'static str,
    mic_len: usize,
}

const CCM_CASES: [CcmCase; 3] = [
    CcmCase {
        name: "ccm-sp800-38c-example4",
        key: "404142434445464748494a4b4c4d4e4f",
        nonce: "101112131415161718191a1b1c",
        aad: || (0..65536u32).map(|i| i as u8).collect(),
        plaintext: "202122232425262728292a2b2c2d2e2f303132333435363738393a3b3c3d3e3f",
        output: "69915dad1e84c6376a68c2967e4dab615ae0fd1faec44cc484828529463ccf72\
b4ac6bec93e8598e7f0dadbcea5b",
        mic_len: 14,
    },
    CcmCase {
        name: "ccm-rfc3610-packet1",
        key: "c0c1c2c3c4c5c6c7c8c9cacbcccdcecf",
        nonce: "00000003020100a0a1a2a3a4a5",
        aad: || (0..8u8).collect(),
        plaintext: "08090a0b0c0d0e0f101112131415161718191a1b1c1d1e",
        output: "588c979a61c663d2f066d0c2c0f989806d5f6b61dac38417e8d12cfdf926e0",
        mic_len: 8,
    },
    CcmCase {
        name: "ccm-rfc3610-packet2",
        key: "c0c1c2c3c4c5c6c7c8c9cacbcccdcecf",
        nonce: "00000004030201a0a1a2a3a4a5",
        aad: || (0..8u8).collect(),
        plaintext: "08090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f",
        output: "72c91a36e135f8cf291ca894085c87e3cc15c439c9e43a3ba091d56e10400916",
        mic_len: 8,
    },
];

const ECDH_D_IUT: &str = "7d7dc5f71eb29ddaf80d6214632eeae03d9058af1fb6d22ed80badb62bc1a534";
const ECDH_Q_IUT_X: &str = "ead218590119e8876b29146ff89ca61770c4edbbf97d38ce385ed281d8a6b230";
const ECDH_Q_IUT_Y: &str = "28af61281fd35e2fa7002523acc85a429cb06ee6648325389f59edfce1405141";
const ECDH_Q_CAVS_X: &str = "700c48f77f56584c5cc632ca65640db91b6bacce3a4df6b42ce7cc838833d287";
const ECDH_Q_CAVS_Y: &str = "db71e509e3fd9b060ddb20ba5c51dcc5948d46fbf640dfe0441782cab85fa4ac";
const ECDH_Z: &str = "46fc62106420ff012e54a434fbdd2d25ccc5852060561e68040dd7778997bd7b";
const P256_GX: &str = "6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296";
const P256_GY: &str = "4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5";

fn point(x: &str, y: &str) -> PublicPoint {
    PublicPoint { x: h(x).try_into().unwrap(), y: h(y).try_into().unwrap() }
}

fn run_ccm(c: &CcmCase) -> bool {
    let k = key(c.key);
    let nonce = Nonce(h(c.nonce).try_into().unwrap());
    let aad = (c.aad)();
    let pt = h(c.plaintext);
    let expected = h(c.output);
    let Ok((ct, mic)) = ccm_seal(CipherFunction::Aes128Ccm, &k, &nonce, &aad, &pt, c.mic_len) else {
        return false;
    };
    let sealed_ok = [ct.clone(), mic.clone()].concat() == expected;
    let opened_ok = ccm_open(CipherFunction::Aes128Ccm, &k, &nonce, &aad, &ct, &mic)
        .map(|p| p == pt)
        .unwrap_or(false);
    sealed_ok && opened_ok
}

/// Run every embedded vector.
pub fn run_vectors() -> Vec<VectorResult> {
    let mut out = Vec::new();
    let msg = h(CMAC_MSG);
    for (name, k, len, tag) in CMAC_CASES {
        out.push(VectorResult { name, passed: cmac_tag(&key(k), &msg[..len]).0.to_vec() == h(tag) });
    }
    for c in &CCM_CASES {
        out.push(VectorResult { name: c.name, passed: run_ccm(c) });
    }

    let one: [u8; 32] = {
        let mut b = [0u8; 32];
        b[31] = 1;
        b
    };
    let g_ok = KeyPair::from_secret_bytes(&one)
        .map(|kp| *kp.public() == point(P256_GX, P256_GY))
        .unwrap_or(false);
    out.push(VectorResult { name: "p256-scalar-mult-one", passed: g_ok });

    let d: [u8; 32] = h(ECDH_D_IUT).try_into().unwrap();
    let iut = KeyPair::from_secret_bytes(&d);
    let qiut_ok = iut
        .as_ref()
        .map(|kp| *kp.public() == point(ECDH_Q_IUT_X, ECDH_Q_IUT_Y))
        .unwrap_or(false);
    out.push(VectorResult { name: "p256-cavs-public-key", passed: qiut_ok });

    let z_ok = iut
        .ok()
        .and_then(|kp| derive_shared_secret(&kp, &point(ECDH_Q_CAVS_X, ECDH_Q_CAVS_Y)).ok())
        .map(|z| z.to_vec() == h(ECDH_Z))
        .unwrap_or(false);
    out.push(VectorResult { name: "p256-cavs-ecdh-z", passed: z_ok });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_embedded_vectors_pass() {
        let results = run_vectors();
        assert_eq!(results.len(), 12);
        for r in &results {
            assert!(r.passed, "{} failed", r.name);
        }
    }

    #[test]
    fn corrupted_vector_is_detected() {
        let mut c = CCM_CASES[1].clone_case();
        c.output = "588c979a61c663d2f066d0c2c0f989806d5f6b61dac38417e8d12cfdf926e1";
        assert!(!run_ccm(&c));
    }

    impl CcmCase {
        fn clone_case(&self) -> CcmCase {
            CcmCase {
                name: self.name,
                key: self.key,
                nonce: self.nonce,
                aad: self.aad,
                plaintext: self.plaintext,
                output: self.output,
                mic_len: self.mic_len,
            }
        }
    }
}
