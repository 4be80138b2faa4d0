use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, PublicKey, Scalar, SecretKey, U256};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::{CryptoError, Fingerprint};

/// Uncompressed affine P-256 point, big-endian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicPoint {
    pub x: [u8; 32],
    pub y: [u8; 32],
}

impl PublicPoint {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.x);
        out[32..].copy_from_slice(&self.y);
        out
    }

    pub fn from_bytes(bytes: &[u8; 64]) -> Self {
        let mut x = [0u8; 32];
        let mut y = [0u8; 32];
        x.copy_from_slice(&bytes[..32]);
        y.copy_from_slice(&bytes[32..]);
        Self { x, y }
    }

    /// Full validation: coordinates below p, on the curve, not the identity.
    pub fn validate(&self) -> Result<PublicKey, CryptoError> {
        let ep = EncodedPoint::from_affine_coordinates(
            FieldBytes::from_slice(&self.x),
            FieldBytes::from_slice(&self.y),
            false,
        );
        Option::<PublicKey>::from(PublicKey::from_encoded_point(&ep))
            .ok_or(CryptoError::InvalidPublicKey)
    }

    fn from_affine(p: &AffinePoint) -> Result<Self, CryptoError> {
        let ep = p.to_encoded_point(false);
        match (ep.x(), ep.y()) {
            (Some(x), Some(y)) => {
                let mut px = [0u8; 32];
                let mut py = [0u8; 32];
                px.copy_from_slice(x);
                py.copy_from_slice(y);
                Ok(Self { x: px, y: py })
            }
            _ => Err(CryptoError::InvalidPublicKey),
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(b"p256", &self.to_bytes())
    }
}

pub struct KeyPair {
    secret: SecretKey,
    public: PublicPoint,
}

impl KeyPair {
    pub fn from_secret_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        let secret =
            SecretKey::from_bytes(FieldBytes::from_slice(bytes)).map_err(|_| CryptoError::InvalidPublicKey)?;
        let public = PublicPoint::from_affine(secret.public_key().as_affine())?;
        Ok(Self { secret, public })
    }

    pub fn public(&self) -> &PublicPoint {
        &self.public
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes().into()
    }
}

impl Clone for KeyPair {
    fn clone(&self) -> Self {
        Self { secret: self.secret.clone(), public: self.public }
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public.fingerprint()).finish()
    }
}

/// Draw a private scalar in [1, n-1] by rejection sampling.
pub fn generate_keypair<R: RngCore + CryptoRng>(rng: &mut R) -> Result<KeyPair, CryptoError> {
    for _ in 0..64 {
        let mut bytes = [0u8; 32];
        rng.try_fill_bytes(&mut bytes)
            .map_err(|_| CryptoError::EntropyFailure)?;
        if let Ok(kp) = KeyPair::from_secret_bytes(&bytes) {
            return Ok(kp);
        }
    }
    Err(CryptoError::EntropyFailure)
}

/// X coordinate of `own * peer`, after validating `peer`.
pub fn derive_shared_secret(own: &KeyPair, peer: &PublicPoint) -> Result<[u8; 32], CryptoError> {
    let peer = peer.validate()?;
    let shared = p256::ecdh::diffie_hellman(own.secret.to_nonzero_scalar(), peer.as_affine());
    let mut out = [0u8; 32];
    out.copy_from_slice(shared.raw_secret_bytes());
    Ok(out)
}

/// Scalar derived from a password; used to blind points in the password protocol.
pub fn password_scalar(password: &[u8]) -> Scalar {
    let mut h = Sha256::new();
    h.update(b"mbansec-password-blind");
    h.update(password);
    let digest = h.finalize();
    <Scalar as Reduce<U256>>::reduce_bytes(&digest)
}

/// `point + w*G`
pub fn blind_point(point: &PublicPoint, w: &Scalar) -> Result<PublicPoint, CryptoError> {
    let p = ProjectivePoint::from(*point.validate()?.as_affine());
    let blinded = p + ProjectivePoint::GENERATOR * w;
    PublicPoint::from_affine(&blinded.to_affine())
}

/// `point - w*G`; fails if the input or the result is not a valid point.
pub fn unblind_point(point: &PublicPoint, w: &Scalar) -> Result<PublicPoint, CryptoError> {
    let p = ProjectivePoint::from(*point.validate()?.as_affine());
    let unblinded = p - ProjectivePoint::GENERATOR * w;
    let out = PublicPoint::from_affine(&unblinded.to_affine())?;
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    // p = 2^256 - 2^224 + 2^192 + 2^96 - 1, b from FIPS 186
    fn on_curve_reference(p: &PublicPoint) -> bool {
        use num_check::*;
        let x = from_be(&p.x);
        let y = from_be(&p.y);
        let prime = prime();
        if cmp(&x, &prime) >= 0 || cmp(&y, &prime) >= 0 {
            return false;
        }
        let lhs = mulmod(&y, &y, &prime);
        let x3 = mulmod(&mulmod(&x, &x, &prime), &x, &prime);
        let three_x = mulmod(&x, &from_u64(3), &prime);
        let rhs = addmod(&submod(&x3, &three_x, &prime), &b_coeff(), &prime);
        lhs == rhs
    }

    // Minimal big-integer helpers (little-endian u64 limbs) used only as an
    // independent on-curve check.
    mod num_check {
        pub type N = Vec<u64>;
        pub fn from_be(b: &[u8; 32]) -> N {
            (0..4)
                .map(|i| u64::from_be_bytes(b[24 - 8 * i..32 - 8 * i].try_into().unwrap()))
                .collect()
        }
        pub fn from_u64(v: u64) -> N {
            vec![v, 0, 0, 0]
        }
        pub fn prime() -> N {
            from_be(&hex32("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff"))
        }
        pub fn b_coeff() -> N {
            from_be(&hex32("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"))
        }
        fn hex32(s: &str) -> [u8; 32] {
            hex::decode(s).unwrap().try_into().unwrap()
        }
        fn trim(mut a: N) -> N {
            while a.len() > 1 && *a.last().unwrap() == 0 {
                a.pop();
            }
            a
        }
        pub fn cmp(a: &N, b: &N) -> i32 {
            let a = trim(a.clone());
            let b = trim(b.clone());
            if a.len() != b.len() {
                return if a.len() > b.len() { 1 } else { -1 };
            }
            for i in (0..a.len()).rev() {
                if a[i] != b[i] {
                    return if a[i] > b[i] { 1 } else { -1 };
                }
            }
            0
        }
        fn sub(a: &N, b: &N) -> N {
            let mut out = Vec::with_capacity(a.len());
            let mut borrow = 0i128;
            for i in 0..a.len() {
                let mut d = a[i] as i128 - *b.get(i).unwrap_or(&0) as i128 - borrow;
                borrow = 0;
                if d < 0 {
                    d += 1i128 << 64;
                    borrow = 1;
                }
                out.push(d as u64);
            }
            trim(out)
        }
        fn add(a: &N, b: &N) -> N {
            let n = a.len().max(b.len());
            let mut out = Vec::with_capacity(n + 1);
            let mut carry = 0u128;
            for i in 0..n {
                let s = *a.get(i).unwrap_or(&0) as u128 + *b.get(i).unwrap_or(&0) as u128 + carry;
                out.push(s as u64);
                carry = s >> 64;
            }
            out.push(carry as u64);
            trim(out)
        }
        fn shl1(a: &N) -> N {
            add(a, a)
        }
        // schoolbook double-and-add modular multiplication
        pub fn mulmod(a: &N, b: &N, m: &N) -> N {
            let mut result = vec![0u64];
            let bits = b.len() * 64;
            for i in (0..bits).rev() {
                result = shl1(&result);
                if cmp(&result, m) >= 0 {
                    result = sub(&result, m);
                }
                if (b[i / 64] >> (i % 64)) & 1 == 1 {
                    result = add(&result, a);
                    while cmp(&result, m) >= 0 {
                        result = sub(&result, m);
                    }
                }
            }
            let mut r = result;
            r.resize(4, 0);
            r
        }
        pub fn addmod(a: &N, b: &N, m: &N) -> N {
            let mut r = add(a, b);
            while cmp(&r, m) >= 0 {
                r = sub(&r, m);
            }
            r.resize(4, 0);
            r
        }
        pub fn submod(a: &N, b: &N, m: &N) -> N {
            let mut r = if cmp(a, b) >= 0 { sub(a, b) } else { sub(&add(a, m), b) };
            r.resize(4, 0);
            r
        }
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = generate_keypair(&mut ChaCha20Rng::seed_from_u64(42)).unwrap();
        let b = generate_keypair(&mut ChaCha20Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.public(), b.public());
        assert_eq!(a.secret_bytes(), b.secret_bytes());
        assert!(on_curve_reference(a.public()));
    }

    #[test]
    fn dh_symmetry_over_many_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = generate_keypair(&mut rng).unwrap();
            let b = generate_keypair(&mut rng).unwrap();
            assert_eq!(
                derive_shared_secret(&a, b.public()).unwrap(),
                derive_shared_secret(&b, a.public()).unwrap()
            );
        }
    }

    #[test]
    fn perturbed_y_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = generate_keypair(&mut rng).unwrap();
        let b = generate_keypair(&mut rng).unwrap();
        let mut bad = *b.public();
        bad.y[31] ^= 1;
        assert!(!on_curve_reference(&bad));
        assert_eq!(derive_shared_secret(&a, &bad), Err(CryptoError::InvalidPublicKey));
    }

    #[test]
    fn out_of_range_and_zero_points_rejected() {
        let a = generate_keypair(&mut ChaCha20Rng::seed_from_u64(6)).unwrap();
        let zero = PublicPoint { x: [0; 32], y: [0; 32] };
        assert_eq!(derive_shared_secret(&a, &zero), Err(CryptoError::InvalidPublicKey));
        let big = PublicPoint { x: [0xFF; 32], y: [0xFF; 32] };
        assert_eq!(derive_shared_secret(&a, &big), Err(CryptoError::InvalidPublicKey));
        // x + p for a valid x is out of field range
        let mut wrapped = *a.public();
        wrapped.x = [0xFF; 32];
        assert_eq!(wrapped.validate().err(), Some(CryptoError::InvalidPublicKey));
    }

    #[test]
    fn blinding_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let a = generate_keypair(&mut rng).unwrap();
        let w = password_scalar(b"hunter2");
        let blinded = blind_point(a.public(), &w).unwrap();
        assert_ne!(&blinded, a.public());
        assert_eq!(&unblind_point(&blinded, &w).unwrap(), a.public());
        let other = password_scalar(b"hunter3");
        assert_ne!(&unblind_point(&blinded, &other).unwrap(), a.public());
    }

    #[test]
    fn reference_curve_check_accepts_generated_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..20 {
            let kp = generate_keypair(&mut rng).unwrap();
            assert!(on_curve_reference(kp.public()));
        }
    }
}
