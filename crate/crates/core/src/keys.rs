//! MK/PTK/GTK lifecycle and the sealed at-rest keystore.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::channel::{self, ChannelError};
use crate::crypto::{
    ccm_open, ccm_seal, derive_key, CipherFunction, CryptoError, KdfBase, KeyRole, KeySize,
    SymmetricKey, MIC_LEN_CONFIRM, MIC_LEN_FRAME,
};
use crate::frame::{Address, Frame, FrameType, Nonce, SecurityLevel, SequencePair, NONCE_LEN};
use crate::suite::AssocProtocol;

pub const KEYSTORE_MAGIC: &[u8; 4] = b"BKS1";
const STORE_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub u32);

impl std::fmt::Display for KeyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "k{}", self.0)
    }
}

/// Who a key belongs to. Pairs are stored with the lower address first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyOwner {
    Pair(Address, Address),
    Group(u8),
}

impl KeyOwner {
    pub fn pair(a: Address, b: Address) -> Self {
        if a <= b {
            KeyOwner::Pair(a, b)
        } else {
            KeyOwner::Pair(b, a)
        }
    }

    pub fn involves(&self, addr: Address) -> bool {
        matches!(self, KeyOwner::Pair(a, b) if *a == addr || *b == addr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyOrigin {
    PreShared,
    Protocol(AssocProtocol),
    Session,
    Gtk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyState {
    Active,
    Retired,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub id: KeyId,
    pub key: SymmetricKey,
    pub owner: KeyOwner,
    pub origin: KeyOrigin,
    pub epoch: u32,
    pub state: KeyState,
    pub last_seq_tx: SequencePair,
    pub last_seq_rx: SequencePair,
    /// Frames still accepted under a Retired key.
    pub grace_remaining: u32,
}

impl KeyRecord {
    /// A fresh record; the id is assigned on installation.
    pub fn new(key: SymmetricKey, owner: KeyOwner, origin: KeyOrigin) -> Self {
        Self {
            id: KeyId(0),
            key,
            owner,
            origin,
            epoch: 0,
            state: KeyState::Active,
            last_seq_tx: SequencePair::ZERO,
            last_seq_rx: SequencePair::ZERO,
            grace_remaining: 0,
        }
    }

    pub fn with_epoch(mut self, epoch: u32) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn role(&self) -> KeyRole {
        self.key.role()
    }

    pub fn is_active(&self) -> bool {
        self.state == KeyState::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("an active {role} already exists for this owner")]
    KeyConflict { role: &'static str },
    #[error("no master key for {0} <-> {1}")]
    MissingMasterKey(Address, Address),
    #[error("node {0} has no active PTK with the hub")]
    NotSecured(Address),
    #[error("no key {0}")]
    NotFound(KeyId),
    #[error("no keys for {0} <-> {1}")]
    PairNotFound(Address, Address),
    #[error("malformed keystore blob: {0}")]
    Malformed(&'static str),
    #[error("store-key nonce space exhausted")]
    StoreNonceExhausted,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl KeyError {
    pub fn is_auth_failure(&self) -> bool {
        matches!(self, KeyError::Crypto(CryptoError::AuthFailure))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyStore {
    records: Vec<KeyRecord>,
    next_id: u32,
    store_nonce: u64,
    /// Grace given to keys when they move to Retired.
    pub retired_grace_frames: u32,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[KeyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: KeyId) -> Option<&KeyRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn get_mut(&mut self, id: KeyId) -> Option<&mut KeyRecord> {
        self.records.iter_mut().find(|r| r.id == id)
    }

    pub fn active(&self, owner: KeyOwner, role: KeyRole) -> Option<&KeyRecord> {
        self.records
            .iter()
            .find(|r| r.owner == owner && r.role() == role && r.is_active())
    }

    pub fn active_mut(&mut self, owner: KeyOwner, role: KeyRole) -> Option<&mut KeyRecord> {
        self.records
            .iter_mut()
            .find(|r| r.owner == owner && r.role() == role && r.is_active())
    }

    /// PTK for the pair whose epoch matches the on-air key index, in any state.
    pub fn ptk_by_index_mut(&mut self, owner: KeyOwner, key_index: u8) -> Option<&mut KeyRecord> {
        let mut best: Option<usize> = None;
        for (i, r) in self.records.iter().enumerate() {
            if r.owner == owner && r.role() == KeyRole::Ptk && r.epoch as u8 == key_index {
                // Prefer the Active one if an old epoch aliases the index.
                if best.is_none() || r.is_active() {
                    best = Some(i);
                }
            }
        }
        best.map(move |i| &mut self.records[i])
    }

    pub fn install_key(&mut self, mut record: KeyRecord, replace: bool) -> Result<KeyId, KeyError> {
        let role = record.role();
        let grace = self.retired_grace_frames;
        if let Some(old) = self.active_mut(record.owner, role) {
            if !replace {
                return Err(KeyError::KeyConflict { role: role.as_str() });
            }
            old.state = KeyState::Retired;
            old.grace_remaining = grace;
        }
        self.next_id += 1;
        record.id = KeyId(self.next_id);
        record.state = KeyState::Active;
        let id = record.id;
        self.records.push(record);
        Ok(id)
    }

    /// Derive the next-epoch PTK for `initiator`/`responder` from their MK.
    pub fn rotate_ptk(
        &mut self,
        initiator: Address,
        responder: Address,
        initiator_nonce: &[u8; 16],
        responder_nonce: &[u8; 16],
    ) -> Result<(KeyId, u32), KeyError> {
        let owner = KeyOwner::pair(initiator, responder);
        let mk = self
            .active(owner, KeyRole::Mk)
            .ok_or(KeyError::MissingMasterKey(initiator, responder))?;
        let epoch = self
            .records
            .iter()
            .filter(|r| r.owner == owner && r.role() == KeyRole::Ptk)
            .map(|r| r.epoch)
            .max()
            .unwrap_or(0)
            + 1;
        let ctx = ptk_context(initiator, responder, initiator_nonce, responder_nonce, epoch);
        let ptk = derive_key(KdfBase::Key(&mk.key), "PTK", &ctx, mk.key.bits())?;
        let id = self.install_key(KeyRecord::new(ptk, owner, KeyOrigin::Session).with_epoch(epoch), true)?;
        Ok((id, epoch))
    }

    /// Hub side: seal one fresh GTK to every member under its PTK.
    pub fn distribute_gtk<R: RngCore + CryptoRng>(
        &mut self,
        rng: &mut R,
        hub: Address,
        group: u8,
        members: &[Address],
        bits: KeySize,
    ) -> Result<(Vec<Frame>, KeyId), KeyError> {
        for m in members {
            if self.active(KeyOwner::pair(hub, *m), KeyRole::Ptk).is_none() {
                return Err(KeyError::NotSecured(*m));
            }
        }
        let gtk = SymmetricKey::random(rng, bits, KeyRole::Gtk)?;
        let mut body = vec![group];
        body.extend_from_slice(gtk.material());
        let mut frames = Vec::with_capacity(members.len());
        for m in members {
            let rec = self
                .active_mut(KeyOwner::pair(hub, *m), KeyRole::Ptk)
                .expect("checked above");
            let cipher = cipher_for(rec.key.bits());
            frames.push(channel::seal_with_record(
                rec,
                cipher,
                hub,
                *m,
                FrameType::Management,
                SecurityLevel::Level2AuthEnc,
                &body,
                MIC_LEN_FRAME,
            )?);
        }
        let id = self.install_key(KeyRecord::new(gtk, KeyOwner::Group(group), KeyOrigin::Gtk), true)?;
        Ok((frames, id))
    }

    /// Member side: open a GTK distribution frame from `hub` and install the GTK.
    pub fn accept_gtk(&mut self, local: Address, frame: &Frame) -> Result<KeyId, KeyError> {
        let owner = KeyOwner::pair(local, frame.sender);
        let rec = self
            .ptk_by_index_mut(owner, frame.key_id)
            .ok_or(KeyError::NotSecured(local))?;
        let cipher = cipher_for(rec.key.bits());
        let body = channel::open_with_record(rec, cipher, frame)
            .map_err(|_| KeyError::Crypto(CryptoError::AuthFailure))?;
        let (&group, material) = body.split_first().ok_or(KeyError::Malformed("empty GTK frame"))?;
        let bits = match material.len() {
            16 => KeySize::K128,
            32 => KeySize::K256,
            _ => return Err(KeyError::Malformed("GTK length")),
        };
        let gtk = SymmetricKey::new(bits, material.to_vec(), KeyRole::Gtk)?;
        self.install_key(KeyRecord::new(gtk, KeyOwner::Group(group), KeyOrigin::Gtk), true)
    }

    /// Idempotent.
    pub fn revoke_key(&mut self, id: KeyId) -> Result<(), KeyError> {
        let r = self.get_mut(id).ok_or(KeyError::NotFound(id))?;
        r.state = KeyState::Revoked;
        r.grace_remaining = 0;
        Ok(())
    }

    /// Drop every MK and PTK of the pair. Returns how many records went.
    pub fn erase_pair(&mut self, a: Address, b: Address) -> usize {
        let owner = KeyOwner::pair(a, b);
        let before = self.records.len();
        self.records
            .retain(|r| !(r.owner == owner && matches!(r.role(), KeyRole::Mk | KeyRole::Ptk)));
        before - self.records.len()
    }

    pub fn has_pair(&self, a: Address, b: Address) -> bool {
        let owner = KeyOwner::pair(a, b);
        self.records.iter().any(|r| r.owner == owner)
    }

    /// Seal the whole store under `store_key`.
    pub fn persist(&mut self, store_key: &SymmetricKey) -> Result<Vec<u8>, KeyError> {
        self.store_nonce = self.store_nonce.checked_add(1).ok_or(KeyError::StoreNonceExhausted)?;
        let nonce = store_nonce(self.store_nonce);
        let plain = self.serialize();
        let (ct, mic) = ccm_seal(
            cipher_for(store_key.bits()),
            store_key,
            &nonce,
            KEYSTORE_MAGIC,
            &plain,
            MIC_LEN_CONFIRM,
        )?;
        let mut blob = Vec::with_capacity(4 + NONCE_LEN + ct.len() + MIC_LEN_CONFIRM);
        blob.extend_from_slice(KEYSTORE_MAGIC);
        blob.extend_from_slice(nonce.as_bytes());
        blob.extend_from_slice(&ct);
        blob.extend_from_slice(&mic);
        Ok(blob)
    }

    pub fn open(blob: &[u8], store_key: &SymmetricKey) -> Result<KeyStore, KeyError> {
        if blob.len() < 4 + NONCE_LEN + MIC_LEN_CONFIRM || &blob[..4] != KEYSTORE_MAGIC {
            return Err(KeyError::Malformed("bad magic or length"));
        }
        let nonce = Nonce(blob[4..4 + NONCE_LEN].try_into().expect("length checked"));
        let (ct, mic) = blob[4 + NONCE_LEN..].split_at(blob.len() - 4 - NONCE_LEN - MIC_LEN_CONFIRM);
        let plain = ccm_open(cipher_for(store_key.bits()), store_key, &nonce, KEYSTORE_MAGIC, ct, mic)?;
        Self::deserialize(&plain)
    }

    fn serialize(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.push(STORE_FORMAT_VERSION);
        w.extend_from_slice(&self.next_id.to_be_bytes());
        w.extend_from_slice(&self.store_nonce.to_be_bytes());
        w.extend_from_slice(&self.retired_grace_frames.to_be_bytes());
        w.extend_from_slice(&(self.records.len() as u32).to_be_bytes());
        for r in &self.records {
            w.extend_from_slice(&r.id.0.to_be_bytes());
            w.push(role_code(r.role()));
            w.push(r.key.material().len() as u8);
            w.extend_from_slice(r.key.material());
            match r.owner {
                KeyOwner::Pair(a, b) => {
                    w.push(0);
                    w.extend_from_slice(&a.to_be_bytes());
                    w.extend_from_slice(&b.to_be_bytes());
                }
                KeyOwner::Group(g) => {
                    w.push(1);
                    w.push(g);
                }
            }
            match r.origin {
                KeyOrigin::PreShared => w.push(0),
                KeyOrigin::Session => w.push(1),
                KeyOrigin::Gtk => w.push(2),
                KeyOrigin::Protocol(p) => w.push(0x10 | p.as_u8()),
            }
            w.extend_from_slice(&r.epoch.to_be_bytes());
            w.push(match r.state {
                KeyState::Active => 0,
                KeyState::Retired => 1,
                KeyState::Revoked => 2,
            });
            for s in [r.last_seq_tx, r.last_seq_rx] {
                w.extend_from_slice(&s.high.to_be_bytes());
                w.extend_from_slice(&s.low.to_be_bytes());
            }
            w.extend_from_slice(&r.grace_remaining.to_be_bytes());
        }
        w
    }

    fn deserialize(bytes: &[u8]) -> Result<KeyStore, KeyError> {
        let mut r = Reader { b: bytes, pos: 0 };
        if r.u8()? != STORE_FORMAT_VERSION {
            return Err(KeyError::Malformed("unknown format version"));
        }
        let next_id = r.u32()?;
        let store_nonce = r.u64()?;
        let retired_grace_frames = r.u32()?;
        let n = r.u32()? as usize;
        let mut records = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let id = KeyId(r.u32()?);
            let role = role_from_code(r.u8()?)?;
            let len = r.u8()? as usize;
            let bits = match len {
                16 => KeySize::K128,
                32 => KeySize::K256,
                _ => return Err(KeyError::Malformed("key length")),
            };
            let key = SymmetricKey::new(bits, r.take(len)?.to_vec(), role)?;
            let owner = match r.u8()? {
                0 => KeyOwner::Pair(Address(r.u16()?), Address(r.u16()?)),
                1 => KeyOwner::Group(r.u8()?),
                _ => return Err(KeyError::Malformed("owner tag")),
            };
            let origin = match r.u8()? {
                0 => KeyOrigin::PreShared,
                1 => KeyOrigin::Session,
                2 => KeyOrigin::Gtk,
                c if c & 0xF0 == 0x10 => KeyOrigin::Protocol(
                    AssocProtocol::from_u8(c & 0x0F).ok_or(KeyError::Malformed("origin protocol"))?,
                ),
                _ => return Err(KeyError::Malformed("origin tag")),
            };
            let epoch = r.u32()?;
            let state = match r.u8()? {
                0 => KeyState::Active,
                1 => KeyState::Retired,
                2 => KeyState::Revoked,
                _ => return Err(KeyError::Malformed("state tag")),
            };
            let last_seq_tx = SequencePair::new(r.u32()?, r.u16()?);
            let last_seq_rx = SequencePair::new(r.u32()?, r.u16()?);
            let grace_remaining = r.u32()?;
            records.push(KeyRecord {
                id,
                key,
                owner,
                origin,
                epoch,
                state,
                last_seq_tx,
                last_seq_rx,
                grace_remaining,
            });
        }
        if r.pos != bytes.len() {
            return Err(KeyError::Malformed("trailing data"));
        }
        Ok(KeyStore { records, next_id, store_nonce, retired_grace_frames })
    }
}

pub fn cipher_for(bits: KeySize) -> CipherFunction {
    match bits {
        KeySize::K128 => CipherFunction::Aes128Ccm,
        KeySize::K256 => CipherFunction::Aes256Ccm,
    }
}

fn ptk_context(i: Address, r: Address, ni: &[u8; 16], nr: &[u8; 16], epoch: u32) -> Vec<u8> {
    let mut ctx = Vec::with_capacity(40);
    ctx.extend_from_slice(ni);
    ctx.extend_from_slice(nr);
    ctx.extend_from_slice(&i.to_be_bytes());
    ctx.extend_from_slice(&r.to_be_bytes());
    ctx.extend_from_slice(&epoch.to_be_bytes());
    ctx
}

fn store_nonce(counter: u64) -> Nonce {
    let mut n = [0u8; NONCE_LEN];
    n[..2].copy_from_slice(b"KS");
    n[2..10].copy_from_slice(&counter.to_be_bytes());
    Nonce(n)
}

fn role_code(r: KeyRole) -> u8 {
    match r {
        KeyRole::Mk => 0,
        KeyRole::Ptk => 1,
        KeyRole::Gtk => 2,
        KeyRole::Kck => 3,
    }
}

fn role_from_code(c: u8) -> Result<KeyRole, KeyError> {
    Ok(match c {
        0 => KeyRole::Mk,
        1 => KeyRole::Ptk,
        2 => KeyRole::Gtk,
        3 => KeyRole::Kck,
        _ => return Err(KeyError::Malformed("role tag")),
    })
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KeyError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.b.len());
        let end = end.ok_or(KeyError::Malformed("truncated"))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, KeyError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, KeyError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, KeyError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, KeyError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const A: Address = Address(0x0001);
    const B: Address = Address(0x0002);
    const C: Address = Address(0x0003);
    const H: Address = Address(0xFF01);

    fn mk(rng: &mut ChaCha20Rng) -> SymmetricKey {
        SymmetricKey::random(rng, KeySize::K128, KeyRole::Mk).unwrap()
    }

    fn secured_pair(rng: &mut ChaCha20Rng, node: Address) -> (KeyStore, KeyStore) {
        let m = mk(rng);
        let mut hub = KeyStore::new();
        let mut n = KeyStore::new();
        hub.install_key(KeyRecord::new(m.clone(), KeyOwner::pair(node, H), KeyOrigin::PreShared), false)
            .unwrap();
        n.install_key(KeyRecord::new(m, KeyOwner::pair(node, H), KeyOrigin::PreShared), false)
            .unwrap();
        let (ni, nr) = ([1u8; 16], [2u8; 16]);
        hub.rotate_ptk(node, H, &ni, &nr).unwrap();
        n.rotate_ptk(node, H, &ni, &nr).unwrap();
        (hub, n)
    }

    #[test]
    fn install_and_conflict() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut s = KeyStore::new();
        s.install_key(KeyRecord::new(mk(&mut rng), KeyOwner::pair(A, H), KeyOrigin::PreShared), false)
            .unwrap();
        assert_eq!(s.len(), 1);
        let ptk = |rng: &mut ChaCha20Rng| {
            KeyRecord::new(
                SymmetricKey::random(rng, KeySize::K128, KeyRole::Ptk).unwrap(),
                KeyOwner::pair(A, H),
                KeyOrigin::Session,
            )
        };
        let first = s.install_key(ptk(&mut rng), false).unwrap();
        assert!(matches!(s.install_key(ptk(&mut rng), false), Err(KeyError::KeyConflict { .. })));
        let second = s.install_key(ptk(&mut rng), true).unwrap();
        assert_eq!(s.get(first).unwrap().state, KeyState::Retired);
        assert_eq!(s.get(second).unwrap().state, KeyState::Active);
    }

    #[test]
    fn rotation_matches_on_both_ends_and_bumps_epoch() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (mut hub, mut node) = secured_pair(&mut rng, A);
        let owner = KeyOwner::pair(A, H);
        let k1 = hub.active(owner, KeyRole::Ptk).unwrap().clone();
        assert_eq!(k1.key, node.active(owner, KeyRole::Ptk).unwrap().key);
        assert_eq!(k1.epoch, 1);
        hub.active_mut(owner, KeyRole::Ptk).unwrap().last_seq_tx = SequencePair::new(0, 9);
        for _ in 0..2 {
            hub.rotate_ptk(A, H, &[3; 16], &[4; 16]).unwrap();
            node.rotate_ptk(A, H, &[3; 16], &[4; 16]).unwrap();
        }
        let k3 = hub.active(owner, KeyRole::Ptk).unwrap();
        assert_eq!(k3.epoch, 3);
        let (_, e4) = hub.rotate_ptk(A, H, &[3; 16], &[4; 16]).unwrap();
        assert_eq!(e4, 4);
        let k4 = hub.active(owner, KeyRole::Ptk).unwrap();
        assert_ne!(k4.key, k1.key);
        assert_eq!(k4.last_seq_tx, SequencePair::ZERO);
        assert_eq!(k4.last_seq_rx, SequencePair::ZERO);
        assert!(matches!(
            KeyStore::new().rotate_ptk(A, H, &[0; 16], &[0; 16]),
            Err(KeyError::MissingMasterKey(..))
        ));
    }

    #[test]
    fn gtk_reaches_every_member_identically() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut hub = KeyStore::new();
        let mut nodes = Vec::new();
        for addr in [A, B, C] {
            let (h, n) = secured_pair(&mut rng, addr);
            for r in h.records() {
                hub.install_key(r.clone(), true).unwrap();
            }
            nodes.push((addr, n));
        }
        let (frames, gid) = hub.distribute_gtk(&mut rng, H, 7, &[A, B, C], KeySize::K128).unwrap();
        assert_eq!(frames.len(), 3);
        let nonces: std::collections::HashSet<_> = frames.iter().map(|f| f.nonce()).collect();
        assert_eq!(nonces.len(), 3);
        let hub_gtk = hub.get(gid).unwrap().key.clone();
        for ((addr, store), f) in nodes.iter_mut().zip(&frames) {
            assert_eq!(f.recipient, *addr);
            let id = store.accept_gtk(*addr, f).unwrap();
            assert_eq!(store.get(id).unwrap().key, hub_gtk);
        }

        let (none, _) = hub.distribute_gtk(&mut rng, H, 8, &[], KeySize::K128).unwrap();
        assert!(none.is_empty());
        assert!(hub.active(KeyOwner::Group(8), KeyRole::Gtk).is_some());
        assert_eq!(
            hub.distribute_gtk(&mut rng, H, 9, &[A, Address(0x42)], KeySize::K128).unwrap_err(),
            KeyError::NotSecured(Address(0x42))
        );
    }

    #[test]
    fn revoke_is_idempotent() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut s = KeyStore::new();
        let id = s
            .install_key(KeyRecord::new(mk(&mut rng), KeyOwner::pair(A, H), KeyOrigin::PreShared), false)
            .unwrap();
        s.revoke_key(id).unwrap();
        s.revoke_key(id).unwrap();
        assert_eq!(s.get(id).unwrap().state, KeyState::Revoked);
        assert_eq!(s.revoke_key(KeyId(99)), Err(KeyError::NotFound(KeyId(99))));
    }

    fn random_store(rng: &mut ChaCha20Rng, n: usize) -> KeyStore {
        let mut s = KeyStore::new();
        for i in 0..n {
            let node = Address(i as u16 + 1);
            let bits = if i % 2 == 0 { KeySize::K128 } else { KeySize::K256 };
            let m = SymmetricKey::random(rng, bits, KeyRole::Mk).unwrap();
            s.install_key(
                KeyRecord::new(m, KeyOwner::pair(node, H), KeyOrigin::Protocol(AssocProtocol::ALL[i % 5])),
                false,
            )
            .unwrap();
            s.rotate_ptk(node, H, &[i as u8; 16], &[7; 16]).unwrap();
        }
        s
    }

    #[test]
    fn keystore_round_trip_tamper_and_scan() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let store_key = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Kck).unwrap();
        let mut s = random_store(&mut rng, 6);
        let blob = s.persist(&store_key).unwrap();
        assert_eq!(&blob[..4], KEYSTORE_MAGIC);
        assert_eq!(KeyStore::open(&blob, &store_key).unwrap(), s);

        for r in s.records() {
            let m = r.key.material();
            assert!(!blob.windows(m.len()).any(|w| w == m), "key material visible in blob");
        }

        let wrong = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Kck).unwrap();
        assert!(KeyStore::open(&blob, &wrong).unwrap_err().is_auth_failure());
        for i in [4, 10, 20, blob.len() - 1] {
            let mut t = blob.clone();
            t[i] ^= 0x01;
            assert!(KeyStore::open(&t, &store_key).unwrap_err().is_auth_failure());
        }

        let again = s.persist(&store_key).unwrap();
        assert_ne!(again[4..4 + NONCE_LEN], blob[4..4 + NONCE_LEN]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Install(u8, bool),
        Rotate(u8),
        Revoke(u8),
        Erase(u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u8..4, any::<bool>()).prop_map(|(n, r)| Op::Install(n, r)),
            (0u8..4).prop_map(Op::Rotate),
            (0u8..16).prop_map(Op::Revoke),
            (0u8..4).prop_map(Op::Erase),
        ]
    }

    proptest! {
        #[test]
        fn at_most_one_active_ptk_per_pair(ops in proptest::collection::vec(op(), 1..40)) {
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            let mut s = KeyStore::new();
            let mut epochs = std::collections::HashMap::new();
            for o in ops {
                match o {
                    Op::Install(n, replace) => {
                        let owner = KeyOwner::pair(Address(n as u16 + 1), H);
                        let _ = s.install_key(KeyRecord::new(mk(&mut rng), owner, KeyOrigin::PreShared), replace);
                        let k = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Ptk).unwrap();
                        let _ = s.install_key(KeyRecord::new(k, owner, KeyOrigin::Session), replace);
                    }
                    Op::Rotate(n) => {
                        if let Ok((_, e)) = s.rotate_ptk(Address(n as u16 + 1), H, &[0; 16], &[1; 16]) {
                            let prev = epochs.insert(n, e).unwrap_or(0);
                            prop_assert!(e > prev);
                        }
                    }
                    Op::Revoke(i) => { let _ = s.revoke_key(KeyId(i as u32)); }
                    Op::Erase(n) => { s.erase_pair(Address(n as u16 + 1), H); epochs.remove(&n); }
                }
                for n in 0..4u16 {
                    let owner = KeyOwner::pair(Address(n + 1), H);
                    let active = s.records().iter()
                        .filter(|r| r.owner == owner && r.role() == KeyRole::Ptk && r.is_active())
                        .count();
                    prop_assert!(active <= 1);
                }
            }
        }
    }
}
