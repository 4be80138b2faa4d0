//! Per-frame protection under an installed PTK or GTK.
//!
//! Level 1 authenticates header and payload and sends the payload in clear.
//! Level 2 authenticates the header and encrypts the payload.

use std::fmt;

use thiserror::Error;

use crate::crypto::{ccm_open, ccm_seal, CipherFunction, CryptoError, KeyRole};
use crate::frame::{
    advance_sequence, check_replay, Address, Frame, FrameType, ReplayReason, ReplayVerdict,
    SecurityLevel, SequencePair,
};
use crate::keys::{cipher_for, KeyOwner, KeyRecord, KeyState, KeyStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("key is not active")]
    KeyNotActive,
    #[error("no active PTK for {0} <-> {1}")]
    NoKey(Address, Address),
    #[error("sequence space exhausted; rotate the PTK")]
    SequenceExhausted,
    #[error("level 0 frames are not sealed")]
    Unsecured,
    #[error("nonce would repeat under this key")]
    NonceReuse,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Why an inbound frame was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiscardReason {
    NoKeys,
    NotFresh,
    HighWrap,
    AuthFailure,
    KeyRevoked,
    LevelNotPermitted,
    Malformed,
    NotAdmitted,
    NotForUs,
    RateLimited,
    Jammed,
    Dead,
    Unreachable,
    /// The receiver had no processing capacity left this tick.
    Overload,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::NoKeys => "NoKeys",
            DiscardReason::NotFresh => "NotFresh",
            DiscardReason::HighWrap => "HighWrap",
            DiscardReason::AuthFailure => "AuthFailure",
            DiscardReason::KeyRevoked => "KeyRevoked",
            DiscardReason::LevelNotPermitted => "LevelNotPermitted",
            DiscardReason::Malformed => "Malformed",
            DiscardReason::NotAdmitted => "NotAdmitted",
            DiscardReason::NotForUs => "NotForUs",
            DiscardReason::RateLimited => "RateLimited",
            DiscardReason::Jammed => "Jammed",
            DiscardReason::Dead => "Dead",
            DiscardReason::Unreachable => "Unreachable",
            DiscardReason::Overload => "Overload",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use DiscardReason::*;
        [
            NoKeys, NotFresh, HighWrap, AuthFailure, KeyRevoked, LevelNotPermitted, Malformed,
            NotAdmitted, NotForUs, RateLimited, Jammed, Dead, Unreachable, Overload,
        ]
        .into_iter()
        .find(|r| r.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<ReplayReason> for DiscardReason {
    fn from(r: ReplayReason) -> Self {
        match r {
            ReplayReason::NotFresh => DiscardReason::NotFresh,
            ReplayReason::HighWrap => DiscardReason::HighWrap,
        }
    }
}

/// Seal a frame under `record`, advancing its transmit counter.
#[allow(clippy::too_many_arguments)]
pub fn seal_with_record(
    record: &mut KeyRecord,
    cipher: CipherFunction,
    sender: Address,
    recipient: Address,
    frame_type: FrameType,
    level: SecurityLevel,
    payload: &[u8],
    mic_len: usize,
) -> Result<Frame, ChannelError> {
    if record.state != KeyState::Active {
        return Err(ChannelError::KeyNotActive);
    }
    if !level.is_secured() {
        return Err(ChannelError::Unsecured);
    }
    let seq = advance_sequence(record.last_seq_tx).map_err(|_| ChannelError::SequenceExhausted)?;
    if seq <= record.last_seq_tx {
        return Err(ChannelError::NonceReuse);
    }
    let mut frame = Frame {
        sender,
        recipient,
        frame_type,
        level,
        seq,
        key_id: record.epoch as u8,
        payload: payload.to_vec(),
        mic: Vec::new(),
    };
    let header = frame.header_unchecked(mic_len);
    let nonce = frame.nonce();
    let (ct, mic) = match level {
        SecurityLevel::Level1AuthOnly => {
            let aad = [&header[..], payload].concat();
            ccm_seal(cipher, &record.key, &nonce, &aad, &[], mic_len)?
        }
        _ => ccm_seal(cipher, &record.key, &nonce, &header, payload, mic_len)?,
    };
    if level == SecurityLevel::Level2AuthEnc {
        frame.payload = ct;
    }
    frame.mic = mic;
    record.last_seq_tx = seq;
    Ok(frame)
}

fn try_open(record: &KeyRecord, cipher: CipherFunction, frame: &Frame) -> Option<Vec<u8>> {
    let header = frame.header().ok()?;
    let nonce = frame.nonce();
    match frame.level {
        SecurityLevel::Level1AuthOnly => {
            let aad = [&header[..], &frame.payload[..]].concat();
            ccm_open(cipher, &record.key, &nonce, &aad, &[], &frame.mic).ok()?;
            Some(frame.payload.clone())
        }
        SecurityLevel::Level2AuthEnc => {
            ccm_open(cipher, &record.key, &nonce, &header, &frame.payload, &frame.mic).ok()
        }
        SecurityLevel::Level0Unsecured => None,
    }
}

/// Verify, decrypt and freshness-check a frame under `record`.
///
/// The high-order sequence number is not on air; the receiver tries its
/// current high and the next one, and the MIC picks the right one.
pub fn open_with_record(
    record: &mut KeyRecord,
    cipher: CipherFunction,
    frame: &Frame,
) -> Result<Vec<u8>, DiscardReason> {
    match record.state {
        KeyState::Revoked => return Err(DiscardReason::KeyRevoked),
        KeyState::Retired if record.grace_remaining == 0 => return Err(DiscardReason::KeyRevoked),
        _ => {}
    }
    if !frame.level.is_secured() {
        return Err(DiscardReason::LevelNotPermitted);
    }
    let last = record.last_seq_rx;
    let candidates = [last.high, last.high.wrapping_add(1)];
    for high in candidates {
        let f = frame.clone().with_high(high);
        if let Some(plain) = try_open(record, cipher, &f) {
            return match check_replay(last, f.seq) {
                ReplayVerdict::Accept => {
                    record.last_seq_rx = f.seq;
                    if record.state == KeyState::Retired {
                        record.grace_remaining -= 1;
                    }
                    Ok(plain)
                }
                ReplayVerdict::Discard(r) => Err(r.into()),
            };
        }
    }
    Err(DiscardReason::AuthFailure)
}

/// Seal under the active PTK shared by `local` and `peer`.
pub fn seal_frame(
    store: &mut KeyStore,
    local: Address,
    peer: Address,
    frame_type: FrameType,
    level: SecurityLevel,
    payload: &[u8],
) -> Result<Frame, ChannelError> {
    let rec = store
        .active_mut(KeyOwner::pair(local, peer), KeyRole::Ptk)
        .ok_or(ChannelError::NoKey(local, peer))?;
    let cipher = cipher_for(rec.key.bits());
    seal_with_record(rec, cipher, local, peer, frame_type, level, payload, crate::crypto::MIC_LEN_FRAME)
}

/// Open a frame addressed to `local` using the PTK the frame's key index names.
pub fn open_frame(store: &mut KeyStore, local: Address, frame: &Frame) -> Result<Vec<u8>, DiscardReason> {
    let rec = store
        .ptk_by_index_mut(KeyOwner::pair(local, frame.sender), frame.key_id)
        .ok_or(DiscardReason::NoKeys)?;
    let cipher = cipher_for(rec.key.bits());
    open_with_record(rec, cipher, frame)
}

/// Last accepted sequence pair for the pair's active PTK.
pub fn last_rx(store: &KeyStore, local: Address, peer: Address) -> Option<SequencePair> {
    store.active(KeyOwner::pair(local, peer), KeyRole::Ptk).map(|r| r.last_seq_rx)
}
