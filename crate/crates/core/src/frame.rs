//! MAC frame wire codec, CCM nonce layout and security sequence numbers.
//!
//! Header layout (10 octets, big-endian integers):
//!
//! ```text
//! sender(2) | recipient(2) | type(1) | level(1) | key_id(1) | low SN(2) | payload len(1)
//! ```
//!
//! followed by the payload and the MIC. The level octet carries the security
//! level in bits 0-1 and the MIC length code in bits 4-5 (0 = none, 1 = 8
//! octets, 2 = 16 octets), which makes the encoding self-delimiting.
//!
//! The high-order sequence number never travels on the air. Receivers recover
//! it from their own replay state (see [`crate::channel`]); a freshly decoded
//! frame therefore carries `seq.high == 0` until [`Frame::with_high`] is
//! applied.

use std::fmt;

use thiserror::Error;

pub const HEADER_LEN: usize = 10;
pub const MAX_PAYLOAD: usize = 255;
pub const NONCE_LEN: usize = 13;

/// 16-bit node or hub identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub u16);

impl Address {
    /// Reserved for nodes that have no assigned address yet.
    pub const UNASSIGNED: Address = Address(0);
    pub const BROADCAST: Address = Address(0xFFFF);
    pub const HUB_RANGE_START: u16 = 0xFF00;

    pub fn is_hub(self) -> bool {
        self.0 >= Self::HUB_RANGE_START && self != Self::BROADCAST
    }

    pub fn is_unassigned(self) -> bool {
        self == Self::UNASSIGNED
    }

    pub fn to_be_bytes(self) -> [u8; 2] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:04x}", self.0)
    }
}

impl From<u16> for Address {
    fn from(v: u16) -> Self {
        Address(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SecurityLevel {
    Level0Unsecured = 0,
    Level1AuthOnly = 1,
    Level2AuthEnc = 2,
}

impl SecurityLevel {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Level0Unsecured),
            1 => Some(Self::Level1AuthOnly),
            2 => Some(Self::Level2AuthEnc),
            _ => None,
        }
    }

    pub fn is_secured(self) -> bool {
        self != Self::Level0Unsecured
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Beacon = 0,
    Management = 1,
    Control = 2,
    Data = 3,
    WakeUp = 4,
}

impl FrameType {
    pub const ALL: [FrameType; 5] = [
        FrameType::Beacon,
        FrameType::Management,
        FrameType::Control,
        FrameType::Data,
        FrameType::WakeUp,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Beacon => "beacon",
            FrameType::Management => "mgmt",
            FrameType::Control => "control",
            FrameType::Data => "data",
            FrameType::WakeUp => "wakeup",
        }
    }
}

/// Security sequence number: 32-bit high-order and 16-bit low-order counter.
///
/// Field order makes the derived `Ord` lexicographic on `(high, low)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SequencePair {
    pub high: u32,
    pub low: u16,
}

impl SequencePair {
    pub const ZERO: SequencePair = SequencePair { high: 0, low: 0 };

    pub fn new(high: u32, low: u16) -> Self {
        Self { high, low }
    }
}

impl fmt::Display for SequencePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.high, self.low)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sequence space exhausted; the key must be retired")]
pub struct SequenceExhausted;

/// Increment the low-order counter, carrying into the high-order one.
pub fn advance_sequence(seq: SequencePair) -> Result<SequencePair, SequenceExhausted> {
    match seq.low.checked_add(1) {
        Some(low) => Ok(SequencePair { high: seq.high, low }),
        None => {
            let high = seq.high.checked_add(1).ok_or(SequenceExhausted)?;
            Ok(SequencePair { high, low: 0 })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplayReason {
    NotFresh,
    HighWrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayVerdict {
    Accept,
    Discard(ReplayReason),
}

/// Strict monotone freshness check against the single last accepted pair.
pub fn check_replay(last_accepted: SequencePair, incoming: SequencePair) -> ReplayVerdict {
    if incoming.high < last_accepted.high {
        ReplayVerdict::Discard(ReplayReason::HighWrap)
    } else if incoming <= last_accepted {
        ReplayVerdict::Discard(ReplayReason::NotFresh)
    } else {
        ReplayVerdict::Accept
    }
}

/// 13-octet CCM nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce(pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

/// Tag octet mixed into the nonce: level in the high nibble, frame type in the low.
pub fn level_tag(level: SecurityLevel, frame_type: FrameType) -> u8 {
    (level.as_u8() << 4) | frame_type as u8
}

/// `sender(2) | recipient(2) | tag(1) | high SN(4) | low SN(2) | 0x0000`
pub fn build_nonce(sender: Address, recipient: Address, level_tag: u8, seq: SequencePair) -> Nonce {
    let mut n = [0u8; NONCE_LEN];
    n[0..2].copy_from_slice(&sender.to_be_bytes());
    n[2..4].copy_from_slice(&recipient.to_be_bytes());
    n[4] = level_tag;
    n[5..9].copy_from_slice(&seq.high.to_be_bytes());
    n[9..11].copy_from_slice(&seq.low.to_be_bytes());
    Nonce(n)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub sender: Address,
    pub recipient: Address,
    pub frame_type: FrameType,
    pub level: SecurityLevel,
    pub seq: SequencePair,
    pub key_id: u8,
    pub payload: Vec<u8>,
    pub mic: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} octets exceeds the {MAX_PAYLOAD}-octet limit")]
    PayloadTooLong(usize),
    #[error("invalid MIC length {len} for security level {level}")]
    InvalidMic { level: SecurityLevel, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} octets, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
}

fn mic_code(len: usize) -> Option<u8> {
    match len {
        0 => Some(0),
        8 => Some(1),
        16 => Some(2),
        _ => None,
    }
}

fn mic_len_from_code(code: u8) -> Option<usize> {
    match code {
        0 => Some(0),
        1 => Some(8),
        2 => Some(16),
        _ => None,
    }
}

impl Frame {
    /// Unsecured frame with an empty MIC.
    pub fn plain(
        sender: Address,
        recipient: Address,
        frame_type: FrameType,
        seq: SequencePair,
        payload: Vec<u8>,
    ) -> Self {
        Self {
            sender,
            recipient,
            frame_type,
            level: SecurityLevel::Level0Unsecured,
            seq,
            key_id: 0,
            payload,
            mic: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(EncodeError::PayloadTooLong(self.payload.len()));
        }
        let mic_ok = match self.level {
            SecurityLevel::Level0Unsecured => self.mic.is_empty(),
            _ => !self.mic.is_empty() && mic_code(self.mic.len()).is_some(),
        };
        if !mic_ok {
            return Err(EncodeError::InvalidMic { level: self.level, len: self.mic.len() });
        }
        Ok(())
    }

    /// The 10-octet header, also used as CCM associated data.
    pub fn header(&self) -> Result<[u8; HEADER_LEN], EncodeError> {
        self.validate()?;
        Ok(self.header_unchecked(self.mic.len()))
    }

    /// Header as it will appear once a MIC of `mic_len` octets is attached.
    pub(crate) fn header_unchecked(&self, mic_len: usize) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..2].copy_from_slice(&self.sender.to_be_bytes());
        h[2..4].copy_from_slice(&self.recipient.to_be_bytes());
        h[4] = self.frame_type as u8;
        h[5] = self.level.as_u8() | (mic_code(mic_len).unwrap_or(0) << 4);
        h[6] = self.key_id;
        h[7..9].copy_from_slice(&self.seq.low.to_be_bytes());
        h[9] = self.payload.len() as u8;
        h
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + self.mic.len()
    }

    pub fn nonce(&self) -> Nonce {
        build_nonce(
            self.sender,
            self.recipient,
            level_tag(self.level, self.frame_type),
            self.seq,
        )
    }

    pub fn with_high(mut self, high: u32) -> Self {
        self.seq.high = high;
        self
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, EncodeError> {
    let header = frame.header()?;
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&header);
    out.extend_from_slice(&frame.payload);
    out.extend_from_slice(&frame.mic);
    Ok(out)
}

/// Decode exactly one frame; trailing octets are rejected.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, DecodeError> {
    let (frame, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::Malformed("trailing octets after MIC"));
    }
    Ok(frame)
}

/// Decode one frame from the front of `bytes`, returning it and the octets consumed.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Frame, usize), DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated { needed: HEADER_LEN, got: bytes.len() });
    }
    let sender = Address(u16::from_be_bytes([bytes[0], bytes[1]]));
    let recipient = Address(u16::from_be_bytes([bytes[2], bytes[3]]));
    let frame_type =
        FrameType::from_u8(bytes[4]).ok_or(DecodeError::Malformed("unknown frame type"))?;
    let level_octet = bytes[5];
    if level_octet & 0b1100_1100 != 0 {
        return Err(DecodeError::Malformed("reserved bits set in level octet"));
    }
    let level = SecurityLevel::from_u8(level_octet & 0b11)
        .ok_or(DecodeError::Malformed("unknown security level"))?;
    let mic_len = mic_len_from_code((level_octet >> 4) & 0b11)
        .ok_or(DecodeError::Malformed("unknown MIC length code"))?;
    match (level, mic_len) {
        (SecurityLevel::Level0Unsecured, 0) => {}
        (SecurityLevel::Level0Unsecured, _) => {
            return Err(DecodeError::Malformed("unsecured frame carries a MIC"))
        }
        (_, 0) => return Err(DecodeError::Malformed("secured frame without MIC")),
        _ => {}
    }
    let key_id = bytes[6];
    let low = u16::from_be_bytes([bytes[7], bytes[8]]);
    let payload_len = bytes[9] as usize;
    let total = HEADER_LEN + payload_len + mic_len;
    if bytes.len() < total {
        return Err(DecodeError::Truncated { needed: total, got: bytes.len() });
    }
    let payload = bytes[HEADER_LEN..HEADER_LEN + payload_len].to_vec();
    let mic = bytes[HEADER_LEN + payload_len..total].to_vec();
    Ok((
        Frame {
            sender,
            recipient,
            frame_type,
            level,
            seq: SequencePair { high: 0, low },
            key_id,
            payload,
            mic,
        },
        total,
    ))
}
