//! Association protocols I-V, PTK establishment and disassociation.
//!
//! Every association is a three-message exchange: request, response,
//! activate. Sessions are driven by [`ProtocolSession::advance`].

use std::fmt;

use rand::{CryptoRng, Rng, RngCore};
use thiserror::Error;

use crate::channel::{self, DiscardReason};
use crate::crypto::{
    blind_point, ccm_open, ccm_seal, derive_key, derive_shared_secret, generate_keypair,
    password_scalar, unblind_point, CipherFunction, CryptoError, Fingerprint, KdfBase, KeyPair,
    KeyRole, KeySize, PublicPoint, SymmetricKey, TagAlgorithm, MIC_LEN_CONFIRM,
};
use crate::frame::{Address, Frame, FrameType, Nonce, SecurityLevel, NONCE_LEN};
use crate::keys::{KeyError, KeyId, KeyOrigin, KeyOwner, KeyRecord, KeyStore};
use crate::suite::{AssocProtocol, SecuritySuiteSelector, SSS_LEN};

pub const NONCE_OCTETS: usize = 16;
pub const CHECKVALUE_MODULUS: u32 = 100_000;
const DISASSOC_BODY: &[u8] = b"ERASE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Idle,
    Requested,
    Responded,
    Activated,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    AuthFailure,
    SuiteMismatch,
    ProtocolViolation,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AbortReason::AuthFailure => "AuthFailure",
            AbortReason::SuiteMismatch => "SuiteMismatch",
            AbortReason::ProtocolViolation => "ProtocolViolation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssocError {
    #[error("protocol {protocol} needs {missing}")]
    Config { protocol: AssocProtocol, missing: &'static str },
    #[error("display-authenticated association needs a display on both ends")]
    DisplayUnavailable,
    #[error("{0}")]
    Usage(&'static str),
    #[error("no keys for {0} <-> {1}")]
    NotFound(Address, Address),
    #[error("handshake aborted: {0}")]
    Aborted(AbortReason),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Key(#[from] KeyError),
}

/// Wire phase tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgPhase {
    Request = 1,
    Response = 2,
    Activate = 3,
}

impl MsgPhase {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(MsgPhase::Request),
            2 => Some(MsgPhase::Response),
            3 => Some(MsgPhase::Activate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeMsg {
    pub phase: MsgPhase,
    pub protocol: AssocProtocol,
    pub sss: SecuritySuiteSelector,
    pub sender: Address,
    pub recipient: Address,
    pub nonce: [u8; NONCE_OCTETS],
    pub public: Option<PublicPoint>,
    pub confirm: Option<[u8; MIC_LEN_CONFIRM]>,
    /// Protocol III: the initiator's static public key, sealed.
    pub hidden: Option<Vec<u8>>,
}

const FLAG_PUBLIC: u8 = 1;
const FLAG_CONFIRM: u8 = 2;
const FLAG_HIDDEN: u8 = 4;

impl HandshakeMsg {
    /// `phase | protocol | sss(4) | sender | recipient | nonce(16) | flags | [pub 64] | [len hidden] | [confirm 16]`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.body();
        if let Some(c) = &self.confirm {
            out[FLAGS_AT] |= FLAG_CONFIRM;
            out.extend_from_slice(c);
        }
        out
    }

    /// Encoding without the confirmation tag; this is what tags cover.
    pub fn body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FLAGS_AT + 1 + 64 + 96);
        out.push(self.phase as u8);
        out.push(self.protocol.as_u8());
        out.extend_from_slice(&self.sss.to_bytes());
        out.extend_from_slice(&self.sender.to_be_bytes());
        out.extend_from_slice(&self.recipient.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        let mut flags = 0;
        if self.public.is_some() {
            flags |= FLAG_PUBLIC;
        }
        if self.hidden.is_some() {
            flags |= FLAG_HIDDEN;
        }
        out.push(flags);
        if let Some(p) = &self.public {
            out.extend_from_slice(&p.to_bytes());
        }
        if let Some(h) = &self.hidden {
            out.push(h.len() as u8);
            out.extend_from_slice(h);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < FLAGS_AT + 1 {
            return None;
        }
        let phase = MsgPhase::from_u8(bytes[0])?;
        let protocol = AssocProtocol::from_u8(bytes[1])?;
        let sss = SecuritySuiteSelector::from_bytes(bytes[2..2 + SSS_LEN].try_into().ok()?)?;
        let sender = Address(u16::from_be_bytes([bytes[6], bytes[7]]));
        let recipient = Address(u16::from_be_bytes([bytes[8], bytes[9]]));
        let nonce: [u8; NONCE_OCTETS] = bytes[10..26].try_into().ok()?;
        let flags = bytes[FLAGS_AT];
        if flags & !(FLAG_PUBLIC | FLAG_CONFIRM | FLAG_HIDDEN) != 0 {
            return None;
        }
        let mut pos = FLAGS_AT + 1;
        let mut take = |n: usize| -> Option<&[u8]> {
            let s = bytes.get(pos..pos + n)?;
            pos += n;
            Some(s)
        };
        let public = if flags & FLAG_PUBLIC != 0 {
            Some(PublicPoint::from_bytes(take(64)?.try_into().ok()?))
        } else {
            None
        };
        let hidden = if flags & FLAG_HIDDEN != 0 {
            let n = take(1)?[0] as usize;
            Some(take(n)?.to_vec())
        } else {
            None
        };
        let confirm = if flags & FLAG_CONFIRM != 0 {
            Some(take(MIC_LEN_CONFIRM)?.try_into().ok()?)
        } else {
            None
        };
        if pos != bytes.len() {
            return None;
        }
        Some(Self { phase, protocol, sss, sender, recipient, nonce, public, confirm, hidden })
    }
}

const FLAGS_AT: usize = 26;

/// Materials a party brings to an association.
#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub local: Address,
    pub peer: Address,
    pub sss: SecuritySuiteSelector,
    pub pre_shared_mk: Option<SymmetricKey>,
    pub password: Option<Vec<u8>>,
    /// Long-term key pair; generated per session when absent.
    pub static_keypair: Option<KeyPair>,
    pub peer_static_public: Option<PublicPoint>,
    pub display: bool,
    pub tag_algorithm: TagAlgorithm,
}

impl SessionConfig {
    pub fn new(local: Address, peer: Address, sss: SecuritySuiteSelector) -> Self {
        Self {
            local,
            peer,
            sss,
            pre_shared_mk: None,
            password: None,
            static_keypair: None,
            peer_static_public: None,
            display: false,
            tag_algorithm: TagAlgorithm::Cmac,
        }
    }

    pub fn with_mk(mut self, mk: SymmetricKey) -> Self {
        self.pre_shared_mk = Some(mk);
        self
    }

    pub fn with_password(mut self, pw: &[u8]) -> Self {
        self.password = Some(pw.to_vec());
        self
    }

    pub fn with_static(mut self, kp: KeyPair) -> Self {
        self.static_keypair = Some(kp);
        self
    }

    pub fn with_peer_public(mut self, p: PublicPoint) -> Self {
        self.peer_static_public = Some(p);
        self
    }

    pub fn with_display(mut self, d: bool) -> Self {
        self.display = d;
        self
    }
}

#[derive(Clone, Debug)]
pub struct SessionResult {
    pub mk: SymmetricKey,
    pub mutually_authenticated: bool,
    pub initiator_nonce: [u8; NONCE_OCTETS],
    pub responder_nonce: [u8; NONCE_OCTETS],
    /// What the peer proved it holds: the shared MK for protocol I, the
    /// password for IV, otherwise its public key.
    pub peer_identity: Fingerprint,
}

pub struct ProtocolSession {
    role: Role,
    protocol: AssocProtocol,
    sss: SecuritySuiteSelector,
    local: Address,
    peer: Address,
    phase: Phase,
    abort: Option<AbortReason>,
    transcript: Vec<Vec<u8>>,
    own_nonce: [u8; NONCE_OCTETS],
    peer_nonce: Option<[u8; NONCE_OCTETS]>,
    /// DH key: ephemeral for III initiators, otherwise the party's key pair.
    keypair: Option<KeyPair>,
    /// III initiator's long-term key, sent hidden.
    static_keypair: Option<KeyPair>,
    peer_static_public: Option<PublicPoint>,
    peer_public: Option<PublicPoint>,
    password: Option<Vec<u8>>,
    pre_shared_mk: Option<SymmetricKey>,
    mk: Option<SymmetricKey>,
    kck: Option<SymmetricKey>,
    checkvalue_confirmed: bool,
    tag_algorithm: TagAlgorithm,
    result: Option<SessionResult>,
}

impl fmt::Debug for ProtocolSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProtocolSession")
            .field("role", &self.role)
            .field("protocol", &self.protocol)
            .field("local", &self.local)
            .field("peer", &self.peer)
            .field("phase", &self.phase)
            .field("abort", &self.abort)
            .finish_non_exhaustive()
    }
}

/// Stable identity of a password-authenticated party.
pub fn password_identity(password: &[u8]) -> Fingerprint {
    Fingerprint::of(b"assoc-password", password)
}

/// Lower address initiates when both sides start at once.
pub fn tie_break(a: Address, b: Address) -> (Address, Address) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// First 17 bits of `CMAC(nonce, transcript)`, reduced to five decimal digits.
pub fn checkvalue(key_nonce: &[u8; NONCE_OCTETS], transcript: &[u8]) -> u32 {
    let key = SymmetricKey::from_array(*key_nonce, KeyRole::Kck);
    let t = crate::crypto::cmac_tag(&key, transcript).0;
    let top17 = u32::from_be_bytes([t[0], t[1], t[2], t[3]]) >> 15;
    top17 % CHECKVALUE_MODULUS
}

pub fn create_session<R: RngCore + CryptoRng>(
    rng: &mut R,
    role: Role,
    protocol: AssocProtocol,
    cfg: SessionConfig,
) -> Result<ProtocolSession, AssocError> {
    let missing = |m| AssocError::Config { protocol, missing: m };
    if cfg.sss.protocol != protocol {
        return Err(AssocError::Usage("suite selector names a different protocol"));
    }
    let mut keypair = None;
    let mut static_keypair = None;
    match protocol {
        AssocProtocol::PreSharedMk => {
            if cfg.pre_shared_mk.is_none() {
                return Err(missing("a pre-shared master key"));
            }
        }
        AssocProtocol::Unauthenticated => {
            keypair = Some(own_keypair(rng, cfg.static_keypair.clone())?);
        }
        AssocProtocol::PublicKeyHidden => match role {
            Role::Initiator => {
                let peer = cfg
                    .peer_static_public
                    .ok_or(missing("the responder's pre-provisioned public key"))?;
                peer.validate()?;
                static_keypair = Some(own_keypair(rng, cfg.static_keypair.clone())?);
                keypair = Some(generate_keypair(rng)?);
            }
            Role::Responder => {
                keypair = Some(cfg.static_keypair.clone().ok_or(missing("a static key pair"))?);
            }
        },
        AssocProtocol::PasswordAuthenticated => {
            if cfg.password.is_none() {
                return Err(missing("a password"));
            }
            keypair = Some(own_keypair(rng, cfg.static_keypair.clone())?);
        }
        AssocProtocol::DisplayAuthenticated => {
            if !cfg.display {
                return Err(AssocError::DisplayUnavailable);
            }
            keypair = Some(own_keypair(rng, cfg.static_keypair.clone())?);
        }
    }
    let mut own_nonce = [0u8; NONCE_OCTETS];
    rng.try_fill_bytes(&mut own_nonce).map_err(|_| CryptoError::EntropyFailure)?;
    Ok(ProtocolSession {
        role,
        protocol,
        sss: cfg.sss,
        local: cfg.local,
        peer: cfg.peer,
        phase: Phase::Idle,
        abort: None,
        transcript: Vec::new(),
        own_nonce,
        peer_nonce: None,
        keypair,
        static_keypair,
        peer_static_public: cfg.peer_static_public,
        peer_public: None,
        password: cfg.password,
        pre_shared_mk: cfg.pre_shared_mk,
        mk: None,
        kck: None,
        checkvalue_confirmed: false,
        tag_algorithm: cfg.tag_algorithm,
        result: None,
    })
}

fn own_keypair<R: RngCore + CryptoRng>(rng: &mut R, given: Option<KeyPair>) -> Result<KeyPair, CryptoError> {
    match given {
        Some(k) => Ok(k),
        None => generate_keypair(rng),
    }
}

impl ProtocolSession {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn protocol(&self) -> AssocProtocol {
        self.protocol
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        self.abort
    }

    pub fn result(&self) -> Option<&SessionResult> {
        self.result.as_ref()
    }

    pub fn suite(&self) -> SecuritySuiteSelector {
        self.sss
    }

    pub fn local(&self) -> Address {
        self.local
    }

    pub fn peer(&self) -> Address {
        self.peer
    }

    pub fn has_keypair(&self) -> bool {
        self.keypair.is_some()
    }

    /// Whether any secret material is still held.
    pub fn holds_secrets(&self) -> bool {
        self.keypair.is_some()
            || self.static_keypair.is_some()
            || self.mk.is_some()
            || self.kck.is_some()
            || self.pre_shared_mk.is_some()
            || self.password.is_some()
    }

    /// The identity this party presents, as the peer will record it.
    pub fn local_identity(&self) -> Option<Fingerprint> {
        match self.protocol {
            AssocProtocol::PreSharedMk => self.pre_shared_mk.as_ref().map(|k| k.fingerprint()),
            AssocProtocol::PasswordAuthenticated => self.password.as_deref().map(password_identity),
            AssocProtocol::PublicKeyHidden if self.role == Role::Initiator => {
                self.static_keypair.as_ref().map(|k| k.public().fingerprint())
            }
            _ => self.keypair.as_ref().map(|k| k.public().fingerprint()),
        }
    }

    fn fail(&mut self, reason: AbortReason) -> AbortReason {
        self.phase = Phase::Aborted;
        self.abort = Some(reason);
        self.keypair = None;
        self.static_keypair = None;
        self.mk = None;
        self.kck = None;
        self.pre_shared_mk = None;
        self.password = None;
        self.result = None;
        reason
    }

    fn message(&self, phase: MsgPhase) -> HandshakeMsg {
        HandshakeMsg {
            phase,
            protocol: self.protocol,
            sss: self.sss,
            sender: self.local,
            recipient: self.peer,
            nonce: self.own_nonce,
            public: None,
            confirm: None,
            hidden: None,
        }
    }

    fn nonces(&self) -> ([u8; NONCE_OCTETS], [u8; NONCE_OCTETS]) {
        let peer = self.peer_nonce.expect("peer nonce known");
        match self.role {
            Role::Initiator => (self.own_nonce, peer),
            Role::Responder => (peer, self.own_nonce),
        }
    }

    fn addresses(&self) -> (Address, Address) {
        match self.role {
            Role::Initiator => (self.local, self.peer),
            Role::Responder => (self.peer, self.local),
        }
    }

    fn base_context(&self) -> Vec<u8> {
        let (ni, nr) = self.nonces();
        let (ia, ra) = self.addresses();
        [&ni[..], &nr[..], &ia.to_be_bytes()[..], &ra.to_be_bytes()[..]].concat()
    }

    fn dh(&self, own: &KeyPair, peer: &PublicPoint) -> Result<[u8; 32], AbortReason> {
        derive_shared_secret(own, peer).map_err(|_| AbortReason::AuthFailure)
    }

    fn hide_key(secret: &[u8; 32], ni: &[u8; NONCE_OCTETS]) -> Result<SymmetricKey, AbortReason> {
        derive_key(KdfBase::Secret(secret), "KCK", &[b"hide", &ni[..]].concat(), KeySize::K128)
            .map_err(|_| AbortReason::ProtocolViolation)
    }

    fn hide_nonce(ni: &[u8; NONCE_OCTETS]) -> Nonce {
        Nonce(ni[..NONCE_LEN].try_into().expect("16 > 13"))
    }

    /// Compute MK and KCK once both nonces and peer material are known.
    fn derive_keys(&mut self) -> Result<(), AbortReason> {
        let ctx = self.base_context();
        let bits = self.sss.cipher.key_size();
        let mk = match self.protocol {
            AssocProtocol::PreSharedMk => self.pre_shared_mk.clone().expect("checked at creation"),
            AssocProtocol::PublicKeyHidden => {
                let own = self.keypair.as_ref().expect("keypair");
                let (z1, z2) = match self.role {
                    Role::Initiator => {
                        let pr = self.peer_static_public.as_ref().expect("checked at creation");
                        let s = self.static_keypair.as_ref().expect("static");
                        (self.dh(own, pr)?, self.dh(s, pr)?)
                    }
                    Role::Responder => {
                        let pi = self.peer_public.as_ref().expect("unhidden");
                        let ei = self.peer_ephemeral()?;
                        (self.dh(own, &ei)?, self.dh(own, pi)?)
                    }
                };
                derive_key(KdfBase::Secret(&z1), "KMAC", &[&z2[..], &ctx].concat(), bits)
                    .map_err(|_| AbortReason::ProtocolViolation)?
            }
            _ => {
                let own = self.keypair.as_ref().expect("keypair");
                let peer = self.peer_public.as_ref().expect("peer public");
                let z = self.dh(own, peer)?;
                let (pi, pr) = match self.role {
                    Role::Initiator => (own.public().to_bytes(), peer.to_bytes()),
                    Role::Responder => (peer.to_bytes(), own.public().to_bytes()),
                };
                derive_key(KdfBase::Secret(&z), "KMAC", &[&ctx[..], &pi, &pr].concat(), bits)
                    .map_err(|_| AbortReason::ProtocolViolation)?
            }
        };
        let kck = derive_key(KdfBase::Key(&mk), "KCK", &ctx, KeySize::K128)
            .map_err(|_| AbortReason::ProtocolViolation)?;
        self.mk = Some(mk);
        self.kck = Some(kck);
        Ok(())
    }

    // The III responder keeps the initiator's ephemeral point in the transcript.
    fn peer_ephemeral(&self) -> Result<PublicPoint, AbortReason> {
        let req = HandshakeMsg::decode(&self.transcript[0]).ok_or(AbortReason::ProtocolViolation)?;
        req.public.ok_or(AbortReason::ProtocolViolation)
    }

    fn tag(&self, label: &[u8], upto: usize, body: &[u8]) -> [u8; MIC_LEN_CONFIRM] {
        let mut m = label.to_vec();
        for t in &self.transcript[..upto] {
            m.extend_from_slice(t);
        }
        m.extend_from_slice(body);
        self.tag_algorithm.tag(self.kck.as_ref().expect("kck"), &m).0
    }

    fn verify(&self, label: &[u8], upto: usize, body: &[u8], tag: &[u8]) -> bool {
        let mut m = label.to_vec();
        for t in &self.transcript[..upto] {
            m.extend_from_slice(t);
        }
        m.extend_from_slice(body);
        self.tag_algorithm.verify(self.kck.as_ref().expect("kck"), &m, tag)
    }

    fn response_confirmed(&self) -> bool {
        matches!(
            self.protocol,
            AssocProtocol::PreSharedMk | AssocProtocol::PublicKeyHidden | AssocProtocol::PasswordAuthenticated
        )
    }

    fn blind(&self, p: &PublicPoint) -> Result<PublicPoint, AbortReason> {
        let w = password_scalar(self.password.as_deref().expect("password"));
        blind_point(p, &w).map_err(|_| AbortReason::ProtocolViolation)
    }

    fn unblind(&self, p: &PublicPoint) -> Result<PublicPoint, AbortReason> {
        let w = password_scalar(self.password.as_deref().expect("password"));
        unblind_point(p, &w).map_err(|_| AbortReason::AuthFailure)
    }

    fn outgoing_public(&self) -> Result<Option<PublicPoint>, AbortReason> {
        let Some(kp) = &self.keypair else { return Ok(None) };
        Ok(match (self.protocol, self.role) {
            (AssocProtocol::PreSharedMk, _) => None,
            (AssocProtocol::PublicKeyHidden, Role::Responder) => None,
            (AssocProtocol::PasswordAuthenticated, _) => Some(self.blind(kp.public())?),
            _ => Some(*kp.public()),
        })
    }

    fn check_header(&self, msg: &HandshakeMsg, expect: MsgPhase) -> Result<(), AbortReason> {
        if msg.phase != expect
            || msg.protocol != self.protocol
            || msg.sender != self.peer
            || msg.recipient != self.local
        {
            return Err(AbortReason::ProtocolViolation);
        }
        if msg.sss != self.sss {
            return Err(AbortReason::SuiteMismatch);
        }
        Ok(())
    }

    /// Feed the next message (or nothing, to start as initiator).
    pub fn advance(&mut self, incoming: Option<&HandshakeMsg>) -> Result<Vec<HandshakeMsg>, AbortReason> {
        if self.phase == Phase::Aborted {
            return Err(self.abort.unwrap_or(AbortReason::ProtocolViolation));
        }
        match self.step(incoming) {
            Ok(out) => Ok(out),
            Err(r) => Err(self.fail(r)),
        }
    }

    /// As [`advance`](Self::advance) on encoded messages; undecodable input aborts.
    pub fn advance_bytes(&mut self, incoming: Option<&[u8]>) -> Result<Vec<Vec<u8>>, AbortReason> {
        let msg = match incoming {
            None => None,
            Some(b) => match HandshakeMsg::decode(b) {
                Some(m) => Some(m),
                None => return Err(self.fail(AbortReason::ProtocolViolation)),
            },
        };
        Ok(self.advance(msg.as_ref())?.iter().map(HandshakeMsg::encode).collect())
    }

    fn step(&mut self, incoming: Option<&HandshakeMsg>) -> Result<Vec<HandshakeMsg>, AbortReason> {
        match (self.role, self.phase, incoming) {
            (Role::Initiator, Phase::Idle, None) => self.send_request(),
            (Role::Responder, Phase::Idle, Some(m)) => self.on_request(m),
            (Role::Initiator, Phase::Requested, Some(m)) => self.on_response(m),
            (Role::Responder, Phase::Responded, Some(m)) => self.on_activate(m),
            _ => Err(AbortReason::ProtocolViolation),
        }
    }

    fn send_request(&mut self) -> Result<Vec<HandshakeMsg>, AbortReason> {
        let mut msg = self.message(MsgPhase::Request);
        msg.public = self.outgoing_public()?;
        if self.protocol == AssocProtocol::PublicKeyHidden {
            let eph = self.keypair.as_ref().expect("ephemeral");
            let pr = self.peer_static_public.as_ref().expect("checked at creation");
            let z = self.dh(eph, pr)?;
            let k = Self::hide_key(&z, &self.own_nonce)?;
            let pi = self.static_keypair.as_ref().expect("static").public().to_bytes();
            let aad = [self.local.to_be_bytes(), self.peer.to_be_bytes()].concat();
            let (ct, mic) = ccm_seal(
                CipherFunction::Aes128Ccm,
                &k,
                &Self::hide_nonce(&self.own_nonce),
                &aad,
                &pi,
                MIC_LEN_CONFIRM,
            )
            .map_err(|_| AbortReason::ProtocolViolation)?;
            msg.hidden = Some([ct, mic].concat());
        }
        self.transcript.push(msg.body());
        self.phase = Phase::Requested;
        Ok(vec![msg])
    }

    fn on_request(&mut self, m: &HandshakeMsg) -> Result<Vec<HandshakeMsg>, AbortReason> {
        self.check_header(m, MsgPhase::Request)?;
        if m.confirm.is_some() {
            return Err(AbortReason::ProtocolViolation);
        }
        self.transcript.push(m.body());
        self.peer_nonce = Some(m.nonce);
        match self.protocol {
            AssocProtocol::PreSharedMk => {
                if m.public.is_some() || m.hidden.is_some() {
                    return Err(AbortReason::ProtocolViolation);
                }
            }
            AssocProtocol::PublicKeyHidden => {
                let eph = m.public.ok_or(AbortReason::ProtocolViolation)?;
                let blob = m.hidden.as_ref().ok_or(AbortReason::ProtocolViolation)?;
                if blob.len() != 64 + MIC_LEN_CONFIRM {
                    return Err(AbortReason::ProtocolViolation);
                }
                let own = self.keypair.as_ref().expect("static");
                let z = self.dh(own, &eph)?;
                let k = Self::hide_key(&z, &m.nonce)?;
                let aad = [m.sender.to_be_bytes(), m.recipient.to_be_bytes()].concat();
                let pi = ccm_open(
                    CipherFunction::Aes128Ccm,
                    &k,
                    &Self::hide_nonce(&m.nonce),
                    &aad,
                    &blob[..64],
                    &blob[64..],
                )
                .map_err(|_| AbortReason::AuthFailure)?;
                let pi = PublicPoint::from_bytes(pi[..].try_into().expect("64 octets"));
                pi.validate().map_err(|_| AbortReason::AuthFailure)?;
                self.peer_public = Some(pi);
            }
            AssocProtocol::PasswordAuthenticated => {
                let x = m.public.ok_or(AbortReason::ProtocolViolation)?;
                self.peer_public = Some(self.unblind(&x)?);
            }
            _ => {
                let p = m.public.ok_or(AbortReason::ProtocolViolation)?;
                p.validate().map_err(|_| AbortReason::AuthFailure)?;
                self.peer_public = Some(p);
            }
        }
        self.derive_keys()?;
        let mut resp = self.message(MsgPhase::Response);
        resp.public = self.outgoing_public()?;
        let body = resp.body();
        if self.response_confirmed() {
            resp.confirm = Some(self.tag(b"resp", 1, &body));
        }
        self.transcript.push(body);
        self.phase = Phase::Responded;
        Ok(vec![resp])
    }

    fn on_response(&mut self, m: &HandshakeMsg) -> Result<Vec<HandshakeMsg>, AbortReason> {
        self.check_header(m, MsgPhase::Response)?;
        if m.hidden.is_some() {
            return Err(AbortReason::ProtocolViolation);
        }
        self.peer_nonce = Some(m.nonce);
        match self.protocol {
            AssocProtocol::PreSharedMk | AssocProtocol::PublicKeyHidden => {
                if m.public.is_some() {
                    return Err(AbortReason::ProtocolViolation);
                }
                if self.protocol == AssocProtocol::PublicKeyHidden {
                    self.peer_public = self.peer_static_public;
                }
            }
            AssocProtocol::PasswordAuthenticated => {
                let y = m.public.ok_or(AbortReason::ProtocolViolation)?;
                self.peer_public = Some(self.unblind(&y)?);
            }
            _ => {
                let p = m.public.ok_or(AbortReason::ProtocolViolation)?;
                p.validate().map_err(|_| AbortReason::AuthFailure)?;
                self.peer_public = Some(p);
            }
        }
        self.derive_keys()?;
        let body = m.body();
        if self.response_confirmed() {
            let tag = m.confirm.ok_or(AbortReason::AuthFailure)?;
            if !self.verify(b"resp", 1, &body, &tag) {
                return Err(AbortReason::AuthFailure);
            }
        } else if m.confirm.is_some() {
            return Err(AbortReason::ProtocolViolation);
        }
        self.transcript.push(body);
        self.phase = Phase::Responded;
        if self.protocol == AssocProtocol::DisplayAuthenticated {
            // Activation waits for the user to compare check values.
            return Ok(Vec::new());
        }
        Ok(vec![self.send_activate()])
    }

    fn send_activate(&mut self) -> HandshakeMsg {
        let mut act = self.message(MsgPhase::Activate);
        let body = act.body();
        act.confirm = Some(self.tag(b"actv", 2, &body));
        self.transcript.push(body);
        self.complete();
        act
    }

    fn on_activate(&mut self, m: &HandshakeMsg) -> Result<Vec<HandshakeMsg>, AbortReason> {
        self.check_header(m, MsgPhase::Activate)?;
        if m.public.is_some() || m.hidden.is_some() || Some(m.nonce) != self.peer_nonce {
            return Err(AbortReason::ProtocolViolation);
        }
        if self.protocol == AssocProtocol::DisplayAuthenticated && !self.checkvalue_confirmed {
            return Err(AbortReason::ProtocolViolation);
        }
        let body = m.body();
        let tag = m.confirm.ok_or(AbortReason::AuthFailure)?;
        if !self.verify(b"actv", 2, &body, &tag) {
            return Err(AbortReason::AuthFailure);
        }
        self.transcript.push(body);
        self.complete();
        Ok(Vec::new())
    }

    fn complete(&mut self) {
        let (ni, nr) = self.nonces();
        let peer_identity = match self.protocol {
            AssocProtocol::PreSharedMk => self.mk.as_ref().expect("mk").fingerprint(),
            AssocProtocol::PasswordAuthenticated => password_identity(self.password.as_deref().expect("password")),
            _ => self.peer_public.as_ref().expect("peer public").fingerprint(),
        };
        self.result = Some(SessionResult {
            mk: self.mk.clone().expect("mk"),
            mutually_authenticated: self.protocol.mutually_authenticating(),
            initiator_nonce: ni,
            responder_nonce: nr,
            peer_identity,
        });
        self.phase = Phase::Activated;
        self.keypair = None;
        self.static_keypair = None;
        self.kck = None;
        self.password = None;
        self.pre_shared_mk = None;
        self.mk = None;
    }

    /// The five-digit value each side shows for protocol V.
    pub fn display_checkvalue(&self) -> Result<u32, AssocError> {
        if self.protocol != AssocProtocol::DisplayAuthenticated {
            return Err(AssocError::Usage("check values exist only for protocol V"));
        }
        if self.phase < Phase::Responded || self.phase == Phase::Aborted || self.transcript.len() < 2 {
            return Err(AssocError::Usage("check value not available before the response"));
        }
        let (ni, _) = self.nonces();
        Ok(checkvalue(&ni, &[&self.transcript[0][..], &self.transcript[1][..]].concat()))
    }

    /// Record the user's comparison of both displays. The initiator emits
    /// its activate message on a match; a mismatch aborts either side.
    pub fn confirm_checkvalue(&mut self, values_match: bool) -> Result<Vec<HandshakeMsg>, AbortReason> {
        if self.protocol != AssocProtocol::DisplayAuthenticated || self.phase != Phase::Responded {
            return Err(self.fail(AbortReason::ProtocolViolation));
        }
        if !values_match {
            return Err(self.fail(AbortReason::AuthFailure));
        }
        self.checkvalue_confirmed = true;
        match self.role {
            Role::Initiator => Ok(vec![self.send_activate()]),
            Role::Responder => Ok(Vec::new()),
        }
    }
}

/// Outcome of an honest or tampered handshake run.
#[derive(Debug)]
pub struct HandshakeRun {
    pub initiator: ProtocolSession,
    pub responder: ProtocolSession,
    pub messages: Vec<Vec<u8>>,
    pub trace: Vec<String>,
}

impl HandshakeRun {
    pub fn both_activated(&self) -> bool {
        self.initiator.phase == Phase::Activated && self.responder.phase == Phase::Activated
    }

    pub fn any_aborted(&self) -> bool {
        self.initiator.phase == Phase::Aborted || self.responder.phase == Phase::Aborted
    }

    pub fn keys_agree(&self) -> bool {
        match (self.initiator.result(), self.responder.result()) {
            (Some(a), Some(b)) => a.mk == b.mk,
            _ => false,
        }
    }
}

/// Matching materials for an honest run of `protocol` between `initiator`
/// and `responder`: a fresh MK for I, a fresh responder static key for III,
/// `password` for IV and displays on both sides for V.
pub fn honest_configs<R: RngCore + CryptoRng>(
    rng: &mut R,
    protocol: AssocProtocol,
    initiator: Address,
    responder: Address,
    sss: SecuritySuiteSelector,
    password: &[u8],
) -> (SessionConfig, SessionConfig) {
    let mut i = SessionConfig::new(initiator, responder, sss);
    let mut r = SessionConfig::new(responder, initiator, sss);
    match protocol {
        AssocProtocol::PreSharedMk => {
            let mk = SymmetricKey::random(rng, sss.cipher.key_size(), KeyRole::Mk).expect("fixed key size");
            i = i.with_mk(mk.clone());
            r = r.with_mk(mk);
        }
        AssocProtocol::PublicKeyHidden => {
            let hub = generate_keypair(rng).expect("rng yields a valid scalar");
            i = i.with_peer_public(*hub.public());
            r = r.with_static(hub);
        }
        AssocProtocol::PasswordAuthenticated => {
            i = i.with_password(password);
            r = r.with_password(password);
        }
        AssocProtocol::DisplayAuthenticated => {
            i = i.with_display(true);
            r = r.with_display(true);
        }
        AssocProtocol::Unauthenticated => {}
    }
    (i, r)
}

/// Run both sides of an association in-process.
pub fn run_handshake<R: RngCore + CryptoRng>(
    rng: &mut R,
    protocol: AssocProtocol,
    initiator: SessionConfig,
    responder: SessionConfig,
) -> Result<HandshakeRun, AssocError> {
    run_handshake_with(rng, protocol, initiator, responder, |_, _| {})
}

/// As [`run_handshake`], passing every message through `wire(index, bytes)`
/// before delivery.
pub fn run_handshake_with<R, F>(
    rng: &mut R,
    protocol: AssocProtocol,
    initiator: SessionConfig,
    responder: SessionConfig,
    mut wire: F,
) -> Result<HandshakeRun, AssocError>
where
    R: RngCore + CryptoRng,
    F: FnMut(usize, &mut Vec<u8>),
{
    let i = create_session(rng, Role::Initiator, protocol, initiator)?;
    let r = create_session(rng, Role::Responder, protocol, responder)?;
    let mut run = HandshakeRun { initiator: i, responder: r, messages: Vec::new(), trace: Vec::new() };

    let mut out = run.initiator.advance_bytes(None).unwrap_or_default();
    for (idx, name) in ["request", "response", "activate"].into_iter().enumerate() {
        if idx == 2 && protocol == AssocProtocol::DisplayAuthenticated {
            let a = run.initiator.display_checkvalue()?;
            let b = run.responder.display_checkvalue()?;
            run.trace.push(format!("display initiator={a:05} responder={b:05}"));
            let _ = run.responder.confirm_checkvalue(a == b);
            match run.initiator.confirm_checkvalue(a == b) {
                Ok(msgs) => out = msgs.iter().map(HandshakeMsg::encode).collect(),
                Err(reason) => {
                    run.trace.push(format!("abort: check values differ ({reason})"));
                    break;
                }
            }
        }
        let Some(mut bytes) = out.pop() else { break };
        wire(idx, &mut bytes);
        let (sender, receiver) = if idx % 2 == 0 {
            (&run.initiator, &mut run.responder)
        } else {
            (&run.responder, &mut run.initiator)
        };
        run.trace.push(format!("{name} {}->{} {} octets", sender.local, receiver.local, bytes.len()));
        run.messages.push(bytes.clone());
        match receiver.advance_bytes(Some(&bytes)) {
            Ok(next) => out = next,
            Err(reason) => {
                run.trace.push(format!("abort at {} side: {reason}", role_name(receiver.role)));
                break;
            }
        }
        if idx < 2 && receiver.role == Role::Initiator && protocol != AssocProtocol::DisplayAuthenticated {
            run.trace.push(format!("{name} confirmation verified by initiator"));
        }
    }
    if run.both_activated() {
        let flag = run.initiator.result().map(|r| r.mutually_authenticated).unwrap_or(false);
        run.trace.push(format!("activated mk-match={} mutual-auth={}", run.keys_agree(), flag));
    }
    Ok(run)
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Initiator => "initiator",
        Role::Responder => "responder",
    }
}

/// Install the MK from a completed session.
pub fn install_session_mk(store: &mut KeyStore, session: &ProtocolSession) -> Result<KeyId, AssocError> {
    let res = session.result().ok_or(AssocError::Usage("session not activated"))?;
    let origin = match session.protocol() {
        AssocProtocol::PreSharedMk => KeyOrigin::PreShared,
        p => KeyOrigin::Protocol(p),
    };
    let rec = KeyRecord::new(res.mk.clone().with_role(KeyRole::Mk), KeyOwner::pair(session.local(), session.peer()), origin);
    Ok(store.install_key(rec, true)?)
}

/// PTK creation between two stores holding the same MK: nonce exchange,
/// derivation on both ends, and key confirmation both ways.
pub fn establish_ptk<R: RngCore + CryptoRng>(
    rng: &mut R,
    initiator_store: &mut KeyStore,
    initiator: Address,
    responder_store: &mut KeyStore,
    responder: Address,
) -> Result<u32, AssocError> {
    let ni: [u8; 16] = rng.gen();
    let nr: [u8; 16] = rng.gen();
    let (_, e1) = initiator_store.rotate_ptk(initiator, responder, &ni, &nr)?;
    let (_, e2) = responder_store.rotate_ptk(initiator, responder, &ni, &nr)?;
    let owner = KeyOwner::pair(initiator, responder);
    let confirm = |s: &KeyStore, label: &str| -> Option<[u8; 16]> {
        let ptk = &s.active(owner, KeyRole::Ptk)?.key;
        let kck = derive_key(KdfBase::Key(ptk), "KCK", label.as_bytes(), KeySize::K128).ok()?;
        Some(crate::crypto::cmac_tag(&kck, &[&ni[..], &nr[..]].concat()).0)
    };
    let ok = e1 == e2
        && confirm(initiator_store, "resp") == confirm(responder_store, "resp")
        && confirm(initiator_store, "actv") == confirm(responder_store, "actv");
    if !ok {
        for s in [initiator_store, responder_store] {
            if let Some(id) = s.active(owner, KeyRole::Ptk).map(|r| r.id) {
                s.revoke_key(id)?;
            }
        }
        return Err(AssocError::Aborted(AbortReason::AuthFailure));
    }
    Ok(e1)
}

/// Build the authenticated erase request for a secured pair.
pub fn erase_request(store: &mut KeyStore, local: Address, peer: Address) -> Result<Frame, AssocError> {
    if !store.has_pair(local, peer) {
        return Err(AssocError::NotFound(local, peer));
    }
    channel::seal_frame(store, local, peer, FrameType::Management, SecurityLevel::Level2AuthEnc, DISASSOC_BODY)
        .map_err(|_| AssocError::NotFound(local, peer))
}

/// Process an erase request. Keys go only if the frame authenticates.
pub fn handle_erase(store: &mut KeyStore, local: Address, frame: &Frame) -> Result<bool, DiscardReason> {
    if frame.frame_type != FrameType::Management {
        return Err(DiscardReason::Malformed);
    }
    let body = channel::open_frame(store, local, frame)?;
    if body != DISASSOC_BODY {
        return Err(DiscardReason::Malformed);
    }
    store.erase_pair(local, frame.sender);
    Ok(true)
}

/// Both ends drop MK and PTK after an authenticated erase exchange.
pub fn disassociate(
    a_store: &mut KeyStore,
    a: Address,
    b_store: &mut KeyStore,
    b: Address,
) -> Result<Frame, AssocError> {
    let frame = erase_request(a_store, a, b)?;
    handle_erase(b_store, b, &frame).map_err(|_| AssocError::Aborted(AbortReason::AuthFailure))?;
    a_store.erase_pair(a, b);
    Ok(frame)
}
