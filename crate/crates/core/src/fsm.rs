//! Per-node MAC security state machine, suite negotiation and inbound frame policy.

use std::fmt;

use crate::channel::{self, DiscardReason};
use crate::frame::{Address, Frame, SecurityLevel};
use crate::hub::HubPolicy;
use crate::keys::KeyStore;
use crate::suite::{Profile, SecuritySuiteSelector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SecurityState {
    Orphan,
    Associated,
    Secured,
    Connected,
}

impl SecurityState {
    pub const ALL: [SecurityState; 4] = [
        SecurityState::Orphan,
        SecurityState::Associated,
        SecurityState::Secured,
        SecurityState::Connected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SecurityState::Orphan => "Orphan",
            SecurityState::Associated => "Associated",
            SecurityState::Secured => "Secured",
            SecurityState::Connected => "Connected",
        }
    }

    pub fn has_ptk(self) -> bool {
        matches!(self, SecurityState::Secured | SecurityState::Connected)
    }
}

impl fmt::Display for SecurityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmEvent {
    AssocSuccess,
    AssocAborted,
    PtkEstablished,
    ConnectionAssigned,
    DisassocDone,
    PeerUnreachable,
    KeyRevoked,
}

impl FsmEvent {
    pub const ALL: [FsmEvent; 7] = [
        FsmEvent::AssocSuccess,
        FsmEvent::AssocAborted,
        FsmEvent::PtkEstablished,
        FsmEvent::ConnectionAssigned,
        FsmEvent::DisassocDone,
        FsmEvent::PeerUnreachable,
        FsmEvent::KeyRevoked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FsmEvent::AssocSuccess => "AssocSuccess",
            FsmEvent::AssocAborted => "AssocAborted",
            FsmEvent::PtkEstablished => "PtkEstablished",
            FsmEvent::ConnectionAssigned => "ConnectionAssigned",
            FsmEvent::DisassocDone => "DisassocDone",
            FsmEvent::PeerUnreachable => "PeerUnreachable",
            FsmEvent::KeyRevoked => "KeyRevoked",
        }
    }
}

impl fmt::Display for FsmEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmAction {
    /// Drop MK and PTK for the peer.
    EraseKeys,
    /// Drop the PTK only; the MK survives.
    ErasePtk,
    /// Tell the hub (and upstream) the peer is gone.
    ReportUnreachable,
    Diagnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConnectionStatus {
    Accepted,
    RejectedBanFull,
    RejectedUnauthorized,
    RejectedSuiteMismatch,
    /// Hardened profile only.
    RejectedNotReachable,
}

impl ConnectionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectionStatus::Accepted => "Accepted",
            ConnectionStatus::RejectedBanFull => "RejectedBanFull",
            ConnectionStatus::RejectedUnauthorized => "RejectedUnauthorized",
            ConnectionStatus::RejectedSuiteMismatch => "RejectedSuiteMismatch",
            ConnectionStatus::RejectedNotReachable => "RejectedNotReachable",
        }
    }

    pub fn is_accepted(self) -> bool {
        self == ConnectionStatus::Accepted
    }
}

impl fmt::Display for ConnectionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One edge of the transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: SecurityState,
    pub event: FsmEvent,
    pub to: SecurityState,
    pub actions: &'static [FsmAction],
    /// Not described in the standard's prose; chosen here.
    pub artifact_local: bool,
}

const ERASE: &[FsmAction] = &[FsmAction::EraseKeys];
const ERASE_PTK: &[FsmAction] = &[FsmAction::ErasePtk];
const UNREACH: &[FsmAction] = &[FsmAction::EraseKeys, FsmAction::ReportUnreachable];
const NONE: &[FsmAction] = &[];

fn lookup(profile: Profile, s: SecurityState, e: FsmEvent) -> Option<(SecurityState, &'static [FsmAction], bool)> {
    use FsmEvent::*;
    use SecurityState::*;
    Some(match (s, e) {
        (Orphan, AssocSuccess) => (Associated, NONE, false),
        (Associated, PtkEstablished) => (Secured, NONE, false),
        (Secured, ConnectionAssigned) => (Connected, NONE, false),
        (Associated | Secured | Connected, DisassocDone) => (Orphan, ERASE, false),
        (Orphan, AssocAborted) => (Orphan, ERASE, false),
        (Associated | Secured | Connected, AssocAborted) => (Orphan, ERASE, true),
        (Secured | Connected, KeyRevoked) => (Associated, ERASE_PTK, true),
        (Associated, KeyRevoked) => (Orphan, ERASE, true),
        // Re-keying an existing PTK keeps the node where it is.
        (Secured, PtkEstablished) => (Secured, NONE, true),
        (Connected, PtkEstablished) => (Connected, NONE, true),
        (Associated | Secured | Connected, PeerUnreachable) if profile == Profile::Hardened => {
            (Orphan, UNREACH, true)
        }
        _ => return None,
    })
}

/// Total transition function; illegal events self-loop with a diagnostic.
pub fn handle_event(profile: Profile, state: SecurityState, event: FsmEvent) -> (SecurityState, Vec<FsmAction>) {
    match lookup(profile, state, event) {
        Some((to, actions, _)) => (to, actions.to_vec()),
        None => (state, vec![FsmAction::Diagnostic]),
    }
}

/// Every non-diagnostic edge for `profile`.
pub fn edges(profile: Profile) -> Vec<Edge> {
    let mut out = Vec::new();
    for from in SecurityState::ALL {
        for event in FsmEvent::ALL {
            if let Some((to, actions, artifact_local)) = lookup(profile, from, event) {
                out.push(Edge { from, event, to, actions, artifact_local });
            }
        }
    }
    out
}

/// `t=<tick> node=<addr> <s>-><s'> event=<e>`
pub fn trace_line(tick: u64, node: Address, from: SecurityState, to: SecurityState, event: FsmEvent) -> String {
    format!("t={tick} node={node} {from}->{to} event={event}")
}

/// A node's state machine with its trace.
#[derive(Debug, Clone)]
pub struct NodeFsm {
    pub node: Address,
    pub profile: Profile,
    pub state: SecurityState,
    pub log: Vec<String>,
}

impl NodeFsm {
    pub fn new(node: Address, profile: Profile) -> Self {
        Self { node, profile, state: SecurityState::Orphan, log: Vec::new() }
    }

    pub fn fire(&mut self, tick: u64, event: FsmEvent) -> Vec<FsmAction> {
        let (to, actions) = handle_event(self.profile, self.state, event);
        self.log.push(trace_line(tick, self.node, self.state, to, event));
        self.state = to;
        actions
    }
}

/// Accept the node's proposal if the hub's policy allows it.
pub fn negotiate_suite(
    node: &SecuritySuiteSelector,
    policy: &HubPolicy,
) -> Result<SecuritySuiteSelector, ConnectionStatus> {
    let ok = node.level >= policy.min_level
        && policy.allowed_protocols.contains(&node.protocol)
        && policy.allowed_ciphers.contains(&node.cipher)
        && node.permitted_under(policy.profile);
    if ok {
        Ok(*node)
    } else {
        Err(ConnectionStatus::RejectedSuiteMismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InboundVerdict {
    Deliver(Vec<u8>),
    Discard(DiscardReason),
}

impl InboundVerdict {
    pub fn is_delivered(&self) -> bool {
        matches!(self, InboundVerdict::Deliver(_))
    }
}

/// Decide whether a received frame reaches the upper layer.
pub fn accept_inbound(
    state: SecurityState,
    suite: &SecuritySuiteSelector,
    store: &mut KeyStore,
    local: Address,
    frame: &Frame,
) -> InboundVerdict {
    if frame.level == SecurityLevel::Level0Unsecured {
        return if suite.level == SecurityLevel::Level0Unsecured {
            InboundVerdict::Deliver(frame.payload.clone())
        } else {
            InboundVerdict::Discard(DiscardReason::LevelNotPermitted)
        };
    }
    if !state.has_ptk() {
        return InboundVerdict::Discard(DiscardReason::NoKeys);
    }
    if frame.level < suite.level {
        return InboundVerdict::Discard(DiscardReason::LevelNotPermitted);
    }
    match channel::open_frame(store, local, frame) {
        Ok(p) => InboundVerdict::Deliver(p),
        Err(r) => InboundVerdict::Discard(r),
    }
}
