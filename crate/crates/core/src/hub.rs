//! Hub-side admission control, access-control list and hub failover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{CipherFunction, Fingerprint};
use crate::frame::{Address, SecurityLevel};
use crate::fsm::{negotiate_suite, ConnectionStatus};
use crate::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

pub const MAX_BAN_SIZE_STANDARD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Authorization {
    SensorRead,
    ActuatorCommand,
    Admin,
}

impl Authorization {
    pub fn as_str(self) -> &'static str {
        match self {
            Authorization::SensorRead => "SensorRead",
            Authorization::ActuatorCommand => "ActuatorCommand",
            Authorization::Admin => "Admin",
        }
    }
}

impl FromStr for Authorization {
    type Err = HubError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "SensorRead" => Ok(Authorization::SensorRead),
            "ActuatorCommand" => Ok(Authorization::ActuatorCommand),
            "Admin" => Ok(Authorization::Admin),
            _ => Err(HubError::Parse(format!("unknown authorization {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AclStatus {
    Authorized,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclEntry {
    pub node: Address,
    pub identity: Fingerprint,
    pub authorization: Authorization,
    pub status: AclStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HubError {
    #[error("caller lacks Admin authorization")]
    Unauthorized,
    #[error("no ACL entry for {0}")]
    NotFound(Address),
    #[error("no hub is alive")]
    NetworkDown,
    #[error("ACL parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AclOp {
    Add(AclEntry),
    Revoke(Address),
}

/// One entry per node, keyed by address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Acl {
    entries: BTreeMap<Address, AclEntry>,
}

impl Acl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: Address) -> Option<&AclEntry> {
        self.entries.get(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &AclEntry> {
        self.entries.values()
    }

    /// Apply `op` on behalf of a caller with `caller` authorization.
    pub fn update(&mut self, caller: Authorization, op: AclOp) -> Result<(), HubError> {
        if caller != Authorization::Admin {
            return Err(HubError::Unauthorized);
        }
        match op {
            AclOp::Add(e) => {
                self.entries.insert(e.node, e);
            }
            AclOp::Revoke(node) => {
                self.entries.get_mut(&node).ok_or(HubError::NotFound(node))?.status = AclStatus::Revoked;
            }
        }
        Ok(())
    }

    /// True when `node` is Authorized under exactly this identity.
    pub fn permits(&self, node: Address, identity: Option<&Fingerprint>) -> bool {
        match (self.entries.get(&node), identity) {
            (Some(e), Some(id)) => e.status == AclStatus::Authorized && &e.identity == id,
            _ => false,
        }
    }

    /// `addr,fingerprint-hex,authorization,status` per line.
    pub fn to_file(&self) -> String {
        let mut s = String::new();
        for e in self.entries.values() {
            let status = match e.status {
                AclStatus::Authorized => "Authorized",
                AclStatus::Revoked => "Revoked",
            };
            s.push_str(&format!("{},{},{},{}\n", e.node, e.identity.to_hex(), e.authorization.as_str(), status));
        }
        s
    }

    pub fn from_file(text: &str) -> Result<Self, HubError> {
        let mut acl = Acl::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| HubError::Parse(format!("line {}: {what}", n + 1));
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let node = parse_address(f[0]).ok_or_else(|| bad("address"))?;
            let identity = Fingerprint::from_hex(f[1]).ok_or_else(|| bad("fingerprint"))?;
            let authorization = f[2].parse()?;
            let status = match f[3] {
                "Authorized" => AclStatus::Authorized,
                "Revoked" => AclStatus::Revoked,
                _ => return Err(bad("status")),
            };
            if acl.entries.insert(node, AclEntry { node, identity, authorization, status }).is_some() {
                return Err(bad("duplicate node"));
            }
        }
        Ok(acl)
    }
}

pub fn parse_address(s: &str) -> Option<Address> {
    let s = s.trim();
    let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u16::from_str_radix(h, 16).ok()?,
        None => s.parse().ok()?,
    };
    Some(Address(v))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubPolicy {
    pub profile: Profile,
    pub max_ban_size: usize,
    pub min_level: SecurityLevel,
    pub allowed_protocols: Vec<AssocProtocol>,
    pub allowed_ciphers: Vec<CipherFunction>,
    pub acl_required: bool,
    /// Frames per tick per source before the radio stops listening to it.
    pub rate_limit: Option<u32>,
    pub backup_hubs: Vec<Address>,
    /// Missed beacon intervals before a peer counts as unreachable.
    pub liveness_timeout: u32,
}

impl HubPolicy {
    pub fn baseline() -> Self {
        Self {
            profile: Profile::Baseline,
            max_ban_size: MAX_BAN_SIZE_STANDARD,
            min_level: SecurityLevel::Level0Unsecured,
            allowed_protocols: AssocProtocol::ALL.to_vec(),
            allowed_ciphers: vec![CipherFunction::Aes128Ccm, CipherFunction::Camellia128Ccm],
            acl_required: false,
            rate_limit: None,
            backup_hubs: Vec::new(),
            liveness_timeout: 3,
        }
    }

    /// Standard plus the recommended improvements; the unauthenticated
    /// protocol is refused because it cannot give mutual authentication.
    pub fn hardened(max_ban_size: usize) -> Self {
        Self {
            profile: Profile::Hardened,
            max_ban_size,
            min_level: SecurityLevel::Level2AuthEnc,
            allowed_protocols: AssocProtocol::ALL
                .into_iter()
                .filter(|p| p.mutually_authenticating())
                .collect(),
            allowed_ciphers: vec![
                CipherFunction::Aes128Ccm,
                CipherFunction::Aes256Ccm,
                CipherFunction::Camellia128Ccm,
            ],
            acl_required: true,
            rate_limit: Some(5),
            backup_hubs: Vec::new(),
            liveness_timeout: 3,
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Baseline => Self::baseline(),
            Profile::Hardened => Self::hardened(MAX_BAN_SIZE_STANDARD),
        }
    }

    /// Baseline must look exactly like the standard.
    pub fn is_consistent(&self) -> bool {
        match self.profile {
            Profile::Baseline => {
                self.max_ban_size == MAX_BAN_SIZE_STANDARD && !self.acl_required && self.backup_hubs.is_empty()
            }
            Profile::Hardened => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionRequest {
    pub node: Address,
    pub sss: SecuritySuiteSelector,
    /// Fingerprint of the key the node used in its completed association.
    pub identity: Option<Fingerprint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Admission(ConnectionStatus),
    AclAdd,
    AclRevoke,
    AclDenied,
    Removed,
    Unreachable,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Admission(s) => write!(f, "admit:{s}"),
            Decision::AclAdd => f.write_str("acl:add"),
            Decision::AclRevoke => f.write_str("acl:revoke"),
            Decision::AclDenied => f.write_str("acl:denied"),
            Decision::Removed => f.write_str("remove"),
            Decision::Unreachable => f.write_str("unreachable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub seq: u64,
    pub tick: u64,
    pub node: Address,
    pub decision: Decision,
}

#[derive(Debug, Clone)]
pub struct Hub {
    pub address: Address,
    pub policy: HubPolicy,
    pub acl: Acl,
    admitted: BTreeSet<Address>,
    audit: Vec<AuditRecord>,
    clock: u64,
}

impl Hub {
    pub fn new(address: Address, policy: HubPolicy) -> Self {
        Self { address, policy, acl: Acl::new(), admitted: BTreeSet::new(), audit: Vec::new(), clock: 0 }
    }

    pub fn set_clock(&mut self, tick: u64) {
        self.clock = tick;
    }

    pub fn admitted(&self) -> &BTreeSet<Address> {
        &self.admitted
    }

    pub fn admitted_count(&self) -> usize {
        self.admitted.len()
    }

    pub fn is_admitted(&self, node: Address) -> bool {
        self.admitted.contains(&node)
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    fn log(&mut self, node: Address, decision: Decision) {
        let seq = self.audit.len() as u64;
        self.audit.push(AuditRecord { seq, tick: self.clock, node, decision });
    }

    pub fn admit_node(&mut self, req: &AdmissionRequest) -> ConnectionStatus {
        let status = self.decide(req);
        if status.is_accepted() {
            self.admitted.insert(req.node);
        }
        self.log(req.node, Decision::Admission(status));
        status
    }

    fn decide(&self, req: &AdmissionRequest) -> ConnectionStatus {
        if let Err(s) = negotiate_suite(&req.sss, &self.policy) {
            return s;
        }
        if !self.admitted.contains(&req.node) && self.admitted.len() >= self.policy.max_ban_size {
            return ConnectionStatus::RejectedBanFull;
        }
        if self.policy.acl_required && !self.acl.permits(req.node, req.identity.as_ref()) {
            return ConnectionStatus::RejectedUnauthorized;
        }
        ConnectionStatus::Accepted
    }

    pub fn update_acl(&mut self, caller: Authorization, op: AclOp) -> Result<(), HubError> {
        let (node, decision) = match &op {
            AclOp::Add(e) => (e.node, Decision::AclAdd),
            AclOp::Revoke(n) => (*n, Decision::AclRevoke),
        };
        let r = self.acl.update(caller, op);
        self.log(node, if r.is_ok() { decision } else { Decision::AclDenied });
        if r.is_ok() && decision == Decision::AclRevoke {
            self.admitted.remove(&node);
        }
        r
    }

    pub fn remove_node(&mut self, node: Address) -> bool {
        let had = self.admitted.remove(&node);
        self.log(node, Decision::Removed);
        had
    }

    /// A node stopped answering. Only the hardened hub drops it and reports.
    pub fn report_unreachable(&mut self, node: Address) -> Option<ConnectionStatus> {
        if self.policy.profile != Profile::Hardened {
            return None;
        }
        self.admitted.remove(&node);
        self.log(node, Decision::Unreachable);
        Some(ConnectionStatus::RejectedNotReachable)
    }

    /// `seq,tick,node,decision`
    pub fn audit_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seq", "tick", "node", "decision"]).expect("in-memory write");
        for r in &self.audit {
            w.write_record([r.seq.to_string(), r.tick.to_string(), r.node.to_string(), r.decision.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }
}

/// Lowest-address alive hub, restricted to the primary unless backups are allowed.
pub fn elect_hub(policy: &HubPolicy, primary: Address, alive: &[Address]) -> Result<Address, HubError> {
    let mut candidates = vec![primary];
    if policy.profile == Profile::Hardened {
        candidates.extend(policy.backup_hubs.iter().copied());
    }
    candidates
        .into_iter()
        .filter(|h| alive.contains(h))
        .min()
        .ok_or(HubError::NetworkDown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fp(n: u16) -> Fingerprint {
        Fingerprint::of(b"test", &n.to_be_bytes())
    }

    fn req(n: u16, protocol: AssocProtocol) -> AdmissionRequest {
        AdmissionRequest {
            node: Address(n),
            sss: SecuritySuiteSelector::new(SecurityLevel::Level2AuthEnc, protocol, CipherFunction::Aes128Ccm),
            identity: Some(fp(n)),
        }
    }

    fn entry(n: u16) -> AclEntry {
        AclEntry { node: Address(n), identity: fp(n), authorization: Authorization::SensorRead, status: AclStatus::Authorized }
    }

    #[test]
    fn baseline_caps_at_64() {
        let mut hub = Hub::new(Address(0xFF01), HubPolicy::baseline());
        for n in 1..=64 {
            assert_eq!(hub.admit_node(&req(n, AssocProtocol::PreSharedMk)), ConnectionStatus::Accepted);
        }
        assert_eq!(hub.admit_node(&req(65, AssocProtocol::PreSharedMk)), ConnectionStatus::RejectedBanFull);
        assert_eq!(hub.admitted_count(), 64);
        assert_eq!(hub.audit_log().len(), 65);
    }

    #[test]
    fn stranger_accepted_by_baseline_refused_by_acl() {
        let mut base = Hub::new(Address(0xFF01), HubPolicy::baseline());
        assert_eq!(base.admit_node(&req(7, AssocProtocol::Unauthenticated)), ConnectionStatus::Accepted);
        let mut hard = Hub::new(Address(0xFF01), HubPolicy::hardened(64));
        assert_eq!(hard.admit_node(&req(7, AssocProtocol::PasswordAuthenticated)), ConnectionStatus::RejectedUnauthorized);
        hard.update_acl(Authorization::Admin, AclOp::Add(entry(7))).unwrap();
        assert_eq!(hard.admit_node(&req(7, AssocProtocol::PasswordAuthenticated)), ConnectionStatus::Accepted);
        let mut wrong_key = req(7, AssocProtocol::PasswordAuthenticated);
        wrong_key.identity = Some(fp(8));
        hard.remove_node(Address(7));
        assert_eq!(hard.admit_node(&wrong_key), ConnectionStatus::RejectedUnauthorized);
    }

    #[test]
    fn hardened_large_network() {
        let mut hub = Hub::new(Address(0xFF01), HubPolicy::hardened(2048));
        for n in 1..=1000 {
            hub.update_acl(Authorization::Admin, AclOp::Add(entry(n))).unwrap();
        }
        for n in 1..=1000 {
            assert_eq!(hub.admit_node(&req(n, AssocProtocol::PreSharedMk)), ConnectionStatus::Accepted);
        }
        assert_eq!(hub.admitted_count(), 1000);
    }

    #[test]
    fn acl_updates_need_admin_and_revoke_keeps_entry() {
        let mut hub = Hub::new(Address(0xFF01), HubPolicy::hardened(64));
        hub.update_acl(Authorization::Admin, AclOp::Add(entry(3))).unwrap();
        assert_eq!(hub.acl.get(Address(3)).unwrap().status, AclStatus::Authorized);
        assert_eq!(hub.update_acl(Authorization::SensorRead, AclOp::Revoke(Address(3))), Err(HubError::Unauthorized));
        hub.update_acl(Authorization::Admin, AclOp::Revoke(Address(3))).unwrap();
        assert_eq!(hub.acl.get(Address(3)).unwrap().status, AclStatus::Revoked);
        assert_eq!(hub.admit_node(&req(3, AssocProtocol::PreSharedMk)), ConnectionStatus::RejectedUnauthorized);
        assert_eq!(hub.audit_log().len(), 4);
        assert_eq!(hub.audit_csv().lines().count(), 5);
    }

    #[test]
    fn acl_file_round_trip() {
        let mut acl = Acl::new();
        for n in [1u16, 0x20, 0x300] {
            acl.update(Authorization::Admin, AclOp::Add(entry(n))).unwrap();
        }
        acl.update(Authorization::Admin, AclOp::Revoke(Address(0x20))).unwrap();
        let text = acl.to_file();
        assert!(text.starts_with("0x0001,"));
        assert_eq!(Acl::from_file(&text).unwrap(), acl);
        assert!(Acl::from_file("0x1,zz,Admin,Authorized").is_err());
    }

    #[test]
    fn election() {
        let mut p = HubPolicy::hardened(64);
        p.backup_hubs = vec![Address(0xFF02)];
        let (a, b) = (Address(0xFF01), Address(0xFF02));
        assert_eq!(elect_hub(&p, a, &[a, b]), Ok(a));
        assert_eq!(elect_hub(&p, a, &[b]), Ok(b));
        assert_eq!(elect_hub(&p, a, &[]), Err(HubError::NetworkDown));
        assert_eq!(elect_hub(&HubPolicy::baseline(), a, &[b]), Err(HubError::NetworkDown));
    }

    #[test]
    fn unreachable_status_only_hardened() {
        let mut base = Hub::new(Address(0xFF01), HubPolicy::baseline());
        assert_eq!(base.report_unreachable(Address(1)), None);
        let mut hard = Hub::new(Address(0xFF01), HubPolicy::hardened(64));
        assert_eq!(hard.report_unreachable(Address(1)), Some(ConnectionStatus::RejectedNotReachable));
        assert!(HubPolicy::baseline().is_consistent());
    }

    proptest! {
        #[test]
        fn admitted_never_exceeds_limit_and_hardened_complete(
            ops in proptest::collection::vec((1u16..40, any::<bool>(), any::<bool>()), 1..200),
            limit in 1usize..20,
        ) {
            let mut hub = Hub::new(Address(0xFF01), HubPolicy::hardened(limit));
            let mut decisions = 0;
            for (n, register, remove) in ops {
                if register {
                    hub.update_acl(Authorization::Admin, AclOp::Add(entry(n))).unwrap();
                } else if remove {
                    hub.remove_node(Address(n));
                } else {
                    hub.admit_node(&req(n, AssocProtocol::PreSharedMk));
                }
                decisions += 1;
                prop_assert!(hub.admitted_count() <= limit);
                for a in hub.admitted() {
                    prop_assert!(hub.acl.permits(*a, Some(&fp(a.0))));
                }
            }
            prop_assert_eq!(hub.audit_log().len(), decisions);
        }
    }
}
