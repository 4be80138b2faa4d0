//! Deterministic discrete-event MBAN simulator.
//!
//! Time advances in integer ticks and every hop takes one tick. Within a
//! tick the order is fixed: injected events, recharge and idle drain,
//! liveness checks, beacons, group-key refresh, scheduled traffic, then
//! deliveries (adversarial arrivals before legitimate ones).

mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use scenario::*;

use crate::assoc::{self, password_identity, run_handshake_with, SessionConfig};
use crate::channel::{self, DiscardReason};
use crate::crypto::{generate_keypair, Fingerprint, KeyPair, KeyRole, KeySize, SymmetricKey};
use crate::frame::{advance_sequence, decode_frame, encode_frame, Address, Frame, FrameType, SecurityLevel, SequencePair};
use crate::fsm::{accept_inbound, ConnectionStatus, FsmAction, FsmEvent, InboundVerdict, NodeFsm, SecurityState};
use crate::hub::{elect_hub, AclEntry, AclOp, AclStatus, AdmissionRequest, Authorization, Hub};
use crate::keys::{KeyOwner, KeyStore};
use crate::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown node {0}")]
    NotFound(Address),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectEvent {
    NodeFailure { addr: Address, tick: u64 },
    /// Frames between `a` and `b` arriving in `[from, until)` are lost.
    LinkJam { a: Address, b: Address, from: u64, until: u64 },
    BatterySet { addr: Address, tick: u64, units: Micro },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Sent,
    Delivered,
    Forwarded,
    Woken,
    Discarded,
    Dropped,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Sent => "sent",
            Outcome::Delivered => "delivered",
            Outcome::Forwarded => "forwarded",
            Outcome::Woken => "woken",
            Outcome::Discarded => "discarded",
            Outcome::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub tick: u64,
    pub src: Address,
    pub dst: Address,
    pub frame_type: Option<FrameType>,
    pub level: Option<SecurityLevel>,
    pub outcome: Outcome,
    pub reason: Option<DiscardReason>,
}

/// A transmission as seen on the medium.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AirFrame {
    pub tick: u64,
    pub transmitter: Address,
    pub receiver: Address,
    pub touch_secure: bool,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub tick: u64,
    pub origin: Address,
    pub dst: Address,
    pub relays: u8,
    pub injected: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricValue {
    Count(u64),
    Units(Micro),
    State(String),
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Count(n) => write!(f, "{n}"),
            MetricValue::Units(u) => write!(f, "{}.{:06}", u / MICRO, u % MICRO),
            MetricValue::State(s) => f.write_str(s),
        }
    }
}

/// Per-node energy bookkeeping, all in micro-units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnergyAccount {
    pub initial: Micro,
    pub debited: Micro,
    pub recharged: Micro,
    /// Net change from `BatterySet` injections.
    pub adjusted: Micro,
}

struct PairSecrets {
    mk: SymmetricKey,
    password: Vec<u8>,
}

struct NodeRt {
    spec: NodeSpec,
    battery: Option<Micro>,
    account: EnergyAccount,
    failed: bool,
    dead_at: Option<u64>,
    fsm: NodeFsm,
    store: KeyStore,
    suite: SecuritySuiteSelector,
    /// Hub this node is connected to.
    hub: Option<Address>,
    /// C1 nodes: admitted through their relay.
    link_admitted: bool,
    last_beacon: BTreeMap<Address, u64>,
    plain_seq: SequencePair,
    unverified: BTreeMap<Address, u32>,
    processed: usize,
    wants_join: bool,
}

struct HubRt {
    hub: Hub,
    last_heard: BTreeMap<Address, u64>,
}

#[derive(Clone)]
struct Pending {
    transmitter: Address,
    receiver: Address,
    bytes: Vec<u8>,
    touch_secure: bool,
    relays: u8,
    legit: bool,
    injected: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Flow {
    src: Address,
    dst: Address,
    offset: u64,
}

/// Legitimate frames addressed to a coordinator, and how many it delivered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HubLoad {
    pub arrived: u64,
    pub delivered: u64,
}

pub struct Simulator {
    cfg: ScenarioConfig,
    rng: ChaCha20Rng,
    tick: u64,
    nodes: BTreeMap<Address, NodeRt>,
    hubs: BTreeMap<Address, HubRt>,
    active_hub: Address,
    secrets: BTreeMap<(Address, Address), PairSecrets>,
    statics: BTreeMap<Address, KeyPair>,
    flows: Vec<Flow>,
    adversarial: BTreeMap<u64, Vec<Pending>>,
    arrivals: BTreeMap<u64, Vec<Pending>>,
    events: BTreeMap<u64, Vec<InjectEvent>>,
    jams: Vec<(Address, Address, u64, u64)>,
    trace: Vec<TraceRow>,
    air: Vec<AirFrame>,
    truth: BTreeMap<Vec<u8>, Vec<u8>>,
    deliveries: Vec<Delivery>,
    rejected: BTreeMap<DiscardReason, u64>,
    reports: Vec<(u64, Address)>,
    injected: BTreeMap<u64, bool>,
    next_injection: u64,
    hub_load: HubLoad,
    fsm_log: Vec<String>,
}

fn pair_key(a: Address, b: Address) -> (Address, Address) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Simulator {
    /// Provision keys and run every initial association before tick 0.
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let profile = cfg.profile;
        let mut nodes = BTreeMap::new();
        for spec in cfg.all_nodes() {
            let battery = spec.energy.capacity();
            let suite = cfg.suite_for(spec);
            nodes.insert(
                spec.address,
                NodeRt {
                    spec: spec.clone(),
                    battery,
                    account: EnergyAccount { initial: battery.unwrap_or(0), ..Default::default() },
                    failed: false,
                    dead_at: None,
                    fsm: NodeFsm::new(spec.address, profile),
                    store: KeyStore::new(),
                    suite,
                    hub: None,
                    link_admitted: false,
                    last_beacon: BTreeMap::new(),
                    plain_seq: SequencePair::ZERO,
                    unverified: BTreeMap::new(),
                    processed: 0,
                    wants_join: false,
                },
            );
        }
        let policy = cfg.policy();
        let primary = cfg.hub.node.address;
        let mut hubs = BTreeMap::new();
        let mut hub_addrs = vec![primary];
        if profile == Profile::Hardened {
            hub_addrs.extend(cfg.hub.backups.iter().copied());
        }
        for h in &hub_addrs {
            hubs.insert(*h, HubRt { hub: Hub::new(*h, policy.clone()), last_heard: BTreeMap::new() });
        }
        let period = cfg.traffic.period;
        let flows = cfg
            .flows()
            .into_iter()
            .enumerate()
            .map(|(i, (src, dst))| Flow { src, dst, offset: i as u64 % period })
            .collect();

        let _ = rng.gen::<u64>();
        let mut sim = Self {
            cfg,
            rng,
            tick: 0,
            nodes,
            hubs,
            active_hub: primary,
            secrets: BTreeMap::new(),
            statics: BTreeMap::new(),
            flows,
            adversarial: BTreeMap::new(),
            arrivals: BTreeMap::new(),
            events: BTreeMap::new(),
            jams: Vec::new(),
            trace: Vec::new(),
            air: Vec::new(),
            truth: BTreeMap::new(),
            deliveries: Vec::new(),
            rejected: BTreeMap::new(),
            reports: Vec::new(),
            injected: BTreeMap::new(),
            next_injection: 0,
            hub_load: HubLoad::default(),
            fsm_log: Vec::new(),
        };
        sim.provision(&hub_addrs);
        sim.setup();
        sim
    }

    pub fn from_text(text: &str, profile: Profile, seed: u64) -> Result<Self, ConfigError> {
        Ok(Self::new(load_scenario(text, profile)?, seed))
    }

    fn crypto_nodes(&self) -> Vec<Address> {
        self.cfg
            .nodes
            .iter()
            .filter(|n| n.compute.runs_crypto() && !self.cfg.hub.backups.contains(&n.address))
            .map(|n| n.address)
            .collect()
    }

    fn peer_pairs(&self) -> Vec<(Address, Address)> {
        let hubs: BTreeSet<Address> = self.hubs.keys().copied().collect();
        let mut out = Vec::new();
        for f in &self.flows {
            if !hubs.contains(&f.src) && !hubs.contains(&f.dst) {
                let p = assoc::tie_break(f.src, f.dst);
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Out-of-band provisioning: pairwise secrets, static keys, and the ACL.
    fn provision(&mut self, hub_addrs: &[Address]) {
        let protocol = self.cfg.protocol();
        let mut pairs = Vec::new();
        for n in self.crypto_nodes() {
            for h in hub_addrs {
                pairs.push((n, *h));
            }
        }
        pairs.extend(self.peer_pairs());
        for (a, b) in pairs {
            let mk = SymmetricKey::random(&mut self.rng, KeySize::K128, KeyRole::Mk).expect("rng");
            let password = format!("{:08}", self.rng.gen_range(0..100_000_000u32)).into_bytes();
            self.secrets.insert(pair_key(a, b), PairSecrets { mk, password });
            if protocol == AssocProtocol::PublicKeyHidden {
                for x in [a, b] {
                    if !self.statics.contains_key(&x) {
                        let kp = generate_keypair(&mut self.rng).expect("rng");
                        self.statics.insert(x, kp);
                    }
                }
            }
        }
        if self.cfg.profile != Profile::Hardened {
            return;
        }
        for h in hub_addrs.to_vec() {
            for n in self.crypto_nodes() {
                if let Some(id) = self.expected_identity(n, h) {
                    self.enroll(h, n, id);
                }
            }
            for spec in self.cfg.nodes.clone() {
                if let (false, Some(parent)) = (spec.compute.runs_crypto(), spec.parent) {
                    self.enroll(h, spec.address, link_identity(spec.address, parent));
                }
            }
        }
    }

    fn enroll(&mut self, hub: Address, node: Address, identity: Fingerprint) {
        let entry = AclEntry { node, identity, authorization: Authorization::SensorRead, status: AclStatus::Authorized };
        if let Some(h) = self.hubs.get_mut(&hub) {
            h.hub.update_acl(Authorization::Admin, AclOp::Add(entry)).expect("admin may add");
        }
    }

    /// Identity the hub will observe, when it is fixed before association.
    fn expected_identity(&self, node: Address, hub: Address) -> Option<Fingerprint> {
        let s = self.secrets.get(&pair_key(node, hub))?;
        match self.cfg.protocol() {
            AssocProtocol::PreSharedMk => Some(s.mk.fingerprint()),
            AssocProtocol::PasswordAuthenticated => Some(password_identity(&s.password)),
            AssocProtocol::PublicKeyHidden => self.statics.get(&node).map(|k| k.public().fingerprint()),
            _ => None,
        }
    }

    /// Materials for an association between `initiator` and `responder`.
    pub fn session_configs(&self, initiator: Address, responder: Address) -> Option<(SessionConfig, SessionConfig)> {
        let protocol = self.cfg.protocol();
        let sss = self.pair_suite(initiator, responder)?;
        let s = self.secrets.get(&pair_key(initiator, responder))?;
        let mut i = SessionConfig::new(initiator, responder, sss);
        let mut r = SessionConfig::new(responder, initiator, sss);
        match protocol {
            AssocProtocol::PreSharedMk => {
                i = i.with_mk(s.mk.clone());
                r = r.with_mk(s.mk.clone());
            }
            AssocProtocol::Unauthenticated => {}
            AssocProtocol::PublicKeyHidden => {
                let rs = self.statics.get(&responder)?.clone();
                i = i.with_peer_public(*rs.public()).with_static(self.statics.get(&initiator)?.clone());
                r = r.with_static(rs);
            }
            AssocProtocol::PasswordAuthenticated => {
                i = i.with_password(&s.password);
                r = r.with_password(&s.password);
            }
            AssocProtocol::DisplayAuthenticated => {
                i = i.with_display(self.nodes.get(&initiator)?.spec.display);
                r = r.with_display(self.nodes.get(&responder)?.spec.display);
            }
        }
        Some((i, r))
    }

    fn pair_suite(&self, a: Address, b: Address) -> Option<SecuritySuiteSelector> {
        let na = self.nodes.get(&a)?;
        let nb = self.nodes.get(&b)?;
        // The non-coordinator end proposes.
        Some(if self.hubs.contains_key(&a) { nb.suite } else { na.suite })
    }

    fn setup(&mut self) {
        let primary = self.cfg.hub.node.address;
        for n in self.crypto_nodes() {
            self.join(n, primary, true);
        }
        for spec in self.cfg.nodes.clone() {
            if !spec.compute.runs_crypto() {
                self.link_admit(spec.address);
            }
        }
        for (a, b) in self.peer_pairs() {
            self.pair_up(a, b);
        }
        if self.cfg.hub.gtk_refresh > 0 {
            self.refresh_gtk();
        }
    }

    fn handshake_energy(&mut self, initiator: Address, responder: Address, lens: &[(usize, usize)]) {
        let costs = self.cfg.energy;
        for &(idx, len) in lens {
            let (tx, rx) = if idx == 1 { (responder, initiator) } else { (initiator, responder) };
            self.debit(tx, costs.tx(len));
            self.debit(rx, costs.rx);
        }
        if self.cfg.protocol().uses_ecdh() {
            // One key generation and one agreement per side.
            self.debit(initiator, 2 * costs.ecdh);
            self.debit(responder, 2 * costs.ecdh);
        }
    }

    /// Run an association plus PTK creation. Returns the identity the
    /// responder observed, or None if the handshake failed.
    fn associate(&mut self, initiator: Address, responder: Address) -> Option<Fingerprint> {
        let protocol = self.cfg.protocol();
        let (icfg, rcfg) = self.session_configs(initiator, responder)?;
        let mut lens = Vec::new();
        let run = run_handshake_with(&mut self.rng, protocol, icfg, rcfg, |i, b| lens.push((i, b.len())));
        self.handshake_energy(initiator, responder, &lens);
        let run = run.ok()?;
        if !run.both_activated() {
            return None;
        }
        let identity = run.responder.result()?.peer_identity;
        let mut si = std::mem::take(&mut self.nodes.get_mut(&initiator)?.store);
        let mut sr = std::mem::take(&mut self.nodes.get_mut(&responder)?.store);
        let ok = assoc::install_session_mk(&mut si, &run.initiator).is_ok()
            && assoc::install_session_mk(&mut sr, &run.responder).is_ok();
        let ptk = ok && assoc::establish_ptk(&mut self.rng, &mut si, initiator, &mut sr, responder).is_ok();
        self.nodes.get_mut(&initiator)?.store = si;
        self.nodes.get_mut(&responder)?.store = sr;
        // PTK creation: one 32-octet message each way.
        let costs = self.cfg.energy;
        for (a, b) in [(initiator, responder), (responder, initiator)] {
            self.debit(a, costs.tx(32));
            self.debit(b, costs.rx);
        }
        ptk.then_some(identity)
    }

    fn fire(&mut self, node: Address, event: FsmEvent) -> Vec<FsmAction> {
        let tick = self.tick;
        let Some(n) = self.nodes.get_mut(&node) else { return Vec::new() };
        let actions = n.fsm.fire(tick, event);
        self.fsm_log.push(n.fsm.log.last().cloned().unwrap_or_default());
        actions
    }

    fn join(&mut self, node: Address, hub: Address, provisioning: bool) -> ConnectionStatus {
        if !self.operational(node) || !self.operational(hub) {
            return ConnectionStatus::RejectedNotReachable;
        }
        let Some(identity) = self.associate(node, hub) else {
            self.fire(node, FsmEvent::AssocAborted);
            return ConnectionStatus::RejectedUnauthorized;
        };
        self.fire(node, FsmEvent::AssocSuccess);
        self.fire(node, FsmEvent::PtkEstablished);
        let acl_required = self.hubs.get(&hub).is_some_and(|h| h.hub.policy.acl_required);
        if provisioning && acl_required && self.expected_identity(node, hub).is_none() {
            // Enrollment by the operator during initial pairing.
            self.enroll(hub, node, identity);
        }
        let sss = self.nodes[&node].suite;
        let tick = self.tick;
        let h = self.hubs.get_mut(&hub).expect("hub");
        h.hub.set_clock(tick);
        let status = h.hub.admit_node(&AdmissionRequest { node, sss, identity: Some(identity) });
        if status.is_accepted() {
            h.last_heard.insert(node, tick);
            self.fire(node, FsmEvent::ConnectionAssigned);
            let n = self.nodes.get_mut(&node).expect("node");
            n.hub = Some(hub);
            n.wants_join = false;
            n.last_beacon.insert(hub, tick);
        } else {
            self.erase_pair(node, hub);
            self.fire(node, FsmEvent::DisassocDone);
        }
        status
    }

    fn erase_pair(&mut self, a: Address, b: Address) {
        for x in [a, b] {
            if let Some(n) = self.nodes.get_mut(&x) {
                n.store.erase_pair(a, b);
            }
        }
    }

    /// A C1 node is vouched for by its relay over the touch-secure link.
    fn link_admit(&mut self, node: Address) -> ConnectionStatus {
        let Some(parent) = self.nodes[&node].spec.parent else { return ConnectionStatus::RejectedNotReachable };
        let hub = self.active_hub;
        let parent_ok = parent == hub || self.nodes.get(&parent).is_some_and(|p| p.hub == Some(hub));
        if !parent_ok {
            return ConnectionStatus::RejectedNotReachable;
        }
        let sss = self.nodes[&parent].suite;
        let tick = self.tick;
        let h = self.hubs.get_mut(&hub).expect("hub");
        h.hub.set_clock(tick);
        let status = h.hub.admit_node(&AdmissionRequest { node, sss, identity: Some(link_identity(node, parent)) });
        if status.is_accepted() {
            h.last_heard.insert(node, tick);
            self.nodes.get_mut(&node).expect("node").link_admitted = true;
        }
        status
    }

    fn pair_up(&mut self, a: Address, b: Address) -> bool {
        self.associate(a, b).is_some()
    }

    fn refresh_gtk(&mut self) {
        let hub = self.active_hub;
        if !self.operational(hub) {
            return;
        }
        let members: Vec<Address> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.hub == Some(hub) && n.store.has_pair(n.spec.address, hub))
            .map(|(a, _)| *a)
            .collect();
        if members.is_empty() {
            return;
        }
        let mut store = std::mem::take(&mut self.nodes.get_mut(&hub).expect("hub").store);
        let r = store.distribute_gtk(&mut self.rng, hub, 1, &members, KeySize::K128);
        self.nodes.get_mut(&hub).expect("hub").store = store;
        if let Ok((frames, _)) = r {
            for f in frames {
                let bytes = encode_frame(&f).expect("sealed frame encodes");
                let costs = self.cfg.energy;
                if self.debit(hub, costs.tx(f.payload.len()) + costs.ccm(f.payload.len())) {
                    self.transmit(hub, f.recipient, bytes, false, 0, false);
                }
            }
        }
    }

    // ---- energy ----

    /// Debit `amount`; false once the node is out of energy.
    fn debit(&mut self, addr: Address, amount: Micro) -> bool {
        let tick = self.tick;
        let Some(n) = self.nodes.get_mut(&addr) else { return false };
        let Some(b) = n.battery.as_mut() else { return true };
        let take = amount.min(*b);
        *b -= take;
        n.account.debited += take;
        if *b == 0 && amount > 0 {
            n.dead_at.get_or_insert(tick);
            return false;
        }
        *b > 0
    }

    fn operational(&self, addr: Address) -> bool {
        let mut cur = addr;
        for _ in 0..=self.nodes.len() {
            let Some(n) = self.nodes.get(&cur) else { return false };
            if n.failed || n.dead_at.is_some() {
                return false;
            }
            if n.spec.energy != EnergyClass::Passive {
                return true;
            }
            match n.spec.parent {
                Some(p) => cur = p,
                None => return false,
            }
        }
        false
    }

    // ---- public surface ----

    /// Pairwise MK and password provisioned for `a` and `b`.
    pub fn provisioned(&self, a: Address, b: Address) -> Option<(SymmetricKey, Vec<u8>)> {
        self.secrets.get(&pair_key(a, b)).map(|s| (s.mk.clone(), s.password.clone()))
    }

    pub fn static_keypair(&self, addr: Address) -> Option<&KeyPair> {
        self.statics.get(&addr)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn profile(&self) -> Profile {
        self.cfg.profile
    }

    pub fn now(&self) -> u64 {
        self.tick
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn air_log(&self) -> &[AirFrame] {
        &self.air
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    /// `(tick, node)` for every unreachable report the active hub emitted.
    pub fn unreachable_reports(&self) -> &[(u64, Address)] {
        &self.reports
    }

    pub fn fsm_log(&self) -> &[String] {
        &self.fsm_log
    }

    pub fn hub_load(&self) -> HubLoad {
        self.hub_load
    }

    pub fn active_hub(&self) -> Address {
        self.active_hub
    }

    pub fn hub(&self) -> &Hub {
        &self.hubs[&self.active_hub].hub
    }

    pub fn energy_account(&self, addr: Address) -> Option<EnergyAccount> {
        self.nodes.get(&addr).map(|n| n.account)
    }

    pub fn battery(&self, addr: Address) -> Option<Micro> {
        self.nodes.get(&addr).and_then(|n| n.battery)
    }

    pub fn dead_at(&self, addr: Address) -> Option<u64> {
        self.nodes.get(&addr).and_then(|n| n.dead_at)
    }

    pub fn state(&self, addr: Address) -> Option<SecurityState> {
        self.nodes.get(&addr).map(|n| n.fsm.state)
    }

    pub fn is_operational(&self, addr: Address) -> bool {
        self.operational(addr)
    }

    /// Plaintext carried by a transmitted frame, for scoring eavesdroppers.
    pub fn plaintext_of(&self, bytes: &[u8]) -> Option<&[u8]> {
        self.truth.get(bytes).map(Vec::as_slice)
    }

    /// Whether an injected frame was delivered; None until it is processed.
    pub fn injection_delivered(&self, id: u64) -> Option<bool> {
        self.injected.get(&id).copied()
    }

    pub fn observe(&self, metric: &str) -> Result<MetricValue, SimError> {
        let (name, arg) = match metric.split_once(':').or_else(|| {
            metric.strip_suffix(')').and_then(|m| m.split_once('('))
        }) {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (metric.trim(), None),
        };
        let addr = |a: Option<&str>| -> Result<Address, SimError> {
            let a = a.ok_or_else(|| SimError::Usage(format!("{name} needs an address")))?;
            let addr = crate::hub::parse_address(a).ok_or_else(|| SimError::Usage(format!("bad address {a:?}")))?;
            if self.nodes.contains_key(&addr) {
                Ok(addr)
            } else {
                Err(SimError::NotFound(addr))
            }
        };
        match (name, arg) {
            ("delivered_frames", None) => Ok(MetricValue::Count(self.deliveries.len() as u64)),
            ("rejected_frames", Some(r)) => {
                let reason = DiscardReason::parse(r).ok_or_else(|| SimError::Usage(format!("unknown reason {r:?}")))?;
                Ok(MetricValue::Count(self.rejected.get(&reason).copied().unwrap_or(0)))
            }
            ("rejected_frames", None) => Ok(MetricValue::Count(self.rejected.values().sum())),
            ("battery", a) => Ok(MetricValue::Units(self.nodes[&addr(a)?].battery.unwrap_or(0))),
            ("state", a) => Ok(MetricValue::State(self.nodes[&addr(a)?].fsm.state.to_string())),
            ("admitted_count", None) => Ok(MetricValue::Count(self.hub().admitted_count() as u64)),
            _ => Err(SimError::Usage(format!(
                "unknown metric {metric:?}; expected delivered_frames, rejected_frames:<reason>, battery:<addr>, state:<addr> or admitted_count"
            ))),
        }
    }

    pub fn inject(&mut self, event: InjectEvent) -> Result<(), SimError> {
        let check = |a: Address| if self.nodes.contains_key(&a) { Ok(()) } else { Err(SimError::NotFound(a)) };
        match event {
            InjectEvent::NodeFailure { addr, tick } => {
                check(addr)?;
                self.events.entry(tick).or_default().push(event);
            }
            InjectEvent::LinkJam { a, b, from, until } => {
                check(a)?;
                check(b)?;
                self.jams.push((a, b, from, until));
            }
            InjectEvent::BatterySet { addr, tick, units } => {
                check(addr)?;
                if self.nodes[&addr].battery.is_none() {
                    return Err(SimError::Usage(format!("{addr} is E1 and has no battery")));
                }
                if units < 0 {
                    return Err(SimError::Usage("battery level must not be negative".into()));
                }
                self.events.entry(tick).or_default().push(event);
            }
        }
        Ok(())
    }

    /// Put raw octets on the air from `transmitter` to `receiver`, arriving
    /// this tick ahead of legitimate traffic.
    pub fn inject_raw(&mut self, transmitter: Address, receiver: Address, bytes: Vec<u8>) -> u64 {
        let id = self.next_injection;
        self.next_injection += 1;
        self.adversarial.entry(self.tick).or_default().push(Pending {
            transmitter,
            receiver,
            bytes,
            touch_secure: false,
            relays: 0,
            legit: false,
            injected: Some(id),
        });
        id
    }

    /// Let an outside device associate with the active hub. The device
    /// drives its own session and only exchanges octets with the hub.
    pub fn external_association(
        &mut self,
        device: &mut assoc::ProtocolSession,
        confirm_display: bool,
    ) -> ConnectionStatus {
        let hub = self.active_hub;
        let peer = device.local();
        let protocol = device.protocol();
        if !self.operational(hub) {
            return ConnectionStatus::RejectedNotReachable;
        }
        let hub_spec = &self.nodes[&hub].spec;
        let mut cfg = SessionConfig::new(hub, peer, device_suite(device)).with_display(hub_spec.display);
        if let Some(s) = self.secrets.get(&pair_key(peer, hub)) {
            cfg = cfg.with_mk(s.mk.clone()).with_password(&s.password);
        }
        if let Some(kp) = self.statics.get(&hub) {
            cfg = cfg.with_static(kp.clone());
        }
        let Ok(mut hs) = assoc::create_session(&mut self.rng, assoc::Role::Responder, protocol, cfg) else {
            return ConnectionStatus::RejectedSuiteMismatch;
        };
        let costs = self.cfg.energy;
        let mut to_hub = device.advance_bytes(None).unwrap_or_default();
        let mut rounds = 0;
        while !to_hub.is_empty() && rounds < 4 {
            rounds += 1;
            let mut to_dev = Vec::new();
            for m in &to_hub {
                self.debit(hub, costs.rx);
                match hs.advance_bytes(Some(m)) {
                    Ok(out) => to_dev.extend(out),
                    Err(_) => return ConnectionStatus::RejectedUnauthorized,
                }
            }
            to_hub.clear();
            for m in &to_dev {
                self.debit(hub, costs.tx(m.len()));
                match device.advance_bytes(Some(m)) {
                    Ok(out) => to_hub.extend(out),
                    Err(_) => return ConnectionStatus::RejectedUnauthorized,
                }
            }
            if protocol == AssocProtocol::DisplayAuthenticated && to_hub.is_empty() && hs.result().is_none() {
                let matched = confirm_display && device.display_checkvalue().ok() == hs.display_checkvalue().ok();
                let _ = hs.confirm_checkvalue(matched);
                match device.confirm_checkvalue(matched) {
                    Ok(out) => to_hub = out.iter().map(assoc::HandshakeMsg::encode).collect(),
                    Err(_) => return ConnectionStatus::RejectedUnauthorized,
                }
            }
        }
        let Some(res) = hs.result() else { return ConnectionStatus::RejectedUnauthorized };
        let identity = res.peer_identity;
        let tick = self.tick;
        let h = self.hubs.get_mut(&hub).expect("hub");
        h.hub.set_clock(tick);
        let status =
            h.hub.admit_node(&AdmissionRequest { node: peer, sss: device_suite(device), identity: Some(identity) });
        if status.is_accepted() {
            h.last_heard.insert(peer, tick);
            let hub_store = &mut self.nodes.get_mut(&hub).expect("hub").store;
            let _ = assoc::install_session_mk(hub_store, &hs);
        }
        status
    }

    pub fn run(&mut self, until: u64) -> &[TraceRow] {
        while self.tick < until {
            self.step();
        }
        &self.trace
    }

    /// Trace as CSV `tick,src,dst,type,level,outcome,reason`.
    pub fn trace_csv(&self) -> String {
        trace_to_csv(&self.trace)
    }

    // ---- the event loop ----

    pub fn step(&mut self) {
        let t = self.tick;
        for n in self.nodes.values_mut() {
            n.unverified.clear();
            n.processed = 0;
        }
        for ev in self.events.remove(&t).unwrap_or_default() {
            self.apply(ev);
        }
        self.drain_and_recharge();
        if self.cfg.profile == Profile::Hardened {
            self.liveness();
        }
        let interval = self.cfg.hub.beacon_interval;
        if interval > 0 && t % interval == 0 {
            self.beacon();
        }
        let gtk = self.cfg.hub.gtk_refresh;
        if gtk > 0 && t > 0 && t % gtk == 0 {
            self.refresh_gtk();
        }
        for f in self.flows.clone() {
            if t % self.cfg.traffic.period == f.offset {
                self.send_flow(f);
            }
        }
        let adv = self.adversarial.remove(&t).unwrap_or_default();
        let legit = self.arrivals.remove(&t).unwrap_or_default();
        for p in adv.into_iter().chain(legit) {
            self.receive(p);
        }
        self.tick += 1;
    }

    fn apply(&mut self, ev: InjectEvent) {
        match ev {
            InjectEvent::NodeFailure { addr, .. } => {
                if let Some(n) = self.nodes.get_mut(&addr) {
                    n.failed = true;
                }
            }
            InjectEvent::BatterySet { addr, units, .. } => {
                if let Some(n) = self.nodes.get_mut(&addr) {
                    if let Some(b) = n.battery.as_mut() {
                        n.account.adjusted += units - *b;
                        *b = units;
                        if units > 0 {
                            n.dead_at = None;
                        }
                    }
                }
            }
            InjectEvent::LinkJam { .. } => {}
        }
    }

    fn drain_and_recharge(&mut self) {
        let idle = self.cfg.energy.idle;
        let addrs: Vec<Address> = self.nodes.keys().copied().collect();
        for a in addrs {
            let n = &self.nodes[&a];
            if n.failed || n.dead_at.is_some() || n.battery.is_none() {
                continue;
            }
            if let EnergyClass::Rechargeable { capacity, recharge } = n.spec.energy {
                let n = self.nodes.get_mut(&a).expect("node");
                let b = n.battery.as_mut().expect("battery");
                let add = recharge.min(capacity - *b);
                *b += add;
                n.account.recharged += add;
            }
            self.debit(a, idle);
        }
    }

    fn liveness(&mut self) {
        let t = self.tick;
        let interval = self.cfg.hub.beacon_interval;
        if interval == 0 {
            return;
        }
        let policy = self.cfg.policy();
        let beacon_window = policy.liveness_timeout as u64 * interval;

        // Standby hubs take over when the active hub falls silent.
        let active = self.active_hub;
        let standby: Vec<Address> = self.hubs.keys().copied().filter(|h| *h != active).collect();
        for b in standby {
            if !self.operational(b) {
                continue;
            }
            let heard = self.nodes[&b].last_beacon.get(&active).copied().unwrap_or(0);
            if t.saturating_sub(heard) > beacon_window {
                let alive: Vec<Address> =
                    self.hubs.keys().copied().filter(|h| *h != active && self.operational(*h)).collect();
                if let Ok(h) = elect_hub(&policy, self.cfg.hub.node.address, &alive) {
                    self.active_hub = h;
                }
                break;
            }
        }

        // Nodes that lost their hub go back to Orphan and erase keys.
        let addrs: Vec<Address> = self.nodes.keys().copied().collect();
        for a in &addrs {
            let n = &self.nodes[a];
            let Some(h) = n.hub else { continue };
            if !self.operational(*a) {
                continue;
            }
            let heard = n.last_beacon.get(&h).copied().unwrap_or(0);
            if t.saturating_sub(heard) > beacon_window {
                for act in self.fire(*a, FsmEvent::PeerUnreachable) {
                    if act == FsmAction::EraseKeys {
                        self.erase_pair(*a, h);
                    }
                }
                let n = self.nodes.get_mut(a).expect("node");
                n.hub = None;
                n.wants_join = true;
            }
        }

        // The hub reports nodes it no longer hears from.
        let hub = self.active_hub;
        if self.operational(hub) {
            let window = policy.liveness_timeout as u64 * interval.max(self.cfg.traffic.period);
            let expected: BTreeSet<Address> = self.expects_traffic();
            let hr = self.hubs.get_mut(&hub).expect("hub");
            let stale: Vec<Address> = hr
                .last_heard
                .iter()
                .filter(|(a, last)| expected.contains(a) && t.saturating_sub(**last) > window)
                .map(|(a, _)| *a)
                .collect();
            for a in stale {
                hr.last_heard.remove(&a);
                hr.hub.set_clock(t);
                if hr.hub.report_unreachable(a).is_some() {
                    self.reports.push((t, a));
                }
            }
        }

        // Rejoin through whichever hub is beaconing now.
        for a in addrs {
            let n = &self.nodes[&a];
            if !n.wants_join || n.hub.is_some() || !self.operational(a) {
                continue;
            }
            let heard = n.last_beacon.get(&hub).copied();
            if heard.is_some_and(|h| t.saturating_sub(h) <= beacon_window) {
                self.join(a, hub, false);
            }
        }
    }

    fn expects_traffic(&self) -> BTreeSet<Address> {
        let mut s: BTreeSet<Address> = self.flows.iter().map(|f| f.src).collect();
        for n in self.nodes.values() {
            if n.spec.has_role(NodeRole::Relay) && self.flows.iter().any(|f| f.dst == n.spec.address) {
                s.insert(n.spec.address);
            }
        }
        s
    }

    fn beacon(&mut self) {
        let hub = self.active_hub;
        if !self.operational(hub) {
            return;
        }
        let costs = self.cfg.energy;
        let payload = self.tick.to_be_bytes().to_vec();
        if !self.debit(hub, costs.tx(payload.len())) {
            return;
        }
        let seq = self.next_plain_seq(hub);
        let frame = Frame::plain(hub, Address::BROADCAST, FrameType::Beacon, seq, payload);
        let bytes = encode_frame(&frame).expect("beacon encodes");
        self.record(hub, Address::BROADCAST, Some(&frame), Outcome::Sent, None);
        let listeners: Vec<Address> = self
            .nodes
            .values()
            .filter(|n| {
                n.spec.address != hub
                    && n.spec.compute.runs_crypto()
                    && (n.spec.parent.is_none() || n.spec.parent.is_some_and(|p| self.hubs.contains_key(&p)))
            })
            .map(|n| n.spec.address)
            .collect();
        for l in listeners {
            self.arrivals.entry(self.tick + 1).or_default().push(Pending {
                transmitter: hub,
                receiver: l,
                bytes: bytes.clone(),
                touch_secure: false,
                relays: 0,
                legit: false,
                injected: None,
            });
        }
        self.air.push(AirFrame { tick: self.tick, transmitter: hub, receiver: Address::BROADCAST, touch_secure: false, bytes });
    }

    fn next_plain_seq(&mut self, addr: Address) -> SequencePair {
        let n = self.nodes.get_mut(&addr).expect("node");
        let s = n.plain_seq;
        n.plain_seq = advance_sequence(s).unwrap_or(SequencePair::ZERO);
        s
    }

    fn record(&mut self, src: Address, dst: Address, frame: Option<&Frame>, outcome: Outcome, reason: Option<DiscardReason>) {
        self.trace.push(TraceRow {
            tick: self.tick,
            src,
            dst,
            frame_type: frame.map(|f| f.frame_type),
            level: frame.map(|f| f.level),
            outcome,
            reason,
        });
        if let Some(r) = reason {
            *self.rejected.entry(r).or_default() += 1;
        }
    }

    fn transmit(&mut self, from: Address, to: Address, bytes: Vec<u8>, touch_secure: bool, relays: u8, legit: bool) {
        self.air.push(AirFrame { tick: self.tick, transmitter: from, receiver: to, touch_secure, bytes: bytes.clone() });
        self.arrivals.entry(self.tick + 1).or_default().push(Pending {
            transmitter: from,
            receiver: to,
            bytes,
            touch_secure,
            relays,
            legit,
            injected: None,
        });
    }

    /// Whether `src` currently has a secured, admitted path to `dst`.
    fn link_ready(&self, src: Address, dst: Address) -> bool {
        let n = &self.nodes[&src];
        if self.hubs.contains_key(&src) {
            let admitted = self.hubs[&src].hub.is_admitted(dst);
            return admitted && n.store.has_pair(src, dst);
        }
        if self.hubs.contains_key(&dst) {
            return n.hub == Some(dst) && n.fsm.state == SecurityState::Connected;
        }
        n.hub.is_some() && n.store.active(KeyOwner::pair(src, dst), KeyRole::Ptk).is_some()
    }

    fn send_flow(&mut self, f: Flow) {
        if !self.operational(f.src) {
            return;
        }
        let costs = self.cfg.energy;
        let payload: Vec<u8> = (0..self.cfg.traffic.payload).map(|_| self.rng.gen()).collect();
        let spec = self.nodes[&f.src].spec.clone();
        if !spec.compute.runs_crypto() {
            // C1: clear frame over the touch-secure link to the parent relay.
            let Some(parent) = spec.parent else { return };
            if !self.debit(f.src, costs.tx(payload.len())) {
                return;
            }
            let seq = self.next_plain_seq(f.src);
            let frame = Frame::plain(f.src, parent, FrameType::Data, seq, payload.clone());
            let bytes = encode_frame(&frame).expect("encodes");
            self.truth.insert(bytes.clone(), payload);
            self.record(f.src, parent, Some(&frame), Outcome::Sent, None);
            self.transmit(f.src, parent, bytes, spec.link_touch_secure, 0, true);
            return;
        }
        // A connected node keeps sending to its hub even if the hub is gone.
        let dst = if self.hubs.contains_key(&f.dst) { self.nodes[&f.src].hub.unwrap_or(f.dst) } else { f.dst };
        if !self.link_ready(f.src, dst) {
            return;
        }
        let suite = self.pair_suite(f.src, dst).expect("known pair");
        let Some(frame) = self.seal(f.src, dst, FrameType::Data, suite.level, &payload) else { return };
        let mut cost = costs.tx(frame.payload.len());
        if frame.level.is_secured() {
            cost += costs.ccm(frame.payload.len());
        }
        if !self.debit(f.src, cost) {
            return;
        }
        let bytes = encode_frame(&frame).expect("encodes");
        self.truth.insert(bytes.clone(), payload);
        self.record(f.src, dst, Some(&frame), Outcome::Sent, None);
        self.transmit(f.src, dst, bytes, false, 0, true);
    }

    fn seal(&mut self, src: Address, dst: Address, ft: FrameType, level: SecurityLevel, payload: &[u8]) -> Option<Frame> {
        if level == SecurityLevel::Level0Unsecured {
            let seq = self.next_plain_seq(src);
            return Some(Frame::plain(src, dst, ft, seq, payload.to_vec()));
        }
        let store = &mut self.nodes.get_mut(&src)?.store;
        channel::seal_frame(store, src, dst, ft, level, payload).ok()
    }

    fn jammed(&self, a: Address, b: Address, t: u64) -> bool {
        self.jams
            .iter()
            .any(|&(x, y, from, until)| ((x == a && y == b) || (x == b && y == a)) && t >= from && t < until)
    }

    /// Receiver-side view of the security relationship with `peer`.
    fn view_of(&self, local: Address, peer: Address) -> SecurityState {
        let n = &self.nodes[&local];
        if let Some(h) = self.hubs.get(&local) {
            let ptk = n.store.active(KeyOwner::pair(local, peer), KeyRole::Ptk).is_some();
            let mk = n.store.active(KeyOwner::pair(local, peer), KeyRole::Mk).is_some();
            return match (ptk, mk, h.hub.is_admitted(peer)) {
                (true, _, true) => SecurityState::Connected,
                (true, _, false) => SecurityState::Secured,
                (false, true, _) => SecurityState::Associated,
                _ => SecurityState::Orphan,
            };
        }
        if n.hub == Some(peer) {
            return n.fsm.state;
        }
        if n.hub.is_some() && n.store.active(KeyOwner::pair(local, peer), KeyRole::Ptk).is_some() {
            SecurityState::Secured
        } else {
            SecurityState::Orphan
        }
    }

    fn receive(&mut self, p: Pending) {
        let r = p.receiver;
        let is_beacon = !p.legit && p.injected.is_none() && p.transmitter == self.active_hub_or(p.transmitter);
        let header = decode_frame(&p.bytes).ok();
        let drop = |sim: &mut Self, reason: DiscardReason| {
            if let Some(id) = p.injected {
                sim.injected.insert(id, false);
            }
            if !(is_beacon && header.as_ref().is_some_and(|f| f.frame_type == FrameType::Beacon)) {
                sim.record(p.transmitter, r, header.as_ref(), Outcome::Dropped, Some(reason));
            }
        };
        if p.legit && self.hubs.contains_key(&r) {
            self.hub_load.arrived += 1;
        }
        if self.jammed(p.transmitter, r, self.tick) {
            return drop(self, DiscardReason::Jammed);
        }
        if !self.nodes.contains_key(&r) {
            return drop(self, DiscardReason::NotForUs);
        }
        if !self.operational(r) {
            return drop(self, DiscardReason::Dead);
        }
        let is_coord = self.hubs.contains_key(&r);
        if let Some(limit) = self.cfg.policy().rate_limit {
            if self.nodes[&r].unverified.get(&p.transmitter).copied().unwrap_or(0) >= limit {
                self.debit(r, self.cfg.energy.hibernate);
                return drop(self, DiscardReason::RateLimited);
            }
        }
        if is_coord {
            let n = self.nodes.get_mut(&r).expect("node");
            if n.processed >= self.cfg.hub.frame_capacity {
                return drop(self, DiscardReason::Overload);
            }
            n.processed += 1;
        }
        let costs = self.cfg.energy;
        if !self.debit(r, costs.rx) {
            return drop(self, DiscardReason::Dead);
        }
        let unverified = |sim: &mut Self| {
            *sim.nodes.get_mut(&r).expect("node").unverified.entry(p.transmitter).or_default() += 1;
        };
        let Some(frame) = header.clone() else {
            unverified(self);
            return self.discard(&p, None, DiscardReason::Malformed);
        };
        if frame.recipient != r && frame.recipient != Address::BROADCAST {
            unverified(self);
            return self.discard(&p, Some(&frame), DiscardReason::NotForUs);
        }
        if frame.level.is_secured() && !self.debit(r, costs.ccm(frame.payload.len())) {
            return drop(self, DiscardReason::Dead);
        }
        match frame.frame_type {
            FrameType::WakeUp => {
                unverified(self);
                let alive = self.debit(r, costs.wake);
                if let Some(id) = p.injected {
                    self.injected.insert(id, false);
                }
                if alive {
                    self.record(p.transmitter, r, Some(&frame), Outcome::Woken, None);
                }
            }
            FrameType::Beacon => {
                unverified(self);
                if self.hubs.contains_key(&frame.sender) {
                    let t = self.tick;
                    self.nodes.get_mut(&r).expect("node").last_beacon.insert(frame.sender, t);
                }
                if let Some(id) = p.injected {
                    self.injected.insert(id, false);
                }
            }
            FrameType::Management => {
                let store = &mut self.nodes.get_mut(&r).expect("node").store;
                match store.accept_gtk(r, &frame) {
                    Ok(_) => self.record(p.transmitter, r, Some(&frame), Outcome::Delivered, None),
                    Err(_) => {
                        unverified(self);
                        self.discard(&p, Some(&frame), DiscardReason::AuthFailure)
                    }
                }
            }
            FrameType::Data | FrameType::Control => self.receive_data(p, frame),
        }
    }

    fn active_hub_or(&self, fallback: Address) -> Address {
        if self.hubs.contains_key(&fallback) {
            fallback
        } else {
            self.active_hub
        }
    }

    fn discard(&mut self, p: &Pending, frame: Option<&Frame>, reason: DiscardReason) {
        if let Some(id) = p.injected {
            self.injected.insert(id, false);
        }
        self.record(p.transmitter, p.receiver, frame, Outcome::Discarded, Some(reason));
    }

    fn receive_data(&mut self, p: Pending, frame: Frame) {
        let r = p.receiver;
        let s = frame.sender;
        let spec_r = self.nodes[&r].spec.clone();
        let from_child = self.nodes.get(&s).is_some_and(|c| {
            !c.spec.compute.runs_crypto() && c.spec.parent == Some(r) && c.spec.link_touch_secure
        });
        if spec_r.has_role(NodeRole::Relay) && p.touch_secure && from_child && frame.level == SecurityLevel::Level0Unsecured {
            return self.forward(p, frame);
        }
        let state = if self.nodes.contains_key(&s) { self.view_of(r, s) } else { SecurityState::Orphan };
        let suite = if self.hubs.contains_key(&r) {
            match self.nodes.get(&s) {
                Some(n) => n.suite,
                None => self.cfg.suite_for(&spec_r),
            }
        } else {
            self.nodes[&r].suite
        };
        let verdict = {
            let store = &mut self.nodes.get_mut(&r).expect("node").store;
            accept_inbound(state, &suite, store, r, &frame)
        };
        let payload = match verdict {
            InboundVerdict::Deliver(pl) => pl,
            InboundVerdict::Discard(reason) => {
                *self.nodes.get_mut(&r).expect("node").unverified.entry(p.transmitter).or_default() += 1;
                return self.discard(&p, Some(&frame), reason);
            }
        };
        let mut origin = s;
        if let Some(h) = self.hubs.get(&r) {
            let relay = self.nodes.get(&s).is_some_and(|n| n.spec.has_role(NodeRole::Relay));
            if relay && payload.len() >= 2 {
                origin = Address(u16::from_be_bytes([payload[0], payload[1]]));
            }
            if !h.hub.is_admitted(s) || !h.hub.is_admitted(origin) {
                return self.discard(&p, Some(&frame), DiscardReason::NotAdmitted);
            }
            let t = self.tick;
            let hr = self.hubs.get_mut(&r).expect("hub");
            hr.last_heard.insert(s, t);
            hr.last_heard.insert(origin, t);
            if p.legit {
                self.hub_load.delivered += 1;
            }
        }
        if let Some(id) = p.injected {
            self.injected.insert(id, true);
        }
        self.deliveries.push(Delivery { tick: self.tick, origin, dst: r, relays: p.relays, injected: p.injected });
        self.record(p.transmitter, r, Some(&frame), Outcome::Delivered, None);
    }

    fn forward(&mut self, p: Pending, frame: Frame) {
        let relay = p.receiver;
        let Some(hub) = self.nodes[&relay].hub else {
            return self.discard(&p, Some(&frame), DiscardReason::NoKeys);
        };
        let mut body = frame.sender.to_be_bytes().to_vec();
        body.extend_from_slice(&frame.payload);
        let level = self.nodes[&relay].suite.level;
        let Some(out) = self.seal(relay, hub, FrameType::Data, level, &body) else {
            return self.discard(&p, Some(&frame), DiscardReason::NoKeys);
        };
        let costs = self.cfg.energy;
        let mut cost = costs.tx(out.payload.len());
        if out.level.is_secured() {
            cost += costs.ccm(out.payload.len());
        }
        if !self.debit(relay, cost) {
            return;
        }
        let bytes = encode_frame(&out).expect("encodes");
        self.truth.insert(bytes.clone(), body);
        self.record(p.transmitter, relay, Some(&frame), Outcome::Forwarded, None);
        self.transmit(relay, hub, bytes, false, p.relays + 1, p.legit);
    }
}

fn device_suite(s: &assoc::ProtocolSession) -> SecuritySuiteSelector {
    s.suite()
}

/// ACL identity of a C1 node bound to its touch-secure parent link.
pub fn link_identity(node: Address, parent: Address) -> Fingerprint {
    let mut b = node.to_be_bytes().to_vec();
    b.extend_from_slice(&parent.to_be_bytes());
    Fingerprint::of(b"touch-link", &b)
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tick", "src", "dst", "type", "level", "outcome", "reason"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.tick.to_string(),
            r.src.to_string(),
            r.dst.to_string(),
            r.frame_type.map(|t| t.as_str().to_string()).unwrap_or_default(),
            r.level.map(|l| l.as_u8().to_string()).unwrap_or_default(),
            r.outcome.as_str().to_string(),
            r.reason.map(|x| x.as_str().to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[cfg(test)]
mod tests;
