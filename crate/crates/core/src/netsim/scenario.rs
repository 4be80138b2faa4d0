//! Scenario files: `key = value` lines grouped into `[section]`s.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::CipherFunction;
use crate::frame::{Address, SecurityLevel};
use crate::hub::{parse_address, HubPolicy};
use crate::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

/// Energy amounts are kept in millionths of a unit so every debit is exact.
pub type Micro = i64;
pub const MICRO: Micro = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    /// T1
    Star,
    /// T2, two-hop star extension
    Tree,
    /// T3
    PeerToPeer,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Star => "T1",
            Topology::Tree => "T2",
            Topology::PeerToPeer => "T3",
        }
    }
}

impl FromStr for Topology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" | "STAR" => Ok(Topology::Star),
            "T2" | "TREE" => Ok(Topology::Tree),
            "T3" | "P2P" | "PEER" => Ok(Topology::PeerToPeer),
            _ => Err(format!("unknown topology {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceClass {
    Invasive,
    SemiInvasive,
    Wearable,
    Ambient,
}

impl FromStr for DeviceClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "invasive" => Ok(DeviceClass::Invasive),
            "semiinvasive" => Ok(DeviceClass::SemiInvasive),
            "wearable" => Ok(DeviceClass::Wearable),
            "ambient" => Ok(DeviceClass::Ambient),
            _ => Err(format!("unknown device class {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyClass {
    /// E1: no battery, powered through its parent link.
    Passive,
    /// E2
    NonRechargeable { capacity: Micro },
    /// E3
    Rechargeable { capacity: Micro, recharge: Micro },
}

impl EnergyClass {
    pub fn capacity(self) -> Option<Micro> {
        match self {
            EnergyClass::Passive => None,
            EnergyClass::NonRechargeable { capacity } | EnergyClass::Rechargeable { capacity, .. } => Some(capacity),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            EnergyClass::Passive => "E1",
            EnergyClass::NonRechargeable { .. } => "E2",
            EnergyClass::Rechargeable { .. } => "E3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MemoryClass {
    M1,
    M2,
    M3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ComputeClass {
    C1,
    C2,
    C3,
}

impl ComputeClass {
    pub fn runs_crypto(self) -> bool {
        self != ComputeClass::C1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRole {
    EndNode,
    Relay,
    Coordinator,
}

/// Device archetypes that stand for a missing control.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Level 0 traffic under a static pairing key, no replay protection.
    LegacyPump,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub address: Address,
    pub device_class: DeviceClass,
    pub energy: EnergyClass,
    pub memory: MemoryClass,
    pub compute: ComputeClass,
    pub roles: BTreeSet<NodeRole>,
    pub display: bool,
    pub link_touch_secure: bool,
    pub parent: Option<Address>,
    pub preset: Option<Preset>,
    pub sends_traffic: bool,
}

impl NodeSpec {
    pub fn has_role(&self, r: NodeRole) -> bool {
        self.roles.contains(&r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubSpec {
    pub node: NodeSpec,
    pub protocol: AssocProtocol,
    /// Protocol used when the hardened policy refuses `protocol`.
    pub hardened_protocol: AssocProtocol,
    pub level: SecurityLevel,
    pub cipher: CipherFunction,
    /// Cap applied by the hardened profile; baseline always uses 64.
    pub max_ban_size: usize,
    /// Frames the hub can process per tick.
    pub frame_capacity: usize,
    pub backups: Vec<Address>,
    pub gtk_refresh: u64,
    /// Ticks between hub beacons; 0 disables beacons and liveness checks.
    pub beacon_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficSchedule {
    pub period: u64,
    pub payload: usize,
    /// T3 only.
    pub links: Vec<(Address, Address)>,
}

/// Cost of each energy event, in micro-units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyCosts {
    pub tx_base: Micro,
    pub tx_per_octet: Micro,
    pub rx: Micro,
    pub ecdh: Micro,
    pub ccm_block: Micro,
    pub idle: Micro,
    pub wake: Micro,
    pub hibernate: Micro,
}

impl Default for EnergyCosts {
    fn default() -> Self {
        Self {
            tx_base: 2 * MICRO,
            tx_per_octet: MICRO / 16,
            rx: MICRO,
            ecdh: 20 * MICRO,
            ccm_block: MICRO,
            idle: MICRO / 100,
            wake: 5 * MICRO,
            hibernate: 0,
        }
    }
}

impl EnergyCosts {
    pub fn tx(&self, payload_len: usize) -> Micro {
        self.tx_base + self.tx_per_octet * payload_len as Micro
    }

    pub fn ccm(&self, len: usize) -> Micro {
        self.ccm_block * len.div_ceil(16).max(1) as Micro
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackHints {
    pub victim: Option<Address>,
    pub replay_source: Option<Address>,
    pub eavesdrop_link: Option<(Address, Address)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub profile: Profile,
    pub topology: Topology,
    /// Topology used by the baseline profile when `topology` is T3.
    pub baseline_topology: Option<Topology>,
    pub seed: u64,
    pub ticks: u64,
    pub hub: HubSpec,
    /// Every non-hub node in declaration order.
    pub nodes: Vec<NodeSpec>,
    pub traffic: TrafficSchedule,
    pub energy: EnergyCosts,
    pub attack: AttackHints,
}

impl ScenarioConfig {
    pub fn effective_topology(&self) -> Topology {
        match (self.profile, self.topology) {
            (Profile::Baseline, Topology::PeerToPeer) => self.baseline_topology.unwrap_or(Topology::PeerToPeer),
            (_, t) => t,
        }
    }

    pub fn policy(&self) -> HubPolicy {
        match self.profile {
            Profile::Baseline => HubPolicy::baseline(),
            Profile::Hardened => {
                let mut p = HubPolicy::hardened(self.hub.max_ban_size);
                p.backup_hubs = self.hub.backups.clone();
                p
            }
        }
    }

    /// Protocol every node uses to associate with the hub under this profile.
    pub fn protocol(&self) -> AssocProtocol {
        if self.policy().allowed_protocols.contains(&self.hub.protocol) {
            self.hub.protocol
        } else {
            self.hub.hardened_protocol
        }
    }

    /// Suite proposed by `node`. Hardened nodes are provisioned at the policy floor.
    pub fn suite_for(&self, node: &NodeSpec) -> SecuritySuiteSelector {
        let policy = self.policy();
        let mut level = self.hub.level;
        if node.preset == Some(Preset::LegacyPump) || self.hub.node.preset == Some(Preset::LegacyPump) {
            level = SecurityLevel::Level0Unsecured;
        }
        level = level.max(policy.min_level);
        SecuritySuiteSelector::new(level, self.protocol(), self.hub.cipher)
    }

    pub fn node(&self, addr: Address) -> Option<&NodeSpec> {
        if addr == self.hub.node.address {
            return Some(&self.hub.node);
        }
        self.nodes.iter().find(|n| n.address == addr)
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        std::iter::once(&self.hub.node).chain(self.nodes.iter())
    }

    /// Directed traffic flows `(src, dst)` in schedule order.
    pub fn flows(&self) -> Vec<(Address, Address)> {
        match self.effective_topology() {
            Topology::PeerToPeer => self.traffic.links.clone(),
            _ if !self.traffic.links.is_empty() => {
                // Peer links collapse onto the star: node-to-node flows end at the hub.
                let hub = self.hub.node.address;
                let mut seen = BTreeSet::new();
                self.traffic
                    .links
                    .iter()
                    .map(|&(s, d)| if s != hub && d != hub { (s, hub) } else { (s, d) })
                    .filter(|f| seen.insert(*f))
                    .collect()
            }
            _ => self
                .nodes
                .iter()
                .filter(|n| n.sends_traffic && n.has_role(NodeRole::EndNode))
                .map(|n| (n.address, n.parent.unwrap_or(self.hub.node.address)))
                .collect(),
        }
    }
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

fn split_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim().to_string();
            if out.iter().any(|sec| sec.name == name) {
                return Err(ConfigError::Syntax { line, msg: format!("duplicate section [{name}]") });
            }
            out.push(Section { name, line, entries: Vec::new() });
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            return Err(ConfigError::Syntax { line, msg: format!("expected key = value, got {s:?}") });
        };
        let Some(sec) = out.last_mut() else {
            return Err(ConfigError::Syntax { line, msg: "entry outside a section".into() });
        };
        let key = k.trim().to_string();
        if sec.entries.iter().any(|(k2, _, _)| *k2 == key) {
            return Err(ConfigError::Syntax { line, msg: format!("duplicate key {key:?}") });
        }
        sec.entries.push((key, v.trim().to_string(), line));
    }
    Ok(out)
}

struct Fields<'a> {
    section: &'a str,
    map: BTreeMap<&'a str, (&'a str, usize)>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn new(sec: &'a Section, allowed: &[&str]) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (k, v, line) in &sec.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(ConfigError::Syntax { line: *line, msg: format!("unknown key {k:?} in [{}]", sec.name) });
            }
            map.insert(k.as_str(), (v.as_str(), *line));
        }
        Ok(Self { section: &sec.name, map, line: sec.line })
    }

    fn raw(&self, key: &str) -> Option<(&'a str, usize)> {
        self.map.get(key).copied()
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError::Syntax { line, msg: format!("{key}: {e}") }),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Syntax {
            line: self.line,
            msg: format!("[{}] is missing {key:?}", self.section),
        })
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get::<bool>(key)
    }

    fn micro(&self, key: &str) -> Result<Option<Micro>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => parse_micro(v)
                .map(Some)
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("{key}: bad amount {v:?}") }),
        }
    }

    fn address(&self, key: &str) -> Result<Option<Address>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => parse_address(v)
                .map(Some)
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("{key}: bad address {v:?}") }),
        }
    }
}

/// Decimal amount with up to six fractional digits, as micro-units.
pub fn parse_micro(s: &str) -> Option<Micro> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: Micro = int.parse().ok().filter(|v: &Micro| *v >= 0)?;
    let frac_val: Micro = if frac.is_empty() { 0 } else { format!("{frac:0<6}").parse().ok()? };
    whole.checked_mul(MICRO)?.checked_add(frac_val)
}

fn parse_level(s: &str) -> Result<SecurityLevel, String> {
    s.trim()
        .parse::<u8>()
        .ok()
        .and_then(SecurityLevel::from_u8)
        .ok_or_else(|| format!("security level must be 0, 1 or 2, got {s:?}"))
}

fn parse_cipher(s: &str) -> Result<CipherFunction, String> {
    match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
        "aes128" | "aes128ccm" => Ok(CipherFunction::Aes128Ccm),
        "aes256" | "aes256ccm" => Ok(CipherFunction::Aes256Ccm),
        "camellia128" | "camellia128ccm" => Ok(CipherFunction::Camellia128Ccm),
        _ => Err(format!("unknown cipher {s:?}")),
    }
}

fn parse_roles(s: &str) -> Result<BTreeSet<NodeRole>, String> {
    s.split(',')
        .map(|r| match r.trim().to_ascii_lowercase().as_str() {
            "end" | "endnode" => Ok(NodeRole::EndNode),
            "relay" => Ok(NodeRole::Relay),
            "coordinator" | "hub" => Ok(NodeRole::Coordinator),
            other => Err(format!("unknown role {other:?}")),
        })
        .collect()
}

const NODE_KEYS: &[&str] = &[
    "address", "count", "class", "energy", "capacity", "recharge", "memory", "compute", "roles", "display",
    "touch_secure", "parent", "preset", "traffic",
];

struct RawNode {
    spec: NodeSpec,
    parent_ref: Option<(String, usize)>,
    count: usize,
}

fn parse_node(name: &str, f: &Fields<'_>, defaults_role: NodeRole) -> Result<RawNode, ConfigError> {
    let address: Address = f.address("address")?.ok_or_else(|| ConfigError::Syntax {
        line: f.line,
        msg: format!("[{}] is missing \"address\"", f.section),
    })?;
    let energy = match f.get::<String>("energy")?.as_deref().map(str::to_ascii_uppercase).as_deref() {
        Some("E1") | None => EnergyClass::Passive,
        Some("E2") => EnergyClass::NonRechargeable { capacity: req_micro(f, "capacity")? },
        Some("E3") => EnergyClass::Rechargeable {
            capacity: req_micro(f, "capacity")?,
            recharge: f.micro("recharge")?.unwrap_or(0),
        },
        Some(other) => return Err(syn(f, format!("unknown energy class {other:?}"))),
    };
    let memory = match f.get::<String>("memory")?.as_deref().map(str::to_ascii_uppercase).as_deref() {
        Some("M1") => MemoryClass::M1,
        Some("M2") | None => MemoryClass::M2,
        Some("M3") => MemoryClass::M3,
        Some(other) => return Err(syn(f, format!("unknown memory class {other:?}"))),
    };
    let compute = match f.get::<String>("compute")?.as_deref().map(str::to_ascii_uppercase).as_deref() {
        Some("C1") => ComputeClass::C1,
        Some("C2") | None => ComputeClass::C2,
        Some("C3") => ComputeClass::C3,
        Some(other) => return Err(syn(f, format!("unknown compute class {other:?}"))),
    };
    let roles = match f.raw("roles") {
        Some((v, line)) => parse_roles(v).map_err(|msg| ConfigError::Syntax { line, msg })?,
        None => BTreeSet::from([defaults_role]),
    };
    let preset = match f.raw("preset") {
        None => None,
        Some(("legacy_pump", _)) => Some(Preset::LegacyPump),
        Some((v, line)) => return Err(ConfigError::Syntax { line, msg: format!("unknown preset {v:?}") }),
    };
    let count: usize = f.get("count")?.unwrap_or(1);
    if count == 0 {
        return Err(syn(f, "count must be positive".into()));
    }
    let spec = NodeSpec {
        name: name.to_string(),
        address,
        device_class: f.get::<DeviceClass>("class")?.unwrap_or(DeviceClass::Wearable),
        energy,
        memory,
        compute,
        roles,
        display: f.flag("display")?.unwrap_or(false),
        link_touch_secure: f.flag("touch_secure")?.unwrap_or(false),
        parent: None,
        preset,
        sends_traffic: f.flag("traffic")?.unwrap_or(true),
    };
    let parent_ref = f.raw("parent").map(|(v, l)| (v.to_string(), l));
    Ok(RawNode { spec, parent_ref, count })
}

fn syn(f: &Fields<'_>, msg: String) -> ConfigError {
    ConfigError::Syntax { line: f.line, msg: format!("[{}] {msg}", f.section) }
}

fn req_micro(f: &Fields<'_>, key: &str) -> Result<Micro, ConfigError> {
    f.micro(key)?.ok_or_else(|| syn(f, format!("needs {key:?}")))
}

/// Parse and validate a scenario for the given profile.
pub fn load_scenario(text: &str, profile: Profile) -> Result<ScenarioConfig, ConfigError> {
    let sections = split_sections(text)?;
    let find = |n: &str| sections.iter().find(|s| s.name == n);
    for s in &sections {
        let known = ["topology", "hub", "traffic", "energy", "attack"].contains(&s.name.as_str())
            || s.name.starts_with("node.");
        if !known {
            return Err(ConfigError::Syntax { line: s.line, msg: format!("unknown section [{}]", s.name) });
        }
    }

    let topo_sec = find("topology").ok_or_else(|| ConfigError::Invalid("missing [topology]".into()))?;
    let topo = Fields::new(topo_sec, &["kind", "name", "ticks", "seed", "baseline"])?;
    let topology: Topology = topo.require("kind")?;
    let baseline_topology: Option<Topology> = topo.get("baseline")?;
    let ticks: u64 = topo.get("ticks")?.unwrap_or(100);
    let seed: u64 = topo.get("seed")?.unwrap_or(0);
    let name: String = topo.get("name")?.unwrap_or_else(|| "scenario".into());

    let hub_sec = find("hub").ok_or_else(|| ConfigError::Invalid("missing [hub]".into()))?;
    let mut hub_keys: Vec<&str> = NODE_KEYS.to_vec();
    hub_keys.extend([
        "protocol", "hardened_protocol", "level", "cipher", "max_ban_size", "frame_capacity", "backups",
        "gtk_refresh", "beacon_interval",
    ]);
    let hf = Fields::new(hub_sec, &hub_keys)?;
    let hub_raw = parse_node("hub", &hf, NodeRole::Coordinator)?;
    let mut hub_node = hub_raw.spec;
    hub_node.roles.insert(NodeRole::Coordinator);
    hub_node.sends_traffic = false;
    if hub_raw.count != 1 || hub_raw.parent_ref.is_some() {
        return invalid("the hub takes neither count nor parent");
    }
    if hub_node.energy == EnergyClass::Passive {
        return invalid("the hub must carry its own power source (E2 or E3)");
    }
    let protocol: AssocProtocol = hf.get("protocol")?.unwrap_or(AssocProtocol::PreSharedMk);
    let hardened_protocol = hf.get("hardened_protocol")?.unwrap_or(if protocol.mutually_authenticating() {
        protocol
    } else {
        AssocProtocol::PreSharedMk
    });
    if !hardened_protocol.mutually_authenticating() {
        return invalid("hardened_protocol must be mutually authenticating");
    }
    let level = match hf.raw("level") {
        None => SecurityLevel::Level2AuthEnc,
        Some((v, line)) => parse_level(v).map_err(|msg| ConfigError::Syntax { line, msg })?,
    };
    let cipher = match hf.raw("cipher") {
        None => CipherFunction::Aes128Ccm,
        Some((v, line)) => parse_cipher(v).map_err(|msg| ConfigError::Syntax { line, msg })?,
    };
    let backups = match hf.raw("backups") {
        None => Vec::new(),
        Some((v, line)) => v
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_address(s).ok_or_else(|| ConfigError::Syntax { line, msg: format!("bad address {s:?}") }))
            .collect::<Result<_, _>>()?,
    };
    let hub = HubSpec {
        node: hub_node,
        protocol,
        hardened_protocol,
        level,
        cipher,
        max_ban_size: hf.get("max_ban_size")?.unwrap_or(crate::hub::MAX_BAN_SIZE_STANDARD),
        frame_capacity: hf.get("frame_capacity")?.unwrap_or(64),
        backups,
        gtk_refresh: hf.get("gtk_refresh")?.unwrap_or(0),
        beacon_interval: hf.get("beacon_interval")?.unwrap_or(10),
    };
    if hub.frame_capacity == 0 {
        return invalid("frame_capacity must be positive");
    }

    // Nodes, expanding groups.
    let mut groups: BTreeMap<String, Vec<Address>> = BTreeMap::new();
    let mut raw_nodes: Vec<(NodeSpec, Option<(String, usize)>, usize)> = Vec::new();
    for sec in sections.iter().filter(|s| s.name.starts_with("node.")) {
        let gname = &sec.name["node.".len()..];
        let f = Fields::new(sec, NODE_KEYS)?;
        let raw = parse_node(gname, &f, NodeRole::EndNode)?;
        let mut addrs = Vec::with_capacity(raw.count);
        for i in 0..raw.count {
            let a = raw.spec.address.0 as usize + i;
            if a > u16::MAX as usize {
                return Err(syn(&f, "address range overflows".into()));
            }
            let mut spec = raw.spec.clone();
            spec.address = Address(a as u16);
            if raw.count > 1 {
                spec.name = format!("{gname}{i}");
            }
            addrs.push(spec.address);
            raw_nodes.push((spec, raw.parent_ref.clone(), i));
        }
        groups.insert(gname.to_string(), addrs);
    }

    let resolve_one = |s: &str| -> Option<Address> {
        if s == "hub" {
            return Some(hub.node.address);
        }
        if let Some(g) = groups.get(s) {
            return (g.len() == 1).then(|| g[0]);
        }
        parse_address(s)
    };

    let mut nodes = Vec::with_capacity(raw_nodes.len());
    for (mut spec, pref, idx) in raw_nodes {
        spec.parent = match pref {
            None => None,
            Some((p, line)) => {
                let p = p.trim();
                let a = match groups.get(p) {
                    // Children of a group are spread round-robin over its members.
                    Some(g) => Some(g[idx % g.len()]),
                    None => resolve_one(p),
                };
                Some(a.ok_or_else(|| ConfigError::Syntax { line, msg: format!("unknown parent {p:?}") })?)
            }
        };
        nodes.push(spec);
    }

    let mut traffic = TrafficSchedule { period: 10, payload: 16, links: Vec::new() };
    if let Some(sec) = find("traffic") {
        let f = Fields::new(sec, &["period", "payload", "links"])?;
        traffic.period = f.get("period")?.unwrap_or(10);
        traffic.payload = f.get("payload")?.unwrap_or(16);
        if let Some((v, line)) = f.raw("links") {
            for l in v.split(',').filter(|s| !s.trim().is_empty()) {
                let (a, b) = l
                    .split_once('>')
                    .ok_or_else(|| ConfigError::Syntax { line, msg: format!("link {l:?} is not src>dst") })?;
                let src = resolve_one(a.trim());
                let dst = resolve_one(b.trim());
                match (src, dst) {
                    (Some(s), Some(d)) => traffic.links.push((s, d)),
                    _ => return Err(ConfigError::Syntax { line, msg: format!("unknown endpoint in {l:?}") }),
                }
            }
        }
    }
    if traffic.period == 0 || traffic.payload > crate::frame::MAX_PAYLOAD - 2 {
        return invalid("traffic period must be positive and payload at most 253 octets");
    }

    let mut energy = EnergyCosts::default();
    if let Some(sec) = find("energy") {
        let f = Fields::new(sec, &["tx_base", "tx_per_octet", "rx", "ecdh", "ccm_block", "idle", "wake", "hibernate"])?;
        let slots: [(&str, &mut Micro); 8] = [
            ("tx_base", &mut energy.tx_base),
            ("tx_per_octet", &mut energy.tx_per_octet),
            ("rx", &mut energy.rx),
            ("ecdh", &mut energy.ecdh),
            ("ccm_block", &mut energy.ccm_block),
            ("idle", &mut energy.idle),
            ("wake", &mut energy.wake),
            ("hibernate", &mut energy.hibernate),
        ];
        for (k, slot) in slots {
            if let Some(v) = f.micro(k)? {
                *slot = v;
            }
        }
    }

    let mut attack = AttackHints::default();
    if let Some(sec) = find("attack") {
        let f = Fields::new(sec, &["victim", "replay_source", "eavesdrop_link"])?;
        let one = |k: &str| -> Result<Option<Address>, ConfigError> {
            match f.raw(k) {
                None => Ok(None),
                Some((v, line)) => resolve_one(v)
                    .map(Some)
                    .ok_or_else(|| ConfigError::Syntax { line, msg: format!("unknown node {v:?}") }),
            }
        };
        attack.victim = one("victim")?;
        attack.replay_source = one("replay_source")?;
        if let Some((v, line)) = f.raw("eavesdrop_link") {
            let bad = || ConfigError::Syntax { line, msg: format!("bad link {v:?}") };
            let (a, b) = v.split_once('>').ok_or_else(bad)?;
            attack.eavesdrop_link = Some((resolve_one(a.trim()).ok_or_else(bad)?, resolve_one(b.trim()).ok_or_else(bad)?));
        }
    }

    let cfg = ScenarioConfig {
        name,
        profile,
        topology,
        baseline_topology,
        seed,
        ticks,
        hub,
        nodes,
        traffic,
        energy,
        attack,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ScenarioConfig) -> Result<(), ConfigError> {
    let hub = cfg.hub.node.address;
    let mut seen = BTreeSet::new();
    for n in cfg.all_nodes() {
        if n.address == Address::UNASSIGNED || n.address == Address::BROADCAST {
            return invalid(format!("{} uses a reserved address", n.name));
        }
        if !seen.insert(n.address) {
            return invalid(format!("address {} is used twice", n.address));
        }
    }

    let topology = cfg.effective_topology();
    if cfg.topology == Topology::PeerToPeer && topology == Topology::PeerToPeer && cfg.profile == Profile::Baseline {
        return invalid("peer-to-peer topology (T3) is not supported by the baseline profile");
    }
    if cfg.baseline_topology == Some(Topology::PeerToPeer) {
        return invalid("the baseline fallback topology cannot be T3");
    }
    if !cfg.traffic.links.is_empty() && cfg.topology != Topology::PeerToPeer {
        return invalid("traffic links are only meaningful in a T3 scenario");
    }

    for n in &cfg.nodes {
        if n.has_role(NodeRole::Coordinator) && !cfg.hub.backups.contains(&n.address) {
            return invalid(format!(
                "{} is a second coordinator; {} permits exactly one (list standby hubs under backups)",
                n.name,
                topology.as_str()
            ));
        }
    }
    for b in &cfg.hub.backups {
        match cfg.node(*b) {
            Some(n) if n.has_role(NodeRole::Coordinator) && *b != hub => {}
            _ => return invalid(format!("backup hub {b} is not a declared coordinator node")),
        }
    }

    for n in &cfg.nodes {
        if !n.compute.runs_crypto() && !n.link_touch_secure {
            return invalid(format!("{} is C1 and can only use a touch-secure link", n.name));
        }
        if let Some(p) = n.parent {
            let parent = cfg.node(p).ok_or_else(|| ConfigError::Invalid(format!("{}: parent {p} not declared", n.name)))?;
            match topology {
                Topology::Star if p != hub => return invalid(format!("{}: T1 nodes attach to the hub directly", n.name)),
                Topology::Tree if p != hub && !(parent.has_role(NodeRole::Relay) && parent.parent.unwrap_or(hub) == hub) => {
                    return invalid(format!("{}: T2 allows at most one relay hop", n.name))
                }
                _ => {}
            }
        }
        if n.has_role(NodeRole::Relay) && topology == Topology::Star {
            return invalid(format!("{}: relays need a T2 topology", n.name));
        }
        if n.energy == EnergyClass::Passive && !powered_path(cfg, n) {
            return invalid(format!("{} is E1 but has no powered parent path", n.name));
        }
    }
    for (s, d) in &cfg.traffic.links {
        if s == d {
            return invalid(format!("link {s}>{d} loops"));
        }
    }
    Ok(())
}

fn powered_path(cfg: &ScenarioConfig, n: &NodeSpec) -> bool {
    let mut cur = n;
    for _ in 0..=cfg.nodes.len() {
        let Some(p) = cur.parent else { return false };
        let Some(parent) = cfg.node(p) else { return false };
        if parent.energy != EnergyClass::Passive {
            return true;
        }
        cur = parent;
    }
    false
}

pub const NEURAL_DUST: &str = include_str!("scenarios/neural_dust.scn");
pub const LCP: &str = include_str!("scenarios/lcp.scn");
pub const PANCREAS: &str = include_str!("scenarios/pancreas.scn");

/// Bundled scenario text by file name or stem.
pub fn bundled(name: &str) -> Option<&'static str> {
    let stem = name.rsplit('/').next().unwrap_or(name).trim_end_matches(".scn");
    match stem {
        "neural_dust" => Some(NEURAL_DUST),
        "lcp" => Some(LCP),
        "pancreas" => Some(PANCREAS),
        _ => None,
    }
}

pub const BUNDLED: [&str; 3] = ["neural_dust", "lcp", "pancreas"];
