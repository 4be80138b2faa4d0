//! Attack library run against a live simulation.
//!
//! The adversary sees frames only as octets taken from the air log, plus
//! whatever secrets its model declares in `knows`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::assoc::{create_session, HandshakeMsg, Phase, ProtocolSession, Role, SessionConfig};
use crate::crypto::{generate_keypair, KeyRole, KeySize, SymmetricKey};
use crate::frame::{decode_frame, encode_frame, Address, Frame, FrameType, SecurityLevel, SequencePair};
use crate::netsim::{ConfigError, Micro, ScenarioConfig, Simulator, MICRO};
use crate::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

/// Address the adversary's own radio uses.
pub const ADVERSARY_ADDR: Address = Address(0x0DDD);
/// First address handed out to forged devices.
pub const FORGED_BASE: u16 = 0x0E00;

pub const REPLAY_COUNT: usize = 1000;
pub const REPLAYS_PER_TICK: usize = 10;
pub const FLOOD_PER_TICK: usize = 100;
pub const MITM_RUNS: usize = 1000;
pub const IMPERSONATION_ATTEMPTS: usize = 10;
/// Tick at which active attacks begin.
pub const ATTACK_START: u64 = 10;
/// DoS runs for at least this many ticks.
pub const DOS_HORIZON: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Eavesdrop,
    Replay,
    Impersonate,
    MitmHandshake,
    DosWakeupFlood,
    DosInvalidFrameFlood,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Eavesdrop,
        AttackKind::Replay,
        AttackKind::Impersonate,
        AttackKind::MitmHandshake,
        AttackKind::DosWakeupFlood,
        AttackKind::DosInvalidFrameFlood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Eavesdrop => "eavesdrop",
            AttackKind::Replay => "replay",
            AttackKind::Impersonate => "impersonate",
            AttackKind::MitmHandshake => "mitm",
            AttackKind::DosWakeupFlood => "dos-wakeup",
            AttackKind::DosInvalidFrameFlood => "dos-invalid",
        }
    }

    pub fn is_active(self) -> bool {
        self != AttackKind::Eavesdrop
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let k = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match k.as_str() {
            "eavesdrop" => AttackKind::Eavesdrop,
            "replay" => AttackKind::Replay,
            "impersonate" | "impersonation" => AttackKind::Impersonate,
            "mitm" | "mitm-handshake" => AttackKind::MitmHandshake,
            "dos-wakeup" | "dos-wakeup-flood" | "wakeup" => AttackKind::DosWakeupFlood,
            "dos-invalid" | "dos-invalid-frame-flood" | "flood" => AttackKind::DosInvalidFrameFlood,
            _ => return Err(format!("unknown attack kind {s:?}")),
        })
    }
}

/// Secrets an adversary may hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Secret {
    PairMk,
    Password,
    HubStaticKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryModel {
    /// Links observed, as unordered address pairs.
    pub position: Vec<(Address, Address)>,
    pub can_inject: bool,
    pub touching: bool,
    pub knows: BTreeSet<Secret>,
}

impl AdversaryModel {
    /// An active outsider positioned on the links named by the scenario.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        let hub = cfg.hub.node.address;
        let mut position = Vec::new();
        if let Some(l) = cfg.attack.eavesdrop_link {
            position.push(l);
        }
        if let Some(s) = cfg.attack.replay_source {
            position.push((s, hub));
        }
        Self { position, can_inject: true, touching: false, knows: BTreeSet::new() }
    }

    pub fn passive(mut self) -> Self {
        self.can_inject = false;
        self
    }

    pub fn touching(mut self, t: bool) -> Self {
        self.touching = t;
        self
    }

    pub fn knowing(mut self, s: Secret) -> Self {
        self.knows.insert(s);
        self
    }

    pub fn observes(&self, a: Address, b: Address) -> bool {
        self.position.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub profile: Profile,
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub side_metrics: Vec<(String, f64)>,
}

impl AttackReport {
    fn new(kind: AttackKind, profile: Profile, attempts: u64, successes: u64) -> Self {
        let success_rate = if attempts == 0 { 0.0 } else { successes as f64 / attempts as f64 };
        Self { kind, profile, attempts, successes, success_rate, side_metrics: Vec::new() }
    }

    fn with(mut self, name: &str, v: f64) -> Self {
        self.side_metrics.push((name.to_string(), v));
        self
    }

    fn with_protocol(self, p: AssocProtocol) -> Self {
        self.with("protocol", p.as_u8() as f64)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.side_metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn units(m: Micro) -> f64 {
    m as f64 / MICRO as f64
}

/// Run one attack against a fresh simulation of `cfg`.
pub fn run_attack(
    cfg: &ScenarioConfig,
    kind: AttackKind,
    adversary: &AdversaryModel,
    seed: u64,
) -> Result<AttackReport, ConfigError> {
    if kind.is_active() && !adversary.can_inject {
        return Err(ConfigError::Invalid(format!("{kind} needs an adversary that can inject")));
    }
    let mut sim = Simulator::new(cfg.clone(), seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xAD5E_55A1);
    match kind {
        AttackKind::Eavesdrop => Ok(eavesdrop(&mut sim, adversary)),
        AttackKind::Replay => replay(&mut sim, adversary),
        AttackKind::Impersonate => Ok(impersonate(&mut sim, &mut rng)),
        AttackKind::MitmHandshake => mitm(&sim, adversary, &mut rng),
        AttackKind::DosWakeupFlood => dos_wakeup(&mut sim, &mut rng),
        AttackKind::DosInvalidFrameFlood => dos_invalid(&mut sim, &mut rng),
    }
}

fn victim(sim: &Simulator) -> Result<Address, ConfigError> {
    let cfg = sim.config();
    cfg.attack
        .victim
        .or_else(|| cfg.nodes.iter().find(|n| n.compute.runs_crypto()).map(|n| n.address))
        .ok_or_else(|| ConfigError::Invalid("scenario names no victim".into()))
}

fn eavesdrop(sim: &mut Simulator, adv: &AdversaryModel) -> AttackReport {
    let ticks = sim.config().ticks;
    sim.run(ticks);
    let (mut attempts, mut successes, mut octets) = (0u64, 0u64, 0u64);
    for f in sim.air_log() {
        if !adv.observes(f.transmitter, f.receiver) {
            continue;
        }
        attempts += 1;
        if f.touch_secure && !adv.touching {
            continue;
        }
        let Ok(frame) = decode_frame(&f.bytes) else { continue };
        if frame.level == SecurityLevel::Level2AuthEnc {
            continue;
        }
        if sim.plaintext_of(&f.bytes) == Some(&frame.payload[..]) {
            successes += 1;
            octets += frame.payload.len() as u64;
        }
    }
    AttackReport::new(AttackKind::Eavesdrop, sim.profile(), attempts, successes).with("octets_recovered", octets as f64)
}

fn replay(sim: &mut Simulator, adv: &AdversaryModel) -> Result<AttackReport, ConfigError> {
    let cfg = sim.config();
    let source = cfg.attack.replay_source.ok_or_else(|| ConfigError::Invalid("scenario names no replay source".into()))?;
    let hub = sim.active_hub();
    if !adv.observes(source, hub) {
        return Err(ConfigError::Invalid(format!("adversary does not observe {source}>{hub}")));
    }
    let limit = ATTACK_START + 4 * cfg.traffic.period;
    let captured = loop {
        let found = sim.air_log().iter().find(|f| {
            f.transmitter == source
                && f.receiver == hub
                && decode_frame(&f.bytes).is_ok_and(|fr| fr.frame_type == FrameType::Data)
        });
        // Wait until the original has landed.
        if let Some(f) = found.filter(|f| f.tick < sim.now().saturating_sub(1)) {
            break f.bytes.clone();
        }
        if sim.now() >= limit {
            return Err(ConfigError::Invalid(format!("{source} sent nothing to {hub}")));
        }
        sim.step();
    };
    let mut ids = Vec::with_capacity(REPLAY_COUNT);
    while ids.len() < REPLAY_COUNT {
        for _ in 0..REPLAYS_PER_TICK.min(REPLAY_COUNT - ids.len()) {
            ids.push(sim.inject_raw(source, hub, captured.clone()));
        }
        sim.step();
    }
    let ok = ids.iter().filter(|id| sim.injection_delivered(**id) == Some(true)).count() as u64;
    Ok(AttackReport::new(AttackKind::Replay, sim.profile(), ids.len() as u64, ok)
        .with("replays_accepted", ok as f64))
}

/// The protocol an outsider would pick against this hub.
fn forgery_protocol(sim: &Simulator) -> AssocProtocol {
    let policy = sim.config().policy();
    let hub_display = sim.config().hub.node.display;
    for p in [AssocProtocol::Unauthenticated, AssocProtocol::DisplayAuthenticated] {
        if policy.allowed_protocols.contains(&p) && (p != AssocProtocol::DisplayAuthenticated || hub_display) {
            return p;
        }
    }
    AssocProtocol::PreSharedMk
}

fn impersonate(sim: &mut Simulator, rng: &mut ChaCha20Rng) -> AttackReport {
    sim.run(ATTACK_START);
    let protocol = forgery_protocol(sim);
    let base = sim.config().suite_for(&sim.config().hub.node);
    let sss = SecuritySuiteSelector::new(base.level, protocol, base.cipher);
    let hub = sim.active_hub();
    let mut ok = 0;
    for i in 0..IMPERSONATION_ATTEMPTS {
        let addr = Address(FORGED_BASE + i as u16);
        let mut cfg = SessionConfig::new(addr, hub, sss).with_display(true);
        if protocol == AssocProtocol::PreSharedMk {
            // A guessed key.
            cfg = cfg.with_mk(SymmetricKey::random(rng, KeySize::K128, KeyRole::Mk).expect("rng"));
        }
        let Ok(mut device) = create_session(rng, Role::Initiator, protocol, cfg) else { continue };
        if sim.external_association(&mut device, true).is_accepted() {
            ok += 1;
        }
    }
    AttackReport::new(AttackKind::Impersonate, sim.profile(), IMPERSONATION_ATTEMPTS as u64, ok)
        .with("forged_admissions", ok as f64)
        .with_protocol(protocol)
}

/// Send request and response; returns what the initiator wants to send next.
fn open_leg(i: &mut ProtocolSession, r: &mut ProtocolSession) -> Option<Vec<Vec<u8>>> {
    let mut resp = Vec::new();
    for m in i.advance_bytes(None).ok()? {
        resp.extend(r.advance_bytes(Some(&m)).ok()?);
    }
    let mut out = Vec::new();
    for m in resp {
        out.extend(i.advance_bytes(Some(&m)).ok()?);
    }
    Some(out)
}

fn close_leg(i: &mut ProtocolSession, r: &mut ProtocolSession, out: Vec<Vec<u8>>, confirm: Option<bool>) -> bool {
    let out = match confirm {
        Some(m) => {
            if r.confirm_checkvalue(m).is_err() {
                return false;
            }
            match i.confirm_checkvalue(m) {
                Ok(msgs) => msgs.iter().map(HandshakeMsg::encode).collect(),
                Err(_) => return false,
            }
        }
        None => out,
    };
    for m in out {
        if r.advance_bytes(Some(&m)).is_err() {
            return false;
        }
    }
    i.phase() == Phase::Activated && r.phase() == Phase::Activated
}

fn same_mk(a: &ProtocolSession, b: &ProtocolSession) -> bool {
    match (a.result(), b.result()) {
        (Some(x), Some(y)) => x.mk == y.mk,
        _ => false,
    }
}

/// One dual-session relay between `n` (initiator) and `h` (responder).
/// Success means both honest ends activated and the adversary holds both MKs.
pub fn mitm_once<R: rand::RngCore + rand::CryptoRng>(
    rng: &mut R,
    protocol: AssocProtocol,
    n_cfg: SessionConfig,
    h_cfg: SessionConfig,
    fake_h: SessionConfig,
    fake_n: SessionConfig,
) -> bool {
    let sessions = (
        create_session(rng, Role::Initiator, protocol, n_cfg),
        create_session(rng, Role::Responder, protocol, fake_h),
        create_session(rng, Role::Initiator, protocol, fake_n),
        create_session(rng, Role::Responder, protocol, h_cfg),
    );
    let (Ok(mut n), Ok(mut ar), Ok(mut ai), Ok(mut h)) = sessions else { return false };
    let Some(out1) = open_leg(&mut n, &mut ar) else { return false };
    let Some(out2) = open_leg(&mut ai, &mut h) else { return false };
    let confirm = (protocol == AssocProtocol::DisplayAuthenticated).then(|| {
        // Each user compares the two honest displays.
        n.display_checkvalue().ok() == h.display_checkvalue().ok()
    });
    let leg1 = close_leg(&mut n, &mut ar, out1, confirm);
    let leg2 = close_leg(&mut ai, &mut h, out2, confirm);
    leg1 && leg2 && same_mk(&n, &ar) && same_mk(&ai, &h)
}

fn mitm(sim: &Simulator, adv: &AdversaryModel, rng: &mut ChaCha20Rng) -> Result<AttackReport, ConfigError> {
    let n = victim(sim)?;
    let h = sim.active_hub();
    let protocol = sim.config().protocol();
    let (n_cfg, h_cfg) =
        sim.session_configs(n, h).ok_or_else(|| ConfigError::Invalid(format!("{n} does not associate with {h}")))?;
    let sss = n_cfg.sss;
    let (mk, password) = sim.provisioned(n, h).expect("provisioned pair");
    let mut ok = 0u64;
    for _ in 0..MITM_RUNS {
        let mut fake_h = SessionConfig::new(h, n, sss).with_display(true);
        let mut fake_n = SessionConfig::new(n, h, sss).with_display(true);
        match protocol {
            AssocProtocol::PreSharedMk => {
                let k = if adv.knows.contains(&Secret::PairMk) {
                    mk.clone()
                } else {
                    SymmetricKey::random(rng, KeySize::K128, KeyRole::Mk).expect("rng")
                };
                fake_h = fake_h.with_mk(k.clone());
                fake_n = fake_n.with_mk(k);
            }
            AssocProtocol::PublicKeyHidden => {
                let own = generate_keypair(rng).expect("rng");
                let hub_key = sim.static_keypair(h).expect("provisioned static key");
                let as_hub = if adv.knows.contains(&Secret::HubStaticKey) { hub_key.clone() } else { own.clone() };
                fake_h = fake_h.with_static(as_hub);
                fake_n = fake_n.with_static(own).with_peer_public(*hub_key.public());
            }
            AssocProtocol::PasswordAuthenticated => {
                let pw = if adv.knows.contains(&Secret::Password) {
                    password.clone()
                } else {
                    format!("{:08}", rng.gen_range(0..100_000_000u32)).into_bytes()
                };
                fake_h = fake_h.with_password(&pw);
                fake_n = fake_n.with_password(&pw);
            }
            AssocProtocol::Unauthenticated | AssocProtocol::DisplayAuthenticated => {}
        }
        if mitm_once(rng, protocol, n_cfg.clone(), h_cfg.clone(), fake_h, fake_n) {
            ok += 1;
        }
    }
    Ok(AttackReport::new(AttackKind::MitmHandshake, sim.profile(), MITM_RUNS as u64, ok).with_protocol(protocol))
}

fn horizon(sim: &Simulator) -> u64 {
    sim.config().ticks.max(DOS_HORIZON)
}

fn dos_wakeup(sim: &mut Simulator, rng: &mut ChaCha20Rng) -> Result<AttackReport, ConfigError> {
    let v = victim(sim)?;
    let capacity = sim
        .config()
        .node(v)
        .and_then(|n| n.energy.capacity())
        .ok_or_else(|| ConfigError::Invalid(format!("victim {v} has no battery")))?;
    sim.inject(crate::netsim::InjectEvent::BatterySet { addr: v, tick: ATTACK_START, units: capacity })
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    sim.run(ATTACK_START);
    let end = horizon(sim);
    let mut seq = 0u16;
    while sim.now() < end && sim.dead_at(v).is_none() {
        for _ in 0..FLOOD_PER_TICK {
            let f = Frame::plain(ADVERSARY_ADDR, v, FrameType::WakeUp, SequencePair::new(0, seq), vec![rng.gen()]);
            seq = seq.wrapping_add(1);
            sim.inject_raw(ADVERSARY_ADDR, v, encode_frame(&f).expect("small frame"));
        }
        sim.step();
    }
    let dead = sim.dead_at(v);
    let lifetime = dead.unwrap_or(end) - ATTACK_START;
    Ok(AttackReport::new(AttackKind::DosWakeupFlood, sim.profile(), 1, dead.is_some() as u64)
        .with("ticks_to_empty", lifetime as f64)
        .with("victim_battery", units(sim.battery(v).unwrap_or(0))))
}

fn dos_invalid(sim: &mut Simulator, rng: &mut ChaCha20Rng) -> Result<AttackReport, ConfigError> {
    sim.run(ATTACK_START);
    let hub = sim.active_hub();
    let level = SecurityLevel::Level2AuthEnc;
    let before = sim.hub_load();
    let end = sim.config().ticks.max(ATTACK_START + 10 * sim.config().traffic.period);
    let mut seq = 0u16;
    while sim.now() < end {
        for _ in 0..FLOOD_PER_TICK {
            let f = Frame {
                sender: ADVERSARY_ADDR,
                recipient: hub,
                frame_type: FrameType::Data,
                level,
                seq: SequencePair::new(0, seq),
                key_id: rng.gen(),
                payload: (0..8).map(|_| rng.gen()).collect(),
                mic: (0..8).map(|_| rng.gen()).collect(),
            };
            seq = seq.wrapping_add(1);
            sim.inject_raw(ADVERSARY_ADDR, hub, encode_frame(&f).expect("small frame"));
        }
        sim.step();
    }
    let after = sim.hub_load();
    let arrived = after.arrived - before.arrived;
    let delivered = after.delivered - before.delivered;
    let loss = if arrived == 0 { 0.0 } else { 1.0 - delivered as f64 / arrived as f64 };
    let hub_dead = sim.dead_at(hub).is_some();
    let success = hub_dead || loss >= 0.5;
    Ok(AttackReport::new(AttackKind::DosInvalidFrameFlood, sim.profile(), 1, success as u64)
        .with("legit_loss", loss)
        .with("hub_battery", units(sim.battery(hub).unwrap_or(0))))
}

/// Run each kind under both profiles of the scenario text.
pub fn compare_profiles(text: &str, kinds: &[AttackKind], seed: u64) -> Result<Vec<AttackReport>, ConfigError> {
    compare_across(text, kinds, &Profile::BOTH, seed)
}

pub fn compare_across(
    text: &str,
    kinds: &[AttackKind],
    profiles: &[Profile],
    seed: u64,
) -> Result<Vec<AttackReport>, ConfigError> {
    let cfgs: Vec<ScenarioConfig> =
        profiles.iter().map(|p| crate::netsim::load_scenario(text, *p)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for kind in kinds {
        for cfg in &cfgs {
            let adv = AdversaryModel::for_scenario(cfg);
            let adv = if kind.is_active() { adv } else { adv.passive() };
            out.push(run_attack(cfg, *kind, &adv, seed)?);
        }
    }
    Ok(out)
}

/// Hardened success never exceeds baseline success for the same kind.
pub fn hardened_dominates(reports: &[AttackReport]) -> bool {
    reports.iter().filter(|r| r.profile == Profile::Hardened).all(|h| {
        reports
            .iter()
            .filter(|b| b.profile == Profile::Baseline && b.kind == h.kind)
            .all(|b| h.success_rate <= b.success_rate)
    })
}

/// CSV `kind,profile,attempts,successes,side_metric`; the side column
/// leads with the success rate.
pub fn reports_csv(reports: &[AttackReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "profile", "attempts", "successes", "side_metric"]).expect("in-memory write");
    for r in reports {
        let side = std::iter::once(format!("success_rate={:?}", r.success_rate))
            .chain(r.side_metrics.iter().map(|(n, v)| format!("{n}={v}")))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.kind.as_str().to_string(),
            r.profile.as_str().to_string(),
            r.attempts.to_string(),
            r.successes.to_string(),
            side,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Aligned text rendering of the same rows.
pub fn reports_table(reports: &[AttackReport]) -> String {
    let mut s = format!("{:<12} {:<9} {:>8} {:>9} {:>6}  {}\n", "kind", "profile", "attempts", "successes", "rate", "side");
    for r in reports {
        let side = r.side_metrics.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" ");
        s += &format!(
            "{:<12} {:<9} {:>8} {:>9} {:>6.3}  {}\n",
            r.kind.as_str(),
            r.profile.as_str(),
            r.attempts,
            r.successes,
            r.success_rate,
            side
        );
    }
    s
}
