//! Acceptance criteria. Each one prints a PASS/FAIL line straight to stdout so
//! the lines show up without `--nocapture`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use mbansec::adversary::{mitm_once, run_attack, AdversaryModel, AttackKind};
use mbansec::assessment::{
    completeness_gaps, fulfillment_matrix, implemented_recommendations, trace_recommendations, Registry, Status,
};
use mbansec::assoc::{honest_configs, run_handshake, SessionConfig};
use mbansec::channel::seal_frame;
use mbansec::crypto::vectors::run_vectors;
use mbansec::crypto::{generate_keypair, CipherFunction, KeyRole, KeySize, SymmetricKey};
use mbansec::frame::{decode_frame, encode_frame, Address, Frame, FrameType, SecurityLevel, SequencePair};
use mbansec::fsm::{accept_inbound, edges, handle_event, ConnectionStatus, FsmEvent, SecurityState};
use mbansec::hub::{AdmissionRequest, Hub, HubPolicy, MAX_BAN_SIZE_STANDARD};
use mbansec::keys::{KeyError, KeyOrigin, KeyOwner, KeyRecord, KeyStore};
use mbansec::netsim::{load_scenario, EnergyCosts, Micro, Simulator, LCP, NEURAL_DUST, PANCREAS};
use mbansec::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

const NODE: Address = Address(0x0001);
const HUB: Address = Address(0xFF01);

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn sss(protocol: AssocProtocol) -> SecuritySuiteSelector {
    SecuritySuiteSelector::new(SecurityLevel::Level2AuthEnc, protocol, CipherFunction::Aes128Ccm)
}

// 1
fn crypto_known_answers() -> Check {
    let t = Instant::now();
    let results = run_vectors();
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    ensure(failed.is_empty(), || format!("failed vectors {failed:?}"))?;
    for family in ["cmac", "ccm", "p256"] {
        ensure(results.iter().any(|r| r.name.starts_with(family)), || format!("no {family} vectors"))?;
    }
    within(t, Duration::from_secs(1))
}

// 2
fn handshake_agreement() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for p in AssocProtocol::ALL {
        let expect_mutual = p != AssocProtocol::Unauthenticated;
        for run_no in 0..1000 {
            let pw = format!("{:06}", rng.gen_range(0..1_000_000));
            let (i, r) = honest_configs(&mut rng, p, NODE, HUB, sss(p), pw.as_bytes());
            let run = run_handshake(&mut rng, p, i, r).map_err(|e| format!("{p} run {run_no}: {e}"))?;
            ensure(run.both_activated() && run.keys_agree(), || format!("{p} run {run_no}: {:?}", run.trace))?;
            ensure(run.messages.len() == 3, || format!("{p} run {run_no}: {} messages", run.messages.len()))?;
            for side in [&run.initiator, &run.responder] {
                let flag = side.result().map(|r| r.mutually_authenticated);
                ensure(flag == Some(expect_mutual), || format!("{p} run {run_no}: mutual-auth {flag:?}"))?;
            }
        }
    }
    within(t, Duration::from_secs(30))
}

fn replay_report(text: &str, profile: Profile) -> Result<(u64, u64), String> {
    let cfg = load_scenario(text, profile).map_err(|e| e.to_string())?;
    let r = run_attack(&cfg, AttackKind::Replay, &AdversaryModel::for_scenario(&cfg), 3).map_err(|e| e.to_string())?;
    Ok((r.attempts, r.successes))
}

// 3
fn replay() -> Check {
    let t = Instant::now();
    let level1 = LCP.replace("level = 2", "level = 1");
    for (name, text, profile, accepted) in [
        ("lcp level 2", LCP, Profile::Baseline, 0),
        ("lcp level 1", level1.as_str(), Profile::Baseline, 0),
        ("pancreas hardened", PANCREAS, Profile::Hardened, 0),
        ("pancreas legacy_pump", PANCREAS, Profile::Baseline, 1000),
    ] {
        let (attempts, successes) = replay_report(text, profile)?;
        ensure(attempts == 1000 && successes == accepted, || {
            format!("{name}: {successes}/{attempts} accepted, want {accepted}/1000")
        })?;
    }
    within(t, Duration::from_secs(10))
}

/// Adversary sessions that impersonate each honest end with guessed secrets.
fn forged_legs(rng: &mut ChaCha20Rng, p: AssocProtocol, hub_public: Option<mbansec::crypto::PublicPoint>) -> (SessionConfig, SessionConfig) {
    let mut as_hub = SessionConfig::new(HUB, NODE, sss(p));
    let mut as_node = SessionConfig::new(NODE, HUB, sss(p));
    match p {
        AssocProtocol::PreSharedMk => {
            let guess = SymmetricKey::random(rng, KeySize::K128, KeyRole::Mk).unwrap();
            as_hub = as_hub.with_mk(guess.clone());
            as_node = as_node.with_mk(guess);
        }
        AssocProtocol::PublicKeyHidden => {
            let own = generate_keypair(rng).unwrap();
            as_hub = as_hub.with_static(own.clone());
            as_node = as_node.with_static(own).with_peer_public(hub_public.expect("III has a hub key"));
        }
        AssocProtocol::PasswordAuthenticated => {
            let guess = format!("{:08}", rng.gen_range(0..100_000_000u32));
            as_hub = as_hub.with_password(guess.as_bytes());
            as_node = as_node.with_password(guess.as_bytes());
        }
        AssocProtocol::Unauthenticated | AssocProtocol::DisplayAuthenticated => {}
    }
    (as_hub, as_node)
}

// 4
fn mitm() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for (p, want) in [
        (AssocProtocol::Unauthenticated, 1000),
        (AssocProtocol::PreSharedMk, 0),
        (AssocProtocol::PublicKeyHidden, 0),
        (AssocProtocol::PasswordAuthenticated, 0),
    ] {
        let mut wins = 0;
        for _ in 0..1000 {
            let (n, h) = honest_configs(&mut rng, p, NODE, HUB, sss(p), b"27182818");
            let hub_public = h.static_keypair.as_ref().map(|k| *k.public());
            let (as_hub, as_node) = forged_legs(&mut rng, p, hub_public);
            if mitm_once(&mut rng, p, n, h, as_hub, as_node) {
                wins += 1;
            }
        }
        ensure(wins == want, || format!("protocol {p}: {wins}/1000 relays succeeded, want {want}"))?;
    }
    within(t, Duration::from_secs(30))
}

// 5
fn ban_size() -> Check {
    let t = Instant::now();
    let mut hub = Hub::new(HUB, HubPolicy::baseline());
    let p = AssocProtocol::PreSharedMk;
    for n in 1..=MAX_BAN_SIZE_STANDARD as u16 {
        let s = hub.admit_node(&AdmissionRequest { node: Address(n), sss: sss(p), identity: None });
        ensure(s == ConnectionStatus::Accepted, || format!("admission {n} gave {s}"))?;
    }
    let s = hub.admit_node(&AdmissionRequest { node: Address(65), sss: sss(p), identity: None });
    ensure(s == ConnectionStatus::RejectedBanFull, || format!("65th admission gave {s}"))?;

    let base = Simulator::from_text(NEURAL_DUST, Profile::Baseline, 5).map_err(|e| e.to_string())?;
    ensure(base.hub().admitted_count() == 64, || format!("baseline admitted {}", base.hub().admitted_count()))?;

    let mut sim = Simulator::from_text(NEURAL_DUST, Profile::Hardened, 5).map_err(|e| e.to_string())?;
    let ticks = sim.config().ticks;
    let dust: BTreeSet<Address> =
        sim.config().nodes.iter().filter(|n| n.name.starts_with("dust")).map(|n| n.address).collect();
    ensure(dust.len() == 1000, || format!("{} dust nodes", dust.len()))?;
    ensure(dust.iter().all(|a| sim.hub().is_admitted(*a)), || "a dust node was not admitted".into())?;
    sim.run(ticks);
    let heard: BTreeSet<Address> = sim.deliveries().iter().filter(|d| d.dst == HUB).map(|d| d.origin).collect();
    ensure(dust.is_subset(&heard), || format!("{} dust nodes never reached the hub", dust.difference(&heard).count()))?;
    within(t, Duration::from_secs(60))
}

/// Attribute cells a use case touches: its specs' mappings plus its nodes' classes.
fn cells(reg: &Registry, uc: &str) -> BTreeSet<String> {
    let mut out: BTreeSet<String> =
        reg.specs.iter().filter(|s| s.use_case == uc).flat_map(|s| s.attributes.iter().cloned()).collect();
    let u = reg.use_case(uc).expect("bundled use case");
    out.extend(u.nodes.iter().map(|(_, class)| class.clone()));
    out
}

// 6
fn coverage() -> Check {
    let reg = Registry::embedded();
    let all: BTreeSet<String> = (1..=11)
        .map(|i| format!("S{i}"))
        .chain(["E", "M", "C", "T"].iter().flat_map(|p| (1..=3).map(move |i| format!("{p}{i}"))))
        .chain(["Invasive", "SemiInvasive", "Wearable", "Ambient"].iter().map(|s| s.to_string()))
        .collect();
    ensure(all.len() == 27, || "oracle universe".into())?;
    let registry_ids: BTreeSet<String> = reg.attribute_ids().into_iter().collect();
    ensure(registry_ids == all, || format!("registry attributes {registry_ids:?}"))?;
    let gaps = completeness_gaps(&reg, &["UC1", "UC2", "UC3"]).map_err(|e| e.to_string())?;
    ensure(gaps.is_empty(), || format!("uncovered with all use cases: {gaps:?}"))?;

    let kept: BTreeSet<String> = cells(&reg, "UC1").union(&cells(&reg, "UC2")).cloned().collect();
    let uc3_only: BTreeSet<String> = cells(&reg, "UC3").difference(&kept).cloned().collect();
    let uc3_only_s: BTreeSet<String> = uc3_only.iter().filter(|c| c.starts_with('S')).cloned().collect();
    let mut want: BTreeSet<String> = ["E3", "M3", "C3", "T3"].iter().map(|s| s.to_string()).collect();
    want.extend(uc3_only);
    let got: BTreeSet<String> =
        completeness_gaps(&reg, &["UC1", "UC2"]).map_err(|e| e.to_string())?.into_iter().collect();
    ensure(got == want, || format!("without UC3 uncovered {got:?}, want {want:?}"))?;
    ensure(uc3_only_s.is_empty() || uc3_only_s.is_subset(&got), || "UC3-only security cells".into())
}

const BASELINE_VERDICTS: [(&str, Status); 26] = [
    ("U1.1", Status::Partial),
    ("U1.2", Status::Satisfied),
    ("U1.3", Status::NotSatisfied),
    ("U1.4", Status::Satisfied),
    ("U1.5", Status::Partial),
    ("U1.6", Status::Satisfied),
    ("U1.7", Status::NotSatisfied),
    ("U1.8", Status::Satisfied),
    ("U1.9", Status::NotSatisfied),
    ("U2.1", Status::Satisfied),
    ("U2.2", Status::Satisfied),
    ("U2.3", Status::NotSatisfied),
    ("U2.4", Status::Partial),
    ("U2.5", Status::NotSatisfied),
    ("U2.6", Status::Satisfied),
    ("U2.7", Status::Partial),
    ("U2.8", Status::NotSatisfied),
    ("U2.9", Status::Satisfied),
    ("U3.1", Status::Satisfied),
    ("U3.2", Status::NotSatisfied),
    ("U3.3", Status::Satisfied),
    ("U3.4", Status::NotSatisfied),
    ("U3.5", Status::NotSatisfied),
    ("U3.6", Status::Satisfied),
    ("U3.7", Status::Partial),
    ("U3.8", Status::Partial),
];

const MOTIVATIONS: [(&str, &[&str]); 14] = [
    ("PO1", &["U1.1"]),
    ("PO2", &["U1.7", "U2.4", "U3.7"]),
    ("PO3", &["U1.3"]),
    ("PO4", &["U3.2"]),
    ("PO5", &["U1.7", "U2.8", "U3.5"]),
    ("CC1", &["U1.4", "U2.6", "U3.3"]),
    ("CC2", &["U1.9"]),
    ("CC3", &["U1.1"]),
    ("AA1", &["U1.5", "U2.7"]),
    ("AA2", &["U1.5", "U2.7"]),
    ("AA3", &["U1.9", "U2.5", "U3.4"]),
    ("O1", &["U1.6", "U2.3", "U3.8"]),
    ("O2", &["U1.7", "U2.8", "U3.5"]),
    ("O3", &["U2.8"]),
];

// 7
fn fulfillment() -> Check {
    let reg = Registry::embedded();
    let base = fulfillment_matrix(&reg, Profile::Baseline);
    ensure(base.verdicts.len() == 26, || format!("{} baseline verdicts", base.verdicts.len()))?;
    for (spec, want) in BASELINE_VERDICTS {
        let v = base.verdicts.iter().find(|v| v.spec == spec).ok_or_else(|| format!("{spec} missing"))?;
        ensure(v.status == want, || format!("{spec}: {} want {want}", v.status))?;
        let quote = &reg.spec(spec).ok_or_else(|| format!("{spec} not in registry"))?.quote;
        ensure(!quote.is_empty() && v.rationale == *quote, || format!("{spec}: rationale {:?}", v.rationale))?;
    }
    let hard = fulfillment_matrix(&reg, Profile::Hardened);
    let implemented = implemented_recommendations();
    for b in &base.verdicts {
        let h = hard.status(&b.spec).ok_or_else(|| format!("{} missing from hardened", b.spec))?;
        ensure(h >= b.status, || format!("{}: hardened {h} below baseline {}", b.spec, b.status))?;
    }
    let mut upgraded = 0;
    for (rec, specs) in MOTIVATIONS {
        if !implemented.get(rec).copied().unwrap_or(false) {
            continue;
        }
        for spec in specs {
            let (b, h) = (base.status(spec).unwrap(), hard.status(spec).unwrap());
            if b < Status::Satisfied {
                ensure(h > b, || format!("{spec} motivates implemented {rec} but stays {h}"))?;
                upgraded += 1;
            }
        }
    }
    ensure(upgraded > 0, || "nothing upgraded".into())
}

// 8
fn traceability() -> Check {
    let reg = Registry::embedded();
    ensure(reg.recommendations.len() == 14, || format!("{} recommendations", reg.recommendations.len()))?;
    let ids: BTreeSet<&str> = reg.recommendations.iter().map(|r| r.id.as_str()).collect();
    let want: BTreeSet<&str> = MOTIVATIONS.iter().map(|(r, _)| *r).collect();
    ensure(ids == want, || format!("recommendation ids {ids:?}"))?;
    let base = fulfillment_matrix(&reg, Profile::Baseline);
    let map = trace_recommendations(&reg, &base.verdicts).map_err(|e| e.to_string())?;
    for (rec, specs) in MOTIVATIONS {
        let got: BTreeSet<&str> = map.get(rec).map(|s| s.iter().map(String::as_str).collect()).unwrap_or_default();
        let want: BTreeSet<&str> = specs.iter().copied().collect();
        ensure(got == want, || format!("{rec} traces to {got:?}, want {want:?}"))?;
    }
    for v in base.verdicts.iter().filter(|v| v.status != Status::Satisfied) {
        ensure(MOTIVATIONS.iter().any(|(_, s)| s.contains(&v.spec.as_str())), || format!("{} is untraced", v.spec))?;
    }
    Ok(())
}

/// Ticks from the start of the flood until the victim's battery is empty,
/// from the per-tick energy ledger: idle drain every tick, one beacon
/// reception a tick after every hub beacon, one sealed report per traffic
/// period, plus the flood's share.
fn predicted_ticks_to_empty(
    costs: &EnergyCosts,
    capacity: Micro,
    start: u64,
    beacon_interval: u64,
    period: u64,
    payload: usize,
    flood_per_tick: Micro,
) -> u64 {
    let blocks = payload.div_ceil(16) as Micro;
    let report = costs.tx_base + costs.tx_per_octet * payload as Micro + costs.ccm_block * blocks;
    let mut spent: Micro = 0;
    let mut t = start;
    loop {
        spent += costs.idle + flood_per_tick;
        if t % beacon_interval == 1 {
            spent += costs.rx;
        }
        if t % period == 0 {
            spent += report;
        }
        if spent >= capacity {
            return t - start;
        }
        t += 1;
    }
}

// 9
fn dos() -> Check {
    let t = Instant::now();
    let mut lifetimes = BTreeMap::new();
    for profile in Profile::BOTH {
        let cfg = load_scenario(LCP, profile).map_err(|e| e.to_string())?;
        let victim = cfg.attack.victim.ok_or("lcp names no victim")?;
        let node = cfg.node(victim).ok_or("victim missing")?;
        let capacity = node.energy.capacity().ok_or("victim has no battery")?;
        let flood: Micro = 100;
        let per_frame = cfg.energy.rx + cfg.energy.wake;
        let flood_cost = match cfg.policy().rate_limit {
            None => flood * per_frame,
            Some(limit) => {
                let limit = (limit as Micro).min(flood);
                limit * per_frame + (flood - limit) * cfg.energy.hibernate
            }
        };
        let predicted = predicted_ticks_to_empty(
            &cfg.energy,
            capacity,
            10,
            cfg.hub.beacon_interval,
            cfg.traffic.period,
            cfg.traffic.payload,
            flood_cost,
        );
        let report = run_attack(&cfg, AttackKind::DosWakeupFlood, &AdversaryModel::for_scenario(&cfg), 9)
            .map_err(|e| e.to_string())?;
        let measured = report.metric("ticks_to_empty").ok_or("no ticks_to_empty")? as u64;
        ensure(report.successes == 1, || format!("{profile}: victim never emptied"))?;
        if profile == Profile::Baseline {
            ensure(measured == predicted, || format!("baseline ticks_to_empty {measured}, ledger predicts {predicted}"))?;
        }
        lifetimes.insert(profile, (measured, predicted));
    }
    let (b, _) = lifetimes[&Profile::Baseline];
    let (h, hp) = lifetimes[&Profile::Hardened];
    ensure(h >= 5 * b, || format!("hardened lasted {h} ticks, baseline {b}"))?;
    ensure(h == hp, || format!("hardened ticks_to_empty {h}, ledger predicts {hp}"))?;
    within(t, Duration::from_secs(30))
}

/// First-visit order of states along a path, starting at Orphan.
type Visits = Vec<SecurityState>;

fn store_with_ptk(key: &SymmetricKey) -> KeyStore {
    let mut s = KeyStore::new();
    s.install_key(KeyRecord::new(key.clone(), KeyOwner::pair(NODE, HUB), KeyOrigin::Session).with_epoch(1), false)
        .expect("fresh store");
    s
}

// 10
fn fsm_model_check() -> Check {
    let t = Instant::now();
    use SecurityState::*;
    for profile in Profile::BOTH {
        // Exhaustive search over (state, first-visit order) from Orphan.
        let mut seen: HashSet<(SecurityState, Visits)> = HashSet::new();
        let mut queue = VecDeque::from([(Orphan, vec![Orphan])]);
        while let Some((s, visits)) = queue.pop_front() {
            if !seen.insert((s, visits.clone())) {
                continue;
            }
            for e in FsmEvent::ALL {
                let (to, _) = handle_event(profile, s, e);
                if to == Connected && s != Connected {
                    ensure(s == Secured, || format!("{profile}: {s} -{e}-> Connected"))?;
                }
                let mut v = visits.clone();
                if !v.contains(&to) {
                    v.push(to);
                }
                if to == Connected {
                    ensure(v[..] == [Orphan, Associated, Secured, Connected], || {
                        format!("{profile}: Connected reached via {v:?}")
                    })?;
                }
                queue.push_back((to, v));
            }
        }
        ensure(seen.iter().any(|(s, _)| *s == Connected), || format!("{profile}: Connected unreachable"))?;
        for e in edges(profile) {
            ensure(handle_event(profile, e.from, e.event).0 == e.to, || format!("{profile}: edge table disagrees"))?;
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let key = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Ptk).unwrap();
    for state in SecurityState::ALL {
        for level in [SecurityLevel::Level1AuthOnly, SecurityLevel::Level2AuthEnc] {
            for ft in FrameType::ALL {
                let mut tx = store_with_ptk(&key);
                let mut rx = store_with_ptk(&key);
                let f = seal_frame(&mut tx, NODE, HUB, ft, level, b"reading").map_err(|e| e.to_string())?;
                let suite = SecuritySuiteSelector::new(level, AssocProtocol::PreSharedMk, CipherFunction::Aes128Ccm);
                let delivered = accept_inbound(state, &suite, &mut rx, HUB, &f).is_delivered();
                ensure(delivered == state.has_ptk(), || format!("{level} {ft:?} frame delivered={delivered} in {state}"))?;
            }
        }
    }
    within(t, Duration::from_secs(1))
}

fn random_frame(rng: &mut ChaCha20Rng) -> Frame {
    let level = SecurityLevel::from_u8(rng.gen_range(0..3)).unwrap();
    let mic_len = match level {
        SecurityLevel::Level0Unsecured => 0,
        _ => [8, 16][rng.gen_range(0..2)],
    };
    let len = rng.gen_range(0..=255usize);
    Frame {
        sender: Address(rng.gen()),
        recipient: Address(rng.gen()),
        frame_type: FrameType::ALL[rng.gen_range(0..FrameType::ALL.len())],
        level,
        seq: SequencePair::new(0, rng.gen()),
        key_id: rng.gen(),
        payload: (0..len).map(|_| rng.gen()).collect(),
        mic: (0..mic_len).map(|_| rng.gen()).collect(),
    }
}

// 11
fn round_trips_and_determinism() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for i in 0..10_000 {
        let f = random_frame(&mut rng);
        let bytes = encode_frame(&f).map_err(|e| format!("frame {i}: {e}"))?;
        ensure(bytes.len() == 10 + f.payload.len() + f.mic.len(), || format!("frame {i}: length {}", bytes.len()))?;
        let back = decode_frame(&bytes).map_err(|e| format!("frame {i}: {e}"))?;
        ensure(back == f, || format!("frame {i} changed in transit"))?;
    }

    let store_key = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Kck).unwrap();
    let mut store = KeyStore::new();
    for n in 1..=5u16 {
        let mk = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Mk).unwrap();
        store
            .install_key(KeyRecord::new(mk, KeyOwner::pair(Address(n), HUB), KeyOrigin::PreShared), false)
            .map_err(|e| e.to_string())?;
        store.rotate_ptk(Address(n), HUB, &[n as u8; 16], &[7; 16]).map_err(|e| e.to_string())?;
    }
    let blob = store.persist(&store_key).map_err(|e| e.to_string())?;
    let reopened = KeyStore::open(&blob, &store_key).map_err(|e| e.to_string())?;
    ensure(reopened.records() == store.records(), || "keystore changed across persist/open".into())?;
    for i in 0..blob.len() {
        let mut bad = blob.clone();
        bad[i] ^= 0x80;
        ensure(KeyStore::open(&bad, &store_key).is_err(), || format!("tamper at octet {i} accepted"))?;
    }
    let other = SymmetricKey::random(&mut rng, KeySize::K128, KeyRole::Kck).unwrap();
    ensure(matches!(KeyStore::open(&blob, &other), Err(KeyError::Crypto(_))), || "wrong store key accepted".into())?;

    for (text, profile) in [(LCP, Profile::Hardened), (PANCREAS, Profile::Baseline), (NEURAL_DUST, Profile::Hardened)] {
        let trace = |seed| {
            let mut sim = Simulator::from_text(text, profile, seed).unwrap();
            let ticks = sim.config().ticks;
            sim.run(ticks);
            sim.trace_csv()
        };
        let (a, b) = (trace(42), trace(42));
        ensure(a.as_bytes() == b.as_bytes(), || format!("{profile} traces differ for the same seed"))?;
    }
    within(t, Duration::from_secs(30))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("crypto known-answer vectors", crypto_known_answers),
        ("handshake agreement I-V", handshake_agreement),
        ("replay rejection", replay),
        ("MITM on association", mitm),
        ("BAN size", ban_size),
        ("use-case coverage", coverage),
        ("fulfillment matrices", fulfillment),
        ("recommendation traceability", traceability),
        ("wake-up flood DoS", dos),
        ("FSM model check", fsm_model_check),
        ("round-trips and determinism", round_trips_and_determinism),
    ];
    let mut failures = Vec::new();
    let mut out = std::io::stdout();
    out.write_all(b"\n").unwrap();
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let line = match check() {
            Ok(()) => format!("PASS {:>2} {name} ({:.2?})\n", n + 1, t.elapsed()),
            Err(why) => {
                failures.push(format!("{} {name}: {why}", n + 1));
                format!("FAIL {:>2} {name}: {why}\n", n + 1)
            }
        };
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
