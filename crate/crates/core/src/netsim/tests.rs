use super::*;

fn lcp(profile: Profile) -> Simulator {
    Simulator::from_text(LCP, profile, 7).unwrap()
}

fn dust(profile: Profile) -> Simulator {
    Simulator::from_text(NEURAL_DUST, profile, 7).unwrap()
}

const HUB: Address = Address(0xFF01);
const PACER: Address = Address(0x0001);

fn count(sim: &Simulator, metric: &str) -> u64 {
    match sim.observe(metric).unwrap() {
        MetricValue::Count(n) => n,
        other => panic!("{metric} gave {other:?}"),
    }
}

#[test]
fn same_seed_same_trace() {
    let mut a = lcp(Profile::Hardened);
    let mut b = lcp(Profile::Hardened);
    a.run(120);
    b.run(120);
    assert_eq!(a.trace_csv(), b.trace_csv());
    assert!(a.deliveries().len() > 40);
}

#[test]
fn energy_ledger_balances() {
    let mut sim = Simulator::from_text(PANCREAS, Profile::Hardened, 3).unwrap();
    sim.inject(InjectEvent::BatterySet { addr: Address(0x0001), tick: 40, units: 5 * MICRO }).unwrap();
    sim.run(150);
    for n in sim.config().all_nodes() {
        let acc = sim.energy_account(n.address).unwrap();
        let bal = sim.battery(n.address).unwrap();
        assert_eq!(acc.initial + acc.recharged + acc.adjusted - acc.debited, bal, "{}", n.address);
        assert!(bal >= 0);
    }
}

#[test]
fn idle_nodes_drain_at_idle_rate() {
    let text = "[topology]\nkind = T1\nticks = 10\n\
        [hub]\naddress = 0xFF01\nenergy = E2\ncapacity = 100\nbeacon_interval = 0\n\
        [node.a]\naddress = 0x0001\nenergy = E2\ncapacity = 100\ntraffic = false\n";
    let mut sim = Simulator::from_text(text, Profile::Baseline, 1).unwrap();
    let before = sim.battery(PACER).unwrap();
    sim.run(50);
    assert_eq!(before - sim.battery(PACER).unwrap(), 50 * sim.config().energy.idle);
    assert!(sim.trace().is_empty());
}

#[test]
fn nothing_delivered_after_hub_failure() {
    let mut sim = lcp(Profile::Baseline);
    sim.inject(InjectEvent::NodeFailure { addr: HUB, tick: 50 }).unwrap();
    sim.run(200);
    assert!(sim.deliveries().iter().any(|d| d.tick < 50));
    assert!(sim.deliveries().iter().all(|d| d.tick < 50));
    assert!(count(&sim, "rejected_frames:Dead") > 0);
}

#[test]
fn hardened_hub_reports_a_silent_dust_node() {
    let mut sim = dust(Profile::Hardened);
    let victim = Address(0x1000);
    sim.inject(InjectEvent::NodeFailure { addr: victim, tick: 20 }).unwrap();
    sim.run(100);
    let reports: Vec<_> = sim.unreachable_reports().iter().filter(|(_, a)| *a == victim).collect();
    assert_eq!(reports.len(), 1);
    assert!(reports[0].0 > 20);
}

#[test]
fn baseline_relay_failure_is_silent() {
    let mut sim = dust(Profile::Baseline);
    sim.inject(InjectEvent::NodeFailure { addr: Address(0x0100), tick: 20 }).unwrap();
    sim.run(100);
    assert!(sim.unreachable_reports().is_empty());
    assert!(!sim.fsm_log().iter().any(|l| l.contains("PeerUnreachable")));
}

#[test]
fn hardened_relay_failure_is_reported() {
    let mut sim = dust(Profile::Hardened);
    let relay = Address(0x0100);
    sim.inject(InjectEvent::NodeFailure { addr: relay, tick: 20 }).unwrap();
    sim.run(100);
    assert!(sim.unreachable_reports().iter().any(|(_, a)| *a == relay));
}

#[test]
fn jam_window_loses_exactly_its_frames() {
    let mut sim = lcp(Profile::Baseline);
    sim.inject(InjectEvent::LinkJam { a: PACER, b: HUB, from: 30, until: 40 }).unwrap();
    sim.run(100);
    let from_pacer: Vec<_> = sim.deliveries().iter().filter(|d| d.origin == PACER).collect();
    assert!(from_pacer.iter().all(|d| !(30..40).contains(&d.tick)));
    let jammed = sim.trace().iter().filter(|r| r.reason == Some(DiscardReason::Jammed)).count();
    assert_eq!(jammed, 1);
    // 10 sends at ticks 0,10,..,90 minus the jammed one.
    assert_eq!(from_pacer.len(), 9);
}

#[test]
fn baseline_neural_dust_caps_admission_at_64() {
    let mut sim = dust(Profile::Baseline);
    assert_eq!(count(&sim, "admitted_count"), 64);
    sim.run(30);
    assert!(count(&sim, "rejected_frames:NotAdmitted") > 0);
}

#[test]
fn hardened_neural_dust_admits_everyone() {
    let sim = dust(Profile::Hardened);
    assert_eq!(count(&sim, "admitted_count"), 1004);
}

#[test]
fn replays_are_all_discarded_as_stale() {
    let mut sim = lcp(Profile::Baseline);
    sim.run(20);
    let captured = sim
        .air_log()
        .iter()
        .find(|f| f.transmitter == PACER && f.receiver == HUB)
        .unwrap()
        .bytes
        .clone();
    let before = count(&sim, "rejected_frames:NotFresh");
    let mut ids = Vec::new();
    for _ in 0..3 {
        for _ in 0..4 {
            ids.push(sim.inject_raw(PACER, HUB, captured.clone()));
        }
        sim.step();
    }
    assert_eq!(count(&sim, "rejected_frames:NotFresh") - before, ids.len() as u64);
    assert!(ids.iter().all(|id| sim.injection_delivered(*id) == Some(false)));
}

#[test]
fn dust_reaches_hub_through_one_relay() {
    let mut sim = dust(Profile::Hardened);
    sim.run(30);
    let from_dust: Vec<_> = sim.deliveries().iter().filter(|d| d.origin.0 >= 0x1000).collect();
    assert!(!from_dust.is_empty());
    assert!(from_dust.iter().all(|d| d.relays == 1 && d.dst == HUB));
}

#[test]
fn pancreas_baseline_routes_through_the_pump() {
    let mut sim = Simulator::from_text(PANCREAS, Profile::Baseline, 1).unwrap();
    sim.run(50);
    assert!(sim.deliveries().iter().all(|d| d.dst == HUB || d.origin == HUB));
    assert!(sim.deliveries().iter().any(|d| d.origin == Address(0x0001)));
    let mut sim = Simulator::from_text(PANCREAS, Profile::Hardened, 1).unwrap();
    sim.run(50);
    assert!(sim.deliveries().iter().any(|d| d.dst == Address(0x0002) && d.origin == Address(0x0001)));
}

#[test]
fn observe_reports_states_and_errors() {
    let sim = lcp(Profile::Hardened);
    assert_eq!(sim.observe("state:0x0001").unwrap(), MetricValue::State("Connected".into()));
    assert_eq!(sim.observe("state:0x0999"), Err(SimError::NotFound(Address(0x0999))));
    assert!(matches!(sim.observe("throughput"), Err(SimError::Usage(_))));
    assert!(matches!(sim.observe("battery:0x0001").unwrap(), MetricValue::Units(u) if u > 0));
}

#[test]
fn inject_checks_its_arguments() {
    let mut sim = dust(Profile::Baseline);
    assert_eq!(
        sim.inject(InjectEvent::NodeFailure { addr: Address(0x0777), tick: 1 }),
        Err(SimError::NotFound(Address(0x0777)))
    );
    assert!(matches!(
        sim.inject(InjectEvent::BatterySet { addr: Address(0x1000), tick: 1, units: 5 }),
        Err(SimError::Usage(_))
    ));
}

#[test]
fn hardened_backup_takes_over() {
    let text = LCP.replace("[node.pacer]", "[node.backup]\naddress = 0xFF02\nenergy = E2\ncapacity = 400000\nroles = coordinator\ntraffic = false\n\n[node.pacer]")
        .replace("beacon_interval = 10", "beacon_interval = 10\nbackups = 0xFF02");
    let mut sim = Simulator::from_text(&text, Profile::Hardened, 5).unwrap();
    sim.inject(InjectEvent::NodeFailure { addr: HUB, tick: 40 }).unwrap();
    sim.run(200);
    assert_eq!(sim.active_hub(), Address(0xFF02));
    assert!(sim.deliveries().iter().any(|d| d.tick > 100 && d.dst == Address(0xFF02)));
}

#[test]
fn trace_csv_has_header() {
    let mut sim = lcp(Profile::Baseline);
    sim.run(12);
    let csv = sim.trace_csv();
    assert!(csv.starts_with("tick,src,dst,type,level,outcome,reason\n"));
    assert!(csv.lines().count() > 2);
}
