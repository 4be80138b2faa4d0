//! Attribute registries, use cases, coverage, fulfillment verdicts and
//! recommendation traceability, driven by an embedded dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{CipherFunction, KeyRole, KeySize, SymmetricKey, TagAlgorithm};
use crate::frame::Address;
use crate::fsm::{handle_event, FsmEvent, SecurityState};
use crate::hub::{elect_hub, HubPolicy};
use crate::keys::KeyStore;
use crate::netsim::{load_scenario, NEURAL_DUST, PANCREAS};
use crate::suite::{AssocProtocol, Profile};

pub const DATA: &str = include_str!("mban.dat");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("line {line}: {msg}")]
    Data { line: usize, msg: String },
    #[error("unknown attribute {0}")]
    UnknownAttribute(String),
    #[error("unknown use case {0}")]
    UnknownUseCase(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{spec} is {status} but no recommendation addresses it")]
pub struct TraceabilityError {
    pub spec: String,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    NotSatisfied,
    Partial,
    Satisfied,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::NotSatisfied => "NotSatisfied",
            Status::Partial => "Partial",
            Status::Satisfied => "Satisfied",
        }
    }

    /// Colour used in the published matrix.
    pub fn colour(self) -> &'static str {
        match self {
            Status::NotSatisfied => "Red",
            Status::Partial => "Yellow",
            Status::Satisfied => "Green",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "NotSatisfied" | "Red" => Ok(Status::NotSatisfied),
            "Partial" | "Yellow" => Ok(Status::Partial),
            "Satisfied" | "Green" => Ok(Status::Satisfied),
            _ => Err(format!("unknown status {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityAttribute {
    pub id: String,
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysicalAttribute {
    pub id: String,
    pub attribute: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceClassEntry {
    pub id: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseCase {
    pub id: String,
    pub name: String,
    /// `(node, device class)`
    pub nodes: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseCaseSpec {
    pub id: String,
    pub use_case: String,
    pub text: String,
    pub attributes: BTreeSet<String>,
    pub baseline: Status,
    pub quote: String,
    pub reconstructed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recommendation {
    pub id: String,
    pub category: String,
    pub text: String,
    pub motivates: BTreeSet<String>,
    pub reconstructed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub security: Vec<SecurityAttribute>,
    pub physical: Vec<PhysicalAttribute>,
    pub devices: Vec<DeviceClassEntry>,
    pub use_cases: Vec<UseCase>,
    pub specs: Vec<UseCaseSpec>,
    pub recommendations: Vec<Recommendation>,
}

fn list(s: &str) -> BTreeSet<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn provenance(s: &str, line: usize) -> Result<bool, RegistryError> {
    match s {
        "quoted" => Ok(false),
        "reconstructed" => Ok(true),
        _ => Err(RegistryError::Data { line, msg: format!("bad provenance {s:?}") }),
    }
}

impl Registry {
    /// The dataset shipped with the crate.
    pub fn embedded() -> Self {
        Self::parse(DATA).expect("embedded dataset is valid")
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut r = Registry {
            security: Vec::new(),
            physical: Vec::new(),
            devices: Vec::new(),
            use_cases: Vec::new(),
            specs: Vec::new(),
            recommendations: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = l.split('|').map(str::trim).collect();
            let bad = |msg: &str| RegistryError::Data { line, msg: msg.to_string() };
            let want = |n: usize| if f.len() == n { Ok(()) } else { Err(bad(&format!("{} needs {n} fields", f[0]))) };
            match f[0] {
                "S" => {
                    want(4)?;
                    r.security.push(SecurityAttribute { id: f[1].into(), name: f[2].into(), definition: f[3].into() });
                }
                "P" => {
                    want(4)?;
                    r.physical.push(PhysicalAttribute { id: f[1].into(), attribute: f[2].into(), value: f[3].into() });
                }
                "D" => {
                    want(3)?;
                    r.devices.push(DeviceClassEntry { id: f[1].into(), definition: f[2].into() });
                }
                "UC" => {
                    want(3)?;
                    r.use_cases.push(UseCase { id: f[1].into(), name: f[2].into(), nodes: Vec::new() });
                }
                "NODE" => {
                    want(4)?;
                    let uc = r.use_cases.iter_mut().find(|u| u.id == f[1]).ok_or_else(|| bad("node before its use case"))?;
                    uc.nodes.push((f[2].into(), f[3].into()));
                }
                "SPEC" => {
                    want(8)?;
                    r.specs.push(UseCaseSpec {
                        id: f[1].into(),
                        use_case: f[2].into(),
                        attributes: list(f[3]),
                        baseline: f[4].parse().map_err(|e: String| bad(&e))?,
                        reconstructed: provenance(f[5], line)?,
                        quote: f[6].into(),
                        text: f[7].into(),
                    });
                }
                "REC" => {
                    want(6)?;
                    r.recommendations.push(Recommendation {
                        id: f[1].into(),
                        category: f[2].into(),
                        motivates: list(f[3]),
                        reconstructed: provenance(f[4], line)?,
                        text: f[5].into(),
                    });
                }
                other => return Err(bad(&format!("unknown record kind {other:?}"))),
            }
        }
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<(), RegistryError> {
        let ids = self.attribute_ids();
        let mut seen = BTreeSet::new();
        for s in &self.specs {
            if !seen.insert(s.id.clone()) {
                return Err(RegistryError::Data { line: 0, msg: format!("duplicate spec {}", s.id) });
            }
            if s.attributes.is_empty() {
                return Err(RegistryError::Data { line: 0, msg: format!("{} maps no attribute", s.id) });
            }
            if let Some(a) = s.attributes.iter().find(|a| !ids.contains(*a)) {
                return Err(RegistryError::UnknownAttribute(a.clone()));
            }
            if !self.use_cases.iter().any(|u| u.id == s.use_case) {
                return Err(RegistryError::UnknownUseCase(s.use_case.clone()));
            }
        }
        for uc in &self.use_cases {
            if let Some((_, d)) = uc.nodes.iter().find(|(_, d)| !ids.contains(d)) {
                return Err(RegistryError::UnknownAttribute(d.clone()));
            }
        }
        for rec in &self.recommendations {
            if let Some(s) = rec.motivates.iter().find(|s| self.spec(s).is_none()) {
                return Err(RegistryError::Data { line: 0, msg: format!("{} cites unknown spec {s}", rec.id) });
            }
        }
        Ok(())
    }

    /// Every Sx, Px and Dx id, in registry order.
    pub fn attribute_ids(&self) -> Vec<String> {
        self.security
            .iter()
            .map(|a| a.id.clone())
            .chain(self.physical.iter().map(|a| a.id.clone()))
            .chain(self.devices.iter().map(|a| a.id.clone()))
            .collect()
    }

    pub fn spec(&self, id: &str) -> Option<&UseCaseSpec> {
        self.specs.iter().find(|s| s.id == id)
    }

    pub fn use_case(&self, id: &str) -> Option<&UseCase> {
        self.use_cases.iter().find(|u| u.id == id)
    }

    pub fn recommendation(&self, id: &str) -> Option<&Recommendation> {
        self.recommendations.iter().find(|r| r.id == id)
    }

    /// Attributes a use case carries through its nodes and its specs.
    pub fn attributes_of(&self, uc: &str) -> Result<BTreeSet<String>, RegistryError> {
        let u = self.use_case(uc).ok_or_else(|| RegistryError::UnknownUseCase(uc.to_string()))?;
        let mut s: BTreeSet<String> = u.nodes.iter().map(|(_, d)| d.clone()).collect();
        for spec in self.specs.iter().filter(|s| s.use_case == uc) {
            s.extend(spec.attributes.iter().cloned());
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMatrix {
    pub use_cases: Vec<String>,
    /// `(attribute, covered per use case)` in registry order.
    pub rows: Vec<(String, Vec<bool>)>,
}

impl CoverageMatrix {
    pub fn covered(&self, attr: &str) -> bool {
        self.rows.iter().any(|(a, cells)| a == attr && cells.iter().any(|c| *c))
    }
}

pub fn coverage_matrix(reg: &Registry, use_cases: &[&str]) -> Result<CoverageMatrix, RegistryError> {
    let sets: Vec<BTreeSet<String>> = use_cases.iter().map(|u| reg.attributes_of(u)).collect::<Result<_, _>>()?;
    let rows = reg
        .attribute_ids()
        .into_iter()
        .map(|a| {
            let cells = sets.iter().map(|s| s.contains(&a)).collect();
            (a, cells)
        })
        .collect();
    Ok(CoverageMatrix { use_cases: use_cases.iter().map(|s| s.to_string()).collect(), rows })
}

/// Attributes none of `use_cases` covers.
pub fn completeness_gaps(reg: &Registry, use_cases: &[&str]) -> Result<Vec<String>, RegistryError> {
    let m = coverage_matrix(reg, use_cases)?;
    Ok(m.rows.iter().filter(|(_, c)| !c.iter().any(|x| *x)).map(|(a, _)| a.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FulfillmentVerdict {
    pub spec: String,
    pub status: Status,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FulfillmentMatrix {
    pub profile: Profile,
    pub verdicts: Vec<FulfillmentVerdict>,
}

impl FulfillmentMatrix {
    pub fn status(&self, spec: &str) -> Option<Status> {
        self.verdicts.iter().find(|v| v.spec == spec).map(|v| v.status)
    }
}

/// Which recommendations the hardened profile implements, checked against
/// the running code rather than asserted.
pub fn implemented_recommendations() -> BTreeMap<&'static str, bool> {
    let hardened = HubPolicy::hardened(2048);
    let baseline = HubPolicy::baseline();
    let passive = load_scenario(NEURAL_DUST, Profile::Hardened)
        .is_ok_and(|c| c.nodes.iter().any(|n| !n.compute.runs_crypto() && n.link_touch_secure));
    let unreachable = handle_event(Profile::Hardened, SecurityState::Connected, FsmEvent::PeerUnreachable).0;
    let (primary, backup) = (Address(0xFF01), Address(0xFF02));
    let with_backup = HubPolicy { backup_hubs: vec![backup], ..hardened.clone() };
    let mut m = BTreeMap::new();
    m.insert("PO1", passive);
    m.insert("PO2", unreachable == SecurityState::Orphan);
    m.insert("PO3", hardened.max_ban_size > baseline.max_ban_size);
    m.insert("PO4", load_scenario(&strip_baseline_fallback(PANCREAS), Profile::Hardened).is_ok());
    m.insert("PO5", elect_hub(&with_backup, primary, &[backup]) == Ok(backup));
    m.insert("CC1", hardened.allowed_ciphers.contains(&CipherFunction::Aes256Ccm));
    m.insert("CC2", long_tags_differ());
    m.insert("CC3", passive);
    m.insert("AA1", AssocProtocol::PreSharedMk.mutually_authenticating());
    m.insert("AA2", AssocProtocol::PublicKeyHidden.mutually_authenticating());
    m.insert("AA3", hardened.acl_required);
    m.insert("O1", keystore_sealed_at_rest());
    m.insert("O2", hardened.rate_limit.is_some());
    // Threat-surface guidance has no code counterpart.
    m.insert("O3", false);
    m
}

fn strip_baseline_fallback(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("baseline")).collect::<Vec<_>>().join("\n")
}

fn long_tags_differ() -> bool {
    let Ok(k) = SymmetricKey::new(KeySize::K128, vec![3; 16], KeyRole::Kck) else { return false };
    let msg = [0x5Au8; TagAlgorithm::LONG_MESSAGE_THRESHOLD + 1];
    TagAlgorithm::HashThenCmac.tag(&k, &msg) != TagAlgorithm::Cmac.tag(&k, &msg)
}

fn keystore_sealed_at_rest() -> bool {
    let Ok(k) = SymmetricKey::new(KeySize::K128, vec![7; 16], KeyRole::Mk) else { return false };
    let Ok(blob) = KeyStore::new().persist(&k) else { return false };
    let mut tampered = blob.clone();
    if let Some(b) = tampered.last_mut() {
        *b ^= 1;
    }
    KeyStore::open(&blob, &k).is_ok() && KeyStore::open(&tampered, &k).is_err()
}

/// Baseline verdicts verbatim; hardened lifts a spec to Satisfied when any
/// recommendation that motivates it is implemented.
pub fn fulfillment_matrix(reg: &Registry, profile: Profile) -> FulfillmentMatrix {
    let implemented = implemented_recommendations();
    let verdicts = reg
        .specs
        .iter()
        .map(|s| {
            let base = FulfillmentVerdict { spec: s.id.clone(), status: s.baseline, rationale: s.quote.clone() };
            if profile == Profile::Baseline || s.baseline == Status::Satisfied {
                return base;
            }
            let by: Vec<&str> = reg
                .recommendations
                .iter()
                .filter(|r| r.motivates.contains(&s.id) && implemented.get(r.id.as_str()).copied().unwrap_or(false))
                .map(|r| r.id.as_str())
                .collect();
            if by.is_empty() {
                base
            } else {
                FulfillmentVerdict {
                    spec: s.id.clone(),
                    status: Status::Satisfied,
                    rationale: format!("hardened by {}", by.join(", ")),
                }
            }
        })
        .collect();
    FulfillmentMatrix { profile, verdicts }
}

/// Recommendation to motivating specs. Fails if an unsatisfied spec has
/// no recommendation.
pub fn trace_recommendations(
    reg: &Registry,
    verdicts: &[FulfillmentVerdict],
) -> Result<BTreeMap<String, BTreeSet<String>>, TraceabilityError> {
    let map: BTreeMap<String, BTreeSet<String>> =
        reg.recommendations.iter().map(|r| (r.id.clone(), r.motivates.clone())).collect();
    for v in verdicts.iter().filter(|v| v.status != Status::Satisfied) {
        if !map.values().any(|s| s.contains(&v.spec)) {
            return Err(TraceabilityError { spec: v.spec.clone(), status: v.status });
        }
    }
    Ok(map)
}

/// CSV `spec,status,colour,rationale`.
pub fn fulfillment_csv(m: &FulfillmentMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["spec", "status", "colour", "rationale"]).expect("in-memory write");
    for v in &m.verdicts {
        w.write_record([v.spec.as_str(), v.status.as_str(), v.status.colour(), v.rationale.as_str()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn parse_fulfillment_csv(text: &str, profile: Profile) -> Result<FulfillmentMatrix, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut verdicts = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 4 {
            return Err(format!("expected 4 fields, got {}", rec.len()));
        }
        verdicts.push(FulfillmentVerdict { spec: rec[0].to_string(), status: rec[1].parse()?, rationale: rec[3].to_string() });
    }
    Ok(FulfillmentMatrix { profile, verdicts })
}

pub const LEGEND: &str = "legend: Red = NotSatisfied, Yellow = Partial, Green = Satisfied";

/// Aligned table with the status legend.
pub fn fulfillment_table(m: &FulfillmentMatrix) -> String {
    let mut s = format!("fulfillment ({})\n{LEGEND}\n", m.profile);
    s += &format!("{:<6} {:<13} {:<7} {}\n", "spec", "status", "colour", "rationale");
    for v in &m.verdicts {
        s += &format!("{:<6} {:<13} {:<7} {}\n", v.spec, v.status.as_str(), v.status.colour(), v.rationale);
    }
    s
}

/// Both profiles side by side, with the recommendations each spec traces to.
pub fn comparison_table(reg: &Registry, base: &FulfillmentMatrix, hard: &FulfillmentMatrix) -> String {
    let mut s = format!("{LEGEND}\n{:<6} {:<13} {:<13} {}\n", "spec", "baseline", "hardened", "recommendations");
    for v in &base.verdicts {
        let recs: Vec<&str> =
            reg.recommendations.iter().filter(|r| r.motivates.contains(&v.spec)).map(|r| r.id.as_str()).collect();
        s += &format!(
            "{:<6} {:<13} {:<13} {}\n",
            v.spec,
            v.status.as_str(),
            hard.status(&v.spec).map(Status::as_str).unwrap_or("-"),
            recs.join(",")
        );
    }
    s
}

/// CSV `attribute,<use case>...` with 1/0 cells.
pub fn coverage_csv(m: &CoverageMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["attribute".to_string()];
    header.extend(m.use_cases.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (a, cells) in &m.rows {
        let mut row = vec![a.clone()];
        row.extend(cells.iter().map(|c| if *c { "1" } else { "0" }.to_string()));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
