//! Python bindings for `mbansec`.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use mbansec::adversary::{self, AdversaryModel, AttackKind};
use mbansec::assessment::{self, Registry};
use mbansec::assoc;
use mbansec::cli;
use mbansec::crypto::vectors;
use mbansec::crypto::CipherFunction;
use mbansec::frame::{self, Address, FrameType, SecurityLevel, SequencePair};
use mbansec::netsim::{self, MetricValue, SimError};
use mbansec::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn profile(s: &str) -> PyResult<Profile> {
    s.parse().map_err(value_err)
}

fn scenario_text(name_or_text: &str) -> PyResult<String> {
    if name_or_text.contains('[') {
        return Ok(name_or_text.to_string());
    }
    cli::scenario_text(name_or_text).map_err(value_err)
}

/// A deterministic MBAN simulation.
#[pyclass(module = "mbansec_py")]
struct Simulator {
    inner: netsim::Simulator,
}

#[pymethods]
impl Simulator {
    /// `scenario` is a bundled name (`lcp`, `pancreas`, `neural_dust`), a
    /// path, or scenario text.
    #[new]
    #[pyo3(signature = (scenario, profile="baseline", seed=0))]
    fn new(scenario: &str, profile: &str, seed: u64) -> PyResult<Self> {
        let text = scenario_text(scenario)?;
        let inner = netsim::Simulator::from_text(&text, self::profile(profile)?, seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn now(&self) -> u64 {
        self.inner.now()
    }

    #[getter]
    fn ticks(&self) -> u64 {
        self.inner.config().ticks
    }

    fn run(&mut self, until: u64) {
        self.inner.run(until);
    }

    fn step(&mut self) {
        self.inner.step();
    }

    /// Counts come back as ints, states as strings.
    fn observe(&self, py: Python<'_>, metric: &str) -> PyResult<Py<PyAny>> {
        match self.inner.observe(metric) {
            Ok(MetricValue::Count(n)) => Ok(n.into_pyobject(py)?.into_any().unbind()),
            Ok(MetricValue::Units(u)) => Ok(u.into_pyobject(py)?.into_any().unbind()),
            Ok(MetricValue::State(s)) => Ok(s.into_pyobject(py)?.into_any().unbind()),
            Err(e @ SimError::NotFound(_)) => Err(PyKeyError::new_err(e.to_string())),
            Err(e) => Err(value_err(e)),
        }
    }

    fn delivered(&self) -> usize {
        self.inner.deliveries().len()
    }

    fn trace_csv(&self) -> String {
        self.inner.trace_csv()
    }
}

/// Run one honest association; returns a dict of result flags.
#[pyfunction]
#[pyo3(signature = (protocol, seed=0, password="314159"))]
fn handshake<'py>(py: Python<'py>, protocol: &str, seed: u64, password: &str) -> PyResult<Bound<'py, PyDict>> {
    let p: AssocProtocol = protocol.parse().map_err(value_err)?;
    let sss = SecuritySuiteSelector::new(SecurityLevel::Level2AuthEnc, p, CipherFunction::Aes128Ccm);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (i, r) = assoc::honest_configs(&mut rng, p, Address(0x0001), Address(0xFF01), sss, password.as_bytes());
    let run = assoc::run_handshake(&mut rng, p, i, r).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("messages", run.messages.len())?;
    d.set_item("activated", run.both_activated())?;
    d.set_item("mk_match", run.keys_agree())?;
    d.set_item("mutually_authenticated", run.initiator.result().is_some_and(|r| r.mutually_authenticated))?;
    d.set_item("trace", run.trace)?;
    Ok(d)
}

/// One attack against one profile; returns a dict.
#[pyfunction]
#[pyo3(signature = (scenario, kind, profile="baseline", seed=0))]
fn attack<'py>(py: Python<'py>, scenario: &str, kind: &str, profile: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let kind: AttackKind = kind.parse().map_err(value_err)?;
    let cfg = netsim::load_scenario(&scenario_text(scenario)?, self::profile(profile)?).map_err(value_err)?;
    let adv = AdversaryModel::for_scenario(&cfg);
    let adv = if kind.is_active() { adv } else { adv.passive() };
    let r = adversary::run_attack(&cfg, kind, &adv, seed).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("kind", r.kind.as_str())?;
    d.set_item("profile", r.profile.as_str())?;
    d.set_item("attempts", r.attempts)?;
    d.set_item("successes", r.successes)?;
    d.set_item("success_rate", r.success_rate)?;
    for (name, v) in &r.side_metrics {
        d.set_item(name, v)?;
    }
    Ok(d)
}

/// Fulfillment matrix as `[(spec, status, rationale)]`.
#[pyfunction]
#[pyo3(signature = (profile="baseline"))]
fn fulfillment(profile: &str) -> PyResult<Vec<(String, String, String)>> {
    let m = assessment::fulfillment_matrix(&Registry::embedded(), self::profile(profile)?);
    Ok(m.verdicts.into_iter().map(|v| (v.spec, v.status.as_str().to_string(), v.rationale)).collect())
}

/// Attribute ids no listed use case covers.
#[pyfunction]
fn coverage_gaps(use_cases: Vec<String>) -> PyResult<Vec<String>> {
    let ucs: Vec<&str> = use_cases.iter().map(String::as_str).collect();
    assessment::completeness_gaps(&Registry::embedded(), &ucs).map_err(value_err)
}

/// Known-answer self-test as `[(name, passed)]`.
#[pyfunction]
fn run_vectors() -> Vec<(String, bool)> {
    vectors::run_vectors().into_iter().map(|r| (r.name.to_string(), r.passed)).collect()
}

/// Encode an unsecured frame; `frame_type` is one of beacon, mgmt,
/// control, data, wakeup.
#[pyfunction]
#[pyo3(signature = (sender, recipient, frame_type, seq, payload))]
fn encode_plain_frame(sender: u16, recipient: u16, frame_type: &str, seq: u16, payload: Vec<u8>) -> PyResult<Vec<u8>> {
    let ft = FrameType::ALL
        .into_iter()
        .find(|t| t.as_str().eq_ignore_ascii_case(frame_type))
        .ok_or_else(|| value_err(format!("unknown frame type {frame_type:?}")))?;
    let f = frame::Frame::plain(Address(sender), Address(recipient), ft, SequencePair::new(0, seq), payload);
    frame::encode_frame(&f).map_err(value_err)
}

/// Decode a frame into a dict of its fields.
#[pyfunction]
fn decode_frame<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let f = frame::decode_frame(data).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("sender", f.sender.0)?;
    d.set_item("recipient", f.recipient.0)?;
    d.set_item("frame_type", f.frame_type.as_str())?;
    d.set_item("level", f.level.as_u8())?;
    d.set_item("seq", f.seq.low)?;
    d.set_item("key_id", f.key_id)?;
    d.set_item("payload", f.payload)?;
    d.set_item("mic", f.mic)?;
    Ok(d)
}

/// Run the command-line tool in-process; returns `(code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let out = cli::run_cli(std::iter::once("mbansec".to_string()).chain(args));
    (out.code, out.stdout, out.stderr)
}

#[pymodule]
fn mbansec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Simulator>()?;
    m.add_function(wrap_pyfunction!(handshake, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(fulfillment, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(run_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(encode_plain_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("BUNDLED_SCENARIOS", netsim::BUNDLED.to_vec())?;
    Ok(())
}
