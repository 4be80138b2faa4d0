//! Command-line front end shared by the `mbansec` binary and the tests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::adversary::{reports_csv, reports_table, run_attack, AdversaryModel, AttackKind};
use crate::assessment::{
    comparison_table, coverage_csv, coverage_matrix, fulfillment_csv, fulfillment_matrix, fulfillment_table,
    trace_recommendations, Registry,
};
use crate::assoc::{honest_configs, run_handshake_with};
use crate::crypto::vectors::{run_vectors, VectorResult};
use crate::crypto::CipherFunction;
use crate::frame::{Address, SecurityLevel};
use crate::netsim::{bundled, load_scenario, ScenarioConfig, Simulator};
use crate::suite::{AssocProtocol, Profile, SecuritySuiteSelector};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VECTOR: i32 = 3;

/// Exit code plus what would go to stdout and stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutput {
    fn ok(stdout: String) -> Self {
        Self { code: EXIT_OK, stdout, stderr: String::new() }
    }

    fn fail(code: i32, stderr: String) -> Self {
        Self { code, stdout: String::new(), stderr }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mbansec", about = "IEEE 802.15.6 security model, MBAN simulator and assessment tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Debug, Args)]
struct Common {
    /// Security profile.
    #[arg(long, default_value = "baseline", value_parser = parse_profile)]
    profile: Profile,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<String>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one association protocol between a node and a hub and print each phase.
    Handshake {
        /// Protocol: I, II, III, IV or V.
        #[arg(value_parser = parse_protocol)]
        protocol: AssocProtocol,
        /// Password for protocol IV.
        #[arg(long, default_value = "314159")]
        password: String,
        /// Flip one byte of message N (0-2) in transit.
        #[arg(long)]
        tamper: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario and print its frame trace.
    Simulate {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Ticks to run; defaults to the scenario's own.
        #[arg(long)]
        ticks: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run attacks against a scenario under one or more profiles.
    Attack {
        scenario: String,
        /// Comma-separated attack kinds.
        #[arg(long, value_delimiter = ',', default_value = "replay", value_parser = parse_kind)]
        kinds: Vec<AttackKind>,
        /// Comma-separated profiles.
        #[arg(long, value_delimiter = ',', default_value = "baseline", value_parser = parse_profile)]
        profile: Vec<Profile>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Print the coverage and fulfillment matrices.
    Assess {
        /// Comma-separated use cases for the coverage matrix.
        #[arg(long, value_delimiter = ',', default_value = "UC1,UC2,UC3")]
        use_cases: Vec<String>,
        /// Also print the baseline/hardened comparison.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run the embedded crypto known-answer vectors.
    Vectors {
        #[arg(long)]
        out: Option<String>,
    },
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse()
}

fn parse_protocol(s: &str) -> Result<AssocProtocol, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<AttackKind, String> {
    s.parse::<AttackKind>().map_err(|e| e.to_string())
}

/// Parse `argv` (including the program name) and run the command.
pub fn run_cli<I, T>(argv: I) -> CliOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliOutput::ok(text),
                _ => CliOutput::fail(EXIT_USAGE, text),
            };
        }
    };
    match cli.command {
        Command::Handshake { protocol, password, tamper, common } => {
            let text = handshake(protocol, &password, tamper, &common);
            emit(text, common.out.as_deref())
        }
        Command::Simulate { scenario, ticks, common } => match simulate(&scenario, ticks, &common) {
            Ok(text) => emit(text, common.out.as_deref()),
            Err(e) => CliOutput::fail(EXIT_CONFIG, format!("{e}\n")),
        },
        Command::Attack { scenario, kinds, profile, seed, ticks, out, format } => {
            match attack(&scenario, &kinds, &profile, seed, ticks, format.unwrap_or(Format::Csv)) {
                Ok(text) => emit(text, out.as_deref()),
                Err(e) => CliOutput::fail(EXIT_CONFIG, format!("{e}\n")),
            }
        }
        Command::Assess { use_cases, compare, common } => match assess(&use_cases, compare, &common) {
            Ok(text) => emit(text, common.out.as_deref()),
            Err(e) => CliOutput::fail(EXIT_CONFIG, format!("{e}\n")),
        },
        Command::Vectors { out } => {
            let (code, text) = vectors_report(&run_vectors());
            let mut o = emit(text, out.as_deref());
            if o.code == EXIT_OK {
                o.code = code;
            }
            o
        }
    }
}

fn emit(text: String, out: Option<&str>) -> CliOutput {
    match out {
        None => CliOutput::ok(text),
        Some(path) => match fs::write(path, &text) {
            Ok(()) => CliOutput::ok(String::new()),
            Err(e) => CliOutput::fail(EXIT_CONFIG, format!("cannot write {path}: {e}\n")),
        },
    }
}

/// Render vector results; the code is 3 if any failed.
pub fn vectors_report(results: &[VectorResult]) -> (i32, String) {
    let mut s = String::new();
    for r in results {
        s += &format!("{} {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    s += &format!("{} vectors, {} failed\n", results.len(), failed);
    (if failed == 0 { EXIT_OK } else { EXIT_VECTOR }, s)
}

/// Scenario text from a file, falling back to the bundled presets.
pub fn scenario_text(name: &str) -> Result<String, String> {
    if Path::new(name).is_file() {
        return fs::read_to_string(name).map_err(|e| format!("cannot read {name}: {e}"));
    }
    bundled(name).map(str::to_string).ok_or_else(|| format!("no such scenario: {name}"))
}

fn load(name: &str, profile: Profile, ticks: Option<u64>) -> Result<ScenarioConfig, String> {
    let text = scenario_text(name)?;
    let mut cfg = load_scenario(&text, profile).map_err(|e| format!("{name}: {e}"))?;
    if let Some(t) = ticks {
        cfg.ticks = t;
    }
    Ok(cfg)
}

fn handshake(protocol: AssocProtocol, password: &str, tamper: Option<usize>, common: &Common) -> String {
    let cipher = match common.profile {
        Profile::Baseline => CipherFunction::Aes128Ccm,
        Profile::Hardened => CipherFunction::Aes256Ccm,
    };
    let sss = SecuritySuiteSelector::new(SecurityLevel::Level2AuthEnc, protocol, cipher);
    let node = Address(0x0001);
    let hub = Address(0xFF01);
    let mut rng = ChaCha20Rng::seed_from_u64(common.seed);
    let (i, r) = honest_configs(&mut rng, protocol, node, hub, sss, password.as_bytes());
    let run = run_handshake_with(&mut rng, protocol, i, r, |idx, bytes| {
        if tamper == Some(idx) && !bytes.is_empty() {
            let at = bytes.len() - 1;
            bytes[at] ^= 0x01;
        }
    })
    .expect("honest materials satisfy every protocol");

    let mut rows: Vec<(String, String)> = vec![
        ("protocol".into(), protocol.numeral().into()),
        ("suite".into(), sss.to_string()),
    ];
    rows.extend(run.trace.iter().enumerate().map(|(n, line)| (format!("step{n}"), line.clone())));
    rows.push(("messages".into(), run.messages.len().to_string()));
    rows.push(("activated".into(), run.both_activated().to_string()));
    rows.push(("mk_match".into(), run.keys_agree().to_string()));
    let mutual = run.initiator.result().map(|r| r.mutually_authenticated).unwrap_or(false);
    rows.push(("mutually_authenticated".into(), mutual.to_string()));
    if let Some(reason) = run.initiator.abort_reason().or(run.responder.abort_reason()) {
        rows.push(("abort".into(), reason.to_string()));
    }
    match common.format.unwrap_or(Format::Table) {
        Format::Table => rows.iter().map(|(k, v)| format!("{k:<24} {v}\n")).collect(),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["field", "value"]).expect("in-memory write");
            for (k, v) in &rows {
                w.write_record([k, v]).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
        }
    }
}

fn simulate(name: &str, ticks: Option<u64>, common: &Common) -> Result<String, String> {
    let cfg = load(name, common.profile, ticks)?;
    let until = cfg.ticks;
    let mut sim = Simulator::new(cfg, common.seed);
    sim.run(until);
    Ok(match common.format.unwrap_or(Format::Csv) {
        Format::Csv => sim.trace_csv(),
        Format::Table => simulation_summary(&sim),
    })
}

fn simulation_summary(sim: &Simulator) -> String {
    let cfg = sim.config();
    let mut s = format!(
        "scenario {} profile {} ticks {} topology {}\n",
        cfg.name,
        cfg.profile.as_str(),
        sim.now(),
        cfg.effective_topology().as_str()
    );
    s += &format!("delivered {}\n", sim.deliveries().len());
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for r in sim.trace() {
        if let Some(reason) = r.reason {
            *reasons.entry(reason.as_str()).or_default() += 1;
        }
    }
    for (r, n) in reasons {
        s += &format!("rejected {r} {n}\n");
    }
    s += &format!("{:<20} {:<8} {:<10} {:>14}\n", "node", "address", "state", "battery");
    for n in cfg.all_nodes().take(64) {
        let battery = sim.battery(n.address).map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        let state = sim.state(n.address).map(|st| format!("{st:?}")).unwrap_or_else(|| "-".into());
        s += &format!("{:<20} {:<8} {:<10} {:>14}\n", n.name, n.address.to_string(), state, battery);
    }
    let rest = cfg.all_nodes().count().saturating_sub(64);
    if rest > 0 {
        s += &format!("... {rest} more nodes\n");
    }
    s
}

fn attack(
    name: &str,
    kinds: &[AttackKind],
    profiles: &[Profile],
    seed: u64,
    ticks: Option<u64>,
    format: Format,
) -> Result<String, String> {
    let cfgs = profiles.iter().map(|p| load(name, *p, ticks)).collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::new();
    for kind in kinds {
        for cfg in &cfgs {
            let adv = AdversaryModel::for_scenario(cfg);
            let adv = if kind.is_active() { adv } else { adv.passive() };
            reports.push(run_attack(cfg, *kind, &adv, seed).map_err(|e| format!("{name}: {e}"))?);
        }
    }
    Ok(match format {
        Format::Csv => reports_csv(&reports),
        Format::Table => reports_table(&reports),
    })
}

fn assess(use_cases: &[String], compare: bool, common: &Common) -> Result<String, String> {
    let reg = Registry::embedded();
    let ucs: Vec<&str> = use_cases.iter().map(String::as_str).collect();
    let coverage = coverage_matrix(&reg, &ucs).map_err(|e| e.to_string())?;
    let matrix = fulfillment_matrix(&reg, common.profile);
    let mut s = String::new();
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            s += &coverage_csv(&coverage);
            s += "\n";
            s += &fulfillment_csv(&matrix);
        }
        Format::Table => {
            s += &coverage_csv(&coverage).replace(',', "\t");
            s += "\n";
            s += &fulfillment_table(&matrix);
            match trace_recommendations(&reg, &matrix.verdicts) {
                Ok(map) => {
                    s += "\nrecommendation -> specs\n";
                    for (rec, specs) in map {
                        let list: Vec<&str> = specs.iter().map(String::as_str).collect();
                        s += &format!("{rec:<4} {}\n", list.join(" "));
                    }
                }
                Err(e) => s += &format!("\n{e}\n"),
            }
        }
    }
    if compare {
        s += "\n";
        s += &comparison_table(
            &reg,
            &fulfillment_matrix(&reg, Profile::Baseline),
            &fulfillment_matrix(&reg, Profile::Hardened),
        );
    }
    Ok(s)
}
