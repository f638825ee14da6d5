//! Batch runner behind the `tristage` binary: config merging, parallel trials,
//! JSONL traces, JSON reports and the `explain` narrative.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Adversary, Channel, ChannelConfig, ReplayTarget};
use crate::encoding::{BitString, RedundancyFactor};
use crate::parties::Role;
use crate::rng::trial_seed;
use crate::session::{random_payload, Network, Outcome, SessionConfig};
use crate::trace::{self, AuthView, TraceEvent};
use crate::transforms::KeyPolicy;

pub const REPORT_SCHEMA: &str = "tristage-report/1";
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const DEFAULT_LENGTH: usize = 32;
const DEFAULT_TRIALS: u64 = 1;
/// How far past the freshness window a suppress-replay delay lands by default.
const DEFAULT_DELAY_MARGIN_MS: u64 = 1000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    ParseConfig { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read trace {path}: {source}")]
    ReadTrace { path: PathBuf, source: std::io::Error },
    #[error("trace {path} line {line}: {source}")]
    ParseTrace { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("trial {0} not present in trace")]
    MissingTrial(u64),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write { .. } | CliError::ReadTrace { .. } => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryKind {
    None,
    Eavesdrop,
    Mitm,
    Replay,
    Suppress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArg {
    Rotations,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

/// Every run setting, as given on the command line or in a TOML config file.
/// Keys in the file use the flag names without the leading dashes.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Number of sessions to run.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Master seed; trial i uses a child seed derived from (seed, i).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub adversary: Option<AdversaryKind>,
    /// Per-qubit bit-flip probability on every hop.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Payload repetition factor (odd).
    #[arg(long)]
    pub redundancy: Option<usize>,
    /// Message as a string of 0s and 1s. Mutually exclusive with --length.
    #[arg(long)]
    pub bits: Option<String>,
    /// Length of a random message drawn per trial.
    #[arg(long)]
    pub length: Option<usize>,
    /// Bob's freshness window for T_b.
    #[arg(long)]
    pub window_ms: Option<u64>,
    /// How long a suppressing adversary holds the final frame.
    #[arg(long)]
    pub delay_ms: Option<u64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    pub auth: Option<Switch>,
    /// Write the JSONL trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Include payload amplitudes in trace events.
    #[arg(long)]
    #[serde(default)]
    pub dump_amplitudes: bool,
}

impl Settings {
    /// Values set in `self` win over `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            adversary: self.adversary.or(base.adversary),
            noise: self.noise.or(base.noise),
            redundancy: self.redundancy.or(base.redundancy),
            bits: self.bits.or(base.bits),
            length: self.length.or(base.length),
            window_ms: self.window_ms.or(base.window_ms),
            delay_ms: self.delay_ms.or(base.delay_ms),
            policy: self.policy.or(base.policy),
            auth: self.auth.or(base.auth),
            trace: self.trace.or(base.trace),
            report: self.report.or(base.report),
            dump_amplitudes: self.dump_amplitudes || base.dump_amplitudes,
        }
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| CliError::ParseConfig {
            path: path.to_owned(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageSpec {
    Fixed(BitString),
    Random(usize),
}

/// A fully validated batch description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub message: MessageSpec,
    pub redundancy: RedundancyFactor,
    pub policy: KeyPolicy,
    pub adversary: AdversaryKind,
    pub noise: f64,
    pub window_ms: u64,
    pub delay_ms: u64,
    pub auth: bool,
    pub trials: u64,
    pub seed: u64,
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub dump_amplitudes: bool,
}

impl TryFrom<Settings> for RunConfig {
    type Error = CliError;

    fn try_from(s: Settings) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Invalid(m);
        let message = match (s.bits, s.length) {
            (Some(_), Some(_)) => return Err(bad("--bits and --length are mutually exclusive".into())),
            (Some(b), None) => {
                let bits: BitString = b.parse().map_err(|_| bad(format!("--bits must be 0s and 1s, got {b:?}")))?;
                if bits.is_empty() {
                    return Err(bad("--bits must not be empty".into()));
                }
                MessageSpec::Fixed(bits)
            }
            (None, Some(0)) => return Err(bad("--length must be at least 1".into())),
            (None, Some(n)) => MessageSpec::Random(n),
            (None, None) => MessageSpec::Random(DEFAULT_LENGTH),
        };
        let r = s.redundancy.unwrap_or(1);
        let redundancy = RedundancyFactor::new(r).map_err(|e| bad(format!("--redundancy: {e}")))?;
        let noise = s.noise.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&noise) {
            return Err(bad(format!("--noise must lie in [0, 1], got {noise}")));
        }
        let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(bad("--trials must be at least 1".into()));
        }
        let window_ms = s.window_ms.unwrap_or(crate::auth::DEFAULT_WINDOW_MS);
        Ok(RunConfig {
            message,
            redundancy,
            policy: match s.policy.unwrap_or(PolicyArg::Rotations) {
                PolicyArg::Rotations => KeyPolicy::RotationsOnly,
                PolicyArg::Mixed => KeyPolicy::MixedValidated,
            },
            adversary: s.adversary.unwrap_or(AdversaryKind::None),
            noise,
            window_ms,
            delay_ms: s.delay_ms.unwrap_or(window_ms + DEFAULT_DELAY_MARGIN_MS),
            auth: s.auth.unwrap_or(Switch::On) == Switch::On,
            trials,
            seed: s.seed.unwrap_or(0),
            trace: s.trace,
            report: s.report,
            dump_amplitudes: s.dump_amplitudes,
        })
    }
}

/// What one trial produced.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: u64,
    pub outcome: Outcome,
    pub qber: Option<f64>,
    pub eve_recovered: bool,
    pub events: Vec<TraceEvent>,
}

impl RunConfig {
    fn session_config(&self, seed: u64) -> SessionConfig {
        let payload = match &self.message {
            MessageSpec::Fixed(b) => b.clone(),
            MessageSpec::Random(n) => random_payload(*n, seed),
        };
        let mut cfg = SessionConfig::new(payload, seed);
        cfg.payload_redundancy = self.redundancy;
        cfg.key_policy = self.policy;
        cfg.window_ms = self.window_ms;
        cfg.auth_enabled = self.auth;
        cfg
    }

    fn channel(&self, adversary: Adversary, seed: u64) -> ChannelConfig {
        ChannelConfig {
            adversary,
            flip_noise_p: self.noise,
            seed,
        }
    }

    /// Runs trial `index`. Replay trials first record an honest session on
    /// the same network, then replay its msg3 (even trials) or msg4 (odd).
    pub fn run_trial(&self, index: u64) -> TrialRecord {
        let seed = trial_seed(self.seed, index);
        let cfg = self.session_config(seed);
        let mut net = Network::new(seed);
        let result = match self.adversary {
            AdversaryKind::Replay => {
                let recorded = net
                    .run_session(&cfg, &mut Channel::new(self.channel(Adversary::None, seed)))
                    .expect("validated config");
                let target = if index.is_multiple_of(2) { ReplayTarget::Msg3 } else { ReplayTarget::Msg4 };
                let mut attacked = cfg.clone();
                attacked.seed = trial_seed(seed, 1);
                let ch = self.channel(Adversary::Replay(target), attacked.seed);
                net.run_session(&attacked, &mut Channel::with_recording(ch, recorded.tap))
            }
            kind => {
                let adversary = match kind {
                    AdversaryKind::None => Adversary::None,
                    AdversaryKind::Eavesdrop => Adversary::InterceptResend,
                    AdversaryKind::Mitm => Adversary::Mitm { passive: false },
                    AdversaryKind::Suppress => Adversary::SuppressReplay { delay_ms: self.delay_ms },
                    AdversaryKind::Replay => unreachable!(),
                };
                net.run_session(&cfg, &mut Channel::new(self.channel(adversary, seed)))
            }
        }
        .expect("validated config");

        TrialRecord {
            trial: index,
            qber: result.qber.map(|q| q.rate),
            eve_recovered: result.eve_recovered(),
            events: trace::events_for(index, &result.tap, self.dump_amplitudes),
            outcome: result.outcome,
        }
    }

    /// All trials, in trial order, executed in parallel.
    pub fn run_all(&self) -> Vec<TrialRecord> {
        (0..self.trials).into_par_iter().map(|i| self.run_trial(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub trials: u64,
    pub seed: u64,
    pub adversary: AdversaryKind,
    pub auth: bool,
    pub recovered: u64,
    pub aborted: u64,
    /// Abort count per reason code; only reasons that occurred appear.
    pub abort_histogram: BTreeMap<String, u64>,
    /// Payload bit errors summed over recovered trials.
    pub bit_errors: u64,
    /// Mean and population standard deviation of per-trial QBER over recovered trials.
    pub qber_mean: Option<f64>,
    pub qber_stddev: Option<f64>,
    pub eve_recoveries: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

pub const BARE_MODE_WARNING: &str =
    "authentication disabled: bare three-stage mode offers no protection against a man in the middle";

pub fn summarize(cfg: &RunConfig, records: &[TrialRecord]) -> Report {
    let mut hist = BTreeMap::new();
    let mut recovered = 0;
    let mut bit_errors = 0;
    for r in records {
        match &r.outcome {
            Outcome::Recovered { bit_errors: e, .. } => {
                recovered += 1;
                bit_errors += *e as u64;
            }
            Outcome::Aborted { reason, .. } => *hist.entry(reason.code().to_string()).or_insert(0) += 1,
        }
    }
    let rates: Vec<f64> = records.iter().filter_map(|r| r.qber).collect();
    let (mean, stddev) = if rates.is_empty() {
        (None, None)
    } else {
        let n = rates.len() as f64;
        let m = rates.iter().sum::<f64>() / n;
        let v = rates.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (Some(m), Some(v.sqrt()))
    };
    Report {
        schema: REPORT_SCHEMA.to_string(),
        trials: records.len() as u64,
        seed: cfg.seed,
        adversary: cfg.adversary,
        auth: cfg.auth,
        recovered,
        aborted: records.len() as u64 - recovered,
        abort_histogram: hist,
        bit_errors,
        qber_mean: mean,
        qber_stddev: stddev,
        eve_recoveries: records.iter().filter(|r| r.eve_recovered).count() as u64,
        warning: (!cfg.auth).then(|| BARE_MODE_WARNING.to_string()),
    }
}

/// The JSONL trace for a batch: one line per event, trial-ordered.
pub fn trace_text(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for ev in records.iter().flat_map(|r| &r.events) {
        out.push_str(&trace::to_line(ev));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Runs a batch, writes the requested files and returns the report.
pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let records = cfg.run_all();
    let report = summarize(cfg, &records);
    if let Some(p) = &cfg.trace {
        write_file(p, &trace_text(&records))?;
    }
    if let Some(p) = &cfg.report {
        let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
        write_file(p, &(json + "\n"))?;
    }
    Ok(report)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadTrace {
        path: path.to_owned(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| CliError::ParseTrace {
                path: path.to_owned(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

fn protocol_line(hop: u8) -> &'static str {
    match hop {
        1 => "Q(ID_A ∥ N_a) ∥ U_A(X)",
        2 => "Q(ID_B ∥ N_b ∥ E_Kb[ID_A ∥ N_a ∥ T_b]) ∥ U_B U_A(X)",
        3 => "Q(E_Ka[ID_B ∥ N_a ∥ K_s ∥ T_b] ∥ E_Kb[ID_A ∥ K_s ∥ T_b] ∥ N_b) ∥ U_B U_A(X)",
        4 => "Q(E_Kb[ID_A ∥ K_s ∥ T_b] ∥ E_Ks[N_b]) ∥ U_A† U_B U_A(X)",
        _ => "no frame sent",
    }
}

fn payload_symbol(hop: u8) -> &'static str {
    match hop {
        1 => "U_A(X)",
        2 | 3 => "U_B U_A(X)",
        4 => "U_A† U_B U_A(X) = U_B(X)",
        _ => "-",
    }
}

fn opaque(hex: &str) -> String {
    format!("<sealed, {} bytes>", hex.len() / 2)
}

fn describe_auth(a: &AuthView) -> String {
    match a {
        AuthView::Empty => "none (authentication off)".into(),
        AuthView::Msg1 { id_a, n_a } => format!("ID_A = {id_a}, N_a = {n_a}"),
        AuthView::Msg2 { id_b, n_b, ticket_req } => {
            format!("ID_B = {id_b}, N_b = {n_b}, E_Kb[ID_A ∥ N_a ∥ T_b] = {}", opaque(ticket_req))
        }
        AuthView::Msg3 { package_a, ticket_b, n_b } => format!(
            "E_Ka[...] = {}, E_Kb[ID_A ∥ K_s ∥ T_b] = {}, N_b = {n_b}",
            opaque(package_a),
            opaque(ticket_b)
        ),
        AuthView::Msg4 { ticket_b, confirm } => {
            format!("E_Kb[ID_A ∥ K_s ∥ T_b] = {}, E_Ks[N_b] = {}", opaque(ticket_b), opaque(confirm))
        }
        AuthView::Unparsed { hex } => format!("unrecognized record {}", opaque(hex)),
        AuthView::Undecodable { error } => format!("undecodable frame ({error})"),
    }
}

/// Hop-by-hop narrative of one trial.
pub fn explain(events: &[TraceEvent], trial: u64) -> Result<String, CliError> {
    let evs: Vec<&TraceEvent> = events.iter().filter(|e| e.trial == trial).collect();
    if evs.is_empty() {
        return Err(CliError::MissingTrial(trial));
    }
    let mut out = String::new();
    let _ = writeln!(out, "trial {trial}");
    for e in &evs {
        if e.hop == 0 {
            let _ = writeln!(out, "before hop 1: no frame was sent");
        } else {
            let actual = format!("{} → {}", e.sender.short(), e.receiver.short());
            let _ = write!(out, "hop {}  {}", e.hop, e.label);
            if actual != e.label {
                let _ = write!(out, "  (actually {actual})");
            }
            let _ = writeln!(out, "  sent {} ms, delivered {} ms", e.sent_at_ms, e.delivered_at_ms);
            let _ = writeln!(out, "  line:    {}", protocol_line(e.hop));
            let _ = writeln!(out, "  auth:    {}", describe_auth(&e.auth));
            let state = if e.sender == Role::Eve {
                "substituted by Eve".to_string()
            } else {
                payload_symbol(e.hop).to_string()
            };
            let _ = writeln!(out, "  payload: {} qubits, {state}", e.payload.qubits);
        }
        if let Some(a) = e.abort {
            let _ = writeln!(out, "  ABORT at step {}: {} ({})", a.step, a.reason.code(), a.reason);
        }
    }
    let finished = evs.iter().any(|e| e.hop == 4 && e.receiver == Role::Bob);
    if evs.iter().all(|e| e.abort.is_none()) && finished {
        let _ = writeln!(out, "outcome: Bob applied U_B† and measured X");
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "tristage", version, about = "Simulate the KDC-authenticated three-stage quantum protocol")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of sessions.
    Run(RunArgs),
    /// Print a hop-by-hop narrative of one trial from a trace file.
    Explain {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        trial: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

impl RunArgs {
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        RunConfig::try_from(self.settings.over(base))
    }
}

fn print_report(r: &Report) {
    println!("trials: {}  recovered: {}  aborted: {}", r.trials, r.recovered, r.aborted);
    for (code, n) in &r.abort_histogram {
        println!("  {code}: {n}");
    }
    match (r.qber_mean, r.qber_stddev) {
        (Some(m), Some(s)) => println!("qber: mean {m:.6}, stddev {s:.6}"),
        _ => println!("qber: n/a (no trial recovered)"),
    }
    println!("eve recoveries: {}", r.eve_recoveries);
}

/// Parses `args` and executes the command. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => args.resolve().and_then(|cfg| {
            if !cfg.auth {
                eprintln!("WARNING: {BARE_MODE_WARNING}");
            }
            run(&cfg).map(|r| print_report(&r))
        }),
        Command::Explain { trace, trial } => {
            read_trace(&trace).and_then(|evs| explain(&evs, trial)).map(|s| print!("{s}"))
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
