//! Experiment configuration, figure presets, parameter sweeps and result
//! files.
//!
//! An experiment is a sweep of one variable (threshold, molecule budget,
//! number of relays or bit interval) over a grid, repeated for one or more
//! series (protocols or parameter variants). Each grid point is evaluated
//! by the analytical engine, the simulator or both, and each series is
//! written as a comma-separated table next to a manifest from which the run
//! can be reproduced.
//!
//! Configuration files are TOML with the sections `network`, `timing`,
//! `source`, `budget`, `detection`, `sweep`, `run` and an array of
//! `[[series]]`; unknown keys are rejected. All quantities are SI units.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_network, AnalysisOptions, HistoryAveraging, SingleLink};
use crate::detection::LagConvention;
use crate::error::{Error, Result};
use crate::model::{
    split_budget, Network, NetworkTopology, Protocol, ProtocolConfig, Scheme, TimingConfig, DEFAULT_DIFFUSION,
    DEFAULT_MESSAGE_LEN, DEFAULT_P1, DEFAULT_RADIUS,
};
use crate::optimizer::{average_optimal, brute_force_network_xi, Parameter};
use crate::simulator::{Engine, Simulation};

/// Version recorded in manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepVariable {
    /// Detection threshold `ξ` (fixed part of adaptive thresholds).
    Threshold,
    /// Molecule budget (total or per node, as configured).
    Molecules,
    /// Number of relays `Q`.
    Relays,
    /// Bit interval `T` in seconds.
    Interval,
}

impl SweepVariable {
    pub fn key(self) -> &'static str {
        match self {
            SweepVariable::Threshold => "xi",
            SweepVariable::Molecules => "na",
            SweepVariable::Relays => "q",
            SweepVariable::Interval => "t",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "xi" => SweepVariable::Threshold,
            "na" => SweepVariable::Molecules,
            "q" => SweepVariable::Relays,
            "t" => SweepVariable::Interval,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineSelection {
    Analytical,
    Simulation,
    Both,
}

impl EngineSelection {
    pub fn key(self) -> &'static str {
        match self {
            EngineSelection::Analytical => "analytical",
            EngineSelection::Simulation => "sim",
            EngineSelection::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "analytical" => EngineSelection::Analytical,
            "sim" => EngineSelection::Simulation,
            "both" => EngineSelection::Both,
            _ => return None,
        })
    }

    fn analytical(self) -> bool {
        self != EngineSelection::Simulation
    }

    fn simulation(self) -> bool {
        self != EngineSelection::Analytical
    }
}

fn simulator_key(engine: Engine) -> &'static str {
    match engine {
        Engine::HitPath => "hitpath",
        Engine::Direct => "direct",
    }
}

fn parse_simulator(s: &str) -> Option<Engine> {
    Some(match s {
        "hitpath" => Engine::HitPath,
        "direct" => Engine::Direct,
        _ => return None,
    })
}

/// How the detection threshold of a grid point is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdRule {
    Fixed(u32),
    /// Minimises the analytical end-to-end error over `lo..=hi`.
    NetworkOptimal { lo: u32, hi: u32 },
    /// The bit- and history-averaged optimum of a single hop (adjacent-node
    /// spacing, per-node budget), applied at every node.
    AverageOptimal,
}

/// Molecule budget per bit 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    /// Baseline budget, split equally over the `Q + 1` transmitting nodes.
    Total(u64),
    /// Budget of every transmitting node.
    PerNode(u64),
}

impl Budget {
    fn with_value(self, n: u64) -> Self {
        match self {
            Budget::Total(_) => Budget::Total(n),
            Budget::PerNode(_) => Budget::PerNode(n),
        }
    }

    /// Per-node budgets of a network with `relays` relays.
    pub fn per_node(self, relays: usize) -> Vec<u64> {
        match self {
            Budget::Total(n) => split_budget(n, relays),
            Budget::PerNode(n) => vec![n; relays + 1],
        }
    }
}

/// Protocol of a series: a relaying protocol, or direct transmission
/// without relays using the whole budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesProtocol {
    Relayed(Protocol),
    Baseline,
}

impl SeriesProtocol {
    pub fn key(self) -> &'static str {
        match self {
            SeriesProtocol::Relayed(p) => p.acronym(),
            SeriesProtocol::Baseline => "baseline",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("baseline") {
            Ok(SeriesProtocol::Baseline)
        } else {
            Ok(SeriesProtocol::Relayed(s.parse()?))
        }
    }
}

/// One curve of an experiment; unset fields inherit the experiment's.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub protocol: SeriesProtocol,
    pub interval: Option<f64>,
    pub samples: Option<usize>,
    pub threshold: Option<ThresholdRule>,
    pub budget: Option<Budget>,
}

impl Series {
    pub fn protocol(protocol: SeriesProtocol) -> Self {
        Self {
            label: protocol.key().to_string(),
            protocol,
            interval: None,
            samples: None,
            threshold: None,
            budget: None,
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub scheme: Scheme,
    pub relays: usize,
    pub destination: f64,
    pub radius: f64,
    pub diffusion: f64,
    pub interval: f64,
    pub samples: usize,
    pub spacing: f64,
    pub p1: f64,
    pub length: usize,
    pub budget: Budget,
    pub threshold: ThresholdRule,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub series: Vec<Series>,
    pub engine: EngineSelection,
    pub simulator: Engine,
    pub trials: usize,
    pub seed: u64,
    /// Source sequences averaged by the analytical engine.
    pub sequences: usize,
    /// Whether the `wall_s` column is filled (it makes tables differ
    /// between otherwise identical runs).
    pub wall_time: bool,
    pub output: PathBuf,
}

/// Fully resolved parameters of one grid point of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct PointParameters {
    pub protocol: Protocol,
    pub relays: usize,
    pub interval: f64,
    pub samples: usize,
    pub molecules: Vec<u64>,
    pub threshold: ThresholdRule,
}

impl ExperimentSpec {
    /// Parameters of grid point `value` in `series`.
    pub fn point(&self, series: &Series, value: f64) -> Result<PointParameters> {
        let mut relays = self.relays;
        let mut interval = series.interval.unwrap_or(self.interval);
        let mut budget = series.budget.unwrap_or(self.budget);
        let mut threshold = series.threshold.unwrap_or(self.threshold);
        match self.sweep {
            SweepVariable::Threshold => threshold = ThresholdRule::Fixed(value as u32),
            SweepVariable::Molecules => budget = budget.with_value(value as u64),
            SweepVariable::Relays => relays = value as usize,
            SweepVariable::Interval => interval = value,
        }
        let (protocol, relays, molecules) = match series.protocol {
            SeriesProtocol::Baseline => {
                let total = budget.per_node(relays).iter().sum();
                (Protocol::Fd, 0, vec![total])
            }
            // without relays every protocol reduces to the direct link
            SeriesProtocol::Relayed(_) if relays == 0 => (Protocol::Fd, 0, budget.per_node(0)),
            SeriesProtocol::Relayed(p) => (p, relays, budget.per_node(relays)),
        };
        Ok(PointParameters {
            protocol,
            relays,
            interval,
            samples: series.samples.unwrap_or(self.samples),
            molecules,
            threshold,
        })
    }

    /// The network of a grid point with threshold `xi`.
    pub fn network(&self, point: &PointParameters, xi: u32) -> Result<Network> {
        let topology = NetworkTopology::build(self.destination, point.relays, self.radius, self.scheme, self.diffusion)?;
        let protocol = ProtocolConfig::new(self.scheme, point.protocol, xi, point.molecules.clone())?;
        let timing = TimingConfig::new(point.interval, point.samples, self.spacing)?;
        Network::new(topology, protocol, timing, self.p1, self.length)
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            sequences: self.sequences,
            seed: self.seed,
            ..AnalysisOptions::default()
        }
    }

    /// Resolves the threshold rule of a grid point.
    pub fn threshold(&self, point: &PointParameters) -> Result<u32> {
        match point.threshold {
            ThresholdRule::Fixed(xi) => Ok(xi),
            ThresholdRule::NetworkOptimal { lo, hi } => {
                let network = self.network(point, lo.max(1))?;
                let (xi, _) =
                    brute_force_network_xi(&network, self.analysis_options(), u64::from(lo)..=u64::from(hi))?;
                Ok(xi as u32)
            }
            ThresholdRule::AverageOptimal => {
                let avg = average_optimal(
                    Parameter::Threshold,
                    &self.hop_link(point, 1)?,
                    self.length,
                    &self.history_averaging(),
                )?;
                Ok(avg.value.round().max(1.0) as u32)
            }
        }
    }

    /// The single link between adjacent nodes of a grid point: hop
    /// distance `x_D/(Q+1)`, the first node's budget and threshold `xi`.
    pub fn hop_link(&self, point: &PointParameters, xi: u32) -> Result<SingleLink> {
        let hop = self.destination / (point.relays + 1) as f64;
        let topology = NetworkTopology::build(hop, 0, self.radius, Scheme::MultiMolecule, self.diffusion)?;
        let protocol = ProtocolConfig::new(Scheme::MultiMolecule, Protocol::Fd, xi, vec![point.molecules[0]])?;
        let timing = TimingConfig::new(point.interval, point.samples, self.spacing)?;
        SingleLink::from_network(&Network::new(topology, protocol, timing, self.p1, self.length)?)
    }

    pub fn history_averaging(&self) -> HistoryAveraging {
        HistoryAveraging {
            seed: self.seed,
            ..HistoryAveraging::default()
        }
    }
}

/// One grid point of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub value: f64,
    /// Threshold used (after optimisation, if any).
    pub threshold: Option<u32>,
    pub analytical: Option<f64>,
    pub simulated: Option<f64>,
    pub simulated_se: Option<f64>,
    pub trials: usize,
    pub wall_s: f64,
    /// Set when an engine failed at this point.
    pub failure: Option<String>,
}

/// Rows of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesResult {
    pub label: String,
    pub rows: Vec<ResultRow>,
}

/// Runs every series over the grid. A failing grid point yields a row
/// with `failure` set and the run continues.
pub fn run_experiment(spec: &ExperimentSpec) -> Vec<SeriesResult> {
    spec.series
        .iter()
        .map(|series| SeriesResult {
            label: series.label.clone(),
            rows: spec
                .values
                .iter()
                .map(|&value| {
                    let start = Instant::now();
                    let mut row = ResultRow {
                        value,
                        threshold: None,
                        analytical: None,
                        simulated: None,
                        simulated_se: None,
                        trials: 0,
                        wall_s: 0.0,
                        failure: None,
                    };
                    if let Err(e) = run_point(spec, series, value, &mut row) {
                        row.failure = Some(e.to_string());
                    }
                    row.wall_s = start.elapsed().as_secs_f64();
                    row
                })
                .collect(),
        })
        .collect()
}

fn run_point(spec: &ExperimentSpec, series: &Series, value: f64, row: &mut ResultRow) -> Result<()> {
    let point = spec.point(series, value)?;
    let xi = spec.threshold(&point)?;
    row.threshold = Some(xi);
    let network = spec.network(&point, xi)?;
    if spec.engine.analytical() {
        row.analytical = Some(evaluate_network(&network, spec.analysis_options())?.end_to_end());
    }
    if spec.engine.simulation() {
        let estimate = Simulation::new(&network, spec.simulator, LagConvention::default())?
            .estimate(spec.trials, spec.seed)?
            .end_to_end();
        row.simulated = Some(estimate.rate);
        row.simulated_se = Some(estimate.se);
        row.trials = estimate.trials;
    }
    Ok(())
}

/// Header of result tables.
pub const TABLE_HEADER: &str = "sweep_var,value,analytical_err,sim_err,sim_se,trials,wall_s";

fn field(value: Option<f64>) -> String {
    value.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Renders rows as a table; absent values are empty fields.
pub fn format_table(sweep: SweepVariable, rows: &[ResultRow], wall_time: bool) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sweep.key(),
            row.value,
            field(row.analytical),
            field(row.simulated),
            field(row.simulated_se),
            row.trials,
            if wall_time { format!("{:.3}", row.wall_s) } else { String::new() },
        );
    }
    out
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes one table per series (`<label>.csv`) and `manifest.toml` into
/// `dir`; returns the written paths.
pub fn emit_results(spec: &ExperimentSpec, results: &[SeriesResult], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.iter().all(|r| r.rows.is_empty()) {
        return Err(crate::error::invalid("rows", "nothing to write"));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for result in results {
        let path = dir.join(format!("{}.csv", file_stem(&result.label)));
        write_file(&path, &format_table(spec.sweep, &result.rows, spec.wall_time))?;
        written.push(path);
    }
    let failures: Vec<String> = results
        .iter()
        .flat_map(|r| {
            r.rows.iter().filter_map(move |row| {
                row.failure
                    .as_ref()
                    .map(|f| format!("{} {}={}: {f}", r.label, spec.sweep.key(), row.value))
            })
        })
        .collect();
    let path = dir.join("manifest.toml");
    write_file(&path, &manifest(spec, failures)?)?;
    written.push(path);
    Ok(written)
}

/// The experiment with every default made explicit, plus the artifact version
/// and any failures, as a config file that `load_config` accepts.
pub fn manifest(spec: &ExperimentSpec, failures: Vec<String>) -> Result<String> {
    let mut raw = RawConfig::from_spec(spec);
    raw.manifest = Some(RawManifest {
        version: VERSION.to_string(),
        failures,
    });
    toml::to_string(&raw).map_err(|e| Error::Config {
        key: "manifest".into(),
        reason: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// configuration files

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    network: Option<RawNetwork>,
    timing: Option<RawTiming>,
    source: Option<RawSource>,
    budget: Option<RawBudget>,
    detection: Option<RawDetection>,
    sweep: Option<RawSweep>,
    run: Option<RawRun>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    series: Vec<RawSeries>,
    manifest: Option<RawManifest>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    scheme: Option<String>,
    relays: Option<i64>,
    destination: Option<f64>,
    radius: Option<f64>,
    diffusion: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiming {
    interval: Option<f64>,
    samples: Option<i64>,
    spacing: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    p1: Option<f64>,
    length: Option<i64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    total: Option<i64>,
    per_node: Option<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawThreshold {
    Fixed(i64),
    Rule(String),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    threshold: Option<RawThreshold>,
    search: Option<Vec<i64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: Option<String>,
    values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    label: Option<String>,
    protocol: Option<String>,
    interval: Option<f64>,
    samples: Option<i64>,
    threshold: Option<RawThreshold>,
    search: Option<Vec<i64>>,
    total: Option<i64>,
    per_node: Option<i64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    engine: Option<String>,
    simulator: Option<String>,
    trials: Option<i64>,
    seed: Option<i64>,
    sequences: Option<i64>,
    wall_time: Option<bool>,
    output: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: String,
    #[serde(default)]
    failures: Vec<String>,
}

fn config_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| config_error(key, "required key is missing"))
}

fn positive(value: f64, key: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(config_error(key, format!("must be a positive number, got {value}")))
    }
}

fn count(value: i64, key: &str, min: i64) -> Result<u64> {
    if value >= min {
        Ok(value as u64)
    } else {
        Err(config_error(key, format!("must be an integer >= {min}, got {value}")))
    }
}

const DEFAULT_DESTINATION: f64 = 1e-6;
const DEFAULT_INTERVAL: f64 = 200e-6;
const DEFAULT_SAMPLES: usize = 10;
const DEFAULT_SPACING: f64 = 20e-6;
const DEFAULT_BUDGET: u64 = 20_000;
const DEFAULT_SEARCH: (u32, u32) = (1, 80);
const DEFAULT_TRIALS: usize = 1000;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_SEQUENCES: usize = 200;

fn parse_threshold(raw: &RawThreshold, search: Option<&Vec<i64>>, key: &str) -> Result<ThresholdRule> {
    match raw {
        RawThreshold::Fixed(v) => Ok(ThresholdRule::Fixed(
            u32::try_from(count(*v, key, 1)?).map_err(|_| config_error(key, "too large"))?,
        )),
        RawThreshold::Rule(s) => match s.as_str() {
            "optimal" => {
                let (lo, hi) = match search {
                    None => DEFAULT_SEARCH,
                    Some(v) if v.len() == 2 && v[0] >= 1 && v[1] >= v[0] && v[1] <= i64::from(u32::MAX) => {
                        (v[0] as u32, v[1] as u32)
                    }
                    Some(v) => {
                        return Err(config_error(
                            &key.replace("threshold", "search"),
                            format!("expected [lo, hi] with 1 <= lo <= hi, got {v:?}"),
                        ))
                    }
                };
                Ok(ThresholdRule::NetworkOptimal { lo, hi })
            }
            "average-optimal" => Ok(ThresholdRule::AverageOptimal),
            other => Err(config_error(
                key,
                format!("expected an integer, \"optimal\" or \"average-optimal\", got \"{other}\""),
            )),
        },
    }
}

fn parse_budget(total: Option<i64>, per_node: Option<i64>, prefix: &str) -> Result<Option<Budget>> {
    match (total, per_node) {
        (Some(_), Some(_)) => Err(config_error(
            &format!("{prefix}per_node"),
            format!("give either {prefix}total or {prefix}per_node"),
        )),
        (Some(n), None) => Ok(Some(Budget::Total(count(n, &format!("{prefix}total"), 1)?))),
        (None, Some(n)) => Ok(Some(Budget::PerNode(count(n, &format!("{prefix}per_node"), 1)?))),
        (None, None) => Ok(None),
    }
}

impl RawConfig {
    fn into_spec(self) -> Result<ExperimentSpec> {
        let network = self.network.unwrap_or_default();
        let timing = self.timing.unwrap_or_default();
        let source = self.source.unwrap_or_default();
        let detection = self.detection.unwrap_or_default();
        let sweep = self.sweep.unwrap_or_default();
        let run = self.run.unwrap_or_default();

        let scheme: Scheme = require(network.scheme, "network.scheme")?
            .parse()
            .map_err(|e: Error| config_error("network.scheme", e.to_string()))?;
        let relays = count(require(network.relays, "network.relays")?, "network.relays", 0)? as usize;
        let destination = positive(network.destination.unwrap_or(DEFAULT_DESTINATION), "network.destination")?;
        let radius = positive(network.radius.unwrap_or(DEFAULT_RADIUS), "network.radius")?;
        let diffusion = positive(network.diffusion.unwrap_or(DEFAULT_DIFFUSION), "network.diffusion")?;
        let interval = positive(timing.interval.unwrap_or(DEFAULT_INTERVAL), "timing.interval")?;
        let samples = match timing.samples {
            Some(m) => count(m, "timing.samples", 1)? as usize,
            None => DEFAULT_SAMPLES,
        };
        let spacing = positive(timing.spacing.unwrap_or(DEFAULT_SPACING), "timing.spacing")?;
        let p1 = source.p1.unwrap_or(DEFAULT_P1);
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(config_error("source.p1", format!("must lie in (0, 1), got {p1}")));
        }
        let length = match source.length {
            Some(l) => count(l, "source.length", 1)? as usize,
            None => DEFAULT_MESSAGE_LEN,
        };
        let budget = match self.budget {
            Some(b) => parse_budget(b.total, b.per_node, "budget.")?.unwrap_or(Budget::Total(DEFAULT_BUDGET)),
            None => Budget::Total(DEFAULT_BUDGET),
        };
        let threshold = match &detection.threshold {
            Some(t) => parse_threshold(t, detection.search.as_ref(), "detection.threshold")?,
            None => ThresholdRule::NetworkOptimal {
                lo: DEFAULT_SEARCH.0,
                hi: DEFAULT_SEARCH.1,
            },
        };
        let variable = require(sweep.variable, "sweep.variable")?;
        let sweep_var = SweepVariable::parse(&variable)
            .ok_or_else(|| config_error("sweep.variable", format!("expected xi, na, q or t, got \"{variable}\"")))?;
        let values = require(sweep.values, "sweep.values")?;
        if values.is_empty() {
            return Err(config_error("sweep.values", "grid is empty"));
        }
        for &v in &values {
            let ok = match sweep_var {
                SweepVariable::Threshold | SweepVariable::Molecules => v >= 1.0 && v.fract() == 0.0,
                SweepVariable::Relays => v >= 0.0 && v.fract() == 0.0,
                SweepVariable::Interval => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(config_error("sweep.values", format!("{v} is not a valid {variable} value")));
            }
        }

        let mut series = Vec::new();
        for (i, s) in self.series.into_iter().enumerate() {
            let key = |k: &str| format!("series[{i}].{k}");
            let protocol = SeriesProtocol::parse(&require(s.protocol, &key("protocol"))?)
                .map_err(|e| config_error(&key("protocol"), e.to_string()))?;
            series.push(Series {
                label: s.label.unwrap_or_else(|| protocol.key().to_string()),
                protocol,
                interval: s.interval.map(|v| positive(v, &key("interval"))).transpose()?,
                samples: s
                    .samples
                    .map(|v| count(v, &key("samples"), 1).map(|m| m as usize))
                    .transpose()?,
                threshold: s
                    .threshold
                    .as_ref()
                    .map(|t| parse_threshold(t, s.search.as_ref(), &key("threshold")))
                    .transpose()?,
                budget: parse_budget(s.total, s.per_node, &format!("series[{i}]."))?,
            });
        }
        if series.is_empty() {
            series.push(Series::protocol(SeriesProtocol::Relayed(Protocol::Fd)));
        }
        for s in &series {
            if let SeriesProtocol::Relayed(p) = s.protocol {
                if !p.allowed_for(scheme) {
                    return Err(config_error(
                        "series.protocol",
                        format!("{} is not defined for {}", p.acronym(), scheme.acronym()),
                    ));
                }
            }
        }

        let engine = match run.engine {
            Some(e) => EngineSelection::parse(&e)
                .ok_or_else(|| config_error("run.engine", format!("expected analytical, sim or both, got \"{e}\"")))?,
            None => EngineSelection::Analytical,
        };
        let simulator = match run.simulator {
            Some(s) => parse_simulator(&s)
                .ok_or_else(|| config_error("run.simulator", format!("expected hitpath or direct, got \"{s}\"")))?,
            None => Engine::default(),
        };
        Ok(ExperimentSpec {
            name: self.name.unwrap_or_else(|| "experiment".to_string()),
            scheme,
            relays,
            destination,
            radius,
            diffusion,
            interval,
            samples,
            spacing,
            p1,
            length,
            budget,
            threshold,
            sweep: sweep_var,
            values,
            series,
            engine,
            simulator,
            trials: match run.trials {
                Some(t) => count(t, "run.trials", 1)? as usize,
                None => DEFAULT_TRIALS,
            },
            seed: match run.seed {
                Some(s) => count(s, "run.seed", 0)?,
                None => DEFAULT_SEED,
            },
            sequences: match run.sequences {
                Some(s) => count(s, "run.sequences", 1)? as usize,
                None => DEFAULT_SEQUENCES,
            },
            wall_time: run.wall_time.unwrap_or(false),
            output: PathBuf::from(run.output.unwrap_or_else(|| "results".to_string())),
        })
    }

    fn from_spec(spec: &ExperimentSpec) -> Self {
        let (threshold, search) = raw_threshold(spec.threshold);
        let (total, per_node) = raw_budget(Some(spec.budget));
        RawConfig {
            name: Some(spec.name.clone()),
            network: Some(RawNetwork {
                scheme: Some(spec.scheme.acronym().to_string()),
                relays: Some(spec.relays as i64),
                destination: Some(spec.destination),
                radius: Some(spec.radius),
                diffusion: Some(spec.diffusion),
            }),
            timing: Some(RawTiming {
                interval: Some(spec.interval),
                samples: Some(spec.samples as i64),
                spacing: Some(spec.spacing),
            }),
            source: Some(RawSource {
                p1: Some(spec.p1),
                length: Some(spec.length as i64),
            }),
            budget: Some(RawBudget { total, per_node }),
            detection: Some(RawDetection { threshold, search }),
            sweep: Some(RawSweep {
                variable: Some(spec.sweep.key().to_string()),
                values: Some(spec.values.clone()),
            }),
            run: Some(RawRun {
                engine: Some(spec.engine.key().to_string()),
                simulator: Some(simulator_key(spec.simulator).to_string()),
                trials: Some(spec.trials as i64),
                seed: Some(spec.seed as i64),
                sequences: Some(spec.sequences as i64),
                wall_time: Some(spec.wall_time),
                output: Some(spec.output.display().to_string()),
            }),
            series: spec
                .series
                .iter()
                .map(|s| {
                    let (threshold, search) = s.threshold.map(raw_threshold).unwrap_or((None, None));
                    let (total, per_node) = raw_budget(s.budget);
                    RawSeries {
                        label: Some(s.label.clone()),
                        protocol: Some(s.protocol.key().to_string()),
                        interval: s.interval,
                        samples: s.samples.map(|m| m as i64),
                        threshold,
                        search,
                        total,
                        per_node,
                    }
                })
                .collect(),
            manifest: None,
        }
    }
}

fn raw_threshold(rule: ThresholdRule) -> (Option<RawThreshold>, Option<Vec<i64>>) {
    match rule {
        ThresholdRule::Fixed(xi) => (Some(RawThreshold::Fixed(i64::from(xi))), None),
        ThresholdRule::NetworkOptimal { lo, hi } => (
            Some(RawThreshold::Rule("optimal".into())),
            Some(vec![i64::from(lo), i64::from(hi)]),
        ),
        ThresholdRule::AverageOptimal => (Some(RawThreshold::Rule("average-optimal".into())), None),
    }
}

fn raw_budget(budget: Option<Budget>) -> (Option<i64>, Option<i64>) {
    match budget {
        Some(Budget::Total(n)) => (Some(n as i64), None),
        Some(Budget::PerNode(n)) => (None, Some(n as i64)),
        None => (None, None),
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        // serde names the offending key in its message
        config_error(&e.span().map(|s| format!("at byte {}", s.start)).unwrap_or_default(), e.message())
    })?;
    raw.into_spec()
}

/// Loads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// figure presets

/// Names of the built-in presets.
pub const PRESETS: [&str; 7] = ["opt-na", "opt-xi", "mm-q", "2m-xi", "2m-q", "sm-xi", "sm-q"];

/// Fixed parameters of each built-in preset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetParameters {
    pub name: &'static str,
    pub scheme: Scheme,
    /// Fixed relay count (`None` when `Q` is swept).
    pub relays: Option<usize>,
    pub destination: f64,
    /// Samples per interval (one series per value).
    pub samples: &'static [usize],
    /// Bit intervals (one series per value).
    pub intervals: &'static [f64],
    pub spacing: f64,
    /// Baseline budget (`None` when swept or given per series).
    pub budget: Option<u64>,
    /// Protocol series; "baseline" is direct transmission.
    pub protocols: &'static [&'static str],
}

/// Parameter table of the presets.
pub const PRESET_TABLE: [PresetParameters; 7] = [
    PresetParameters {
        name: "opt-na",
        scheme: Scheme::MultiMolecule,
        relays: Some(0),
        destination: 250e-9,
        samples: &[5, 10],
        intervals: &[200e-6, 400e-6],
        spacing: 20e-6,
        budget: None,
        protocols: &["FD"],
    },
    PresetParameters {
        name: "opt-xi",
        scheme: Scheme::MultiMolecule,
        relays: Some(0),
        destination: 250e-9,
        samples: &[5, 10],
        intervals: &[200e-6, 400e-6],
        spacing: 20e-6,
        budget: None,
        protocols: &["FD"],
    },
    PresetParameters {
        name: "mm-q",
        scheme: Scheme::MultiMolecule,
        relays: None,
        destination: 1e-6,
        samples: &[10],
        intervals: &[200e-6, 400e-6],
        spacing: 20e-6,
        budget: Some(20_000),
        protocols: &["FD"],
    },
    PresetParameters {
        name: "2m-xi",
        scheme: Scheme::TwoMolecule,
        relays: Some(2),
        destination: 1e-6,
        samples: &[10],
        intervals: &[200e-6],
        spacing: 20e-6,
        budget: Some(20_000),
        protocols: &["FD", "FD-A", "baseline"],
    },
    PresetParameters {
        name: "2m-q",
        scheme: Scheme::TwoMolecule,
        relays: None,
        destination: 1e-6,
        samples: &[10],
        intervals: &[200e-6],
        spacing: 20e-6,
        budget: Some(20_000),
        protocols: &["FD-A"],
    },
    PresetParameters {
        name: "sm-xi",
        scheme: Scheme::SingleMolecule,
        relays: Some(1),
        destination: 600e-9,
        samples: &[5],
        intervals: &[400e-6],
        spacing: 20e-6,
        budget: Some(10_000),
        protocols: &["FD", "HD", "FD-A-SI", "baseline"],
    },
    PresetParameters {
        name: "sm-q",
        scheme: Scheme::SingleMolecule,
        relays: None,
        destination: 1e-6,
        samples: &[10],
        intervals: &[200e-6, 400e-6],
        spacing: 20e-6,
        budget: Some(20_000),
        protocols: &["FD-A-BI-SI", "HD-A-BI", "FD-A-SI", "HD"],
    },
];

/// Thresholds of the molecule sweep preset (one series per value).
const OPT_NA_THRESHOLDS: [u32; 2] = [5, 10];
/// Budgets of the threshold sweep preset (one series per value).
const OPT_XI_BUDGETS: [u64; 2] = [2000, 4000];

fn us(t: f64) -> String {
    format!("{}", (t * 1e6).round())
}

/// The experiment of preset `name`.
pub fn figure_preset(name: &str) -> Result<ExperimentSpec> {
    let params = PRESET_TABLE
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.to_string(),
            valid: PRESETS.join(", "),
        })?;
    let mut spec = ExperimentSpec {
        name: name.to_string(),
        scheme: params.scheme,
        relays: params.relays.unwrap_or(0),
        destination: params.destination,
        radius: DEFAULT_RADIUS,
        diffusion: DEFAULT_DIFFUSION,
        interval: params.intervals[0],
        samples: params.samples[0],
        spacing: params.spacing,
        p1: DEFAULT_P1,
        length: DEFAULT_MESSAGE_LEN,
        budget: Budget::Total(params.budget.unwrap_or(DEFAULT_BUDGET)),
        threshold: ThresholdRule::NetworkOptimal {
            lo: DEFAULT_SEARCH.0,
            hi: DEFAULT_SEARCH.1,
        },
        sweep: SweepVariable::Threshold,
        values: Vec::new(),
        series: Vec::new(),
        engine: EngineSelection::Both,
        simulator: Engine::HitPath,
        trials: 200,
        seed: DEFAULT_SEED,
        sequences: DEFAULT_SEQUENCES,
        wall_time: false,
        output: PathBuf::from("results").join(name),
    };
    let protocol_series = || -> Result<Vec<Series>> {
        params
            .protocols
            .iter()
            .map(|p| SeriesProtocol::parse(p).map(Series::protocol))
            .collect()
    };
    match name {
        "opt-na" | "opt-xi" => {
            let molecules = name == "opt-na";
            spec.sweep = if molecules {
                SweepVariable::Molecules
            } else {
                SweepVariable::Threshold
            };
            spec.values = if molecules {
                (0..=24).map(|k| (500.0 * 1.15f64.powi(k)).round()).collect()
            } else {
                (1..=30).map(|k| f64::from(2 * k)).collect()
            };
            spec.trials = 500;
            for &m in params.samples {
                for &t in params.intervals {
                    for k in 0..2 {
                        let (label, threshold, budget) = if molecules {
                            let xi = OPT_NA_THRESHOLDS[k];
                            (format!("M{m}-T{}-xi{xi}", us(t)), Some(ThresholdRule::Fixed(xi)), None)
                        } else {
                            let n = OPT_XI_BUDGETS[k];
                            (format!("M{m}-T{}-na{n}", us(t)), None, Some(Budget::Total(n)))
                        };
                        spec.series.push(Series {
                            label,
                            protocol: SeriesProtocol::Relayed(Protocol::Fd),
                            interval: Some(t),
                            samples: Some(m),
                            threshold,
                            budget,
                        });
                    }
                }
            }
        }
        "mm-q" | "2m-q" | "sm-q" => {
            spec.sweep = SweepVariable::Relays;
            spec.values = (0..=if name == "2m-q" { 6 } else { 4 }).map(f64::from).collect();
            spec.threshold = if name == "mm-q" {
                ThresholdRule::AverageOptimal
            } else {
                ThresholdRule::NetworkOptimal { lo: 1, hi: 60 }
            };
            spec.trials = 100;
            spec.sequences = 100;
            for &t in params.intervals {
                for mut s in protocol_series()? {
                    if params.intervals.len() > 1 {
                        s.label = format!("{}-T{}", s.label, us(t));
                        s.interval = Some(t);
                    }
                    spec.series.push(s);
                }
            }
        }
        "2m-xi" | "sm-xi" => {
            spec.sweep = SweepVariable::Threshold;
            spec.values = (1..=20).map(|k| f64::from(3 * k)).collect();
            spec.trials = 200;
            spec.series = protocol_series()?;
        }
        _ => unreachable!("every table entry has a builder"),
    }
    Ok(spec)
}

// ---------------------------------------------------------------------------
// invariant suite

/// Outcome of one invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Fast checks of the toolkit's invariants (a few seconds in total).
pub fn invariant_suite(seed: u64) -> Vec<Check> {
    use crate::channel::{p_ob, p_self, poisson_cdf};
    use crate::model::{sphere_volume, MoleculeType};
    use crate::simulator::{brownian_step, release, sample_count, trial_rng, TrialControls};
    use rayon::prelude::*;

    let kind = MoleculeType(1);
    let d = DEFAULT_DIFFUSION;
    let r = DEFAULT_RADIUS;
    let mut checks = Vec::new();

    // conservation: stepping never creates or removes molecules
    let mut store = crate::simulator::ParticleStore::new();
    release(&mut store, [0.0; 3], kind, 1000);
    release(&mut store, [1e-6, 0.0, 0.0], MoleculeType(2), 500);
    let mut rng = trial_rng(seed, 0);
    for _ in 0..10 {
        brownian_step(&mut store, 20e-6, |_| d, &mut rng);
    }
    checks.push(check(
        "molecule conservation",
        store.len() == 1500,
        format!("{} molecules after 10 steps of 1500 released", store.len()),
    ));

    // observed counts of an impulse are Poisson with mean N·p_ob
    let (n, distance, t, trials) = (10_000u64, 250e-9, 100e-6, 2000u64);
    let counts: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut store = crate::simulator::ParticleStore::new();
            release(&mut store, [0.0; 3], kind, n);
            brownian_step(&mut store, t, |_| d, &mut trial_rng(seed ^ 0x9e37, i));
            sample_count(&store, [distance, 0.0, 0.0], r, kind) as f64
        })
        .collect();
    let (mean, var) = mean_and_variance(&counts);
    let expected = n as f64 * p_ob(distance, t, sphere_volume(r), d);
    let se = (var / trials as f64).sqrt();
    checks.push(check(
        "poisson observation: mean",
        (mean - expected).abs() <= 3.0 * se,
        format!("mean {mean:.3}, expected {expected:.3}, 3 SE {:.3}", 3.0 * se),
    ));
    let dispersion = var / mean;
    checks.push(check(
        "poisson observation: dispersion",
        (0.9..=1.1).contains(&dispersion),
        format!("variance/mean {dispersion:.4} over {trials} trials"),
    ));

    // a node observes its own release with probability p_self
    let (n, t) = (200_000u64, 20e-6);
    let mut store = crate::simulator::ParticleStore::new();
    release(&mut store, [0.0; 3], kind, n);
    brownian_step(&mut store, t, |_| d, &mut trial_rng(seed, 1));
    let freq = sample_count(&store, [0.0; 3], r, kind) as f64 / n as f64;
    let p = p_self(t, r, d);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    checks.push(check(
        "self-observation frequency",
        (freq - p).abs() <= 3.0 * se,
        format!("frequency {freq:.5}, p_self {p:.5}, 3 SE {:.5}", 3.0 * se),
    ));

    // Pr(X < xi) against direct summation
    let worst = [(1u32, 0.3), (5, 4.0), (12, 9.5), (40, 37.0), (120, 150.0)]
        .iter()
        .map(|&(xi, mean): &(u32, f64)| {
            let mut term = (-mean).exp();
            let mut sum = 0.0;
            for k in 0..xi {
                if k > 0 {
                    term *= mean / f64::from(k);
                }
                sum += term;
            }
            (poisson_cdf(xi, mean) - sum).abs() / sum.max(1e-300)
        })
        .fold(0.0, f64::max);
    checks.push(check(
        "poisson cdf",
        worst < 1e-10,
        format!("worst relative deviation {worst:.2e}"),
    ));

    // budget rule and forced-relay alignment on a small network
    let budgets_ok = (0..=8).all(|q| split_budget(20_001, q).iter().sum::<u64>() == 20_001);
    checks.push(check(
        "equal budget split",
        budgets_ok,
        "per-node budgets sum to the baseline budget for Q = 0..8".into(),
    ));
    let network = NetworkTopology::build(1e-6, 2, r, Scheme::MultiMolecule, d).and_then(|topology| {
        let protocol = ProtocolConfig::uniform(Scheme::MultiMolecule, Protocol::Fd, 5, 2, 3000)?;
        let timing = TimingConfig::new(200e-6, 10, 20e-6)?;
        Network::new(topology, protocol, timing, DEFAULT_P1, 12)
    });
    match network.and_then(|n| Simulation::new(&n, Engine::HitPath, LagConvention::default())) {
        Ok(sim) => {
            let trial = sim.run_trial_with(seed, 0, TrialControls { perfect_relays: true });
            checks.push(check(
                "forced-relay alignment",
                trial.detected[..2].iter().all(|d| *d == trial.source),
                "relays forced to the source reproduce it at every hop".into(),
            ));
            let a = sim.estimate(8, seed);
            let b = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map(|pool| pool.install(|| sim.estimate(8, seed)));
            let same = matches!((&a, &b), (Ok(a), Ok(Ok(b))) if a == b);
            checks.push(check(
                "determinism across worker counts",
                same,
                "8 trials on the global pool and on one worker".into(),
            ));
        }
        Err(e) => checks.push(check("forced-relay alignment", false, e.to_string())),
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[network]
scheme = "MM"
relays = 1

[sweep]
variable = "xi"
values = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(spec.p1, 0.5);
        assert_eq!(spec.length, 50);
        assert_eq!(spec.radius, 45e-9);
        assert_eq!(spec.diffusion, 4.365e-10);
        assert_eq!(spec.scheme, Scheme::MultiMolecule);
        assert_eq!(spec.relays, 1);
        assert_eq!(spec.values.len(), 12);
        assert_eq!(spec.series, vec![Series::protocol(SeriesProtocol::Relayed(Protocol::Fd))]);
    }

    #[test]
    fn misspelled_key_is_named() {
        let text = MINIMAL.replace("relays = 1", "relays = 1\nradious = 4e-8");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("radious"), "{err}");
    }

    #[test]
    fn missing_and_invalid_keys_are_named() {
        let err = parse_config(&MINIMAL.replace("relays = 1", "")).unwrap_err().to_string();
        assert!(err.contains("network.relays"), "{err}");
        let err = parse_config(&MINIMAL.replace("relays = 1", "relays = 1\nradius = -1.0"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("network.radius"), "{err}");
        let err = parse_config(&MINIMAL.replace("[5, 10,", "[0.5, 10,")).unwrap_err().to_string();
        assert!(err.contains("sweep.values"), "{err}");
        let err = parse_config(&format!("{MINIMAL}\n[[series]]\nprotocol = \"HD\"\n"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("series.protocol"), "{err}");
    }

    #[test]
    fn equal_budget_rule() {
        let mut spec = parse_config(MINIMAL).unwrap();
        spec.budget = Budget::Total(20_001);
        spec.sweep = SweepVariable::Relays;
        for q in 0..=4 {
            let p = spec.point(&spec.series[0].clone(), f64::from(q)).unwrap();
            assert_eq!(p.molecules.len(), q as usize + 1);
            assert_eq!(p.molecules.iter().sum::<u64>(), 20_001);
            let b = spec.point(&Series::protocol(SeriesProtocol::Baseline), f64::from(q)).unwrap();
            assert_eq!((b.relays, b.molecules.clone()), (0, vec![20_001]));
        }
    }

    #[test]
    fn manifest_round_trips() {
        for name in PRESETS {
            let spec = figure_preset(name).unwrap();
            let text = manifest(&spec, vec!["x failed".into()]).unwrap();
            assert_eq!(parse_config(&text).unwrap(), spec, "{name}");
        }
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&manifest(&spec, vec![]).unwrap()).unwrap(), spec);
    }

    #[test]
    fn table_layout() {
        let rows: Vec<ResultRow> = (1..=12)
            .map(|k| ResultRow {
                value: f64::from(5 * k),
                threshold: Some(5 * k as u32),
                analytical: Some(0.125),
                simulated: None,
                simulated_se: None,
                trials: 0,
                wall_s: 1.5,
                failure: None,
            })
            .collect();
        let table = format_table(SweepVariable::Threshold, &rows, false);
        assert_eq!(table.lines().count(), 13);
        assert_eq!(table.lines().next(), Some(TABLE_HEADER));
        assert_eq!(table.lines().nth(1), Some("xi,5,1.25e-1,,,0,"));
        assert!(format_table(SweepVariable::Threshold, &rows, true).lines().nth(1).unwrap().ends_with(",1.500"));
    }

    #[test]
    fn presets_match_parameter_table() {
        for params in &PRESET_TABLE {
            let spec = figure_preset(params.name).unwrap();
            assert_eq!(spec.scheme, params.scheme);
            assert_eq!(spec.destination, params.destination);
            assert_eq!(spec.spacing, params.spacing);
            match params.relays {
                Some(q) => {
                    assert_eq!(spec.relays, q);
                    assert_ne!(spec.sweep, SweepVariable::Relays);
                }
                None => assert_eq!(spec.sweep, SweepVariable::Relays),
            }
            if let Some(n) = params.budget {
                assert_eq!(spec.budget, Budget::Total(n));
            }
            for s in &spec.series {
                let p = spec.point(s, spec.values[0]).unwrap();
                assert!(params.samples.contains(&p.samples), "{}", params.name);
                assert!(params.intervals.contains(&p.interval), "{}", params.name);
                assert!(params.protocols.contains(&s.protocol.key()), "{}", params.name);
            }
            let covered = |f: &dyn Fn(&Series) -> bool| spec.series.iter().any(f);
            for &m in params.samples {
                assert!(covered(&|s| s.samples.unwrap_or(spec.samples) == m));
            }
            for &t in params.intervals {
                assert!(covered(&|s| s.interval.unwrap_or(spec.interval) == t));
            }
            for &p in params.protocols {
                assert!(covered(&|s| s.protocol.key() == p));
            }
        }
    }

    #[test]
    fn preset_examples() {
        let sm = figure_preset("sm-xi").unwrap();
        assert_eq!((sm.relays, sm.interval, sm.destination, sm.samples), (1, 400e-6, 600e-9, 5));
        assert_eq!(sm.budget, Budget::Total(10_000));
        let protocols: Vec<&str> = sm.series.iter().map(|s| s.protocol.key()).collect();
        assert_eq!(protocols, ["FD", "HD", "FD-A-SI", "baseline"]);
        let mm = figure_preset("mm-q").unwrap();
        assert_eq!((mm.destination, mm.samples, mm.spacing), (1e-6, 10, 20e-6));
        assert_eq!(mm.budget, Budget::Total(20_000));
        let na = figure_preset("opt-na").unwrap();
        assert_eq!(na.destination, 250e-9);
        assert_eq!(na.series.len(), 8);
        let err = figure_preset("fig-9").unwrap_err().to_string();
        assert!(PRESETS.iter().all(|p| err.contains(p)), "{err}");
    }

    #[test]
    fn invariant_suite_passes() {
        for c in invariant_suite(7) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn failing_point_is_marked() {
        let mut spec = parse_config(MINIMAL).unwrap();
        spec.values = vec![5.0];
        // a spacing that does not divide the interval is rejected per point
        spec.spacing = 30e-6;
        let rows = run_experiment(&spec);
        assert!(rows[0].rows[0].failure.is_some());
        assert!(rows[0].rows[0].analytical.is_none());
    }
}
