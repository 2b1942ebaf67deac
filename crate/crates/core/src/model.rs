//! Network description: nodes on a line, molecule assignment per relaying
//! scheme, timing, source statistics and the full-/half-duplex transmit
//! schedules.
//!
//! Nodes are indexed `0 ..= Q + 1`: node 0 is the source `S`, nodes
//! `1..=Q` are the relays and node `Q + 1` is the destination `D`.
//! Bit intervals and source bits are 1-based throughout, matching the way
//! schedules are usually written down; storage is 0-based.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A transmitted or detected bit. Kept as an integer so it can be used
/// directly as a weight in signal sums.
pub type Bit = u8;

/// Diffusion coefficient used in every preset, m²/s.
pub const DEFAULT_DIFFUSION: f64 = 4.365e-10;
/// Radius of relays and destination in every preset, m.
pub const DEFAULT_RADIUS: f64 = 45e-9;
/// Probability of a source 1.
pub const DEFAULT_P1: f64 = 0.5;
/// Source message length in bits.
pub const DEFAULT_MESSAGE_LEN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// A distinct molecule type on every hop.
    #[serde(rename = "MM-MH")]
    MultiMolecule,
    /// Two molecule types alternating between hops.
    #[serde(rename = "2M-MH")]
    TwoMolecule,
    /// One molecule type shared by all nodes.
    #[serde(rename = "SM-MH")]
    SingleMolecule,
}

impl Scheme {
    pub fn acronym(self) -> &'static str {
        match self {
            Scheme::MultiMolecule => "MM-MH",
            Scheme::TwoMolecule => "2M-MH",
            Scheme::SingleMolecule => "SM-MH",
        }
    }

    /// Molecule type detected by node `node` (none for the source).
    pub fn detect_type(self, node: usize) -> Option<MoleculeType> {
        if node == 0 {
            return None;
        }
        Some(match self {
            Scheme::MultiMolecule => MoleculeType(node as u32),
            // odd nodes detect A1, even nodes detect A2
            Scheme::TwoMolecule => MoleculeType(if node % 2 == 1 { 1 } else { 2 }),
            Scheme::SingleMolecule => MoleculeType(1),
        })
    }

    /// Molecule type emitted by node `node` (none for the destination).
    pub fn emit_type(self, node: usize, relays: usize) -> Option<MoleculeType> {
        if node > relays {
            return None;
        }
        Some(match self {
            Scheme::MultiMolecule => MoleculeType(node as u32 + 1),
            Scheme::TwoMolecule => MoleculeType(if node.is_multiple_of(2) { 1 } else { 2 }),
            Scheme::SingleMolecule => MoleculeType(1),
        })
    }

    pub fn molecule_types(self, relays: usize) -> usize {
        match self {
            Scheme::MultiMolecule => relays + 1,
            Scheme::TwoMolecule => 2.min(relays + 1),
            Scheme::SingleMolecule => 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.acronym())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MM-MH" | "MM" => Ok(Scheme::MultiMolecule),
            "2M-MH" | "2M" => Ok(Scheme::TwoMolecule),
            "SM-MH" | "SM" => Ok(Scheme::SingleMolecule),
            other => Err(invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DuplexMode {
    Full,
    Half,
}

/// Relaying protocols (duplex mode plus relay threshold rule).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "FD")]
    Fd,
    #[serde(rename = "FD-A")]
    FdA,
    #[serde(rename = "FD-A-SI")]
    FdASi,
    #[serde(rename = "HD")]
    Hd,
    #[serde(rename = "FD-A-BI-SI")]
    FdABiSi,
    #[serde(rename = "HD-A-BI")]
    HdABi,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::Fd,
        Protocol::FdA,
        Protocol::FdASi,
        Protocol::Hd,
        Protocol::FdABiSi,
        Protocol::HdABi,
    ];

    pub fn acronym(self) -> &'static str {
        match self {
            Protocol::Fd => "FD",
            Protocol::FdA => "FD-A",
            Protocol::FdASi => "FD-A-SI",
            Protocol::Hd => "HD",
            Protocol::FdABiSi => "FD-A-BI-SI",
            Protocol::HdABi => "HD-A-BI",
        }
    }

    pub fn duplex(self) -> DuplexMode {
        match self {
            Protocol::Hd | Protocol::HdABi => DuplexMode::Half,
            _ => DuplexMode::Full,
        }
    }

    /// Whether the protocol is defined for `scheme`.
    pub fn allowed_for(self, scheme: Scheme) -> bool {
        match scheme {
            Scheme::MultiMolecule => self == Protocol::Fd,
            Scheme::TwoMolecule => matches!(self, Protocol::Fd | Protocol::FdA),
            Scheme::SingleMolecule => self != Protocol::FdA,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.acronym())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase();
        Protocol::ALL
            .into_iter()
            .find(|p| p.acronym() == wanted)
            .ok_or_else(|| invalid("protocol", format!("unknown protocol `{s}`")))
    }
}

/// Molecule type `A_f`, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MoleculeType(pub u32);

impl fmt::Display for MoleculeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoleculeSpec {
    pub kind: MoleculeType,
    /// Diffusion coefficient, m²/s.
    pub diffusion: f64,
}

impl MoleculeSpec {
    pub fn new(kind: MoleculeType, diffusion: f64) -> Result<Self> {
        if !(diffusion > 0.0) || !diffusion.is_finite() {
            return Err(invalid("diffusion", format!("must be > 0, got {diffusion}")));
        }
        Ok(Self { kind, diffusion })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeSpec {
    pub index: usize,
    /// Centre, m. Always on the x-axis.
    pub position: [f64; 3],
    pub radius: f64,
    pub volume: f64,
}

impl NodeSpec {
    pub fn new(index: usize, x: f64, radius: f64) -> Self {
        Self {
            index,
            position: [x, 0.0, 0.0],
            radius,
            volume: sphere_volume(radius),
        }
    }

    pub fn distance_to(&self, other: &NodeSpec) -> f64 {
        let d: f64 = self
            .position
            .iter()
            .zip(other.position.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d.sqrt()
    }
}

pub fn sphere_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

/// Equally spaced line network with molecule assignment fixed by the scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    pub scheme: Scheme,
    pub destination_distance: f64,
    pub relays: usize,
    pub nodes: Vec<NodeSpec>,
    pub molecules: Vec<MoleculeSpec>,
}

impl NetworkTopology {
    /// Places `relays` relays at `x_k = k * x_D / (Q + 1)`. Every node uses
    /// `radius`; every molecule type diffuses with `diffusion`.
    pub fn build(
        destination_distance: f64,
        relays: usize,
        radius: f64,
        scheme: Scheme,
        diffusion: f64,
    ) -> Result<Self> {
        if !(destination_distance > 0.0) || !destination_distance.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "destination distance must be > 0, got {destination_distance}"
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "node radius must be > 0, got {radius}"
            )));
        }
        let spacing = destination_distance / (relays + 1) as f64;
        if 2.0 * radius >= spacing {
            return Err(Error::InvalidGeometry(format!(
                "adjacent nodes overlap: spacing {spacing:e} m vs radius {radius:e} m"
            )));
        }
        let nodes = (0..=relays + 1)
            .map(|k| {
                let x = if k == relays + 1 {
                    destination_distance
                } else {
                    k as f64 * spacing
                };
                NodeSpec::new(k, x, radius)
            })
            .collect();
        let molecules = (1..=scheme.molecule_types(relays) as u32)
            .map(|f| MoleculeSpec::new(MoleculeType(f), diffusion))
            .collect::<Result<_>>()?;
        Ok(Self {
            scheme,
            destination_distance,
            relays,
            nodes,
            molecules,
        })
    }

    pub fn destination(&self) -> usize {
        self.relays + 1
    }

    pub fn node(&self, index: usize) -> Result<&NodeSpec> {
        self.nodes.get(index).ok_or(Error::NodeOutOfRange {
            node: index,
            max: self.relays + 1,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.destination_distance / (self.relays + 1) as f64
    }

    pub fn detect_type(&self, node: usize) -> Option<MoleculeType> {
        self.scheme.detect_type(node)
    }

    pub fn emit_type(&self, node: usize) -> Option<MoleculeType> {
        self.scheme.emit_type(node, self.relays)
    }

    pub fn diffusion(&self, kind: MoleculeType) -> f64 {
        self.molecules
            .iter()
            .find(|m| m.kind == kind)
            .map(|m| m.diffusion)
            .expect("molecule type assigned by the scheme")
    }

    /// Nodes whose emissions are observed by `observer`: every emitter of
    /// the observer's detect type. For MM-MH that is only the previous node.
    pub fn emitters_seen_by(&self, observer: usize) -> Vec<usize> {
        match self.detect_type(observer) {
            None => Vec::new(),
            Some(kind) => (0..=self.relays)
                .filter(|&e| self.emit_type(e) == Some(kind))
                .collect(),
        }
    }
}

/// Bit interval and sampling grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingConfig {
    /// Bit interval `T`, s.
    pub bit_interval: f64,
    /// Samples per interval `M`.
    pub samples: usize,
    /// Spacing between samples `t0`, s. Sample `m` is taken at `m * t0`.
    pub sample_spacing: f64,
}

impl TimingConfig {
    pub fn new(bit_interval: f64, samples: usize, sample_spacing: f64) -> Result<Self> {
        if !(bit_interval > 0.0) || !bit_interval.is_finite() {
            return Err(invalid("bit_interval", format!("must be > 0, got {bit_interval}")));
        }
        if samples == 0 {
            return Err(invalid("samples", "need at least one sample per interval"));
        }
        if !(sample_spacing > 0.0) || !sample_spacing.is_finite() {
            return Err(invalid(
                "sample_spacing",
                format!("must be > 0, got {sample_spacing}"),
            ));
        }
        if samples as f64 * sample_spacing > bit_interval * (1.0 + 1e-9) {
            return Err(invalid(
                "samples",
                format!(
                    "{samples} samples spaced {sample_spacing:e} s do not fit in T = {bit_interval:e} s"
                ),
            ));
        }
        Ok(Self {
            bit_interval,
            samples,
            sample_spacing,
        })
    }

    /// Time of sample `m` (1-based) inside an interval.
    pub fn sample_time(&self, m: usize) -> f64 {
        m as f64 * self.sample_spacing
    }

    /// Absolute time of sample `m` in interval `j` (both 1-based).
    pub fn global_time(&self, j: usize, m: usize) -> f64 {
        (j - 1) as f64 * self.bit_interval + self.sample_time(m)
    }

    /// `T / t0` when it is an integer, i.e. when samples fall on a common
    /// step grid (required by the particle simulator).
    pub fn steps_per_interval(&self) -> Result<usize> {
        let ratio = self.bit_interval / self.sample_spacing;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(invalid(
                "bit_interval",
                format!("T / t0 = {ratio} is not an integer"),
            ));
        }
        Ok(steps as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceModel {
    pub p1: f64,
    pub length: usize,
    pub seed: u64,
}

impl SourceModel {
    pub fn new(p1: f64, length: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(invalid("p1", format!("must lie in [0, 1], got {p1}")));
        }
        if length == 0 {
            return Err(invalid("message_len", "must be at least 1"));
        }
        Ok(Self { p1, length, seed })
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }
}

/// I.i.d. Bernoulli(`p1`) source bits, reproducible from the seed.
pub fn generate_source_bits(source: &SourceModel) -> Vec<Bit> {
    let mut rng = ChaCha8Rng::seed_from_u64(source.seed);
    draw_bits(&mut rng, source.p1, source.length)
}

pub(crate) fn draw_bits<R: Rng + ?Sized>(rng: &mut R, p1: f64, len: usize) -> Vec<Bit> {
    (0..len).map(|_| Bit::from(rng.gen::<f64>() < p1)).collect()
}

/// Which node transmits and detects which source bit in which interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitSchedule {
    pub mode: DuplexMode,
    pub message_len: usize,
    pub relays: usize,
    /// Total number of bit intervals `K`.
    pub intervals: usize,
}

impl BitSchedule {
    pub fn new(mode: DuplexMode, message_len: usize, relays: usize) -> Result<Self> {
        if message_len == 0 {
            return Err(invalid("message_len", "must be at least 1"));
        }
        let intervals = match mode {
            DuplexMode::Full => message_len + relays,
            DuplexMode::Half => 2 * message_len + relays - 1,
        };
        Ok(Self {
            mode,
            message_len,
            relays,
            intervals,
        })
    }

    fn stride(&self) -> usize {
        match self.mode {
            DuplexMode::Full => 1,
            DuplexMode::Half => 2,
        }
    }

    /// Interval in which node `node` (0..=Q) emits source bit `bit`.
    pub fn transmit_interval(&self, node: usize, bit: usize) -> usize {
        node + 1 + self.stride() * (bit - 1)
    }

    /// Interval in which node `node` (1..=Q+1) detects source bit `bit`.
    pub fn detect_interval(&self, node: usize, bit: usize) -> usize {
        node + self.stride() * (bit - 1)
    }

    /// Source bit transmitted by `node` in `interval`, if any.
    pub fn transmitted_bit(&self, node: usize, interval: usize) -> Option<usize> {
        if node > self.relays {
            return None;
        }
        self.bit_at(interval, node + 1)
    }

    /// Source bit detected by `node` in `interval`, if any.
    pub fn detected_bit(&self, node: usize, interval: usize) -> Option<usize> {
        if node == 0 || node > self.relays + 1 {
            return None;
        }
        self.bit_at(interval, node)
    }

    fn bit_at(&self, interval: usize, first: usize) -> Option<usize> {
        if interval < first || interval > self.intervals {
            return None;
        }
        let offset = interval - first;
        if offset % self.stride() != 0 {
            return None;
        }
        let bit = offset / self.stride() + 1;
        (bit <= self.message_len).then_some(bit)
    }

    /// Per-interval mask of the slots in which `node` detects.
    pub fn detect_mask(&self, node: usize) -> Vec<bool> {
        (1..=self.intervals)
            .map(|t| self.detected_bit(node, t).is_some())
            .collect()
    }

    /// Per-interval mask of the slots in which `node` may transmit.
    pub fn transmit_mask(&self, node: usize) -> Vec<bool> {
        (1..=self.intervals)
            .map(|t| self.transmitted_bit(node, t).is_some())
            .collect()
    }
}

/// Lays out `bits` (source-bit order) on the `K` intervals for node `node`:
/// `node` leading zeros, the bits (interleaved with zeros in half-duplex),
/// then `Q - node` trailing zeros.
pub fn pad_sequence(bits: &[Bit], node: usize, schedule: &BitSchedule) -> Result<Vec<Bit>> {
    if node > schedule.relays {
        return Err(Error::NodeOutOfRange {
            node,
            max: schedule.relays,
        });
    }
    if bits.len() != schedule.message_len {
        return Err(invalid(
            "bits",
            format!(
                "expected {} bits, got {}",
                schedule.message_len,
                bits.len()
            ),
        ));
    }
    let mut seq = vec![0; schedule.intervals];
    for (i, &b) in bits.iter().enumerate() {
        seq[schedule.transmit_interval(node, i + 1) - 1] = b;
    }
    Ok(seq)
}

/// Scheme, relaying protocol, the fixed threshold part and the per-node
/// emission budget (molecules released for a 1 by nodes `0..=Q`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub scheme: Scheme,
    pub protocol: Protocol,
    pub threshold: u32,
    pub molecules: Vec<u64>,
}

impl ProtocolConfig {
    pub fn new(
        scheme: Scheme,
        protocol: Protocol,
        threshold: u32,
        molecules: Vec<u64>,
    ) -> Result<Self> {
        if !protocol.allowed_for(scheme) {
            return Err(Error::IllegalProtocol {
                scheme: scheme.to_string(),
                protocol: protocol.to_string(),
            });
        }
        if threshold < 1 {
            return Err(invalid("threshold", "must be at least 1"));
        }
        if molecules.is_empty() {
            return Err(invalid("molecules", "need a budget for the source"));
        }
        Ok(Self {
            scheme,
            protocol,
            threshold,
            molecules,
        })
    }

    /// Every emitter releases `per_node` molecules.
    pub fn uniform(
        scheme: Scheme,
        protocol: Protocol,
        threshold: u32,
        relays: usize,
        per_node: u64,
    ) -> Result<Self> {
        Self::new(scheme, protocol, threshold, vec![per_node; relays + 1])
    }

    pub fn with_threshold(&self, threshold: u32) -> Result<Self> {
        Self::new(self.scheme, self.protocol, threshold, self.molecules.clone())
    }
}

/// Splits a baseline budget equally over the `Q + 1` transmitting nodes.
/// The remainder goes to the first nodes so the total is preserved exactly.
pub fn split_budget(total: u64, relays: usize) -> Vec<u64> {
    let n = relays as u64 + 1;
    let base = total / n;
    let extra = total % n;
    (0..n).map(|k| base + u64::from(k < extra)).collect()
}

/// Everything both engines need to evaluate a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub topology: NetworkTopology,
    pub protocol: ProtocolConfig,
    pub timing: TimingConfig,
    pub p1: f64,
    pub message_len: usize,
}

impl Network {
    pub fn new(
        topology: NetworkTopology,
        protocol: ProtocolConfig,
        timing: TimingConfig,
        p1: f64,
        message_len: usize,
    ) -> Result<Self> {
        if topology.scheme != protocol.scheme {
            return Err(invalid(
                "scheme",
                format!(
                    "topology built for {} but protocol is for {}",
                    topology.scheme, protocol.scheme
                ),
            ));
        }
        if protocol.molecules.len() != topology.relays + 1 {
            return Err(invalid(
                "molecules",
                format!(
                    "need {} per-node budgets, got {}",
                    topology.relays + 1,
                    protocol.molecules.len()
                ),
            ));
        }
        SourceModel::new(p1, message_len, 0)?;
        Ok(Self {
            topology,
            protocol,
            timing,
            p1,
            message_len,
        })
    }

    pub fn relays(&self) -> usize {
        self.topology.relays
    }

    pub fn schedule(&self) -> BitSchedule {
        BitSchedule::new(self.protocol.protocol.duplex(), self.message_len, self.relays())
            .expect("message length validated at construction")
    }

    pub fn with_threshold(&self, threshold: u32) -> Result<Self> {
        Ok(Self {
            protocol: self.protocol.with_threshold(threshold)?,
            ..self.clone()
        })
    }
}
