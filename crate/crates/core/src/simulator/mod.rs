//! Particle-based Monte Carlo of the full relay network.
//!
//! Two engines produce the per-interval observed counts that drive the
//! decode-and-forward relays:
//!
//! * [`Engine::Direct`] keeps every released molecule in a
//!   [`ParticleStore`], advances all of them by one Gaussian Brownian step
//!   per sample spacing and counts the centres inside each observer.
//! * [`Engine::HitPath`] samples only the molecule paths that are ever
//!   observed (see [`hitpath`]); it reproduces the same count statistics at
//!   a small fraction of the cost, modelling each release as a Poisson
//!   number of molecules with mean `N`.
//!
//! Both engines share the relay logic: thresholds come from
//! [`NodeThreshold`] evaluated on each node's own decisions, and a relay
//! forwards what it detected at the start of the next interval.

mod hitpath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::channel::ChannelKernels;
use crate::detection::{LagConvention, NodeThreshold};
use crate::error::{invalid, Result};
use crate::model::{draw_bits, pad_sequence, Bit, MoleculeType, Network};

pub use hitpath::HitPathTables;

/// Generator driving one trial.
pub type TrialRng = Xoshiro256PlusPlus;

/// Independent generator for trial `index` of a run seeded with `base_seed`:
/// a ChaCha stream per trial seeds a fast generator, so results do not
/// depend on which worker runs which trial.
pub fn trial_rng(base_seed: u64, index: u64) -> TrialRng {
    let mut root = ChaCha8Rng::seed_from_u64(base_seed);
    root.set_stream(index);
    Xoshiro256PlusPlus::from_rng(&mut root).expect("ChaCha never fails")
}

/// Positions of all released molecules, grouped by molecule type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleStore {
    groups: Vec<(MoleculeType, Vec<[f64; 3]>)>,
}

impl ParticleStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn group_mut(&mut self, kind: MoleculeType) -> &mut Vec<[f64; 3]> {
        let idx = match self.groups.iter().position(|(k, _)| *k == kind) {
            Some(i) => i,
            None => {
                self.groups.push((kind, Vec::new()));
                self.groups.len() - 1
            }
        };
        &mut self.groups[idx].1
    }

    pub fn positions(&self, kind: MoleculeType) -> &[[f64; 3]] {
        self.groups
            .iter()
            .find(|(k, _)| *k == kind)
            .map_or(&[], |(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kinds(&self) -> impl Iterator<Item = MoleculeType> + '_ {
        self.groups.iter().map(|(k, _)| *k)
    }
}

/// Inserts `n` molecules of type `kind` at `centre`.
pub fn release(store: &mut ParticleStore, centre: [f64; 3], kind: MoleculeType, n: u64) {
    if n == 0 {
        return;
    }
    let group = store.group_mut(kind);
    group.extend(std::iter::repeat_n(centre, n as usize));
}

/// Moves every molecule by an independent `N(0, 2·D·t0)` displacement per
/// axis, with `D` looked up per molecule type.
pub fn brownian_step<R: Rng + ?Sized>(
    store: &mut ParticleStore,
    t0: f64,
    diffusion: impl Fn(MoleculeType) -> f64,
    rng: &mut R,
) {
    for (kind, positions) in &mut store.groups {
        let sigma = (2.0 * diffusion(*kind) * t0).sqrt();
        if sigma == 0.0 {
            continue;
        }
        for p in positions.iter_mut() {
            for x in p.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += sigma * z;
            }
        }
    }
}

/// Number of type-`kind` molecule centres within `radius` of `centre`.
pub fn sample_count(store: &ParticleStore, centre: [f64; 3], radius: f64, kind: MoleculeType) -> u64 {
    let r2 = radius * radius;
    store
        .positions(kind)
        .iter()
        .filter(|p| {
            let d2: f64 = p.iter().zip(&centre).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 <= r2
        })
        .count() as u64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Engine {
    Direct,
    #[default]
    HitPath,
}

/// Outcome of one simulated message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialResult {
    pub seed: u64,
    pub index: u64,
    pub source: Vec<Bit>,
    /// `detected[q - 1][j - 1]`: node `q`'s decision on source bit `j`.
    pub detected: Vec<Vec<Bit>>,
    /// `errors[q - 1]`: bits node `q` got wrong (errors of the first `q` hops).
    pub errors: Vec<usize>,
}

impl TrialResult {
    pub fn end_to_end_errors(&self) -> usize {
        self.errors.last().copied().unwrap_or(0)
    }
}

/// Per-trial overrides used by tests: force the relays' decisions to the
/// source bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrialControls {
    pub perfect_relays: bool,
}

/// Everything a trial needs that does not change between trials.
#[derive(Clone, Debug)]
pub struct Simulation {
    network: Network,
    thresholds: Vec<NodeThreshold>,
    engine: Engine,
    tables: Option<HitPathTables>,
    steps_per_interval: usize,
}

impl Simulation {
    pub fn new(network: &Network, engine: Engine, lags: LagConvention) -> Result<Self> {
        let schedule = network.schedule();
        let steps_per_interval = network.timing.steps_per_interval()?;
        let kernels = ChannelKernels::new(&network.topology, &network.timing, schedule.intervals)?;
        let thresholds = (1..=network.relays() + 1)
            .map(|q| NodeThreshold::new(network, &kernels, q, lags))
            .collect::<Result<_>>()?;
        let tables = match engine {
            Engine::HitPath => Some(HitPathTables::new(network, steps_per_interval)),
            Engine::Direct => None,
        };
        Ok(Self {
            network: network.clone(),
            thresholds,
            engine,
            tables,
            steps_per_interval,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Runs trial `index` of a run seeded with `seed`.
    pub fn run_trial(&self, seed: u64, index: u64) -> TrialResult {
        self.run_trial_with(seed, index, TrialControls::default())
    }

    pub fn run_trial_with(&self, seed: u64, index: u64, controls: TrialControls) -> TrialResult {
        let mut rng = trial_rng(seed, index);
        let net = &self.network;
        let source = draw_bits(&mut rng, net.p1, net.message_len);
        let schedule = net.schedule();
        let relays = net.relays();
        let intervals = schedule.intervals;
        let mut emissions = vec![vec![0 as Bit; intervals]; relays + 1];
        emissions[0] = pad_sequence(&source, 0, &schedule).expect("source length fixed");
        let mut history = vec![vec![0 as Bit; intervals]; relays + 2];
        let mut detected = vec![vec![0 as Bit; net.message_len]; relays + 1];

        let mut counts = CountSource::new(self, intervals);
        for tau in 1..=intervals {
            let releasing: Vec<usize> = (0..=relays).filter(|&e| emissions[e][tau - 1] != 0).collect();
            counts.advance(self, tau, &releasing, &mut rng);
            for q in 1..=relays + 1 {
                let Some(j) = schedule.detected_bit(q, tau) else {
                    continue;
                };
                let theta = self.thresholds[q - 1].value(tau, &history[q]);
                let observed = counts.observed(q, tau);
                let mut bit = Bit::from(observed as f64 >= theta);
                if controls.perfect_relays && q <= relays {
                    bit = source[j - 1];
                }
                history[q][tau - 1] = bit;
                detected[q - 1][j - 1] = bit;
                if q <= relays && tau < intervals {
                    emissions[q][tau] = bit;
                }
            }
        }
        let errors = detected
            .iter()
            .map(|d| d.iter().zip(&source).filter(|(a, b)| a != b).count())
            .collect();
        TrialResult {
            seed,
            index,
            source,
            detected,
            errors,
        }
    }

    /// Runs `trials` trials in parallel and aggregates per-node error rates.
    pub fn estimate(&self, trials: usize, seed: u64) -> Result<SimulationSummary> {
        if trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        let nodes = self.network.relays() + 1;
        let per_trial: Vec<Vec<usize>> = (0..trials as u64)
            .into_par_iter()
            .map(|i| self.run_trial(seed, i).errors)
            .collect();
        let mut totals = vec![0usize; nodes];
        for errs in &per_trial {
            for (t, e) in totals.iter_mut().zip(errs) {
                *t += e;
            }
        }
        let bits = trials * self.network.message_len;
        Ok(SimulationSummary {
            nodes: totals
                .into_iter()
                .map(|errors| ErrorEstimate::new(trials, bits, errors))
                .collect(),
        })
    }
}

/// Observed-count bookkeeping for one trial, per engine.
enum CountSource {
    Direct {
        store: ParticleStore,
        counts: Vec<Vec<u64>>,
    },
    HitPath {
        counts: Vec<Vec<u64>>,
    },
}

impl CountSource {
    fn new(sim: &Simulation, intervals: usize) -> Self {
        let counts = vec![vec![0; intervals]; sim.network.relays() + 2];
        match sim.engine {
            Engine::Direct => CountSource::Direct {
                store: ParticleStore::new(),
                counts,
            },
            Engine::HitPath => CountSource::HitPath { counts },
        }
    }

    /// Releases the molecules of `releasing` at the start of interval `tau`
    /// and makes the counts of interval `tau` available.
    fn advance(&mut self, sim: &Simulation, tau: usize, releasing: &[usize], rng: &mut TrialRng) {
        let net = &sim.network;
        let topo = &net.topology;
        match self {
            CountSource::Direct { store, counts } => {
                for &e in releasing {
                    let kind = topo.emit_type(e).expect("emitters have a type");
                    release(store, topo.nodes[e].position, kind, net.protocol.molecules[e]);
                }
                let schedule = net.schedule();
                let detecting: Vec<usize> = (1..=net.relays() + 1)
                    .filter(|&q| schedule.detected_bit(q, tau).is_some())
                    .collect();
                for step in 1..=sim.steps_per_interval {
                    brownian_step(store, net.timing.sample_spacing, |k| topo.diffusion(k), rng);
                    if step <= net.timing.samples {
                        for &q in &detecting {
                            let node = &topo.nodes[q];
                            let kind = topo.detect_type(q).expect("detectors have a type");
                            counts[q][tau - 1] += sample_count(store, node.position, node.radius, kind);
                        }
                    }
                }
            }
            CountSource::HitPath { counts } => {
                let tables = sim.tables.as_ref().expect("tables built for the hit-path engine");
                for &e in releasing {
                    tables.emit(e, tau, net.protocol.molecules[e] as f64, counts, rng);
                }
            }
        }
    }

    fn observed(&self, q: usize, tau: usize) -> u64 {
        match self {
            CountSource::Direct { counts, .. } | CountSource::HitPath { counts } => counts[q][tau - 1],
        }
    }
}

/// Error rate of one node over a batch of trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorEstimate {
    pub trials: usize,
    pub bits: usize,
    pub errors: usize,
    pub rate: f64,
    /// Binomial standard error `√(p̂(1 − p̂)/n_bits)`.
    pub se: f64,
}

impl ErrorEstimate {
    pub fn new(trials: usize, bits: usize, errors: usize) -> Self {
        let rate = errors as f64 / bits as f64;
        Self {
            trials,
            bits,
            errors,
            rate,
            se: (rate * (1.0 - rate) / bits as f64).sqrt(),
        }
    }
}

/// Per-node error estimates (`nodes[q - 1]` for node `q`).
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSummary {
    pub nodes: Vec<ErrorEstimate>,
}

impl SimulationSummary {
    pub fn end_to_end(&self) -> ErrorEstimate {
        *self.nodes.last().expect("at least the destination")
    }
}

/// End-to-end error estimate of `network` over `trials` trials.
pub fn estimate_error(
    network: &Network,
    trials: usize,
    base_seed: u64,
    engine: Engine,
    lags: LagConvention,
) -> Result<ErrorEstimate> {
    Ok(Simulation::new(network, engine, lags)?
        .estimate(trials, base_seed)?
        .end_to_end())
}

/// Runs one trial of `network` with the default engine.
pub fn run_trial(network: &Network, seed: u64, engine: Engine) -> Result<TrialResult> {
    Ok(Simulation::new(network, engine, LagConvention::default())?.run_trial(seed, 0))
}
