//! Analytical expected-error-probability engine.
//!
//! A single link is evaluated exactly from the Poisson CDF given the
//! transmitter's history. Relay chains are evaluated hop by hop: each
//! relay's detected history is modelled by a coin-toss surrogate (the
//! source bits flipped with the probability the relay errs), the surrogate
//! feeds every emission the downstream detectors see, and the conditional
//! error of hop `q` combines the two disjoint events "upstream correct and
//! hop `q` wrong" and "upstream wrong and hop `q` does not undo it".
//!
//! Intervals are processed in global time order, so every interference
//! term (forward ISI, backward ISI, self-interference) is built from
//! emissions that are already decided when it is needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{poisson_at_least, poisson_below, ChannelKernels, ObservationKernel};
use crate::detection::{LagConvention, NodeThreshold};
use crate::error::{invalid, Error, Result};
use crate::model::{draw_bits, pad_sequence, Bit, DuplexMode, Network};

/// Probability of the wrong decision `1 − x` at a detector with threshold
/// `threshold` when the observed count is Poisson with mean `mean`.
fn decides_against(x: Bit, mean: f64, threshold: f64) -> f64 {
    if x == 1 {
        poisson_below(threshold, mean)
    } else {
        poisson_at_least(threshold, mean)
    }
}

/// Error probability of a single link given the means with the current
/// bit 0 (`m0`) and 1 (`m1`): `P1·Pr(X < ξ | m1) + P0·Pr(X ≥ ξ | m0)`.
pub fn single_link_error(m0: f64, m1: f64, threshold: f64, p1: f64) -> f64 {
    p1 * decides_against(1, m1, threshold) + (1.0 - p1) * decides_against(0, m0, threshold)
}

/// Error of a hop that sees the bit its upstream node forwarded:
/// `(1 − e)·Pr(wrong | correct bit sent) + e·Pr(wrong | flipped bit sent)`.
pub fn hop_error(upstream: f64, wrong_if_correct: f64, wrong_if_flipped: f64) -> f64 {
    (1.0 - upstream) * wrong_if_correct + upstream * wrong_if_flipped
}

/// One stage of the XOR cascade: a hop that flips its input with
/// probability `eps` regardless of the bit.
pub fn cascade_step(upstream: f64, eps: f64) -> f64 {
    hop_error(upstream, eps, 1.0 - eps)
}

/// Conditional errors `[P(err | x = 0), P(err | x = 1)]` of a hop whose
/// observed mean is `base + x·signal` when its upstream sends `x`, given
/// the upstream conditional errors.
pub fn hop_conditional_errors(upstream: [f64; 2], base: f64, signal: f64, threshold: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for x in 0..2u8 {
        let sent_right = base + f64::from(x) * signal;
        let sent_wrong = base + f64::from(1 - x) * signal;
        out[usize::from(x)] = hop_error(
            upstream[usize::from(x)],
            decides_against(x, sent_right, threshold),
            decides_against(x, sent_wrong, threshold),
        );
    }
    out
}

/// A single transmitter → receiver link with a fixed threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleLink {
    /// `Σ_m P_ob` per lag.
    pub sums: Vec<f64>,
    pub molecules: f64,
    pub threshold: f64,
    pub p1: f64,
}

/// One history realization for bit `j`: its probability weight and the
/// per-molecule ISI sum `Σ_{i<j} W[i]·Σ_m P_ob((j−i)T + t_m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryPoint {
    pub weight: f64,
    pub isi: f64,
}

/// How history averages are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistoryAveraging {
    /// Exact enumeration of all `2^{j−1}` histories up to this `j`.
    pub enumerate_upto: usize,
    /// Sampled histories beyond it.
    pub samples: usize,
    pub seed: u64,
}

impl Default for HistoryAveraging {
    fn default() -> Self {
        Self {
            enumerate_upto: 12,
            samples: 1000,
            seed: 0x5eed,
        }
    }
}

impl SingleLink {
    pub fn from_kernel(kernel: &ObservationKernel, molecules: f64, threshold: f64, p1: f64) -> Self {
        Self {
            sums: kernel.sums().to_vec(),
            molecules,
            threshold,
            p1,
        }
    }

    /// The source → first detector link of `network`.
    pub fn from_network(network: &Network) -> Result<Self> {
        let memory = network.message_len + 1;
        let kernels = ChannelKernels::new(&network.topology, &network.timing, memory)?;
        let kernel = kernels.get(0, 1).expect("node 1 always hears the source");
        Ok(Self::from_kernel(
            kernel,
            network.protocol.molecules[0] as f64,
            f64::from(network.protocol.threshold),
            network.p1,
        ))
    }

    pub fn signal_sum(&self) -> f64 {
        self.sums.first().copied().unwrap_or(0.0)
    }

    /// Per-molecule ISI sum for bit `j` given `history[i - 1] = W[i]`.
    pub fn isi_sum(&self, history: &[Bit], j: usize) -> f64 {
        (1..j)
            .filter(|&i| history[i - 1] != 0)
            .map(|i| self.sums.get(j - i).copied().unwrap_or(0.0))
            .sum()
    }

    /// Means `(m0, m1)` for bit `j` given the history.
    pub fn means(&self, history: &[Bit], j: usize) -> (f64, f64) {
        let m0 = self.molecules * self.isi_sum(history, j);
        (m0, m0 + self.molecules * self.signal_sum())
    }

    pub fn error_at(&self, isi: f64) -> f64 {
        let m0 = self.molecules * isi;
        single_link_error(m0, m0 + self.molecules * self.signal_sum(), self.threshold, self.p1)
    }

    /// Error of bit `j` given the history.
    pub fn conditional_error(&self, history: &[Bit], j: usize) -> f64 {
        self.error_at(self.isi_sum(history, j))
    }

    /// Histories `W[1..j−1]` of bit `j` with their probabilities: all of
    /// them when `j` is small, otherwise equally weighted samples drawn from
    /// the source law.
    pub fn histories(&self, j: usize, averaging: &HistoryAveraging) -> Vec<(f64, Vec<Bit>)> {
        if j == 0 {
            return Vec::new();
        }
        let len = j - 1;
        if j <= averaging.enumerate_upto {
            let p0 = 1.0 - self.p1;
            (0..1u64 << len)
                .map(|mask| {
                    let history: Vec<Bit> = (0..len).map(|b| ((mask >> b) & 1) as Bit).collect();
                    let ones = mask.count_ones() as i32;
                    (self.p1.powi(ones) * p0.powi(len as i32 - ones), history)
                })
                .filter(|(w, _)| *w > 0.0)
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(averaging.seed);
            rng.set_stream(j as u64);
            let w = 1.0 / averaging.samples as f64;
            (0..averaging.samples)
                .map(|_| (w, draw_bits(&mut rng, self.p1, len)))
                .collect()
        }
    }

    /// History realizations of bit `j` reduced to their ISI sums.
    pub fn history_points(&self, j: usize, averaging: &HistoryAveraging) -> Vec<HistoryPoint> {
        self.histories(j, averaging)
            .into_iter()
            .map(|(weight, history)| HistoryPoint {
                weight,
                isi: self.isi_sum(&history, j),
            })
            .collect()
    }
}

/// Error of bit `j` averaged over the transmitter's possible histories.
pub fn average_single_link_error(link: &SingleLink, j: usize, averaging: &HistoryAveraging) -> f64 {
    link.history_points(j, averaging)
        .iter()
        .map(|p| p.weight * link.error_at(p.isi))
        .sum()
}

/// Error averaged over histories and over the bits `1..=len`.
pub fn average_link_error(link: &SingleLink, len: usize, averaging: &HistoryAveraging) -> f64 {
    (1..=len)
        .map(|j| average_single_link_error(link, j, averaging))
        .sum::<f64>()
        / len as f64
}

/// A modelled detected sequence: the source bits flipped independently.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySurrogate {
    pub node: usize,
    pub detected: Vec<Bit>,
    pub flip_probs: Vec<f64>,
    pub seed: u64,
}

/// Draws `Ŵ[i] = |λ_i − W_S[i]|` with `Pr(λ_i = 1) = flip_probs[i]`.
pub fn coin_toss_surrogate(
    node: usize,
    source: &[Bit],
    flip_probs: &[f64],
    seed: u64,
) -> Result<HistorySurrogate> {
    if source.len() != flip_probs.len() {
        return Err(invalid(
            "flip_probs",
            format!("{} probabilities for {} bits", flip_probs.len(), source.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    let detected = source
        .iter()
        .zip(flip_probs)
        .map(|(&s, &p)| s ^ Bit::from(rng.gen::<f64>() < p))
        .collect();
    Ok(HistorySurrogate {
        node,
        detected,
        flip_probs: flip_probs.to_vec(),
        seed,
    })
}

/// Which error probability sets a relay surrogate's flip probability.
///
/// The bit-conditional rule is the default: a relay with a high threshold
/// mostly misses ones and rarely invents them, and averaging the two error
/// kinds spreads the relay's mistakes onto zero bits, overstating the
/// interference seen downstream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SurrogateRule {
    /// The relay's error for bit `j` averaged over the bit value.
    Averaged,
    /// The relay's error conditioned on the bit actually sent.
    #[default]
    BitConditional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalysisOptions {
    /// Source sequences averaged over (each with its own surrogates).
    pub sequences: usize,
    pub seed: u64,
    pub surrogate: SurrogateRule,
    pub lags: LagConvention,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            sequences: 400,
            seed: 0x00ab_c0de,
            surrogate: SurrogateRule::default(),
            lags: LagConvention::default(),
        }
    }
}

/// Error of one bit at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorEntry {
    pub given0: f64,
    pub given1: f64,
    pub combined: f64,
}

impl ErrorEntry {
    fn new(cond: [f64; 2], p1: f64) -> Self {
        Self {
            given0: cond[0],
            given1: cond[1],
            combined: p1 * cond[1] + (1.0 - p1) * cond[0],
        }
    }
}

/// Per-bit conditional and combined errors of the first `node` hops, and
/// their average over the message.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorProfile {
    pub node: usize,
    pub given0: Vec<f64>,
    pub given1: Vec<f64>,
    pub combined: Vec<f64>,
    pub average: f64,
}

impl ErrorProfile {
    pub fn entry(&self, j: usize) -> ErrorEntry {
        ErrorEntry {
            given0: self.given0[j - 1],
            given1: self.given1[j - 1],
            combined: self.combined[j - 1],
        }
    }
}

/// Error profiles of every detecting node (index `q − 1` for node `q`).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkErrors {
    pub profiles: Vec<ErrorProfile>,
    pub sequences: usize,
}

impl NetworkErrors {
    pub fn node(&self, q: usize) -> &ErrorProfile {
        &self.profiles[q - 1]
    }

    /// Average end-to-end error (at the destination).
    pub fn end_to_end(&self) -> f64 {
        self.profiles.last().map_or(0.0, |p| p.average)
    }
}

/// Per-sequence result: `errors[q - 1][j - 1]` conditional errors, plus
/// the surrogate histories drawn for the relays.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceErrors {
    pub errors: Vec<Vec<[f64; 2]>>,
    pub surrogates: Vec<Vec<Bit>>,
}

/// Precomputed kernels and thresholds of a network for the analytical
/// engine.
#[derive(Clone, Debug)]
pub struct Evaluator {
    network: Network,
    kernels: ChannelKernels,
    thresholds: Vec<NodeThreshold>,
    options: AnalysisOptions,
}

impl Evaluator {
    pub fn new(network: &Network, options: AnalysisOptions) -> Result<Self> {
        let schedule = network.schedule();
        let kernels = ChannelKernels::new(&network.topology, &network.timing, schedule.intervals)?;
        let thresholds = (1..=network.relays() + 1)
            .map(|q| NodeThreshold::new(network, &kernels, q, options.lags))
            .collect::<Result<_>>()?;
        Ok(Self {
            network: network.clone(),
            kernels,
            thresholds,
            options,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Evaluates one source sequence. `uniforms[q - 1][j - 1]` drives the
    /// coin toss of relay `q` for bit `j`.
    pub fn evaluate_sequence(&self, source: &[Bit], uniforms: &[Vec<f64>]) -> Result<SequenceErrors> {
        let net = &self.network;
        let schedule = net.schedule();
        let relays = net.relays();
        let intervals = schedule.intervals;
        if source.len() != net.message_len {
            return Err(invalid(
                "source",
                format!("expected {} bits, got {}", net.message_len, source.len()),
            ));
        }
        let molecules: Vec<f64> = net.protocol.molecules.iter().map(|&n| n as f64).collect();
        let mut emissions = vec![vec![0 as Bit; intervals]; relays + 1];
        emissions[0] = pad_sequence(source, 0, &schedule)?;
        let mut history = vec![vec![0 as Bit; intervals]; relays + 2];
        let mut errors = vec![vec![[0.0; 2]; net.message_len]; relays + 1];
        let mut surrogates = vec![vec![0 as Bit; net.message_len]; relays];

        for tau in 1..=intervals {
            for q in 1..=relays + 1 {
                let Some(j) = schedule.detected_bit(q, tau) else {
                    continue;
                };
                let upstream = q - 1;
                let mut base = 0.0;
                let mut signal = 0.0;
                for k in self.kernels.emitters_of(q) {
                    let e = k.emitter;
                    let seq = &emissions[e];
                    let mut acc = 0.0;
                    for t in 1..=tau {
                        if seq[t - 1] != 0 && !(e == upstream && t == tau) {
                            acc += k.sum(tau - t);
                        }
                    }
                    base += molecules[e] * acc;
                    if e == upstream {
                        signal = molecules[e] * k.sum(0);
                    }
                }
                let threshold = self.thresholds[q - 1].value(tau, &history[q]);
                let up = if q == 1 { [0.0; 2] } else { errors[q - 2][j - 1] };
                let cond = hop_conditional_errors(up, base, signal, threshold);
                errors[q - 1][j - 1] = cond;
                if q <= relays {
                    let sent = source[j - 1];
                    let flip = match self.options.surrogate {
                        SurrogateRule::Averaged => net.p1 * cond[1] + (1.0 - net.p1) * cond[0],
                        SurrogateRule::BitConditional => cond[usize::from(sent)],
                    };
                    let detected = sent ^ Bit::from(uniforms[q - 1][j - 1] < flip);
                    history[q][tau - 1] = detected;
                    surrogates[q - 1][j - 1] = detected;
                    // forwarded at the start of the next interval
                    if tau < intervals {
                        emissions[q][tau] = detected;
                    }
                }
            }
        }
        Ok(SequenceErrors { errors, surrogates })
    }

    /// Source bits and coin-toss uniforms of sequence `index`.
    pub fn draw_sequence(&self, index: usize) -> (Vec<Bit>, Vec<Vec<f64>>) {
        let net = &self.network;
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        rng.set_stream(index as u64);
        let source = draw_bits(&mut rng, net.p1, net.message_len);
        let uniforms = (0..net.relays())
            .map(|_| (0..net.message_len).map(|_| rng.gen::<f64>()).collect())
            .collect();
        (source, uniforms)
    }

    /// Averages the per-sequence errors over `options.sequences` seeded
    /// source sequences.
    pub fn evaluate(&self) -> Result<NetworkErrors> {
        let n = self.options.sequences.max(1);
        let per_seq: Vec<SequenceErrors> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (source, uniforms) = self.draw_sequence(i);
                self.evaluate_sequence(&source, &uniforms)
            })
            .collect::<Result<_>>()?;
        let len = self.network.message_len;
        let p1 = self.network.p1;
        let profiles = (0..=self.network.relays())
            .map(|qi| {
                let mut given0 = vec![0.0; len];
                let mut given1 = vec![0.0; len];
                for s in &per_seq {
                    for (j, c) in s.errors[qi].iter().enumerate() {
                        given0[j] += c[0];
                        given1[j] += c[1];
                    }
                }
                given0.iter_mut().for_each(|v| *v /= n as f64);
                given1.iter_mut().for_each(|v| *v /= n as f64);
                let combined: Vec<f64> = given0
                    .iter()
                    .zip(&given1)
                    .map(|(a, b)| p1 * b + (1.0 - p1) * a)
                    .collect();
                let average = combined.iter().sum::<f64>() / len as f64;
                ErrorProfile {
                    node: qi + 1,
                    given0,
                    given1,
                    combined,
                    average,
                }
            })
            .collect();
        Ok(NetworkErrors {
            profiles,
            sequences: n,
        })
    }
}

/// Expected error profile of every hop of `network`.
pub fn evaluate_network(network: &Network, options: AnalysisOptions) -> Result<NetworkErrors> {
    Evaluator::new(network, options)?.evaluate()
}

fn check_bit(network: &Network, j: usize) -> Result<()> {
    if j == 0 || j > network.message_len {
        return Err(invalid(
            "j",
            format!("bit index must lie in 1..={}, got {j}", network.message_len),
        ));
    }
    Ok(())
}

/// End-to-end error of bit `j` of a relay network for one given source
/// sequence, with relay histories drawn as coin-toss surrogates from
/// `seed`.
pub fn multi_hop_error(network: &Network, j: usize, source: &[Bit], seed: u64) -> Result<ErrorEntry> {
    if network.relays() < 1 {
        return Err(Error::NotARelayNetwork(network.relays()));
    }
    check_bit(network, j)?;
    let options = AnalysisOptions {
        seed,
        ..AnalysisOptions::default()
    };
    let eval = Evaluator::new(network, options)?;
    let (_, uniforms) = eval.draw_sequence(0);
    let out = eval.evaluate_sequence(source, &uniforms)?;
    Ok(ErrorEntry::new(
        out.errors[network.relays()][j - 1],
        network.p1,
    ))
}

/// [`multi_hop_error`] restricted to a single relay.
pub fn two_hop_error(network: &Network, j: usize, source: &[Bit], seed: u64) -> Result<ErrorEntry> {
    if network.relays() != 1 {
        return Err(invalid(
            "relays",
            format!("a two-hop network has one relay, got {}", network.relays()),
        ));
    }
    multi_hop_error(network, j, source, seed)
}

/// [`multi_hop_error`] on a half-duplex schedule.
pub fn half_duplex_error(network: &Network, j: usize, source: &[Bit], seed: u64) -> Result<ErrorEntry> {
    if network.protocol.protocol.duplex() != DuplexMode::Half {
        return Err(invalid(
            "protocol",
            format!("{} is not a half-duplex protocol", network.protocol.protocol),
        ));
    }
    multi_hop_error(network, j, source, seed)
}
