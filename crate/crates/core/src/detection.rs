//! Weighted-sum detection and the adaptive decision thresholds that cancel
//! the expected backward-ISI and self-interference of a relay.
//!
//! Histories are indexed by bit interval: `history[i - 1]` is the bit the
//! node detected in interval `i` (zero in intervals where it does not
//! detect). A relay forwards what it detected in interval `i` at the start
//! of interval `i + 1`, and the next relay forwards it again at `i + 2`.

use crate::channel::{ChannelKernels, ObservationKernel};
use crate::error::{Error, Result};
use crate::model::{Bit, Network, Protocol};

/// How far back a remembered bit sits from the current interval when its
/// expected contribution is looked up in the observation kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LagConvention {
    /// Lags measured from the interval in which the interfering molecules
    /// are actually released: a relay re-emits its bit `i` at `i + 1` and
    /// the next relay at `i + 2`, so the observed lags are `j − i − 1`
    /// (self) and `j − i − 2` (backward).
    #[default]
    Emission,
    /// Lags measured from the detection interval, `j − i`, for both terms.
    Detection,
}

impl LagConvention {
    fn self_lag(self, j: usize, i: usize) -> usize {
        match self {
            LagConvention::Emission => j - i - 1,
            LagConvention::Detection => j - i,
        }
    }

    fn backward_lag(self, j: usize, i: usize) -> usize {
        match self {
            LagConvention::Emission => j - i - 2,
            LagConvention::Detection => j - i,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdKind {
    Fixed,
    /// Backward-ISI compensation (full duplex).
    Bi,
    /// Self-interference compensation.
    Si,
    /// Both, full duplex.
    SiBi,
    /// Backward-ISI compensation on the half-duplex schedule.
    BiHd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub kind: ThresholdKind,
    pub xi: u32,
}

impl ThresholdPolicy {
    /// Policy of node `node` under `protocol`. The last relay and the
    /// destination never compensate backward-ISI (nothing downstream
    /// re-emits their bits), and the destination is always fixed.
    pub fn for_node(protocol: Protocol, node: usize, relays: usize, xi: u32) -> Self {
        let last = node >= relays;
        let kind = if node == 0 || node > relays {
            ThresholdKind::Fixed
        } else {
            match protocol {
                Protocol::Fd | Protocol::Hd => ThresholdKind::Fixed,
                Protocol::FdA if !last => ThresholdKind::Bi,
                Protocol::FdA => ThresholdKind::Fixed,
                Protocol::FdASi => ThresholdKind::Si,
                Protocol::FdABiSi if !last => ThresholdKind::SiBi,
                Protocol::FdABiSi => ThresholdKind::Si,
                Protocol::HdABi if !last => ThresholdKind::BiHd,
                Protocol::HdABi => ThresholdKind::Fixed,
            }
        };
        Self { kind, xi }
    }
}

/// Per-node detector bookkeeping: what the node has decided so far and the
/// threshold it used last.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionState {
    pub history: Vec<Bit>,
    pub threshold: f64,
}

impl DetectionState {
    pub fn new(intervals: usize) -> Self {
        Self {
            history: vec![0; intervals],
            threshold: 0.0,
        }
    }

    pub fn record(&mut self, interval: usize, bit: Bit, threshold: f64) {
        self.history[interval - 1] = bit;
        self.threshold = threshold;
    }
}

/// Decides 1 when the equally weighted sum of the samples reaches the
/// threshold.
pub fn weighted_sum_decide(samples: &[u64], threshold: f64) -> Bit {
    let total: u64 = samples.iter().sum();
    Bit::from(total as f64 >= threshold)
}

fn expected_self(j: usize, history: &[Bit], sums: &[f64], n: f64, lags: LagConvention) -> f64 {
    let upto = (j - 1).min(history.len());
    n * (1..=upto)
        .filter(|&i| history[i - 1] != 0)
        .map(|i| sums.get(lags.self_lag(j, i)).copied().unwrap_or(0.0))
        .sum::<f64>()
}

fn expected_backward(j: usize, history: &[Bit], sums: &[f64], n: f64, lags: LagConvention) -> f64 {
    if j <= 2 {
        return 0.0;
    }
    let upto = (j - 2).min(history.len());
    n * (1..=upto)
        .filter(|&i| history[i - 1] != 0)
        .map(|i| sums.get(lags.backward_lag(j, i)).copied().unwrap_or(0.0))
        .sum::<f64>()
}

fn guard_backward(node: usize, relays: usize) -> Result<()> {
    if node == 0 || node >= relays {
        return Err(Error::PolicyViolation(format!(
            "node {node} cannot compensate backward ISI in a network with {relays} relays"
        )));
    }
    Ok(())
}

/// Threshold of relay `node` in interval `j` compensating the expected
/// molecules re-emitted by the next relay (kernel next relay → `node`,
/// `n` molecules per 1).
#[allow(clippy::too_many_arguments)]
pub fn threshold_bi(
    node: usize,
    relays: usize,
    j: usize,
    history: &[Bit],
    kernel: &ObservationKernel,
    n: f64,
    xi: f64,
    lags: LagConvention,
) -> Result<f64> {
    guard_backward(node, relays)?;
    Ok(xi + expected_backward(j, history, kernel.sums(), n, lags))
}

/// Threshold compensating the node's own still-present molecules
/// (self-observation kernel, `n` molecules per 1).
pub fn threshold_si(
    j: usize,
    history: &[Bit],
    kernel: &ObservationKernel,
    n: f64,
    xi: f64,
    lags: LagConvention,
) -> f64 {
    xi + expected_self(j, history, kernel.sums(), n, lags)
}

/// Self-interference plus backward-ISI compensation. `backward` is the
/// next relay's kernel and release; pass `None` at the last relay.
#[allow(clippy::too_many_arguments)]
pub fn threshold_fd_si_bi(
    node: usize,
    relays: usize,
    j: usize,
    history: &[Bit],
    self_kernel: &ObservationKernel,
    n_self: f64,
    backward: Option<(&ObservationKernel, f64)>,
    xi: f64,
    lags: LagConvention,
) -> Result<f64> {
    let si = expected_self(j, history, self_kernel.sums(), n_self, lags);
    let bi = match backward {
        Some((kernel, n)) => {
            guard_backward(node, relays)?;
            expected_backward(j, history, kernel.sums(), n, lags)
        }
        None => 0.0,
    };
    Ok(xi + si + bi)
}

/// Backward-ISI threshold of relay `node` in half-duplex interval `l`,
/// which must be one of the node's detection intervals (same parity).
#[allow(clippy::too_many_arguments)]
pub fn threshold_hd_bi(
    node: usize,
    relays: usize,
    l: usize,
    history: &[Bit],
    kernel: &ObservationKernel,
    n: f64,
    xi: f64,
    lags: LagConvention,
) -> Result<f64> {
    if l % 2 != node % 2 {
        return Err(Error::ParityMismatch { node, interval: l });
    }
    guard_backward(node, relays)?;
    Ok(xi + expected_backward(l, history, kernel.sums(), n, lags))
}

/// A node's threshold rule with its kernels resolved, shared by the
/// analytical engine and the simulators.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeThreshold {
    pub node: usize,
    pub policy: ThresholdPolicy,
    lags: LagConvention,
    self_part: Option<(Vec<f64>, f64)>,
    backward_part: Option<(Vec<f64>, f64)>,
}

impl NodeThreshold {
    pub fn new(
        network: &Network,
        kernels: &ChannelKernels,
        node: usize,
        lags: LagConvention,
    ) -> Result<Self> {
        let relays = network.relays();
        let policy =
            ThresholdPolicy::for_node(network.protocol.protocol, node, relays, network.protocol.threshold);
        let n = |k: usize| network.protocol.molecules[k] as f64;
        let kernel = |e: usize, o: usize| -> Result<Vec<f64>> {
            kernels.get(e, o).map(|k| k.sums().to_vec()).ok_or_else(|| {
                Error::PolicyViolation(format!(
                    "{} needs molecules of node {e} to reach node {o}, but the scheme separates them",
                    network.protocol.protocol
                ))
            })
        };
        let wants_self = matches!(policy.kind, ThresholdKind::Si | ThresholdKind::SiBi);
        let wants_backward = matches!(
            policy.kind,
            ThresholdKind::Bi | ThresholdKind::SiBi | ThresholdKind::BiHd
        );
        let self_part = if wants_self {
            Some((kernel(node, node)?, n(node)))
        } else {
            None
        };
        let backward_part = if wants_backward {
            guard_backward(node, relays)?;
            Some((kernel(node + 1, node)?, n(node + 1)))
        } else {
            None
        };
        Ok(Self {
            node,
            policy,
            lags,
            self_part,
            backward_part,
        })
    }

    /// Threshold for the detection in interval `j` given the node's own
    /// detection history (only entries before `j` are read).
    pub fn value(&self, j: usize, history: &[Bit]) -> f64 {
        let mut theta = f64::from(self.policy.xi);
        if let Some((sums, n)) = &self.self_part {
            theta += expected_self(j, history, sums, *n, self.lags);
        }
        if let Some((sums, n)) = &self.backward_part {
            theta += expected_backward(j, history, sums, *n, self.lags);
        }
        theta
    }
}
