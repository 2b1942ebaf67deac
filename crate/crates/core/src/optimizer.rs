//! Closed-form optimal emission count and detection threshold of a single
//! link, their averages over bit intervals and histories, and exhaustive
//! grid searches used both as a fallback and as a validation oracle.
//!
//! For a weighted-sum detector the optimal decision between `Poisson(m0)`
//! and `Poisson(m1)` with priors `P0`, `P1` compares the log-likelihood
//! ratio `k·ln(m1/m0) − (m1 − m0) + ln(P1/P0)` with zero, where
//! `m1 − m0 = N_A·ΣP_ob`. Solving the equality for the count `k` gives the
//! optimal threshold, and solving it for `N_A` at fixed threshold gives the
//! optimal number of released molecules.

use rayon::prelude::*;

use crate::analysis::{average_link_error, evaluate_network, AnalysisOptions, HistoryAveraging, SingleLink};
use crate::error::{invalid, Error, Result};
use crate::model::{Bit, Network};

/// The quantity being optimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parameter {
    /// Molecules released per bit 1 (`N_A`).
    Molecules,
    /// Detection threshold (`ξ`).
    Threshold,
}

/// How an optimum was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    /// No ISI at this point (`m0 = 0`): the log ratio diverges and the
    /// value comes from a grid search.
    BruteForce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Optimum {
    pub value: u64,
    pub method: Method,
}

/// Inputs of the closed forms for one bit `j` and history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkOptimizationInput {
    /// `Σ_m P_ob(t_m)` of the current bit.
    pub signal_sum: f64,
    /// Mean count with the current bit 0.
    pub m0: f64,
    /// Mean count with the current bit 1.
    pub m1: f64,
    pub p1: f64,
}

impl LinkOptimizationInput {
    /// Evaluates the means of `link` for bit `j` given the history, at the
    /// link's operating `N_A`.
    pub fn from_link(link: &SingleLink, j: usize, history: &[Bit]) -> Self {
        let (m0, m1) = link.means(history, j);
        Self {
            signal_sum: link.signal_sum(),
            m0,
            m1,
            p1: link.p1,
        }
    }

    fn log_ratio(&self) -> Option<f64> {
        (self.m0 > 0.0 && self.m1 > self.m0).then(|| (self.m1 / self.m0).ln())
    }
}

/// Unrounded optimal `N_A` at threshold `xi`:
/// `[ln(P1/P0) + ξ·ln(m1/m0)] / ΣP_ob`. `None` without ISI.
pub fn na_crossing(input: &LinkOptimizationInput, xi: f64) -> Option<f64> {
    let ratio = input.log_ratio()?;
    Some(((input.p1 / (1.0 - input.p1)).ln() + xi * ratio) / input.signal_sum)
}

/// Unrounded optimal threshold at `N_A = na`:
/// `[ln(P0/P1) + N_A·ΣP_ob] / ln(m1/m0)`. `None` without ISI.
pub fn xi_crossing(input: &LinkOptimizationInput, na: f64) -> Option<f64> {
    let ratio = input.log_ratio()?;
    Some((((1.0 - input.p1) / input.p1).ln() + na * input.signal_sum) / ratio)
}

/// Candidate release counts for grid searches: 100 to 50 000 on a 1 %
/// geometric grid.
pub fn molecule_grid() -> Vec<u64> {
    let mut grid = Vec::new();
    let mut v = 100.0f64;
    while v <= 50_000.0 {
        let n = v.round() as u64;
        if grid.last() != Some(&n) {
            grid.push(n);
        }
        v *= 1.01;
    }
    if grid.last() != Some(&50_000) {
        grid.push(50_000);
    }
    grid
}

/// Candidate thresholds for grid searches.
pub const THRESHOLD_RANGE: std::ops::RangeInclusive<u64> = 1..=100;

/// Optimal `N_A` for bit `j` of `link` given the history, at the link's
/// threshold. The ratio `m1/m0` is evaluated once at the link's operating
/// `N_A` (it does not depend on `N_A` for a single transmitter).
pub fn optimal_na(link: &SingleLink, j: usize, history: &[Bit]) -> Result<Optimum> {
    let input = LinkOptimizationInput::from_link(link, j, history);
    match na_crossing(&input, link.threshold) {
        Some(n) => Ok(Optimum {
            value: n.round().max(0.0) as u64,
            method: Method::ClosedForm,
        }),
        None => {
            let isi = link.isi_sum(history, j);
            let (value, _) = brute_force_opt(&molecule_grid(), |n| {
                let probe = SingleLink {
                    molecules: n as f64,
                    ..link.clone()
                };
                probe.error_at(isi)
            })?;
            Ok(Optimum {
                value,
                method: Method::BruteForce,
            })
        }
    }
}

/// Optimal threshold for bit `j` of `link` given the history, at the
/// link's `N_A`.
///
/// The detector decides 1 when the count reaches the threshold, so the
/// best integer threshold is the smallest count at or above the crossing
/// point (a relative slack of 1e-9 absorbs rounding of exact integers).
pub fn optimal_xi(link: &SingleLink, j: usize, history: &[Bit]) -> Result<Optimum> {
    let input = LinkOptimizationInput::from_link(link, j, history);
    match xi_crossing(&input, link.molecules) {
        Some(c) => Ok(Optimum {
            value: (c - 1e-9 * c.abs().max(1.0)).ceil().max(1.0) as u64,
            method: Method::ClosedForm,
        }),
        None => {
            let isi = link.isi_sum(history, j);
            let candidates: Vec<u64> = THRESHOLD_RANGE.collect();
            let (value, _) = brute_force_opt(&candidates, |xi| {
                let probe = SingleLink {
                    threshold: xi as f64,
                    ..link.clone()
                };
                probe.error_at(isi)
            })?;
            Ok(Optimum {
                value,
                method: Method::BruteForce,
            })
        }
    }
}

/// Average of per-(bit, history) optima.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AverageOptimum {
    pub value: f64,
    /// (bit, history) points contributing.
    pub points: usize,
    /// Points without ISI left out of an `N_A` average (their optimum is
    /// the end of the search range).
    pub excluded: usize,
}

/// Averages the optimum of `parameter` over bits `1..=len` and over
/// histories (enumerated or sampled per `averaging`), each bit weighted
/// equally and histories by their probability.
///
/// For `N_A`, points without ISI have no interior optimum and are left out
/// unless every point lacks ISI, in which case their fallback values are
/// averaged.
pub fn average_optimal(
    parameter: Parameter,
    link: &SingleLink,
    len: usize,
    averaging: &HistoryAveraging,
) -> Result<AverageOptimum> {
    if len == 0 {
        return Err(invalid("len", "need at least one bit"));
    }
    let per_bit: Vec<Result<Vec<(f64, f64, bool)>>> = (1..=len)
        .into_par_iter()
        .map(|j| {
            link.histories(j, averaging)
                .into_iter()
                .map(|(weight, history)| {
                    let opt = match parameter {
                        Parameter::Molecules => optimal_na(link, j, &history)?,
                        Parameter::Threshold => optimal_xi(link, j, &history)?,
                    };
                    Ok((weight / len as f64, opt.value as f64, opt.method == Method::BruteForce))
                })
                .collect()
        })
        .collect();
    let mut all = Vec::new();
    for bit in per_bit {
        all.extend(bit?);
    }
    let drop_fallback = parameter == Parameter::Molecules && all.iter().any(|p| !p.2);
    let kept: Vec<_> = all.iter().filter(|p| !(drop_fallback && p.2)).collect();
    let weight: f64 = kept.iter().map(|p| p.0).sum();
    let value = kept.iter().map(|p| p.0 * p.1).sum::<f64>() / weight;
    Ok(AverageOptimum {
        value,
        points: kept.len(),
        excluded: all.len() - kept.len(),
    })
}

/// Exhaustive minimisation of `objective` over `candidates`; ties go to
/// the smaller candidate. Evaluations run in parallel, the reduction is
/// sequential so the result does not depend on scheduling.
pub fn brute_force_opt<F>(candidates: &[u64], objective: F) -> Result<(u64, f64)>
where
    F: Fn(u64) -> f64 + Sync,
{
    if candidates.is_empty() {
        return Err(Error::EmptyRange);
    }
    let values: Vec<f64> = candidates.par_iter().map(|&c| objective(c)).collect();
    let mut best: Option<(u64, f64)> = None;
    for (&c, &v) in candidates.iter().zip(&values) {
        let better = match best {
            None => true,
            Some((bc, bv)) => v < bv || (v == bv && c < bc),
        };
        if better {
            best = Some((c, v));
        }
    }
    Ok(best.expect("non-empty"))
}

/// Grid search of the bit- and history-averaged single-link error over
/// thresholds.
pub fn brute_force_xi(
    link: &SingleLink,
    len: usize,
    averaging: &HistoryAveraging,
    range: std::ops::RangeInclusive<u64>,
) -> Result<(u64, f64)> {
    let candidates: Vec<u64> = range.collect();
    brute_force_opt(&candidates, |xi| {
        let probe = SingleLink {
            threshold: xi as f64,
            ..link.clone()
        };
        average_link_error(&probe, len, averaging)
    })
}

/// Grid search of the bit- and history-averaged single-link error over
/// release counts.
pub fn brute_force_na(
    link: &SingleLink,
    len: usize,
    averaging: &HistoryAveraging,
    candidates: &[u64],
) -> Result<(u64, f64)> {
    brute_force_opt(candidates, |n| {
        let probe = SingleLink {
            molecules: n as f64,
            ..link.clone()
        };
        average_link_error(&probe, len, averaging)
    })
}

/// Grid search of the analytical end-to-end error of a network over the
/// base threshold.
pub fn brute_force_network_xi(
    network: &Network,
    options: AnalysisOptions,
    range: std::ops::RangeInclusive<u64>,
) -> Result<(u64, f64)> {
    let candidates: Vec<u64> = range.collect();
    if candidates.is_empty() {
        return Err(Error::EmptyRange);
    }
    let errors: Vec<Result<f64>> = candidates
        .iter()
        .map(|&xi| {
            let threshold = u32::try_from(xi).map_err(|_| invalid("threshold", "exceeds u32"))?;
            Ok(evaluate_network(&network.with_threshold(threshold)?, options)?.end_to_end())
        })
        .collect();
    let mut values = Vec::with_capacity(errors.len());
    for e in errors {
        values.push(e?);
    }
    // candidates ascend, so the smallest index breaks ties toward the
    // smaller threshold
    let indices: Vec<u64> = (0..values.len() as u64).collect();
    let (i, err) = brute_force_opt(&indices, |i| values[i as usize])?;
    Ok((candidates[i as usize], err))
}
