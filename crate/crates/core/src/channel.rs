//! Closed-form diffusion statistics: point-source concentration, the
//! observation probabilities of a passive spherical observer, expected
//! observed counts, and the Poisson CDF with its continuous approximations.

use std::f64::consts::PI;

use libm::erf;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::model::{Bit, NetworkTopology, TimingConfig};

/// Concentration (molecules/m³) at `offset` from an impulsive point source
/// of `n` molecules released `t` seconds earlier in unbounded space.
pub fn concentration(offset: [f64; 3], t: f64, n: f64, diffusion: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be > 0, got {t}")));
    }
    let d2: f64 = offset.iter().map(|x| x * x).sum();
    let spread = 4.0 * diffusion * t;
    Ok(n / (PI * spread).powf(1.5) * (-d2 / spread).exp())
}

/// Probability that one molecule released at distance `distance` is inside
/// an observer of volume `volume` at time `t`, assuming the concentration
/// is uniform over the observer. Clamped to `[0, 1]`; zero for `t <= 0`.
pub fn p_ob(distance: f64, t: f64, volume: f64, diffusion: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let spread = 4.0 * diffusion * t;
    let p = volume / (PI * spread).powf(1.5) * (-distance * distance / spread).exp();
    p.clamp(0.0, 1.0)
}

/// Probability that a molecule released at the centre of a sphere of
/// radius `radius` is still inside it `t` seconds later. One for `t <= 0`.
pub fn p_self(t: f64, radius: f64, diffusion: f64) -> f64 {
    if !(t > 0.0) {
        return 1.0;
    }
    let dt = diffusion * t;
    let p = erf(radius / (2.0 * dt.sqrt())) - radius * (-radius * radius / (4.0 * dt)).exp()
        / (PI * dt).sqrt();
    p.clamp(0.0, 1.0)
}

/// Per-lag observation probabilities between one emitter and one observer.
///
/// `table[lag][m - 1]` is the probability that a molecule released at the
/// start of interval `i` is observed at sample `m` of interval `i + lag`.
/// When emitter and observer coincide the self-observation probability is
/// used instead of the point-observer formula.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationKernel {
    pub emitter: usize,
    pub observer: usize,
    pub diffusion: f64,
    table: Vec<Vec<f64>>,
    sums: Vec<f64>,
}

impl ObservationKernel {
    /// Kernel over lags `0..memory` for the given node pair.
    pub fn new(
        topology: &NetworkTopology,
        emitter: usize,
        observer: usize,
        timing: &TimingConfig,
        memory: usize,
    ) -> Result<Self> {
        let e = topology.node(emitter)?;
        let o = topology.node(observer)?;
        let kind = topology.emit_type(emitter).ok_or_else(|| {
            invalid("emitter", format!("node {emitter} does not transmit"))
        })?;
        if topology.detect_type(observer) != Some(kind) {
            return Err(invalid(
                "observer",
                format!("node {observer} does not detect {kind} emitted by node {emitter}"),
            ));
        }
        let diffusion = topology.diffusion(kind);
        let distance = e.distance_to(o);
        let table = (0..memory)
            .map(|lag| {
                (1..=timing.samples)
                    .map(|m| {
                        let t = lag as f64 * timing.bit_interval + timing.sample_time(m);
                        if emitter == observer {
                            p_self(t, o.radius, diffusion)
                        } else {
                            p_ob(distance, t, o.volume, diffusion)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self::from_table(emitter, observer, diffusion, table))
    }

    /// Kernel from an explicit table (rows are lags, columns samples).
    pub fn from_table(emitter: usize, observer: usize, diffusion: f64, table: Vec<Vec<f64>>) -> Self {
        let sums = table.iter().map(|row| row.iter().sum()).collect();
        Self {
            emitter,
            observer,
            diffusion,
            table,
            sums,
        }
    }

    pub fn memory(&self) -> usize {
        self.table.len()
    }

    /// Observation probability at sample `m` (1-based) after `lag` intervals.
    pub fn prob(&self, lag: usize, m: usize) -> f64 {
        self.table.get(lag).map_or(0.0, |row| row[m - 1])
    }

    /// `Σ_m` of the observation probabilities at `lag`; zero past the memory.
    pub fn sum(&self, lag: usize) -> f64 {
        self.sums.get(lag).copied().unwrap_or(0.0)
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// Drops trailing lags whose whole-interval contribution per released
    /// molecule stays below `tolerance`.
    pub fn truncated(mut self, tolerance: f64) -> Self {
        let keep = self
            .sums
            .iter()
            .rposition(|&s| s >= tolerance)
            .map_or(1, |i| i + 1);
        self.table.truncate(keep);
        self.sums.truncate(keep);
        self
    }
}

/// Expected number of observed molecules (summed over the interval's
/// samples) in interval `j` (1-based) due to one emitter whose per-interval
/// bits are `emissions` and who releases `n` molecules per 1. Bits act as
/// weights, so superposed sequences add.
pub fn mean_observed(emissions: &[Bit], kernel: &ObservationKernel, n: f64, j: usize) -> f64 {
    let upto = j.min(emissions.len());
    n * (1..=upto)
        .filter(|&i| emissions[i - 1] != 0)
        .map(|i| f64::from(emissions[i - 1]) * kernel.sum(j - i))
        .sum::<f64>()
}

/// Per-interval expected observed counts for one observer.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalMean {
    pub per_interval: Vec<f64>,
}

impl SignalMean {
    pub fn at(&self, j: usize) -> f64 {
        self.per_interval[j - 1]
    }
}

/// All observation kernels of a network: one per (emitter, observer) pair
/// sharing a molecule type.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelKernels {
    relays: usize,
    kernels: Vec<Vec<Option<ObservationKernel>>>,
}

impl ChannelKernels {
    pub fn new(topology: &NetworkTopology, timing: &TimingConfig, memory: usize) -> Result<Self> {
        let n = topology.relays + 2;
        let mut kernels = vec![vec![None; n]; n];
        for observer in 1..n {
            for emitter in topology.emitters_seen_by(observer) {
                kernels[emitter][observer] = Some(ObservationKernel::new(
                    topology, emitter, observer, timing, memory,
                )?);
            }
        }
        Ok(Self {
            relays: topology.relays,
            kernels,
        })
    }

    pub fn get(&self, emitter: usize, observer: usize) -> Option<&ObservationKernel> {
        self.kernels.get(emitter)?.get(observer)?.as_ref()
    }

    pub fn emitters_of(&self, observer: usize) -> impl Iterator<Item = &ObservationKernel> {
        (0..=self.relays).filter_map(move |e| self.get(e, observer))
    }
}

/// Mean of the complete received signal at `observer` in interval `j`:
/// the sum over every emitter of the observer's molecule type.
/// `emissions[e]` is emitter `e`'s per-interval bit sequence and
/// `molecules[e]` its per-1 release.
pub fn complete_signal_mean(
    kernels: &ChannelKernels,
    emissions: &[Vec<Bit>],
    molecules: &[u64],
    observer: usize,
    j: usize,
) -> f64 {
    kernels
        .emitters_of(observer)
        .map(|k| mean_observed(&emissions[k.emitter], k, molecules[k.emitter] as f64, j))
        .sum()
}

/// Mean above which the CDF is accumulated in log space.
const LOG_SPACE_MEAN: f64 = 600.0;

/// `Pr(X < xi)` for `X ~ Poisson(mean)`, `xi >= 1`.
pub fn poisson_cdf(xi: u32, mean: f64) -> f64 {
    debug_assert!(mean >= 0.0, "negative Poisson mean {mean}");
    if xi == 0 {
        return 0.0;
    }
    if mean <= 0.0 {
        return 1.0;
    }
    if mean < LOG_SPACE_MEAN {
        let mut term = (-mean).exp();
        let mut acc = term;
        for w in 1..xi {
            term *= mean / f64::from(w);
            acc += term;
            if term < acc * 1e-17 && f64::from(w) > mean {
                break;
            }
        }
        acc.min(1.0)
    } else {
        // log-sum-exp over log terms built by the same running ratio
        let ln_mean = mean.ln();
        let mut log_term = -mean;
        let mut max = log_term;
        let mut logs = Vec::with_capacity(xi as usize);
        logs.push(log_term);
        for w in 1..xi {
            log_term += ln_mean - f64::from(w).ln();
            max = max.max(log_term);
            logs.push(log_term);
        }
        let s: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        (max + s.ln()).exp().min(1.0)
    }
}

/// `Pr(X < threshold)` for a real threshold: an integer count reaches a
/// real threshold `θ` exactly when it reaches `⌈θ⌉`.
pub fn poisson_below(threshold: f64, mean: f64) -> f64 {
    if threshold <= 0.0 {
        return 0.0;
    }
    let xi = threshold.ceil();
    if xi >= f64::from(u32::MAX) {
        return 1.0;
    }
    poisson_cdf(xi as u32, mean)
}

/// `Pr(X >= xi)` for `X ~ Poisson(mean)`, accurate in the far upper tail:
/// when `xi` exceeds the mean the tail is summed directly instead of being
/// formed as `1 − Pr(X < xi)`, which cancels to rounding noise there.
pub fn poisson_sf(xi: u32, mean: f64) -> f64 {
    debug_assert!(mean >= 0.0, "negative Poisson mean {mean}");
    if xi == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    if f64::from(xi) <= mean {
        return 1.0 - poisson_cdf(xi, mean);
    }
    let k0 = f64::from(xi);
    let mut term = (k0 * mean.ln() - mean - ln_gamma(k0 + 1.0)).exp();
    let mut acc = term;
    let mut k = k0;
    while term > acc * 1e-17 {
        k += 1.0;
        term *= mean / k;
        acc += term;
    }
    acc.min(1.0)
}

/// `Pr(X >= threshold)` for a real threshold; the complement of
/// [`poisson_below`].
pub fn poisson_at_least(threshold: f64, mean: f64) -> f64 {
    if threshold <= 0.0 {
        return 1.0;
    }
    let xi = threshold.ceil();
    if xi >= f64::from(u32::MAX) {
        return 0.0;
    }
    poisson_sf(xi as u32, mean)
}

/// The Poisson CDF through the regularized upper incomplete gamma function,
/// `Γ(⌈s⌉, mean) / Γ(⌈s⌉)`.
pub fn poisson_cdf_gamma(s: f64, mean: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(invalid("s", format!("must be finite and > 0, got {s}")));
    }
    if !(mean >= 0.0) {
        return Err(invalid("mean", format!("must be >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(s.ceil(), mean))
}

/// `∫₀^ξ e^{ω−ρ} (ρ/ω)^{ω+½} / √(2πρ) dω`: the Poisson pmf with the
/// factorial replaced by Stirling's formula, integrated over a continuous
/// count. Integrated in `u = √ω`, which removes the `ω^{-½}` endpoint
/// singularity.
pub fn stirling_integral(xi: f64, mean: f64) -> Result<f64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(invalid("mean", format!("must be finite and > 0, got {mean}")));
    }
    if !xi.is_finite() {
        return Err(invalid("xi", format!("must be finite, got {xi}")));
    }
    if xi <= 0.0 {
        return Ok(0.0);
    }
    let ln_mean = mean.ln();
    let ln_norm = std::f64::consts::LN_2 + 0.5 * ln_mean - 0.5 * (2.0 * PI * mean).ln();
    let integrand = move |u: f64| -> f64 {
        if u <= 0.0 {
            return (ln_norm - mean).exp();
        }
        let w = u * u;
        (ln_norm + w - mean + w * (ln_mean - w.ln())).exp()
    };
    adaptive_simpson(integrand, 0.0, xi.sqrt(), 1e-8)
}

/// Continuous approximation of `Pr(X < ξ)` via the Stirling-form integral.
/// The last summed term of the exact CDF is the count `ξ − 1`, so the
/// integral is taken up to `ξ − ½` (continuity correction).
pub fn poisson_cdf_stirling(xi: f64, mean: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(invalid("xi", format!("must be > 0, got {xi}")));
    }
    Ok(stirling_integral(xi - 0.5, mean)?.min(1.0))
}

/// Adaptive Simpson quadrature over an initial composite grid.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const PANELS: usize = 64;
    const MAX_DEPTH: u32 = 40;
    let h = (b - a) / PANELS as f64;
    let simpson = |fa: f64, fm: f64, fb: f64, width: f64| width / 6.0 * (fa + 4.0 * fm + fb);
    let mut panels = Vec::with_capacity(PANELS);
    let mut coarse = 0.0;
    for i in 0..PANELS {
        let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
        let s = simpson(f0, fm, f1, x1 - x0);
        coarse += s;
        panels.push((x0, x1, f0, fm, f1, s));
    }
    let abs_tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);

    fn refine<F: Fn(f64) -> f64>(
        f: &F,
        (x0, x1, f0, fm, f1, whole): (f64, f64, f64, f64, f64, f64),
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let xm = 0.5 * (x0 + x1);
        let (fl, fr) = (f(0.5 * (x0 + xm)), f(0.5 * (xm + x1)));
        let left = (xm - x0) / 6.0 * (f0 + 4.0 * fl + fm);
        let right = (x1 - xm) / 6.0 * (fm + 4.0 * fr + f1);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            refine(f, (x0, xm, f0, fl, fm, left), tol / 2.0, depth - 1)?
                + refine(f, (xm, x1, fm, fr, f1, right), tol / 2.0, depth - 1)?,
        )
    }

    let per_panel = abs_tol / PANELS as f64;
    panels
        .into_iter()
        .map(|p| {
            refine(&f, p, per_panel, MAX_DEPTH).ok_or_else(|| {
                Error::Quadrature(format!(
                    "no convergence on [{:.6}, {:.6}] within {MAX_DEPTH} bisections",
                    p.0, p.1
                ))
            })
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sphere_volume, Scheme, DEFAULT_DIFFUSION as D, DEFAULT_RADIUS as R};

    /// Direct pmf summation with factorials from a product, the reference
    /// for every CDF routine.
    fn pmf_sum(xi: u32, mean: f64) -> f64 {
        (0..xi)
            .map(|w| {
                let fact: f64 = (1..=w).map(f64::from).product();
                (-mean).exp() * mean.powi(w as i32) / fact
            })
            .sum()
    }

    #[test]
    fn concentration_at_source_centre() {
        let t = 1e-4;
        let c = concentration([0.0; 3], t, 1.0, D).unwrap();
        assert!((c - (4.0 * PI * D * t).powf(-1.5)).abs() < 1e-12 * c);
        assert!(concentration([0.0; 3], 0.0, 1.0, D).is_err());
        let late = concentration([1e-7, 0.0, 0.0], 1e6, 1.0, D).unwrap();
        assert!(late < 1e-12 * c);
    }

    #[test]
    fn p_ob_matches_concentration_times_volume() {
        let v = sphere_volume(R);
        for &d in &[100e-9, 250e-9, 600e-9, 1e-6] {
            for k in 0..30 {
                let t = 1e-6 * 10f64.powf(k as f64 / 5.0);
                let c = concentration([d, 0.0, 0.0], t, 1.0, D).unwrap() * v;
                let p = p_ob(d, t, v, D);
                assert!((p - c.min(1.0)).abs() <= 1e-14 * c.max(1e-300));
            }
        }
    }

    #[test]
    fn p_ob_reference_point() {
        // 30-digit evaluation of V (4πDt)^{-3/2} exp(-d²/4Dt)
        let p = p_ob(250e-9, 100e-6, sphere_volume(R), D);
        assert!((p - 6.56863e-4).abs() < 1e-8, "{p}");
        let p2 = p_ob(250e-9, 100e-6, 2.0 * sphere_volume(R), D);
        assert!((p2 - 2.0 * p).abs() < 1e-18);
    }

    #[test]
    fn p_self_limits_and_reference_values() {
        assert!((p_self(1e-15, R, D) - 1.0).abs() < 1e-12);
        assert!(p_self(10.0, R, D) < 1e-8);
        for (t, want) in [(20e-6, 0.0101468), (100e-6, 9.33071e-4), (400e-6, 1.17244e-4)] {
            let got = p_self(t, R, D);
            assert!((got - want).abs() < 1e-5 * want, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn probabilities_bounded_and_decaying() {
        let v = sphere_volume(R);
        let grid: Vec<f64> = (0..=60).map(|k| 1e-6 * 10f64.powf(k as f64 / 10.0)).collect();
        let selfs: Vec<f64> = grid.iter().map(|&t| p_self(t, R, D)).collect();
        assert!(selfs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(selfs.windows(2).all(|w| w[1] <= w[0]));
        let obs: Vec<f64> = grid.iter().map(|&t| p_ob(250e-9, t, v, D)).collect();
        assert!(obs.iter().all(|p| (0.0..=1.0).contains(p)));
        let peak = obs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(obs[peak..].windows(2).all(|w| w[1] <= w[0]));
    }

    fn mm_link() -> (NetworkTopology, TimingConfig) {
        let topo = NetworkTopology::build(1e-6, 1, R, Scheme::SingleMolecule, D).unwrap();
        let timing = TimingConfig::new(200e-6, 10, 20e-6).unwrap();
        (topo, timing)
    }

    #[test]
    fn kernel_uses_self_formula_on_diagonal() {
        let (topo, timing) = mm_link();
        let k = ObservationKernel::new(&topo, 1, 1, &timing, 4).unwrap();
        assert!((k.prob(0, 1) - p_self(20e-6, R, D)).abs() < 1e-15);
        assert!((k.prob(2, 3) - p_self(460e-6, R, D)).abs() < 1e-15);
        let k = ObservationKernel::new(&topo, 0, 1, &timing, 4).unwrap();
        assert!((k.prob(1, 2) - p_ob(500e-9, 240e-6, sphere_volume(R), D)).abs() < 1e-18);
        assert_eq!(k.sum(10), 0.0);
    }

    #[test]
    fn kernel_rejects_type_mismatch() {
        let topo = NetworkTopology::build(1e-6, 2, R, Scheme::MultiMolecule, D).unwrap();
        let timing = TimingConfig::new(200e-6, 10, 20e-6).unwrap();
        assert!(ObservationKernel::new(&topo, 0, 2, &timing, 3).is_err());
        assert!(ObservationKernel::new(&topo, 3, 2, &timing, 3).is_err());
    }

    #[test]
    fn mean_observed_cases() {
        let (topo, timing) = mm_link();
        let k = ObservationKernel::new(&topo, 0, 1, &timing, 8).unwrap();
        assert_eq!(mean_observed(&[0; 8], &k, 1e4, 8), 0.0);
        let mut w = vec![0; 8];
        w[4] = 1;
        assert!((mean_observed(&w, &k, 1e4, 5) - 1e4 * k.sum(0)).abs() < 1e-12);
        let a = [1, 0, 1, 1, 0, 0, 1, 0];
        let b = [0, 1, 1, 0, 0, 1, 0, 0];
        let both: Vec<Bit> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        for j in 1..=8 {
            let sum = mean_observed(&a, &k, 1e4, j) + mean_observed(&b, &k, 1e4, j);
            assert!((mean_observed(&both, &k, 1e4, j) - sum).abs() < 1e-12 * sum.max(1.0));
        }
    }

    #[test]
    fn complete_signal_is_sum_over_same_type_emitters() {
        let (topo, timing) = mm_link();
        let kernels = ChannelKernels::new(&topo, &timing, 6).unwrap();
        let s = vec![1, 0, 1, 1, 0, 0];
        let r = vec![0, 1, 0, 1, 1, 0];
        let emissions = vec![s.clone(), r.clone()];
        for j in 1..=6 {
            let total = complete_signal_mean(&kernels, &emissions, &[1000, 1000], 1, j);
            let parts = mean_observed(&s, kernels.get(0, 1).unwrap(), 1000.0, j)
                + mean_observed(&r, kernels.get(1, 1).unwrap(), 1000.0, j);
            assert!((total - parts).abs() < 1e-12);
        }
        let silent = vec![vec![0; 6]; 2];
        assert_eq!(complete_signal_mean(&kernels, &silent, &[1000, 1000], 1, 4), 0.0);
    }

    #[test]
    fn truncation_keeps_significant_lags() {
        let (topo, timing) = mm_link();
        let k = ObservationKernel::new(&topo, 1, 1, &timing, 200).unwrap();
        let t = k.clone().truncated(1e-5);
        assert!(t.memory() < 200);
        assert!(t.sums().iter().all(|&s| s >= 0.0));
        assert!(k.sum(t.memory()) < 1e-5);
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(poisson_cdf(7, 0.0), 1.0);
        assert!((poisson_cdf(1, 3.3) - (-3.3f64).exp()).abs() < 1e-16);
        assert!((poisson_cdf(5, 5.0) - 0.440493285).abs() < 1e-9);
        assert!((poisson_cdf(5, 5.0) - pmf_sum(5, 5.0)).abs() < 1e-14);
    }

    #[test]
    fn cdf_monotonicity() {
        for xi in 1..40 {
            let mut prev = 1.0;
            for k in 0..100 {
                let m = k as f64 * 0.7;
                let c = poisson_cdf(xi, m);
                assert!(c <= prev + 1e-15);
                assert!(poisson_cdf(xi + 1, m) >= c - 1e-15);
                prev = c;
            }
        }
    }

    #[test]
    fn cdf_log_space_branch_is_continuous() {
        let below = poisson_cdf(620, LOG_SPACE_MEAN - 1e-9);
        let above = poisson_cdf(620, LOG_SPACE_MEAN + 1e-9);
        assert!((below - above).abs() < 1e-10);
        let far = poisson_cdf(1000, 1000.0);
        assert!((far - 0.5).abs() < 0.02);
        assert!((far - gamma_ur(1000.0, 1000.0)).abs() < 1e-9);
    }

    #[test]
    fn real_thresholds_round_up() {
        assert_eq!(poisson_below(4.2, 3.0), poisson_cdf(5, 3.0));
        assert_eq!(poisson_below(5.0, 3.0), poisson_cdf(5, 3.0));
        assert_eq!(poisson_below(0.0, 3.0), 0.0);
        assert_eq!(poisson_at_least(0.0, 3.0), 1.0);
        assert_eq!(poisson_at_least(4.2, 3.0), poisson_sf(5, 3.0));
    }

    #[test]
    fn upper_tail_is_accurate_far_out() {
        // Σ_{k≥ξ} e^{-m} m^k / k! with ln k! accumulated term by term
        let oracle = |xi: u32, m: f64| {
            let ln_fact: f64 = (1..=xi).map(|k| f64::from(k).ln()).sum();
            let mut term = (f64::from(xi) * m.ln() - m - ln_fact).exp();
            let mut sum = 0.0;
            for k in xi + 1..xi + 400 {
                sum += term;
                term *= m / f64::from(k);
            }
            sum
        };
        for (xi, m) in [(30, 1.0), (60, 12.5), (200, 40.0), (8, 7.9), (25, 3.0)] {
            let (got, want) = (poisson_sf(xi, m), oracle(xi, m));
            assert!((got - want).abs() <= 1e-12 * want, "{xi} {m}: {got:e} vs {want:e}");
        }
        assert!(poisson_sf(30, 1.0) > 0.0 && 1.0 - poisson_cdf(30, 1.0) == 0.0);
        for (xi, m) in [(3, 5.0), (10, 10.0), (1, 0.2)] {
            assert!((poisson_sf(xi, m) + poisson_cdf(xi, m) - 1.0).abs() < 1e-14);
        }
        assert_eq!(poisson_sf(0, 2.0), 1.0);
        assert_eq!(poisson_sf(4, 0.0), 0.0);
    }

    #[test]
    fn gamma_route() {
        assert_eq!(poisson_cdf_gamma(3.0, 0.0).unwrap(), 1.0);
        assert!((poisson_cdf_gamma(1.0, 2.5).unwrap() - (-2.5f64).exp()).abs() < 1e-14);
        assert!((poisson_cdf_gamma(5.0, 5.0).unwrap() - pmf_sum(5, 5.0)).abs() < 1e-12);
        assert!((poisson_cdf_gamma(4.3, 5.0).unwrap() - pmf_sum(5, 5.0)).abs() < 1e-12);
        assert!(poisson_cdf_gamma(0.0, 1.0).is_err());
    }

    #[test]
    fn stirling_integral_endpoint_and_monotone() {
        assert_eq!(stirling_integral(0.0, 5.0).unwrap(), 0.0);
        assert!(stirling_integral(1e-12, 5.0).unwrap() < 1e-5);
        let mut prev = 0.0;
        for k in 1..=60 {
            let v = stirling_integral(k as f64 * 0.5, 5.0).unwrap();
            assert!(v >= prev - 1e-8 * prev);
            prev = v;
        }
        // reference quadrature at 30 digits
        assert!((stirling_integral(5.0, 5.0).unwrap() - 0.5458).abs() < 1e-3);
        assert!((stirling_integral(4.5, 5.0).unwrap() - 0.45504).abs() < 1e-4);
    }

    #[test]
    fn stirling_cdf_close_to_exact() {
        let approx = poisson_cdf_stirling(5.0, 5.0).unwrap();
        assert!((approx - 0.440493285).abs() < 0.05, "{approx}");
    }
}
