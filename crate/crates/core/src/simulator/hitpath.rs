//! Observed-path sampling.
//!
//! A release of a Poisson(`N`) number of molecules at node `e` is a Poisson
//! process of Brownian paths. Only paths that sit inside some observer at
//! one of its sample instants ("slots") affect the counts, and those can be
//! generated directly:
//!
//! 1. Each slot `s` has weight `w_s`, the probability that one molecule is
//!    inside the observer at that instant (a Gaussian ball mass).
//! 2. Draw `n ~ Poisson(N·Σ w)` candidate paths. For each, pick a slot with
//!    probability `∝ w_s`, draw the position inside that observer from the
//!    Gaussian restricted to the ball, fill in earlier slot instants with a
//!    Brownian bridge back to the release point and later ones with a free
//!    walk. This is a path drawn with density proportional to `h(path)`,
//!    its number of hit slots.
//! 3. Keep the path with probability `1/h`. The kept paths are exactly the
//!    observed paths of the release, so adding their hits to the slot
//!    counts reproduces the joint count distribution of the molecule
//!    simulation, including one molecule being seen in several samples.
//!
//! Positions are only ever needed at slot instants; multi-step Gaussian
//! jumps between them are exact.

use std::f64::consts::PI;
use std::sync::OnceLock;

use libm::{erf, erfc};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::TrialRng;
use crate::model::Network;

/// `Pr(|X − c| ≤ r)` for `X ~ N(μ, var·I₃)` with `|μ − c| = delta`.
pub(crate) fn ball_mass(delta: f64, r: f64, var: f64) -> f64 {
    let sigma = var.sqrt();
    let s2 = std::f64::consts::SQRT_2 * sigma;
    if delta <= 1e-9 * sigma {
        let p = erf(r / s2) - (2.0 / PI).sqrt() * (r / sigma) * (-r * r / (2.0 * var)).exp();
        return p.clamp(0.0, 1.0);
    }
    let radial = if delta > r {
        0.5 * (erfc((delta - r) / s2) - erfc((delta + r) / s2))
    } else {
        0.5 * (erf((r + delta) / s2) + erf((r - delta) / s2))
    };
    let tails = sigma / (delta * (2.0 * PI).sqrt())
        * ((-(r - delta).powi(2) / (2.0 * var)).exp() - (-(r + delta).powi(2) / (2.0 * var)).exp());
    (radial - tails).clamp(0.0, 1.0)
}

/// One sample instant after a release at which at least one observer of
/// the released type samples.
#[derive(Clone, Debug)]
struct SlotStep {
    /// Brownian steps since the release.
    k: u32,
    /// Global interval of the instant (1-based).
    interval: u32,
    observers: Vec<u32>,
}

/// Slots of one release (emitter, interval).
#[derive(Clone, Debug, Default)]
struct SlotTable {
    total: f64,
    cumulative: Vec<f64>,
    /// Per slot: index into `steps` and the observer node.
    slots: Vec<(u32, u32)>,
    steps: Vec<SlotStep>,
}

#[derive(Clone, Debug)]
struct ObserverGeometry {
    centre: [f64; 3],
    radius: f64,
}

#[derive(Clone, Debug)]
struct EmitterTables {
    centre: [f64; 3],
    /// Observers of the emitted type.
    listeners: Vec<u32>,
    diffusion: f64,
    /// Indexed by release interval − 1; empty when the node never
    /// transmits in that interval.
    by_interval: Vec<SlotTable>,
}

/// Precomputed slot tables of a network, shared by all trials.
#[derive(Clone, Debug)]
pub struct HitPathTables {
    t0: f64,
    observers: Vec<ObserverGeometry>,
    emitters: Vec<EmitterTables>,
}

impl HitPathTables {
    pub fn new(network: &Network, steps_per_interval: usize) -> Self {
        let topo = &network.topology;
        let timing = &network.timing;
        let schedule = network.schedule();
        let t0 = timing.sample_spacing;
        let observers = topo
            .nodes
            .iter()
            .map(|n| ObserverGeometry {
                centre: n.position,
                radius: n.radius,
            })
            .collect::<Vec<_>>();
        let emitters = (0..=topo.relays)
            .map(|e| {
                let kind = topo.emit_type(e).expect("nodes 0..=Q transmit");
                let diffusion = topo.diffusion(kind);
                let centre = topo.nodes[e].position;
                let listeners: Vec<usize> = (1..=topo.relays + 1)
                    .filter(|&q| topo.detect_type(q) == Some(kind))
                    .collect();
                let by_interval = (1..=schedule.intervals)
                    .map(|tau_e| {
                        if schedule.transmitted_bit(e, tau_e).is_none() {
                            return SlotTable::default();
                        }
                        let mut table = SlotTable::default();
                        let mut acc = 0.0;
                        for tau in tau_e..=schedule.intervals {
                            let active: Vec<usize> = listeners
                                .iter()
                                .copied()
                                .filter(|&q| schedule.detected_bit(q, tau).is_some())
                                .collect();
                            if active.is_empty() {
                                continue;
                            }
                            for m in 1..=timing.samples {
                                let k = (tau - tau_e) * steps_per_interval + m;
                                let var = 2.0 * diffusion * t0 * k as f64;
                                let step_index = table.steps.len() as u32;
                                for &q in &active {
                                    let o = &observers[q];
                                    let delta = distance(&centre, &o.centre);
                                    acc += ball_mass(delta, o.radius, var);
                                    table.cumulative.push(acc);
                                    table.slots.push((step_index, q as u32));
                                }
                                table.steps.push(SlotStep {
                                    k: k as u32,
                                    interval: tau as u32,
                                    observers: active.iter().map(|&q| q as u32).collect(),
                                });
                            }
                        }
                        table.total = acc;
                        table
                    })
                    .collect();
                EmitterTables {
                    centre,
                    listeners: listeners.iter().map(|&q| q as u32).collect(),
                    diffusion,
                    by_interval,
                }
            })
            .collect();
        Self {
            t0,
            observers,
            emitters,
        }
    }

    /// Expected number of observed (path, slot) hits per released molecule
    /// of emitter `e` released in interval `tau`.
    pub fn hits_per_molecule(&self, e: usize, tau: usize) -> f64 {
        self.emitters[e].by_interval[tau - 1].total
    }

    /// Adds the hits of a Poisson(`n`) release of emitter `e` at the start
    /// of interval `tau` to `counts[q][interval - 1]`.
    pub(crate) fn emit(&self, e: usize, tau: usize, n: f64, counts: &mut [Vec<u64>], rng: &mut TrialRng) {
        let em = &self.emitters[e];
        let table = &em.by_interval[tau - 1];
        let lambda = n * table.total;
        if !(lambda > 0.0) {
            return;
        }
        let candidates = Poisson::new(lambda).expect("positive rate").sample(rng) as u64;
        let unit = 2.0 * em.diffusion * self.t0;
        let mut hits: Vec<(u32, u32)> = Vec::with_capacity(16);
        for _ in 0..candidates {
            let u = rng.gen::<f64>() * table.total;
            let slot = table.cumulative.partition_point(|&c| c < u).min(table.slots.len() - 1);
            let (si, q) = table.slots[slot];
            let si = si as usize;
            let anchor = &table.steps[si];
            let var = unit * f64::from(anchor.k);
            let target = &self.observers[q as usize];
            let x_anchor = sample_in_ball(&target.centre, target.radius, &em.centre, var, rng);

            hits.clear();
            self.record_hits(anchor, &x_anchor, &mut hits);
            // earlier instants: bridge from the release point to the anchor
            self.walk_bridge(em, table, si, x_anchor, &mut hits, rng);
            // later instants: free walk from the anchor, jumping over
            // stretches where no observer can be reached
            self.walk_forward(em, table, si, x_anchor, &mut hits, rng);
            debug_assert!(!hits.is_empty());
            if rng.gen::<f64>() * (hits.len() as f64) < 1.0 {
                for &(q, interval) in &hits {
                    counts[q as usize][interval as usize - 1] += 1;
                }
            }
        }
    }

    /// Fills in the slot instants before slot step `si` with a Brownian
    /// bridge from the release point to `x_anchor`, recording hits.
    ///
    /// Read backwards from the anchor, with `r` the time before the anchor
    /// and `T` the anchor time, the bridge is
    /// `Y(r) = x_a + (r/T)(c − x_a) + (1 − r/T)·W(u)` for a free Brownian
    /// motion `W` at time `u = rT/(T − r)`. In `W` coordinates an observer
    /// `(o, ρ)` becomes a ball with centre `o − x_a + u(o − c)/T` and radius
    /// `ρ(1 + u/T)`, so the same ball jumps as in the forward walk apply,
    /// with the distance to each moving target minimised in closed form
    /// over the remaining time.
    fn walk_bridge(
        &self,
        em: &EmitterTables,
        table: &SlotTable,
        si: usize,
        x_anchor: [f64; 3],
        hits: &mut Vec<(u32, u32)>,
        rng: &mut TrialRng,
    ) {
        if si == 0 {
            return;
        }
        let d = em.diffusion;
        let t0 = self.t0;
        let steps = &table.steps;
        let t_anchor = f64::from(steps[si].k) * t0;
        // bridge time of the slot instant `i` (< si), increasing as `i` falls
        let u_of = |i: usize| {
            let s = f64::from(steps[i].k) * t0;
            (t_anchor - s) * t_anchor / s
        };
        let u_end = u_of(0);
        let mut w = [0.0f64; 3];
        let mut u = 0.0;
        // slot instants still to visit are steps[..next]
        let mut next = si;
        while next > 0 {
            let u_next = u_of(next - 1);
            let gap = em
                .listeners
                .iter()
                .map(|&q| {
                    let o = &self.observers[q as usize];
                    moving_target_gap(&w, &o.centre, o.radius, &x_anchor, &em.centre, t_anchor, u, u_end)
                })
                .fold(f64::INFINITY, f64::min);
            if gap > 0.0 && gap * gap > EXIT_JUMP_FACTOR * 6.0 * d * (u_next - u) {
                let exit = u + gap * gap / d * exit_time_standard(rng.gen());
                if exit >= u_end {
                    return;
                }
                let dir = uniform_direction(rng);
                for (wi, v) in w.iter_mut().zip(&dir) {
                    *wi += gap * v;
                }
                u = exit;
                // first instant (counting down) with bridge time beyond `u`
                next = steps[..next].partition_point(|st| {
                    let s = f64::from(st.k) * t0;
                    (t_anchor - s) * t_anchor / s <= u
                });
            } else {
                let sd = (2.0 * d * (u_next - u)).sqrt();
                for v in w.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sd * z;
                }
                u = u_next;
                next -= 1;
                let s = f64::from(steps[next].k) * t0;
                let r = t_anchor - s;
                let mut y = [0.0; 3];
                for k in 0..3 {
                    y[k] = x_anchor[k] + r / t_anchor * (em.centre[k] - x_anchor[k]) + s / t_anchor * w[k];
                }
                self.record_hits(&steps[next], &y, hits);
            }
        }
    }

    /// Continues a path from slot step `si` (position `x`) through the
    /// remaining slot instants, recording hits.
    ///
    /// Far from every observer the walk moves by exit events of the largest
    /// ball around the current position that avoids all observers: the exit
    /// point is uniform on the sphere and the exit time follows the
    /// ball's exit-time law, and every sample instant before the exit is
    /// certainly a miss. Close to an observer, or when the next instant is
    /// near, the walk jumps straight to the next instant.
    fn walk_forward(
        &self,
        em: &EmitterTables,
        table: &SlotTable,
        si: usize,
        mut x: [f64; 3],
        hits: &mut Vec<(u32, u32)>,
        rng: &mut TrialRng,
    ) {
        let d = em.diffusion;
        let t0 = self.t0;
        let steps = &table.steps;
        let Some(last) = steps.last() else { return };
        let t_last = f64::from(last.k) * t0;
        let mut t = f64::from(steps[si].k) * t0;
        let mut next = si + 1;
        while next < steps.len() {
            let t_next = f64::from(steps[next].k) * t0;
            let gap = em
                .listeners
                .iter()
                .map(|&q| {
                    let o = &self.observers[q as usize];
                    distance(&x, &o.centre) - o.radius
                })
                .fold(f64::INFINITY, f64::min);
            if gap > 0.0 && gap * gap > EXIT_JUMP_FACTOR * 6.0 * d * (t_next - t) {
                let exit = t + gap * gap / d * exit_time_standard(rng.gen());
                if exit >= t_last {
                    return;
                }
                let dir = uniform_direction(rng);
                for (xi, v) in x.iter_mut().zip(&dir) {
                    *xi += gap * v;
                }
                t = exit;
                next += steps[next..].partition_point(|st| f64::from(st.k) * t0 <= t);
            } else {
                let sd = (2.0 * d * (t_next - t)).sqrt();
                for v in x.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sd * z;
                }
                self.record_hits(&steps[next], &x, hits);
                t = t_next;
                next += 1;
            }
        }
    }

    fn record_hits(&self, step: &SlotStep, x: &[f64; 3], hits: &mut Vec<(u32, u32)>) {
        for &q in &step.observers {
            let o = &self.observers[q as usize];
            if distance2(x, &o.centre) <= o.radius * o.radius {
                hits.push((q, step.interval));
            }
        }
    }
}

/// A ball jump is taken when its mean exit time exceeds this many times
/// the time to the next sample instant.
const EXIT_JUMP_FACTOR: f64 = 1.0;

/// Exit time of 3-D Brownian motion (generator `D·Δ`) from the centre of a
/// ball of radius `a`, in units of `a²/D`, by inversion of
/// `Pr(τ > s) = 2 Σ_{n≥1} (−1)^{n+1} exp(−n²π² s)` tabulated on a fine grid.
fn exit_time_standard(u: f64) -> f64 {
    let table = EXIT_TABLE.get_or_init(ExitTable::build);
    table.quantile(u)
}

static EXIT_TABLE: OnceLock<ExitTable> = OnceLock::new();

struct ExitTable {
    /// Quantiles at `u = i / QUANTILES`, `i = 0..=QUANTILES`, up to
    /// `TAIL_START`.
    quantiles: Vec<f64>,
}

impl ExitTable {
    const POINTS: usize = 1 << 16;
    const QUANTILES: usize = 1 << 16;
    const S_MIN: f64 = 2e-3;
    const S_MAX: f64 = 4.0;
    /// Above this probability the leading exponential term alone gives the
    /// quantile to double precision.
    const TAIL_START: f64 = 0.999;

    fn survival(s: f64) -> f64 {
        let mut acc = 0.0;
        let mut n = 1.0f64;
        loop {
            let term = (-n * n * PI * PI * s).exp();
            acc += if n as u64 % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
            n += 1.0;
        }
        (2.0 * acc).clamp(0.0, 1.0)
    }

    fn build() -> Self {
        let ratio = (Self::S_MAX / Self::S_MIN).ln() / (Self::POINTS - 1) as f64;
        let mut s: Vec<f64> = (0..Self::POINTS)
            .map(|i| Self::S_MIN * (ratio * i as f64).exp())
            .collect();
        let mut cdf: Vec<f64> = s.iter().map(|&v| 1.0 - Self::survival(v)).collect();
        s.insert(0, 0.0);
        cdf.insert(0, 0.0);
        let quantiles = (0..=Self::QUANTILES)
            .map(|i| {
                let u = i as f64 / Self::QUANTILES as f64;
                if u > Self::TAIL_START {
                    return Self::tail(u);
                }
                let j = cdf.partition_point(|&c| c < u);
                if j == 0 {
                    return 0.0;
                }
                let (c0, c1) = (cdf[j - 1], cdf[j]);
                let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                s[j - 1] + f * (s[j] - s[j - 1])
            })
            .collect();
        Self { quantiles }
    }

    /// Quantile from `Pr(τ > s) ≈ 2 exp(−π² s)`.
    fn tail(u: f64) -> f64 {
        (2.0 / (1.0 - u)).ln() / (PI * PI)
    }

    fn quantile(&self, u: f64) -> f64 {
        if u > Self::TAIL_START {
            return Self::tail(u);
        }
        let x = u * Self::QUANTILES as f64;
        let i = x as usize;
        let f = x - i as f64;
        self.quantiles[i] + f * (self.quantiles[i + 1] - self.quantiles[i])
    }
}

/// A uniformly distributed unit vector.
fn uniform_direction(rng: &mut TrialRng) -> [f64; 3] {
    loop {
        let mut dir = [0.0f64; 3];
        for v in dir.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            return dir.map(|v| v / n);
        }
    }
}

/// Smallest distance, over bridge times in `[u, u_end]`, from `w` to the
/// moving target ball of observer `(o, rho)` in the free-motion frame of a
/// bridge from `release` (time 0) to `anchor` (time `t_anchor`).
///
/// The target has centre `o − anchor + u'·v`, `v = (o − release)/T`, and
/// radius `rho·(1 + u'/T)`; the signed distance is convex in `u'`. Returns
/// `−∞` when the target outgrows its own motion (the observer contains
/// the release point), since it then eventually covers everything.
#[allow(clippy::too_many_arguments)]
fn moving_target_gap(
    w: &[f64; 3],
    o: &[f64; 3],
    rho: f64,
    anchor: &[f64; 3],
    release: &[f64; 3],
    t_anchor: f64,
    u: f64,
    u_end: f64,
) -> f64 {
    let sep = distance(o, release);
    if sep <= rho {
        return f64::NEG_INFINITY;
    }
    let p: [f64; 3] = std::array::from_fn(|k| w[k] - (o[k] - anchor[k]));
    let v: [f64; 3] = std::array::from_fn(|k| (o[k] - release[k]) / t_anchor);
    let speed = sep / t_anchor;
    let along = (p[0] * v[0] + p[1] * v[1] + p[2] * v[2]) / speed;
    let perp = (p.iter().map(|x| x * x).sum::<f64>() - along * along).max(0.0).sqrt();
    let kappa = rho / sep;
    // stationary point of |p − u'v| − rho(1 + u'/T)
    let q = kappa * perp / (1.0 - kappa * kappa).sqrt();
    let u_star = ((q + along) / speed).clamp(u, u_end);
    let dist = (0..3).map(|k| (p[k] - u_star * v[k]).powi(2)).sum::<f64>().sqrt();
    dist - rho * (1.0 + u_star / t_anchor)
}

fn distance2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    distance2(a, b).sqrt()
}

/// Draws `X ~ N(mean, var·I₃)` conditioned on `|X − centre| ≤ radius`:
/// uniform proposals in the ball, accepted with the Gaussian density
/// relative to its maximum over the ball.
fn sample_in_ball(centre: &[f64; 3], radius: f64, mean: &[f64; 3], var: f64, rng: &mut TrialRng) -> [f64; 3] {
    let nearest = (distance(centre, mean) - radius).max(0.0);
    loop {
        let mut dir = [0.0; 3];
        for d in dir.iter_mut() {
            *d = rng.sample(StandardNormal);
        }
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let rho = radius * rng.gen::<f64>().cbrt() / norm;
        let x = [
            centre[0] + rho * dir[0],
            centre[1] + rho * dir[1],
            centre[2] + rho * dir[2],
        ];
        let excess = distance2(&x, mean) - nearest * nearest;
        if rng.gen::<f64>() < (-excess / (2.0 * var)).exp() {
            return x;
        }
    }
}
