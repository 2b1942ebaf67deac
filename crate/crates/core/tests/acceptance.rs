//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with the measured quantities.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mcnet::analysis::{evaluate_network, hop_conditional_errors, AnalysisOptions, HistoryAveraging, SingleLink};
use mcnet::channel::{p_ob, p_self, poisson_cdf, poisson_cdf_gamma, poisson_cdf_stirling};
use mcnet::detection::LagConvention;
use mcnet::experiments::{
    emit_results, figure_preset, parse_config, run_experiment, EngineSelection, ExperimentSpec, SeriesProtocol,
};
use mcnet::model::{sphere_volume, MoleculeType, Network, NetworkTopology, Protocol, ProtocolConfig, Scheme, TimingConfig};
use mcnet::optimizer::{average_optimal, brute_force_network_xi, molecule_grid, optimal_na, optimal_xi, Method, Parameter};
use mcnet::simulator::{brownian_step, release, sample_count, trial_rng, Engine, ParticleStore, Simulation};

const D: f64 = 4.365e-10;
const R: f64 = 45e-9;

/// Writes the report line straight to stdout so that it shows up in a
/// plain `cargo test` run, where the test harness captures `println!`.
fn report(criterion: u32, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{verdict} criterion {criterion}: {detail}");
    let _ = out.flush();
}

fn network(scheme: Scheme, protocol: Protocol, relays: usize, x_d: f64, t: f64, m: usize, molecules: Vec<u64>) -> Network {
    let topology = NetworkTopology::build(x_d, relays, R, scheme, D).unwrap();
    let protocol = ProtocolConfig::new(scheme, protocol, 1, molecules).unwrap();
    let timing = TimingConfig::new(t, m, 20e-6).unwrap();
    Network::new(topology, protocol, timing, 0.5, 50).unwrap()
}

/// Network with the total budget split equally; `relays == 0` is the
/// direct link.
fn budget_network(scheme: Scheme, protocol: Protocol, relays: usize, x_d: f64, t: f64, m: usize, total: u64) -> Network {
    let protocol = if relays == 0 { Protocol::Fd } else { protocol };
    network(scheme, protocol, relays, x_d, t, m, mcnet::model::split_budget(total, relays))
}

fn options() -> AnalysisOptions {
    AnalysisOptions {
        sequences: 200,
        seed: 11,
        ..AnalysisOptions::default()
    }
}

/// Network-optimal threshold over `1..=hi` and its analytical error.
fn optimum(net: &Network, hi: u64) -> (u32, f64) {
    let (xi, err) = brute_force_network_xi(net, options(), 1..=hi).unwrap();
    (xi as u32, err)
}

fn analytical(net: &Network) -> f64 {
    evaluate_network(net, options()).unwrap().end_to_end()
}

#[test]
fn criterion_01_cross_engine_agreement() {
    let start = Instant::now();
    let base = network(Scheme::MultiMolecule, Protocol::Fd, 1, 1e-6, 200e-6, 10, vec![10_000, 10_000]);
    let trials = 20_000;
    let mut worst = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut checked = 0;
    let mut failures = Vec::new();
    for xi in (0..10).map(|k| 5 + 3 * k) {
        let net = base.with_threshold(xi).unwrap();
        let a = analytical(&net);
        let s = Simulation::new(&net, Engine::HitPath, LagConvention::default())
            .unwrap()
            .estimate(trials, 1)
            .unwrap()
            .end_to_end();
        if a < 1e-3 {
            continue;
        }
        checked += 1;
        let tol = (3.0 * s.se).max(0.1 * a);
        worst = worst.max((s.rate - a).abs() / tol);
        worst_z = worst_z.max((s.rate - a).abs() / s.se);
        if (s.rate - a).abs() > tol {
            failures.push(format!("xi {xi}: analytical {a:.4e}, simulated {:.4e} ± {:.1e}", s.rate, s.se));
        }
    }
    // the runtime budget refers to a 4-core desktop; it is reported, not
    // asserted, since it depends on the machine running the suite
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let passed = failures.is_empty() && checked > 0;
    report(
        1,
        passed,
        &format!(
            "{checked} grid points, worst |sim - analytical| / tolerance {worst:.2} (worst |z| {worst_z:.2}), \
             {trials} trials per point, runtime {minutes:.1} min on {} worker(s){}",
            rayon::current_num_threads(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_02_poisson_observation() {
    let (n, distance, t, trials) = (10_000u64, 250e-9, 100e-6, 10_000u64);
    let kind = MoleculeType(1);
    let counts: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut store = ParticleStore::new();
            release(&mut store, [0.0; 3], kind, n);
            // five 20 µs steps reach the 100 µs sample
            let mut rng = trial_rng(2, i);
            for _ in 0..5 {
                brownian_step(&mut store, 20e-6, |_| D, &mut rng);
            }
            sample_count(&store, [distance, 0.0, 0.0], R, kind) as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / trials as f64;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (trials - 1) as f64;
    let expected = n as f64 * p_ob(distance, t, sphere_volume(R), D);
    let se = (var / trials as f64).sqrt();
    let dispersion = var / mean;
    let passed = (mean - expected).abs() <= 3.0 * se && (0.9..=1.1).contains(&dispersion);
    report(
        2,
        passed,
        &format!(
            "mean {mean:.4} vs N·p_ob {expected:.4} (|diff| {:.2} SE), dispersion {dispersion:.4}",
            (mean - expected).abs() / se
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_03_self_interference() {
    let walkers = 1_000_000u64;
    let kind = MoleculeType(1);
    let mut parts = Vec::new();
    let mut passed = true;
    let mut previous = 1.0;
    for (k, t) in [20e-6, 100e-6, 400e-6].into_iter().enumerate() {
        let mut store = ParticleStore::new();
        release(&mut store, [0.0; 3], kind, walkers);
        brownian_step(&mut store, t, |_| D, &mut trial_rng(3, k as u64));
        let freq = sample_count(&store, [0.0; 3], R, kind) as f64 / walkers as f64;
        let p = p_self(t, R, D);
        let se = (p * (1.0 - p) / walkers as f64).sqrt();
        let z = (freq - p) / se;
        passed &= z.abs() <= 3.0 && p < previous;
        previous = p;
        parts.push(format!("t={:.0}µs freq {freq:.6} p_self {p:.6} z {z:+.2}", t * 1e6));
    }
    let limit = p_self(1e-15, R, D);
    let monotone = (1..=400).map(|k| p_self(k as f64 * 1e-6, R, D)).collect::<Vec<_>>();
    let decays = monotone.windows(2).all(|w| w[1] < w[0]);
    passed &= (1.0 - limit) < 1e-9 && decays;
    parts.push(format!("p_self(1e-15 s) = {limit:.12}, monotone decay over 1..400 µs: {decays}"));
    report(3, passed, &parts.join("; "));
    assert!(passed);
}

#[test]
fn criterion_04_optimizer_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut xi_points, mut xi_bad, mut xi_worst) = (0, 0, 1.0f64);
    let (mut na_points, mut na_bad, mut na_worst, mut na_fallback) = (0, 0, 1.0f64, 0);
    let mut random_doubling = Vec::new();
    let grid = molecule_grid();
    for config in 0..20 {
        let x = rng.gen_range(200e-9..1e-6);
        let t = [100e-6, 200e-6, 400e-6][rng.gen_range(0..3)];
        let m = if t < 200e-6 { 5 } else { [5, 10][rng.gen_range(0..2)] };
        let n = rng.gen_range(1000..20_000u64);
        let xi = rng.gen_range(5..40u32);
        let mut link = SingleLink::from_network(&network(Scheme::MultiMolecule, Protocol::Fd, 0, x, t, m, vec![n])).unwrap();
        link.threshold = f64::from(xi);
        link.p1 = rng.gen_range(0.3..0.7);
        let averaging = HistoryAveraging {
            enumerate_upto: 6,
            samples: 40,
            seed: config,
        };
        for j in [1, 2, 3, 5, 10, 20, 50] {
            for (_, history) in link.histories(j, &averaging) {
                // threshold at fixed N_A
                let opt = optimal_xi(&link, j, &history).unwrap();
                let at = |v: f64| SingleLink { threshold: v, ..link.clone() }.conditional_error(&history, j);
                let hi = 200.max(opt.value + 50);
                let best = (1..=hi).map(|v| at(v as f64)).fold(f64::INFINITY, f64::min);
                let ratio = at(opt.value as f64) / best;
                xi_points += 1;
                if at(opt.value as f64) > 1.05 * best + 1e-300 {
                    xi_bad += 1;
                }
                if best > 0.0 {
                    xi_worst = xi_worst.max(ratio);
                }
                // molecules at fixed threshold
                let opt = optimal_na(&link, j, &history).unwrap();
                if opt.method == Method::BruteForce {
                    na_fallback += 1;
                }
                let at = |v: f64| SingleLink { molecules: v, ..link.clone() }.conditional_error(&history, j);
                let best = grid.iter().map(|&v| at(v as f64)).fold(f64::INFINITY, f64::min);
                na_points += 1;
                if at(opt.value as f64) > 1.05 * best + 1e-300 {
                    na_bad += 1;
                }
                if best > 0.0 {
                    na_worst = na_worst.max(at(opt.value as f64) / best);
                }
            }
        }
        // spread of the doubling ratio for unequal bit probabilities
        random_doubling.push(doubling_ratio(&link, 5.0, config));
    }
    // the doubling property on the opt-na preset links: 250 nm,
    // M ∈ {5, 10}, T ∈ {200, 400} µs, equiprobable bits, ξ 5 → 10
    let mut doubling = Vec::new();
    for m in [5, 10] {
        for t in [200e-6, 400e-6] {
            let link = SingleLink::from_network(&network(Scheme::MultiMolecule, Protocol::Fd, 0, 250e-9, t, m, vec![1000]))
                .unwrap();
            doubling.push(doubling_ratio(&link, 5.0, 0));
        }
    }
    let doubling_ok = doubling.iter().all(|r| (r / 2.0 - 1.0).abs() <= 0.1);
    let spread = |v: &[f64]| v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let (lo, hi) = spread(&doubling);
    let (rlo, rhi) = spread(&random_doubling);
    let passed = xi_bad == 0 && na_bad == 0 && doubling_ok;
    report(
        4,
        passed,
        &format!(
            "xi: {xi_bad}/{xi_points} points above 1.05x grid minimum (worst ratio {xi_worst:.4}); \
             N_A: {na_bad}/{na_points} (worst {na_worst:.4}, {na_fallback} without interference searched); \
             N_A(10)/N_A(5) in [{lo:.3}, {hi:.3}] on the 250 nm links \
             (random configs with P1 != 0.5: [{rlo:.3}, {rhi:.3}])"
        ),
    );
    assert!(passed);
}

/// Ratio of the averaged optimal budgets at thresholds `2·xi` and `xi`.
fn doubling_ratio(link: &SingleLink, xi: f64, seed: u64) -> f64 {
    let avg = HistoryAveraging { seed, ..HistoryAveraging::default() };
    let at = |v: f64| {
        average_optimal(Parameter::Molecules, &SingleLink { threshold: v, ..link.clone() }, 50, &avg)
            .unwrap()
            .value
    };
    at(2.0 * xi) / at(xi)
}

fn analytical_rows(mut spec: ExperimentSpec, label: &str) -> Vec<f64> {
    spec.engine = EngineSelection::Analytical;
    spec.series.retain(|s| s.label == label);
    let results = run_experiment(&spec);
    results[0]
        .rows
        .iter()
        .map(|r| {
            assert!(r.failure.is_none(), "{:?}", r.failure);
            r.analytical.unwrap()
        })
        .collect()
}

#[test]
fn criterion_05_multi_molecule_trend() {
    let errors = analytical_rows(figure_preset("mm-q").unwrap(), "FD-T400");
    let passed = errors.windows(2).all(|w| w[1] < w[0]);
    let list: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    report(5, passed, &format!("T=400µs, Q=0..4 errors [{}]", list.join(", ")));
    assert!(passed);
}

#[test]
fn criterion_06_two_molecule_trends() {
    let total = 20_000;
    let net = |p, q| budget_network(Scheme::TwoMolecule, p, q, 1e-6, 200e-6, 10, total);
    let fd_a = net(Protocol::FdA, 2);
    let (xi, e_fd_a) = optimum(&fd_a, 60);
    let e_fd = analytical(&net(Protocol::Fd, 2).with_threshold(xi).unwrap());
    let e_base = analytical(&net(Protocol::Fd, 0).with_threshold(xi).unwrap());
    let ordering = e_fd_a < e_fd && e_fd_a < e_base;

    let sweep: Vec<f64> = (0..=6).map(|q| optimum(&net(Protocol::FdA, q), 60).1).collect();
    let best = sweep
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let non_monotone = best > 0
        && best < sweep.len() - 1
        && sweep[..=best].windows(2).all(|w| w[1] < w[0])
        && sweep[best + 1] > sweep[best];
    let list: Vec<String> = sweep.iter().map(|e| format!("{e:.3e}")).collect();
    let passed = ordering && non_monotone;
    report(
        6,
        passed,
        &format!(
            "Q=2 at FD-A optimum xi={xi}: FD-A {e_fd_a:.3e}, FD {e_fd:.3e}, baseline {e_base:.3e}; \
             FD-A over Q=0..6 at per-Q optimum [{}], minimum at Q={best}",
            list.join(", ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_single_molecule_ordering() {
    let trials = 4000;
    let spec = figure_preset("sm-xi").unwrap();
    let mut rows = Vec::new();
    for series in &spec.series {
        let point = spec.point(series, 1.0).unwrap();
        let net = spec.network(&point, 1).unwrap();
        let (xi, a) = optimum(&net, 60);
        let s = Simulation::new(&net.with_threshold(xi).unwrap(), Engine::HitPath, LagConvention::default())
            .unwrap()
            .estimate(trials, 7)
            .unwrap()
            .end_to_end();
        rows.push((series.protocol, xi, a, s));
    }
    let order = [
        SeriesProtocol::Relayed(Protocol::Fd),
        SeriesProtocol::Baseline,
        SeriesProtocol::Relayed(Protocol::FdASi),
        SeriesProtocol::Relayed(Protocol::Hd),
    ];
    let find = |p| rows.iter().find(|r| r.0 == p).unwrap();
    let mut passed = true;
    for pair in order.windows(2) {
        let (hi, lo) = (find(pair[0]), find(pair[1]));
        passed &= hi.2 >= lo.2;
        let se = (hi.3.se * hi.3.se + lo.3.se * lo.3.se).sqrt();
        passed &= hi.3.rate >= lo.3.rate - 3.0 * se;
    }
    let detail: Vec<String> = order
        .iter()
        .map(|&p| {
            let r = find(p);
            format!("{} xi={} analytical {:.3e} sim {:.3e}±{:.1e}", p.key(), r.1, r.2, r.3.rate, r.3.se)
        })
        .collect();
    report(7, passed, &detail.join("; "));
    assert!(passed);
}

#[test]
fn criterion_08_single_molecule_multi_hop() {
    let total = 20_000;
    let mut passed = true;
    let mut detail = Vec::new();
    for t in [200e-6, 400e-6] {
        let net = |p, q| budget_network(Scheme::SingleMolecule, p, q, 1e-6, t, 10, total);
        let (_, base) = optimum(&net(Protocol::Fd, 0), 80);
        for q in 2..=4 {
            let (_, bi_si) = optimum(&net(Protocol::FdABiSi, q), 80);
            let (_, hd_bi) = optimum(&net(Protocol::HdABi, q), 80);
            passed &= bi_si < base && hd_bi < base && hd_bi <= bi_si;
            detail.push(format!(
                "T={:.0}µs Q={q}: FD-A-BI-SI {bi_si:.3e}, HD-A-BI {hd_bi:.3e}, baseline {base:.3e}",
                t * 1e6
            ));
        }
    }
    report(8, passed, &detail.join("; "));
    assert!(passed);
}

#[test]
fn criterion_09_numerical_kernels() {
    let mut gamma_worst = 0.0f64;
    for xi in 1..=150u32 {
        for mean in [0.01, 0.5, 1.0, 3.3, 10.0, 27.5, 60.0, 120.0, 200.0] {
            let exact = poisson_cdf(xi, mean);
            let gamma = poisson_cdf_gamma(f64::from(xi), mean).unwrap();
            gamma_worst = gamma_worst.max((exact - gamma).abs());
        }
    }
    let mut stirling_worst = 0.0f64;
    for k in 0..=490 {
        let mean = 1.0 + 0.1 * f64::from(k);
        for xi in 1..=120u32 {
            let d = (poisson_cdf_stirling(f64::from(xi), mean).unwrap() - poisson_cdf(xi, mean)).abs();
            stirling_worst = stirling_worst.max(d);
        }
    }
    // interference-free synthetic hops that flip their input with
    // probability eps: mean base when 0 is sent, base + signal when 1 is
    // sent, threshold 1
    let mut cascade_worst = 0.0f64;
    for eps in [1e-4, 0.01, 0.1, 0.25, 0.4, 0.5] {
        let base = -(1.0f64 - eps).ln();
        let signal = -eps.ln() - base;
        let mut upstream = [0.0; 2];
        for kappa in 1..=10 {
            upstream = hop_conditional_errors(upstream, base, signal, 1.0);
            let closed = 0.5 * (1.0 - (1.0 - 2.0 * eps).powi(kappa));
            cascade_worst = cascade_worst.max((upstream[0] - closed).abs().max((upstream[1] - closed).abs()));
        }
    }
    let passed = gamma_worst <= 1e-10 && stirling_worst <= 0.05 && cascade_worst <= 1e-12;
    report(
        9,
        passed,
        &format!(
            "gamma vs direct {gamma_worst:.2e}; Stirling vs exact over means 1..50 {stirling_worst:.4}; \
             cascade vs closed form {cascade_worst:.2e}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_determinism() {
    let spec = parse_config(
        r#"
name = "determinism"
[network]
scheme = "SM"
relays = 1
destination = 600e-9
[timing]
interval = 400e-6
samples = 5
[budget]
total = 10000
[sweep]
variable = "xi"
values = [6, 9, 12]
[[series]]
protocol = "FD-A-SI"
[[series]]
protocol = "baseline"
[run]
engine = "both"
trials = 200
seed = 10
sequences = 50
"#,
    )
    .unwrap();
    let dir = std::env::temp_dir().join(format!("mcnet-acceptance-{}", std::process::id()));
    let run_with = |threads: usize, sub: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let results = pool.install(|| run_experiment(&spec));
        emit_results(&spec, &results, &dir.join(sub)).unwrap();
    };
    run_with(1, "one");
    run_with(4, "four");
    run_with(4, "again");
    let mut identical = true;
    for file in ["FD-A-SI.csv", "baseline.csv", "manifest.toml"] {
        let one = std::fs::read(dir.join("one").join(file)).unwrap();
        identical &= one == std::fs::read(dir.join("four").join(file)).unwrap();
        identical &= one == std::fs::read(dir.join("again").join(file)).unwrap();
    }
    std::fs::remove_dir_all(&dir).unwrap();
    report(
        10,
        identical,
        "tables and manifest byte-identical across re-runs on 1 and 4 workers",
    );
    assert!(identical);
}
