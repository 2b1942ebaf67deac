//! Command-line front end: run configured or preset sweeps, optimise link
//! parameters and check the toolkit's invariants.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mcnet::experiments::{
    emit_results, figure_preset, invariant_suite, load_config, run_experiment, EngineSelection, ExperimentSpec,
};
use mcnet::optimizer::{
    average_optimal, brute_force_na, brute_force_network_xi, brute_force_xi, molecule_grid, Parameter,
    THRESHOLD_RANGE,
};

#[derive(Parser)]
#[command(name = "mcnet", version, about = "Multi-hop diffusion molecular communication toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in figure preset.
    Preset {
        /// opt-na, opt-xi, mm-q, 2m-xi, 2m-q, sm-xi or sm-q
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Optimise the molecule budget or threshold of each configured series.
    Optimize {
        #[arg(value_enum)]
        parameter: OptimizeTarget,
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the invariant suite.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizeTarget {
    Na,
    Xi,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytical,
    Sim,
    Both,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Output directory (default: the configured one, or $MCNET_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials.max(1);
        }
        if let Some(engine) = self.engine {
            spec.engine = match engine {
                EngineArg::Analytical => EngineSelection::Analytical,
                EngineArg::Sim => EngineSelection::Simulation,
                EngineArg::Both => EngineSelection::Both,
            };
        }
        match (self.out, std::env::var_os("MCNET_OUT")) {
            (Some(out), _) => spec.output = out,
            (None, Some(env)) => spec.output = PathBuf::from(env),
            (None, None) => {}
        }
    }
}

fn run(spec: &ExperimentSpec) -> Result<ExitCode> {
    eprintln!(
        "{}: {} series x {} points, engine {}",
        spec.name,
        spec.series.len(),
        spec.values.len(),
        spec.engine.key()
    );
    let results = run_experiment(spec);
    let written = emit_results(spec, &results, &spec.output)?;
    for path in &written {
        println!("{}", path.display());
    }
    let failures: Vec<String> = results
        .iter()
        .flat_map(|r| {
            r.rows
                .iter()
                .filter_map(move |row| row.failure.as_ref().map(|f| format!("{} at {}: {f}", r.label, row.value)))
        })
        .collect();
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn optimize(target: OptimizeTarget, config: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = load_config(config)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let averaging = spec.history_averaging();
    let value = spec.values[0];
    for series in &spec.series {
        let point = spec
            .point(series, value)
            .with_context(|| format!("series {}", series.label))?;
        let xi = spec.threshold(&point)?;
        let link = spec.hop_link(&point, xi)?;
        match target {
            OptimizeTarget::Xi => {
                let closed = average_optimal(Parameter::Threshold, &link, spec.length, &averaging)?;
                let (brute, err) = brute_force_xi(&link, spec.length, &averaging, THRESHOLD_RANGE)?;
                println!(
                    "{}: hop xi closed form {:.2} ({} points), grid optimum {brute} (error {err:.4e})",
                    series.label, closed.value, closed.points
                );
                if point.relays > 0 {
                    let network = spec.network(&point, xi)?;
                    let (best, err) = brute_force_network_xi(&network, spec.analysis_options(), THRESHOLD_RANGE)?;
                    println!("{}: network xi optimum {best} (end-to-end error {err:.4e})", series.label);
                }
            }
            OptimizeTarget::Na => {
                let closed = average_optimal(Parameter::Molecules, &link, spec.length, &averaging)?;
                let (brute, err) = brute_force_na(&link, spec.length, &averaging, &molecule_grid())?;
                println!(
                    "{}: hop N_A closed form {:.0} at xi {xi} ({} points, {} without interference excluded), \
                     grid optimum {brute} (error {err:.4e})",
                    series.label, closed.value, closed.points, closed.excluded
                );
            }
        }
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let mut spec = load_config(&config)?;
            overrides.apply(&mut spec);
            run(&spec)
        }
        Command::Preset { name, overrides } => {
            let mut spec = figure_preset(&name)?;
            overrides.apply(&mut spec);
            run(&spec)
        }
        Command::Optimize {
            parameter,
            config,
            seed,
        } => {
            optimize(parameter, &config, seed)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { seed } => {
            let checks = invariant_suite(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                bail!("invariant suite failed");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
