//! Analysis, optimisation and particle simulation of multi-hop
//! diffusion-based molecular communication networks.
//!
//! A source releases molecules for every 1 bit; decode-and-forward relays
//! between the source and the destination detect each bit with a
//! weighted-sum threshold detector and forward it. The crate provides:
//!
//! * [`model`]: topology, timing, relaying schemes, protocols and bit
//!   schedules;
//! * [`channel`]: observation probabilities, kernels and Poisson tails;
//! * [`detection`]: fixed and adaptive detection thresholds;
//! * [`analysis`]: expected error probabilities of every node;
//! * [`optimizer`]: closed-form and grid-search molecule budgets and
//!   thresholds;
//! * [`simulator`]: Monte Carlo of the full network from Brownian motion;
//! * [`experiments`]: configuration files, sweeps, presets and result files.
//!
//! ```
//! use mcnet::detection::LagConvention;
//! use mcnet::{
//!     evaluate_network, AnalysisOptions, Engine, Network, NetworkTopology, Protocol, ProtocolConfig, Scheme,
//!     Simulation, TimingConfig,
//! };
//!
//! let topology = NetworkTopology::build(1e-6, 1, 45e-9, Scheme::MultiMolecule, 4.365e-10)?;
//! let protocol = ProtocolConfig::uniform(Scheme::MultiMolecule, Protocol::Fd, 20, 1, 10_000)?;
//! let timing = TimingConfig::new(200e-6, 10, 20e-6)?;
//! let network = Network::new(topology, protocol, timing, 0.5, 50)?;
//!
//! let analytical = evaluate_network(&network, AnalysisOptions::default())?.end_to_end();
//! let simulated = Simulation::new(&network, Engine::HitPath, LagConvention::default())?
//!     .estimate(200, 1)?
//!     .end_to_end();
//! assert!((simulated.rate - analytical).abs() < 5.0 * simulated.se + 0.05 * analytical);
//! # Ok::<(), mcnet::Error>(())
//! ```

pub mod analysis;
pub mod channel;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod model;
pub mod optimizer;
pub mod simulator;

pub use analysis::{evaluate_network, AnalysisOptions, NetworkErrors};
pub use error::{Error, Result};
pub use experiments::{emit_results, figure_preset, load_config, run_experiment, ExperimentSpec, ResultRow};
pub use model::{Network, NetworkTopology, Protocol, ProtocolConfig, Scheme, TimingConfig};
pub use simulator::{estimate_error, Engine, Simulation};
