//! Sequential optimization of time-varying objectives with GP bandits.
//!
//! Past observations are treated as increasingly noisy with age
//! (`σ²(1 + Δt^α)`), which turns tracking a drifting objective into
//! heteroscedastic GP regression. On top of that model the crate provides:
//!
//! * [`gp`]: squared-exponential kernel, heteroscedastic posterior, Nyström
//!   residuals and finite-marginal KL divergences;
//! * [`dpp`]: fixed-size determinantal point process samplers and the
//!   logarithmic query budget;
//! * [`policy`]: GP-UCB, SparQ-GP-UCB, W-SparQ-GP-UCB and four time-varying
//!   baselines behind one stepping interface;
//! * [`env`]: drifting objectives, the noisy observation process and the
//!   expert oracle that answers re-queries;
//! * [`analysis`]: regret accounting, bound overlays and the lower-bound
//!   diagnostics (information sums, Fano bounds, bump adversaries);
//! * [`runner`]: the seeded single-run harness producing [`analysis::RunTrace`]s.

pub mod analysis;
pub mod dpp;
pub mod env;
pub mod gp;
pub mod policy;
pub mod rng;
pub mod runner;

pub use gp::{Dataset, KernelSpec, Point, Posterior};
