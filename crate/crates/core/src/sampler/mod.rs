//! Metropolis-Hastings-within-Gibbs driver.
//!
//! A sweep updates every person block, then every item block, then the
//! regression (`B`, `R`, `S`) of every block. A run goes through four
//! phases: exploration at the initial proposal scale, a factor-5
//! adjustment, an interpolation toward the target acceptance rate, and the
//! retained Phase-4 iterations.

mod config;
mod gibbs;
mod problem;
pub mod rng;
mod run;
mod samples;
mod state;
mod tuning;

pub use config::{Precision, SamplerConfig};
pub use gibbs::gibbs_iteration;
pub use problem::{normalize_weights, BlockModel, Problem};
pub use run::{run, run_with_progress, ProgressEvent, RunOutput};
pub use samples::{ParameterLayout, PosteriorSamples, RunningMoments, Snapshot};
pub use state::{BlockState, ChainState};
pub use tuning::{adapt_factor5, adapt_interpolate};
