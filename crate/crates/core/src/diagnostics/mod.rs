//! Convergence and fit diagnostics computed from stored output.

mod ppc;
mod rhat;
mod summary;
mod waic;

pub use ppc::{
    posterior_predictive_check, ItemMeanScore, ItemPairOddsRatio, LowAbilityItemMean, LowScoreItemMean, PersonScoreQuantiles,
    ppp_map, PpcResult, SubgroupItemMean, TestStatistic,
};
pub use rhat::{gelman_rubin, split_gelman_rubin};
pub use summary::{summarize, ChainSummary, FitReport, ParameterSummary};
pub use waic::{waic, PointwiseAccumulator, WaicEstimate};
