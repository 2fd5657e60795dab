use std::collections::BTreeMap;

use super::rhat::{gelman_rubin, split_gelman_rubin};
use super::waic::WaicEstimate;
use crate::sampler::RunningMoments;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Mean Phase-4 acceptance rate over chains.
    pub acceptance: f64,
    /// `None` when R-hat is undefined (one chain, too few draws, or zero
    /// within-chain variance).
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub parameters: Vec<ParameterSummary>,
}

impl ChainSummary {
    /// Largest defined R-hat among parameters whose name satisfies `keep`.
    pub fn max_rhat(&self, keep: impl Fn(&str) -> bool) -> Option<f64> {
        self.parameters
            .iter()
            .filter(|p| keep(&p.name))
            .filter_map(|p| p.rhat)
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Pools per-chain moments into posterior means and sds, averages
/// acceptance rates and computes R-hat from the stored draws.
pub fn summarize(
    names: &[String],
    moments: &[&RunningMoments],
    acceptance: &[&[f64]],
    draws: &[&[Vec<f64>]],
    split: bool,
) -> ChainSummary {
    let pooled = RunningMoments::merge(moments);
    let n_chains = acceptance.len().max(1) as f64;
    let parameters = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let chains: Vec<Vec<f64>> = draws
                .iter()
                .map(|d| d.iter().map(|row| row[i]).collect())
                .collect();
            let rhat = if split {
                split_gelman_rubin(&chains)
            } else {
                gelman_rubin(&chains)
            };
            ParameterSummary {
                name: name.clone(),
                mean: pooled.mean[i],
                sd: pooled.sd(i),
                acceptance: acceptance.iter().map(|a| a[i]).sum::<f64>() / n_chains,
                rhat: rhat.ok(),
            }
        })
        .collect();
    ChainSummary { parameters }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub elpd: f64,
    pub p_waic: f64,
    pub waic: f64,
    /// Posterior predictive p-value per statistic component.
    pub ppp: BTreeMap<String, f64>,
}

impl FitReport {
    pub fn new(estimate: WaicEstimate, ppp: BTreeMap<String, f64>) -> Self {
        Self {
            elpd: estimate.elpd,
            p_waic: estimate.p_waic,
            waic: estimate.waic,
            ppp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_summary() {
        let names = vec!["x".to_string()];
        let a: Vec<Vec<f64>> = (1..=5).map(|v| vec![v as f64]).collect();
        let mut ma = RunningMoments::new(1);
        let mut mb = RunningMoments::new(1);
        for row in &a {
            ma.push(row);
            mb.push(row);
        }
        let s = summarize(&names, &[&ma, &mb], &[&[0.3], &[0.5]], &[&a, &a], false);
        let p = &s.parameters[0];
        assert_eq!(p.mean, 3.0);
        assert!((p.acceptance - 0.4).abs() < 1e-15);
        assert!((p.rhat.unwrap() - 0.8f64.sqrt()).abs() < 1e-14);
        // pooled sd over 10 values: 1..5 twice
        assert!((p.sd - (20.0f64 / 9.0).sqrt()).abs() < 1e-14);
        assert_eq!(s.max_rhat(|_| true), p.rhat);
        let one = summarize(&names, &[&ma], &[&[0.3]], &[&a], false);
        assert_eq!(one.parameters[0].rhat, None);
    }
}
