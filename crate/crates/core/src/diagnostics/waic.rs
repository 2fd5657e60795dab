use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::math::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaicEstimate {
    pub lppd: f64,
    pub elpd: f64,
    pub p_waic: f64,
    pub waic: f64,
}

impl WaicEstimate {
    fn from_parts(lppd: f64, p_waic: f64) -> Self {
        let elpd = lppd - p_waic;
        Self {
            lppd,
            elpd,
            p_waic,
            waic: -2.0 * elpd,
        }
    }
}

/// WAIC from a `draws x N` matrix of pointwise log-likelihoods, with the
/// variance form of the effective number of parameters.
pub fn waic(pointwise: &[Vec<f64>]) -> Result<WaicEstimate> {
    let draws = pointwise.len();
    if draws < 2 {
        return Err(Error::Diagnostic(format!(
            "WAIC needs at least 2 draws, got {draws}"
        )));
    }
    let n_obs = pointwise[0].len();
    if pointwise.iter().any(|row| row.len() != n_obs) {
        return Err(Error::Diagnostic("ragged pointwise log-likelihood matrix".into()));
    }
    if pointwise.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Diagnostic("non-finite pointwise log-likelihood".into()));
    }
    let log_d = (draws as f64).ln();
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut column = vec![0.0; draws];
    for n in 0..n_obs {
        for (d, row) in pointwise.iter().enumerate() {
            column[d] = row[n];
        }
        lppd += log_sum_exp(&column) - log_d;
        let mean = column.iter().sum::<f64>() / draws as f64;
        p_waic += column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    }
    Ok(WaicEstimate::from_parts(lppd, p_waic))
}

/// Streaming per-observation summary sufficient for WAIC: a running
/// log-sum-exp and Welford mean/variance for every observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointwiseAccumulator {
    draws: u64,
    max: Vec<f64>,
    scaled_sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl PointwiseAccumulator {
    pub fn new(n_obs: usize) -> Self {
        Self {
            draws: 0,
            max: vec![f64::NEG_INFINITY; n_obs],
            scaled_sum: vec![0.0; n_obs],
            mean: vec![0.0; n_obs],
            m2: vec![0.0; n_obs],
        }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn n_obs(&self) -> usize {
        self.max.len()
    }

    pub fn push(&mut self, loglik: &[f64]) {
        assert_eq!(loglik.len(), self.max.len());
        self.draws += 1;
        let count = self.draws as f64;
        for (n, &v) in loglik.iter().enumerate() {
            if v > self.max[n] {
                self.scaled_sum[n] = self.scaled_sum[n] * (self.max[n] - v).exp() + 1.0;
                self.max[n] = v;
            } else {
                self.scaled_sum[n] += (v - self.max[n]).exp();
            }
            let delta = v - self.mean[n];
            self.mean[n] += delta / count;
            self.m2[n] += delta * (v - self.mean[n]);
        }
    }

    /// Combines the per-chain accumulators of independent chains.
    pub fn merge(parts: &[PointwiseAccumulator]) -> Result<PointwiseAccumulator> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Diagnostic("nothing to merge".into()))?;
        let mut out = PointwiseAccumulator::new(first.n_obs());
        for part in parts {
            if part.n_obs() != out.n_obs() {
                return Err(Error::Diagnostic("accumulators cover different data".into()));
            }
            if part.draws == 0 {
                continue;
            }
            let (na, nb) = (out.draws as f64, part.draws as f64);
            for n in 0..out.n_obs() {
                let m = out.max[n].max(part.max[n]);
                out.scaled_sum[n] = out.scaled_sum[n] * (out.max[n] - m).exp()
                    + part.scaled_sum[n] * (part.max[n] - m).exp();
                out.max[n] = m;
                let delta = part.mean[n] - out.mean[n];
                let total = na + nb;
                out.m2[n] += part.m2[n] + delta * delta * na * nb / total;
                out.mean[n] += delta * nb / total;
            }
            out.draws += part.draws;
        }
        Ok(out)
    }

    pub fn estimate(&self) -> Result<WaicEstimate> {
        if self.draws < 2 {
            return Err(Error::Diagnostic(format!(
                "WAIC needs at least 2 draws, got {}",
                self.draws
            )));
        }
        let log_d = (self.draws as f64).ln();
        let lppd: f64 = (0..self.n_obs())
            .map(|n| self.max[n] + self.scaled_sum[n].ln() - log_d)
            .sum();
        let p_waic: f64 = self.m2.iter().sum::<f64>() / (self.draws as f64 - 1.0);
        Ok(WaicEstimate::from_parts(lppd, p_waic))
    }
}
