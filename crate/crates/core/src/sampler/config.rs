use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision of unit latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Latents are rounded to `f32` whenever they are written.
    Single,
    #[default]
    Double,
}

impl Precision {
    #[inline]
    pub fn store(self, x: f64) -> f64 {
        match self {
            Precision::Single => x as f32 as f64,
            Precision::Double => x,
        }
    }
}

/// Iteration counts, acceptance targets and execution settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Exploration iterations at the initial proposal scale.
    pub m1: u64,
    /// Iterations whose acceptance drives the factor-5 adjustment.
    pub m2: u64,
    /// Iterations whose acceptance drives the final interpolation.
    pub m3: u64,
    /// Retained (inference) iterations.
    pub m4: u64,
    pub a0: f64,
    pub a1: f64,
    pub a_star: f64,
    pub thin: u64,
    pub chains: usize,
    pub seed: u64,
    pub init_proposal_sd: f64,
    pub workers: usize,
    pub precision: Precision,
    /// Emit a progress event every this many iterations (0 = phase ends only).
    pub report_every: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            m1: 200,
            m2: 500,
            m3: 500,
            m4: 2000,
            a0: 0.2,
            a1: 0.5,
            a_star: 0.35,
            thin: 5,
            chains: 2,
            seed: 1,
            init_proposal_sd: 2.5,
            workers: 1,
            precision: Precision::Double,
            report_every: 0,
        }
    }
}

impl SamplerConfig {
    pub fn total_iterations(&self) -> u64 {
        self.m1 + self.m2 + self.m3 + self.m4
    }

    pub fn stored_draws(&self) -> u64 {
        self.m4 / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.a0 && self.a0 < self.a_star && self.a_star < self.a1 && self.a1 < 1.0) {
            return Err(Error::Validation(format!(
                "acceptance bounds must satisfy 0 < a0 < a* < a1 < 1 (got {}, {}, {})",
                self.a0, self.a_star, self.a1
            )));
        }
        if self.m4 < 1 {
            return Err(Error::Validation("m4 must be at least 1".into()));
        }
        if self.thin < 1 {
            return Err(Error::Validation("thin must be at least 1".into()));
        }
        if self.chains < 1 || self.workers < 1 {
            return Err(Error::Validation("chains and workers must be at least 1".into()));
        }
        if !(self.init_proposal_sd > 0.0) || !self.init_proposal_sd.is_finite() {
            return Err(Error::Validation("initial proposal sd must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SamplerConfig::default();
        c.validate().unwrap();
        assert_eq!((c.a0, c.a1, c.a_star), (0.2, 0.5, 0.35));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SamplerConfig { a_star: 0.6, ..Default::default() },
            SamplerConfig { m4: 0, ..Default::default() },
            SamplerConfig { thin: 0, ..Default::default() },
            SamplerConfig { workers: 0, ..Default::default() },
            SamplerConfig { init_proposal_sd: -1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn counting() {
        let c = SamplerConfig { m4: 1000, thin: 10, ..Default::default() };
        assert_eq!(c.stored_draws(), 100);
        assert_eq!(c.total_iterations(), 200 + 500 + 500 + 1000);
    }

    #[test]
    fn single_precision_rounds() {
        let x = 0.1f64;
        assert_eq!(Precision::Single.store(x), 0.1f32 as f64);
        assert_eq!(Precision::Double.store(x), x);
    }
}
