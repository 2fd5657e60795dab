use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::SamplerConfig;
use super::problem::Problem;
use super::rng::{stream, PURPOSE_INIT};
use crate::error::{Error, Result};
use crate::model::Side;
use crate::regression::{free_count, RegressionParams};

const INIT_ATTEMPTS: u64 = 100;

/// Latents, regression parameters and proposal tuning of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    /// `U x K` latents in block order, row-major. Item latents are on the
    /// unconstrained scale.
    pub latents: Vec<f64>,
    /// Proposal sd of every latent coordinate.
    pub unit_sd: Vec<f64>,
    /// Accepted proposals per latent coordinate in the current window.
    pub unit_acc: Vec<u32>,
    pub params: RegressionParams,
    pub r_sd: Vec<f64>,
    pub r_acc: Vec<u32>,
    pub s_sd: Vec<f64>,
    pub s_acc: Vec<u32>,
}

impl BlockState {
    pub fn dim(&self) -> usize {
        self.params.k()
    }

    pub fn units_matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_row_slice(self.latents.len() / k, k, &self.latents)
    }
}

/// Full state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub chain: usize,
    /// Completed Gibbs iterations.
    pub iteration: u64,
    pub persons: Vec<BlockState>,
    pub items: Vec<BlockState>,
    /// Person latents by global person index (`n_persons x K`, row-major).
    pub theta: Vec<f64>,
    /// Natural item parameters, laid out by [`Problem::item_range`].
    pub item_natural: Vec<f64>,
}

impl ChainState {
    /// Random initialization. Person latents are drawn from `N(0, 1)`, item
    /// latents from their block regression at `B = 0` (or the fixed `B`),
    /// `S` at the midpoint of its bounds and `R = I`. A draw with a
    /// non-finite log-likelihood is discarded and redrawn.
    pub fn initialize(problem: &Problem, config: &SamplerConfig, chain: usize) -> Result<Self> {
        let mut last_bad = String::new();
        for attempt in 0..INIT_ATTEMPTS {
            let mut rng = stream(config.seed, &[chain as u64, attempt, PURPOSE_INIT]);
            let state = Self::draw(problem, config, chain, &mut rng)?;
            match state.first_non_finite(problem) {
                None => return Ok(state),
                Some(n) => last_bad = format!("response row {n}"),
            }
        }
        Err(Error::Numerical(format!(
            "chain {chain}: non-finite log-likelihood after {INIT_ATTEMPTS} initializations \
             (last failure at {last_bad})"
        )))
    }

    fn draw<R: Rng + ?Sized>(
        problem: &Problem,
        config: &SamplerConfig,
        chain: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let store = |x: f64| config.precision.store(x);
        let mut persons = Vec::with_capacity(problem.person_blocks.len());
        for block in &problem.person_blocks {
            let k = block.spec.dim;
            let mut latents = Vec::with_capacity(block.spec.len() * k);
            for &u in &block.spec.units {
                let unit = &problem.persons[u];
                for d in 0..k {
                    let z: f64 = rng.sample(StandardNormal);
                    latents.push(if unit.fixed { unit.latent[d] } else { store(z) });
                }
            }
            persons.push(block_state(latents, &block.regression, config));
        }
        let mut items = Vec::with_capacity(problem.item_blocks.len());
        for (block, design) in problem.item_blocks.iter().zip(&problem.item_designs) {
            let k = block.spec.dim;
            let params = &block.regression;
            let mean = &design.x0 * &params.b;
            let factor = params.covariance_factor();
            let mut latents = Vec::with_capacity(block.spec.len() * k);
            for (local, &u) in block.spec.units.iter().enumerate() {
                let unit = &problem.items[u];
                let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                for d in 0..k {
                    if unit.fixed {
                        latents.push(unit.latent[d]);
                    } else {
                        let noise: f64 = (0..=d).map(|e| factor[(d, e)] * z[e]).sum();
                        latents.push(store(mean[(local, d)] + noise));
                    }
                }
            }
            items.push(block_state(latents, params, config));
        }
        let mut state = Self {
            chain,
            iteration: 0,
            persons,
            items,
            theta: vec![0.0; problem.persons.len() * problem.person_dim],
            item_natural: vec![0.0; problem.item_param_total()],
        };
        state.refresh_theta(problem);
        state.refresh_items(problem);
        Ok(state)
    }

    fn first_non_finite(&self, problem: &Problem) -> Option<usize> {
        let mut ll = vec![0.0; problem.responses.len()];
        problem.pointwise_loglik(&self.theta, &self.item_natural, &mut ll);
        ll.iter().position(|v| !v.is_finite())
    }

    pub fn blocks(&self, side: Side) -> &[BlockState] {
        match side {
            Side::Person => &self.persons,
            Side::Item => &self.items,
        }
    }

    /// Copies person block latents into the global `theta` cache.
    pub(crate) fn refresh_theta(&mut self, problem: &Problem) {
        let k = problem.person_dim;
        for (block, bs) in problem.person_blocks.iter().zip(&self.persons) {
            for (local, &u) in block.spec.units.iter().enumerate() {
                self.theta[u * k..(u + 1) * k]
                    .copy_from_slice(&bs.latents[local * k..(local + 1) * k]);
            }
        }
    }

    /// Recomputes the natural item-parameter cache from the item latents.
    pub(crate) fn refresh_items(&mut self, problem: &Problem) {
        for b in 0..self.items.len() {
            self.refresh_item_block(problem, b);
        }
    }

    pub(crate) fn refresh_item_block(&mut self, problem: &Problem, b: usize) {
        let block = &problem.item_blocks[b];
        let k = block.spec.dim;
        let fam = block.spec.family.expect("item block family");
        let bs = &self.items[b];
        for (local, &j) in block.spec.units.iter().enumerate() {
            let range = problem.item_range(j);
            fam.to_natural_into(&bs.latents[local * k..(local + 1) * k], &mut self.item_natural[range]);
        }
    }

    /// Proposal sds of every Metropolis-updated scalar, in a fixed order:
    /// unit coordinates of person then item blocks, then `R` and `S`
    /// coordinates of person then item blocks.
    pub fn proposal_sds(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for bs in self.persons.iter().chain(&self.items) {
            out.extend_from_slice(&bs.unit_sd);
        }
        for bs in self.persons.iter().chain(&self.items) {
            out.extend_from_slice(&bs.r_sd);
            out.extend_from_slice(&bs.s_sd);
        }
        out
    }

    pub fn set_proposal_sds(&mut self, sds: &[f64]) {
        let mut it = sds.iter().copied();
        let mut fill = |v: &mut Vec<f64>| {
            for x in v.iter_mut() {
                *x = it.next().expect("sd vector length");
            }
        };
        for bs in self.persons.iter_mut().chain(self.items.iter_mut()) {
            fill(&mut bs.unit_sd);
        }
        for bs in self.persons.iter_mut().chain(self.items.iter_mut()) {
            fill(&mut bs.r_sd);
            fill(&mut bs.s_sd);
        }
    }

    /// Acceptance counts in the order of [`ChainState::proposal_sds`].
    pub fn acceptance_counts(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for bs in self.persons.iter().chain(&self.items) {
            out.extend_from_slice(&bs.unit_acc);
        }
        for bs in self.persons.iter().chain(&self.items) {
            out.extend_from_slice(&bs.r_acc);
            out.extend_from_slice(&bs.s_acc);
        }
        out
    }

    pub fn reset_acceptance(&mut self) {
        for bs in self.persons.iter_mut().chain(self.items.iter_mut()) {
            bs.unit_acc.fill(0);
            bs.r_acc.fill(0);
            bs.s_acc.fill(0);
        }
    }
}

fn block_state(latents: Vec<f64>, params: &RegressionParams, config: &SamplerConfig) -> BlockState {
    let n = latents.len();
    let k = params.k();
    let nr = if params.fixed_r { 0 } else { free_count(k) };
    BlockState {
        latents,
        unit_sd: vec![config.init_proposal_sd; n],
        unit_acc: vec![0; n],
        params: params.clone(),
        r_sd: vec![config.init_proposal_sd; nr],
        r_acc: vec![0; nr],
        s_sd: vec![config.init_proposal_sd; k],
        s_acc: vec![0; k],
    }
}
