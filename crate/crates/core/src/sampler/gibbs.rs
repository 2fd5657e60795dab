use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::SamplerConfig;
use super::problem::Problem;
use super::rng::{stream, PURPOSE_ITEM, PURPOSE_PERSON, PURPOSE_REGRESSION};
use super::state::{BlockState, ChainState};
use crate::error::{Error, Result};
use crate::model::{LinkEntry, Side};
use crate::regression::{residual_crossprod, sample_b, update_r, update_s};

/// `-(x - m)' P (x - m) / 2`.
pub(crate) fn log_mvn_kernel(x: &[f64], mean: &[f64], precision: &DMatrix<f64>) -> f64 {
    let k = x.len();
    let mut quad = 0.0;
    for a in 0..k {
        let da = x[a] - mean[a];
        quad += precision[(a, a)] * da * da;
        for b in 0..a {
            quad += 2.0 * precision[(a, b)] * da * (x[b] - mean[b]);
        }
    }
    -0.5 * quad
}

/// Log-likelihood of a person's responses to items loading on dimension
/// `dim`, with the person's latent on that dimension equal to `theta`.
pub(crate) fn person_loglik(
    problem: &Problem,
    item_natural: &[f64],
    links: &[LinkEntry],
    dim: usize,
    theta: f64,
) -> f64 {
    let mut total = 0.0;
    for e in links {
        if problem.item_trait(e.partner) != dim {
            continue;
        }
        let psi = &item_natural[problem.item_range(e.partner)];
        let value = problem.responses[e.obs].value;
        total += problem.item_family(e.partner).log_likelihood_unchecked(psi, theta, value);
    }
    total
}

/// Person-weighted log-likelihood of an item's responses at natural
/// parameters `psi`.
pub(crate) fn item_loglik(
    problem: &Problem,
    theta: &[f64],
    links: &[LinkEntry],
    item: usize,
    psi: &[f64],
) -> f64 {
    let k = problem.person_dim;
    let fam = problem.item_family(item);
    let dim = problem.item_trait(item);
    let mut total = 0.0;
    for e in links {
        let w = problem.persons[e.partner].weight;
        if w == 0.0 {
            continue;
        }
        let value = problem.responses[e.obs].value;
        total += w * fam.log_likelihood_unchecked(psi, theta[e.partner * k + dim], value);
    }
    total
}

#[inline]
fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// One sweep: person blocks, item blocks, then the regression of every
/// block. Unit updates within a block run in parallel on the current rayon
/// pool; every unit draws from its own random stream so the result does
/// not depend on the number of threads.
pub fn gibbs_iteration(problem: &Problem, config: &SamplerConfig, state: &mut ChainState) -> Result<()> {
    let iter = state.iteration;
    let ctx = |side: Side, b: usize| {
        format!("iteration {iter}, block {}", problem.blocks(side)[b].spec.id)
    };
    for b in 0..state.persons.len() {
        update_person_block(problem, config, state, b).map_err(|e| e.context(ctx(Side::Person, b)))?;
    }
    state.refresh_theta(problem);
    for b in 0..state.items.len() {
        update_item_block(problem, config, state, b).map_err(|e| e.context(ctx(Side::Item, b)))?;
        state.refresh_item_block(problem, b);
    }
    let n_person_blocks = state.persons.len();
    for b in 0..n_person_blocks {
        update_regression(problem, config, state.chain, iter, Side::Person, b, &mut state.persons[b])
            .map_err(|e| e.context(ctx(Side::Person, b)))?;
    }
    for b in 0..state.items.len() {
        update_regression(problem, config, state.chain, iter, Side::Item, b, &mut state.items[b])
            .map_err(|e| e.context(ctx(Side::Item, b)))?;
    }
    state.iteration += 1;
    Ok(())
}

fn update_person_block(
    problem: &Problem,
    config: &SamplerConfig,
    state: &mut ChainState,
    b: usize,
) -> Result<()> {
    let block = &problem.person_blocks[b];
    let design = &problem.person_designs[b];
    let view = &problem.linkage.person_blocks[b];
    let k = block.spec.dim;
    let bs = &mut state.persons[b];
    let means = row_major(&(&design.x0 * &bs.params.b));
    let precision = bs.params.precision()?;
    let item_natural = &state.item_natural;
    let (chain, iter) = (state.chain as u64, state.iteration);

    bs.latents
        .par_chunks_mut(k)
        .zip(bs.unit_acc.par_chunks_mut(k))
        .zip(bs.unit_sd.par_chunks(k))
        .enumerate()
        .for_each(|(local, ((x, acc), sd))| {
            let unit = block.spec.units[local];
            if problem.persons[unit].fixed {
                return;
            }
            let mut rng = stream(config.seed, &[chain, iter, PURPOSE_PERSON, unit as u64]);
            let mean = &means[local * k..(local + 1) * k];
            let links = view.links(local);
            let mut prior = log_mvn_kernel(x, mean, &precision);
            for d in 0..k {
                let old = x[d];
                let z: f64 = rng.sample(StandardNormal);
                let new = config.precision.store(old + sd[d] * z);
                let ll_old = person_loglik(problem, item_natural, links, d, old);
                let ll_new = person_loglik(problem, item_natural, links, d, new);
                x[d] = new;
                let prior_new = log_mvn_kernel(x, mean, &precision);
                if accept(&mut rng, ll_new + prior_new - ll_old - prior) {
                    prior = prior_new;
                    acc[d] += 1;
                } else {
                    x[d] = old;
                }
            }
        });
    Ok(())
}

fn update_item_block(
    problem: &Problem,
    config: &SamplerConfig,
    state: &mut ChainState,
    b: usize,
) -> Result<()> {
    let block = &problem.item_blocks[b];
    let design = &problem.item_designs[b];
    let view = &problem.linkage.item_blocks[b];
    let fam = block.spec.family.expect("item block family");
    let k = block.spec.dim;
    let bs = &mut state.items[b];
    let means = row_major(&(&design.x0 * &bs.params.b));
    let precision = bs.params.precision()?;
    let theta = &state.theta;
    let (chain, iter) = (state.chain as u64, state.iteration);

    bs.latents
        .par_chunks_mut(k)
        .zip(bs.unit_acc.par_chunks_mut(k))
        .zip(bs.unit_sd.par_chunks(k))
        .enumerate()
        .for_each(|(local, ((y, acc), sd))| {
            let item = block.spec.units[local];
            if problem.items[item].fixed {
                return;
            }
            let mut rng = stream(config.seed, &[chain, iter, PURPOSE_ITEM, item as u64]);
            let mean = &means[local * k..(local + 1) * k];
            let links = view.links(local);
            let mut psi = vec![0.0; k];
            fam.to_natural_into(y, &mut psi);
            let mut current =
                item_loglik(problem, theta, links, item, &psi) + log_mvn_kernel(y, mean, &precision);
            for d in 0..k {
                let old = y[d];
                let z: f64 = rng.sample(StandardNormal);
                y[d] = config.precision.store(old + sd[d] * z);
                fam.to_natural_into(y, &mut psi);
                let proposed = item_loglik(problem, theta, links, item, &psi)
                    + log_mvn_kernel(y, mean, &precision);
                let proposed = if proposed.is_nan() { f64::NEG_INFINITY } else { proposed };
                if accept(&mut rng, proposed - current) {
                    current = proposed;
                    acc[d] += 1;
                } else {
                    y[d] = old;
                }
            }
        });
    Ok(())
}

fn update_regression(
    problem: &Problem,
    config: &SamplerConfig,
    chain: usize,
    iter: u64,
    side: Side,
    b: usize,
    bs: &mut BlockState,
) -> Result<()> {
    if bs.params.all_fixed() {
        return Ok(());
    }
    let block = &problem.blocks(side)[b];
    let design = &problem.designs(side)[b];
    let mut rng = stream(
        config.seed,
        &[chain as u64, iter, PURPOSE_REGRESSION, block.spec.id as u64],
    );
    let units = bs.units_matrix();
    bs.params.b = sample_b(&units, design, &bs.params, &block.prior, &mut rng)?;
    let etwe = residual_crossprod(&units, design, &bs.params.b);
    if etwe.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite residual cross-product".into()));
    }
    let r_flags = update_r(&mut bs.params, &etwe, design.u_eff, &block.prior, &bs.r_sd, &mut rng)?;
    for (count, flag) in bs.r_acc.iter_mut().zip(r_flags) {
        *count += flag as u32;
    }
    let s_flags = update_s(&mut bs.params, &etwe, design.u_eff, &block.prior, &bs.s_sd, &mut rng)?;
    for (count, flag) in bs.s_acc.iter_mut().zip(s_flags) {
        *count += flag.unwrap_or(false) as u32;
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
