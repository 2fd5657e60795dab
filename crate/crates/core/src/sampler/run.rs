use rayon::prelude::*;

use super::config::SamplerConfig;
use super::gibbs::gibbs_iteration;
use super::problem::Problem;
use super::samples::{ParameterLayout, PosteriorSamples, RunningMoments};
use super::state::ChainState;
use super::tuning::{adapt_factor5, adapt_interpolate};
use crate::diagnostics::PointwiseAccumulator;
use crate::error::{Error, Result};

/// Progress report emitted during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressEvent {
    pub chain: usize,
    /// 1 to 4.
    pub phase: u8,
    /// Iterations completed within the phase.
    pub iteration: u64,
    pub phase_length: u64,
    /// Mean acceptance rate of unit coordinates so far in the phase.
    pub unit_acceptance: f64,
    /// Mean acceptance rate of `R` and `S` coordinates so far in the phase.
    pub regression_acceptance: f64,
}

/// Samples of all chains plus the shared parameter layout.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub layout: ParameterLayout,
    pub chains: Vec<PosteriorSamples>,
}

pub fn run(problem: &Problem, config: &SamplerConfig) -> Result<RunOutput> {
    run_with_progress(problem, config, &|_| {})
}

/// Runs `config.chains` independent chains on a pool of `config.workers`
/// threads.
pub fn run_with_progress(
    problem: &Problem,
    config: &SamplerConfig,
    observer: &(dyn Fn(&ProgressEvent) + Sync),
) -> Result<RunOutput> {
    config.validate()?;
    let layout = ParameterLayout::new(problem);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Validation(format!("cannot start {} workers: {e}", config.workers)))?;
    let chains = pool.install(|| {
        (0..config.chains)
            .into_par_iter()
            .map(|c| run_chain(problem, config, &layout, c, observer))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(RunOutput { layout, chains })
}

fn run_chain(
    problem: &Problem,
    config: &SamplerConfig,
    layout: &ParameterLayout,
    chain: usize,
    observer: &(dyn Fn(&ProgressEvent) + Sync),
) -> Result<PosteriorSamples> {
    let mut state = ChainState::initialize(problem, config, chain)?;
    let ctx = |e: Error| e.context(format!("chain {chain}"));

    run_phase(problem, config, &mut state, 1, config.m1, observer).map_err(ctx)?;

    let sd2 = state.proposal_sds();
    run_phase(problem, config, &mut state, 2, config.m2, observer).map_err(ctx)?;
    let acc2 = rates(&state.acceptance_counts(), config.m2);
    let sd3: Vec<f64> = sd2
        .iter()
        .zip(&acc2)
        .map(|(&sd, acc)| acc.map_or(sd, |a| adapt_factor5(a, config.a0, config.a1, sd)))
        .collect();
    state.set_proposal_sds(&sd3);

    run_phase(problem, config, &mut state, 3, config.m3, observer).map_err(ctx)?;
    let acc3 = rates(&state.acceptance_counts(), config.m3);
    let sd4: Vec<f64> = (0..sd3.len())
        .map(|t| match (acc2[t], acc3[t]) {
            (Some(a2), Some(a3)) if sd2[t] != sd3[t] => {
                adapt_interpolate(sd2[t], a2, sd3[t], a3, config.a_star)
            }
            _ => sd3[t],
        })
        .collect();
    state.set_proposal_sds(&sd4);

    state.reset_acceptance();
    let mut moments = RunningMoments::new(layout.len());
    let mut pointwise = PointwiseAccumulator::new(problem.responses.len());
    let mut draws = Vec::with_capacity(config.stored_draws() as usize);
    let mut values = vec![0.0; layout.len()];
    let mut ll = vec![0.0; problem.responses.len()];
    for t in 0..config.m4 {
        gibbs_iteration(problem, config, &mut state).map_err(ctx)?;
        layout.extract(&state, &mut values);
        moments.push(&values);
        problem.pointwise_loglik(&state.theta, &state.item_natural, &mut ll);
        pointwise.push(&ll);
        if (t + 1) % config.thin == 0 {
            draws.push(values.clone());
        }
        report(observer, config, &state, chain, 4, t + 1, config.m4);
    }
    Ok(PosteriorSamples {
        chain,
        draws,
        acceptance: layout.acceptance(&state, config.m4),
        moments,
        pointwise,
        proposal_sds: sd4,
        final_state: state,
    })
}

fn run_phase(
    problem: &Problem,
    config: &SamplerConfig,
    state: &mut ChainState,
    phase: u8,
    iterations: u64,
    observer: &(dyn Fn(&ProgressEvent) + Sync),
) -> Result<()> {
    state.reset_acceptance();
    for t in 0..iterations {
        gibbs_iteration(problem, config, state)?;
        report(observer, config, state, state.chain, phase, t + 1, iterations);
    }
    Ok(())
}

fn rates(counts: &[u32], iterations: u64) -> Vec<Option<f64>> {
    counts
        .iter()
        .map(|&c| (iterations > 0).then(|| c as f64 / iterations as f64))
        .collect()
}

fn report(
    observer: &(dyn Fn(&ProgressEvent) + Sync),
    config: &SamplerConfig,
    state: &ChainState,
    chain: usize,
    phase: u8,
    done: u64,
    total: u64,
) {
    let due = done == total || (config.report_every > 0 && done % config.report_every == 0);
    if !due {
        return;
    }
    let mean_rate = |counts: &mut dyn Iterator<Item = u32>| {
        let (sum, n) = counts.fold((0u64, 0u64), |(s, n), c| (s + c as u64, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum as f64 / (n * done) as f64
        }
    };
    let blocks = || state.persons.iter().chain(&state.items);
    let unit_acceptance = mean_rate(&mut blocks().flat_map(|b| b.unit_acc.iter().copied()));
    let regression_acceptance = mean_rate(
        &mut blocks().flat_map(|b| b.r_acc.iter().chain(&b.s_acc).copied()),
    );
    observer(&ProgressEvent {
        chain,
        phase,
        iteration: done,
        phase_length: total,
        unit_acceptance,
        regression_acceptance,
    });
}
