use super::problem::Problem;
use super::state::ChainState;
use crate::diagnostics::PointwiseAccumulator;
use crate::error::{Error, Result};
use crate::model::Side;
use crate::regression::free_positions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Person latent: index into `theta`, block, position in block latents.
    Person { flat: usize, block: usize, pos: usize },
    /// Natural item parameter: index into `item_natural`, block, position.
    Item { flat: usize, block: usize, pos: usize },
    B { side: Side, block: usize, idx: usize },
    S { side: Side, block: usize, k: usize },
    R { side: Side, block: usize, t: usize, i: usize, j: usize },
}

/// Names and locations of the free scalar parameters.
///
/// Order: person latents (`person{id}.dim{k}`) by person block, item
/// parameters on the natural scale (`item{id}.{name}`) by item block, then
/// for every block `block{id}.B[r,c]`, `block{id}.S[k]` and
/// `block{id}.R[i,j]` (`i > j`). Fixed parameters are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    names: Vec<String>,
    slots: Vec<Slot>,
}

impl ParameterLayout {
    pub fn new(problem: &Problem) -> Self {
        let mut names = Vec::new();
        let mut slots = Vec::new();
        let k = problem.person_dim;
        for (b, block) in problem.person_blocks.iter().enumerate() {
            for (local, &u) in block.spec.units.iter().enumerate() {
                let unit = &problem.persons[u];
                if unit.fixed {
                    continue;
                }
                for d in 0..k {
                    names.push(format!("person{}.dim{d}", unit.id));
                    slots.push(Slot::Person { flat: u * k + d, block: b, pos: local * k + d });
                }
            }
        }
        for (b, block) in problem.item_blocks.iter().enumerate() {
            let fam = block.spec.family.expect("item block family");
            let kb = block.spec.dim;
            let pnames = fam.param_names();
            for (local, &j) in block.spec.units.iter().enumerate() {
                let unit = &problem.items[j];
                if unit.fixed {
                    continue;
                }
                let start = problem.item_range(j).start;
                for (d, pname) in pnames.iter().enumerate() {
                    names.push(format!("item{}.{pname}", unit.id));
                    slots.push(Slot::Item { flat: start + d, block: b, pos: local * kb + d });
                }
            }
        }
        for side in [Side::Person, Side::Item] {
            for (b, block) in problem.blocks(side).iter().enumerate() {
                let reg = &block.regression;
                let id = block.spec.id;
                let p = reg.p();
                for idx in 0..reg.fixed_b.len() {
                    if !reg.fixed_b[idx] {
                        names.push(format!("block{id}.B[{},{}]", idx % p, idx / p));
                        slots.push(Slot::B { side, block: b, idx });
                    }
                }
                for kk in 0..reg.k() {
                    if !reg.fixed_s[kk] {
                        names.push(format!("block{id}.S[{kk}]"));
                        slots.push(Slot::S { side, block: b, k: kk });
                    }
                }
                if !reg.fixed_r {
                    for (t, (i, j)) in free_positions(reg.k()).enumerate() {
                        names.push(format!("block{id}.R[{i},{j}]"));
                        slots.push(Slot::R { side, block: b, t, i, j });
                    }
                }
            }
        }
        Self { names, slots }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Current values of all free parameters.
    pub fn extract(&self, state: &ChainState, out: &mut [f64]) {
        for (slot, v) in self.slots.iter().zip(out.iter_mut()) {
            *v = match *slot {
                Slot::Person { flat, .. } => state.theta[flat],
                Slot::Item { flat, .. } => state.item_natural[flat],
                Slot::B { side, block, idx } => state.blocks(side)[block].params.b.as_slice()[idx],
                Slot::S { side, block, k } => state.blocks(side)[block].params.s[k],
                Slot::R { side, block, i, j, .. } => {
                    let l = &state.blocks(side)[block].params.l;
                    (0..=j).map(|m| l[(i, m)] * l[(j, m)]).sum()
                }
            };
        }
    }

    /// Acceptance rate of every free parameter from the state's counters
    /// over `iterations` sweeps. `B` is drawn exactly and reports 1.
    pub fn acceptance(&self, state: &ChainState, iterations: u64) -> Vec<f64> {
        let n = iterations.max(1) as f64;
        self.slots
            .iter()
            .map(|slot| match *slot {
                Slot::Person { block, pos, .. } => state.persons[block].unit_acc[pos] as f64 / n,
                Slot::Item { block, pos, .. } => state.items[block].unit_acc[pos] as f64 / n,
                Slot::B { .. } => 1.0,
                Slot::S { side, block, k } => state.blocks(side)[block].s_acc[k] as f64 / n,
                Slot::R { side, block, t, .. } => state.blocks(side)[block].r_acc[t] as f64 / n,
            })
            .collect()
    }

    /// Whether parameter `i` is updated by a Metropolis step.
    pub fn is_metropolis(&self, i: usize) -> bool {
        !matches!(self.slots[i], Slot::B { .. })
    }

    /// Person latents and natural item parameters of a stored draw.
    pub fn snapshot(&self, problem: &Problem, row: &[f64]) -> Result<Snapshot> {
        if row.len() != self.len() {
            return Err(Error::Validation(format!(
                "draw has {} values, expected {}",
                row.len(),
                self.len()
            )));
        }
        let mut snap = Snapshot::fixed(problem)?;
        for (slot, &v) in self.slots.iter().zip(row) {
            match *slot {
                Slot::Person { flat, .. } => snap.theta[flat] = v,
                Slot::Item { flat, .. } => snap.item_natural[flat] = v,
                _ => {}
            }
        }
        Ok(snap)
    }
}

/// Unit parameters needed to evaluate or simulate responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub theta: Vec<f64>,
    pub item_natural: Vec<f64>,
}

impl Snapshot {
    /// Fixed units at their values, free units zero.
    pub fn fixed(problem: &Problem) -> Result<Self> {
        let k = problem.person_dim;
        let mut theta = vec![0.0; problem.persons.len() * k];
        for (i, u) in problem.persons.iter().enumerate() {
            if u.fixed {
                theta[i * k..(i + 1) * k].copy_from_slice(&u.latent);
            }
        }
        let mut item_natural = vec![0.0; problem.item_param_total()];
        for (j, u) in problem.items.iter().enumerate() {
            if u.fixed {
                let nat = problem.item_family(j).to_natural(&u.latent)?;
                item_natural[problem.item_range(j)].copy_from_slice(&nat);
            }
        }
        Ok(Self {
            theta,
            item_natural,
        })
    }

    pub fn of_state(state: &ChainState) -> Self {
        Self {
            theta: state.theta.clone(),
            item_natural: state.item_natural.clone(),
        }
    }

    pub fn pointwise_loglik(&self, problem: &Problem) -> Vec<f64> {
        let mut out = vec![0.0; problem.responses.len()];
        problem.pointwise_loglik(&self.theta, &self.item_natural, &mut out);
        out
    }
}

/// Welford running mean and sum of squared deviations per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / c;
            *s += delta * (v - *m);
        }
    }

    /// Pools moments of independent sequences.
    pub fn merge(parts: &[&RunningMoments]) -> RunningMoments {
        let n = parts.first().map_or(0, |p| p.mean.len());
        let mut out = RunningMoments::new(n);
        for part in parts {
            if part.count == 0 {
                continue;
            }
            let (na, nb) = (out.count as f64, part.count as f64);
            let total = na + nb;
            for i in 0..n {
                let delta = part.mean[i] - out.mean[i];
                out.m2[i] += part.m2[i] + delta * delta * na * nb / total;
                out.mean[i] += delta * nb / total;
            }
            out.count += part.count;
        }
        out
    }

    /// Sample standard deviation of parameter `i` (`NaN` below 2 values).
    pub fn sd(&self, i: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        (self.m2[i] / (self.count as f64 - 1.0)).max(0.0).sqrt()
    }
}

/// Phase-4 output of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub chain: usize,
    /// Thinned draws, one row per stored iteration.
    pub draws: Vec<Vec<f64>>,
    /// Moments over every Phase-4 iteration.
    pub moments: RunningMoments,
    pub acceptance: Vec<f64>,
    /// Pointwise log-likelihood summary over every Phase-4 iteration.
    pub pointwise: PointwiseAccumulator,
    /// Proposal sds used in Phase 4, in [`ChainState::proposal_sds`] order.
    pub proposal_sds: Vec<f64>,
    pub final_state: ChainState,
}

impl PosteriorSamples {
    /// Column `i` of the stored draws.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[i]).collect()
    }
}
