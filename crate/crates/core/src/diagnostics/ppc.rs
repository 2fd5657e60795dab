//! Posterior predictive checks.
//!
//! For every retained draw a replicated response set is simulated over the
//! observed linkage, and each component of a test statistic is evaluated on
//! the replicate and on the observed data under that draw. The p-value is
//! the fraction of draws with `stat(rep) >= stat(obs)`; draws on which a
//! component is undefined are skipped and counted. Statistics may depend on
//! the draw's parameters (realized discrepancies), e.g. to pick the persons
//! with the lowest ability in that draw.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::sampler::rng::{stream, PURPOSE_REPLICATE};
use crate::sampler::{Problem, Snapshot};

/// A named, possibly vector-valued function of a response set and a
/// posterior draw. `values` is aligned with `problem.responses`.
pub trait TestStatistic: Sync {
    /// One label per component.
    fn labels(&self, problem: &Problem) -> Vec<String>;
    fn evaluate(&self, problem: &Problem, values: &[f64], draw: &Snapshot) -> Vec<Option<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpcResult {
    pub label: String,
    /// Observed statistic; its mean over draws when it depends on the draw.
    pub observed: Option<f64>,
    /// `None` when the observed statistic or every replicate is undefined.
    pub ppp: Option<f64>,
    pub used: usize,
    pub skipped: usize,
}

/// Simulates one replicate per snapshot (replicate `d` uses the random
/// stream keyed by `(seed, d)`) and tallies every statistic component.
pub fn posterior_predictive_check(
    problem: &Problem,
    snapshots: &[Snapshot],
    statistics: &[&dyn TestStatistic],
    seed: u64,
) -> Vec<PpcResult> {
    let observed: Vec<f64> = problem.responses.iter().map(|r| r.value).collect();
    // per draw, per statistic: (observed, replicated) components
    type Pair = (Vec<Option<f64>>, Vec<Option<f64>>);
    let per_draw: Vec<Vec<Pair>> = snapshots
        .par_iter()
        .enumerate()
        .map(|(d, snap)| {
            let values = replicate(problem, snap, seed, d as u64);
            statistics
                .iter()
                .map(|s| (s.evaluate(problem, &observed, snap), s.evaluate(problem, &values, snap)))
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    for (s, stat) in statistics.iter().enumerate() {
        for (c, label) in stat.labels(problem).into_iter().enumerate() {
            let (mut used, mut skipped, mut exceed) = (0, 0, 0);
            let mut obs_values = Vec::new();
            for draw in &per_draw {
                let (obs, rep) = (&draw[s].0, &draw[s].1);
                if let Some(o) = obs[c] {
                    obs_values.push(o);
                }
                match (obs[c], rep[c]) {
                    (Some(o), Some(r)) => {
                        used += 1;
                        exceed += (r >= o) as usize;
                    }
                    _ => skipped += 1,
                }
            }
            let observed = match obs_values.first() {
                None => None,
                Some(&first) if obs_values.iter().all(|&v| v == first) => Some(first),
                Some(_) => Some(obs_values.iter().sum::<f64>() / obs_values.len() as f64),
            };
            out.push(PpcResult {
                label,
                observed,
                ppp: (used > 0).then(|| exceed as f64 / used as f64),
                used,
                skipped,
            });
        }
    }
    out
}

/// Collects the defined p-values into a map keyed by label.
pub fn ppp_map(results: &[PpcResult]) -> BTreeMap<String, f64> {
    results
        .iter()
        .filter_map(|r| r.ppp.map(|p| (r.label.clone(), p)))
        .collect()
}

fn replicate(problem: &Problem, snap: &Snapshot, seed: u64, draw: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[PURPOSE_REPLICATE, draw]);
    let k = problem.person_dim;
    problem
        .responses
        .iter()
        .map(|r| {
            let psi = &snap.item_natural[problem.item_range(r.item)];
            let theta = snap.theta[r.person * k + problem.item_trait(r.item)];
            problem.item_family(r.item).sample(psi, theta, &mut rng)
        })
        .collect()
}

/// Mean response of every item.
#[derive(Debug, Clone, Copy, Default)]
pub struct ItemMeanScore;

impl TestStatistic for ItemMeanScore {
    fn labels(&self, problem: &Problem) -> Vec<String> {
        problem.items.iter().map(|u| format!("item_mean[item{}]", u.id)).collect()
    }

    fn evaluate(&self, problem: &Problem, values: &[f64], _draw: &Snapshot) -> Vec<Option<f64>> {
        item_means(problem, values, |_, _| true)
    }
}

/// Mean response of every item among a subgroup of persons, e.g. the
/// persons with the lowest estimated ability.
#[derive(Debug, Clone)]
pub struct SubgroupItemMean {
    pub name: String,
    pub members: Vec<bool>,
}

impl SubgroupItemMean {
    /// The `fraction` of persons with the smallest `score`.
    pub fn lowest(name: &str, score: &[f64], fraction: f64) -> Self {
        let take = ((score.len() as f64) * fraction).round() as usize;
        Self {
            name: name.to_string(),
            members: lowest_members(score, take),
        }
    }
}

/// Flags the `take` lowest scores; ties go to the lower index.
fn lowest_members(score: &[f64], take: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let mut members = vec![false; score.len()];
    for &i in &order[..take.min(score.len())] {
        members[i] = true;
    }
    members
}

impl TestStatistic for SubgroupItemMean {
    fn labels(&self, problem: &Problem) -> Vec<String> {
        problem
            .items
            .iter()
            .map(|u| format!("{}[item{}]", self.name, u.id))
            .collect()
    }

    fn evaluate(&self, problem: &Problem, values: &[f64], _draw: &Snapshot) -> Vec<Option<f64>> {
        item_means(problem, values, |person, _| self.members[person])
    }
}

/// Mean response of every item among the persons whose latent, on the
/// dimension the item loads on, is in the lowest `fraction` under the
/// draw. A realized discrepancy: the group changes from draw to draw.
#[derive(Debug, Clone)]
pub struct LowAbilityItemMean {
    pub fraction: f64,
}

impl Default for LowAbilityItemMean {
    fn default() -> Self {
        Self { fraction: 0.25 }
    }
}

impl TestStatistic for LowAbilityItemMean {
    fn labels(&self, problem: &Problem) -> Vec<String> {
        problem
            .items
            .iter()
            .map(|u| format!("low_ability_item_mean[item{}]", u.id))
            .collect()
    }

    fn evaluate(&self, problem: &Problem, values: &[f64], draw: &Snapshot) -> Vec<Option<f64>> {
        let k = problem.person_dim;
        let n = problem.persons.len();
        let groups: Vec<Vec<bool>> = (0..k)
            .map(|d| {
                let score: Vec<f64> = (0..n).map(|i| draw.theta[i * k + d]).collect();
                SubgroupItemMean::lowest("", &score, self.fraction).members
            })
            .collect();
        item_means(problem, values, |person, item| groups[problem.item_trait(item)][person])
    }
}

/// Mean response of every item among the persons in the lowest `fraction`
/// by mean response, with the group formed separately within each data set.
#[derive(Debug, Clone)]
pub struct LowScoreItemMean {
    pub fraction: f64,
}

impl Default for LowScoreItemMean {
    fn default() -> Self {
        Self { fraction: 0.25 }
    }
}

impl TestStatistic for LowScoreItemMean {
    fn labels(&self, problem: &Problem) -> Vec<String> {
        problem
            .items
            .iter()
            .map(|u| format!("low_score_item_mean[item{}]", u.id))
            .collect()
    }

    fn evaluate(&self, problem: &Problem, values: &[f64], _draw: &Snapshot) -> Vec<Option<f64>> {
        let n = problem.persons.len();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (r, v) in problem.responses.iter().zip(values) {
            sum[r.person] += v;
            count[r.person] += 1;
        }
        // persons without responses never enter the group
        let score: Vec<f64> = (0..n)
            .map(|i| if count[i] > 0 { sum[i] / count[i] as f64 } else { f64::INFINITY })
            .collect();
        let answered = count.iter().filter(|c| **c > 0).count();
        let members = lowest_members(&score, (self.fraction * answered as f64).round() as usize);
        item_means(problem, values, |person, _| members[person])
    }
}

/// Per-item mean over responses with `keep(person, item)`.
fn item_means(problem: &Problem, values: &[f64], keep: impl Fn(usize, usize) -> bool) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; problem.items.len()];
    let mut count = vec![0usize; problem.items.len()];
    for (r, v) in problem.responses.iter().zip(values) {
        if keep(r.person, r.item) {
            sum[r.item] += v;
            count[r.item] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Quantiles of the distribution of person raw scores (sum of responses).
#[derive(Debug, Clone)]
pub struct PersonScoreQuantiles {
    pub probs: Vec<f64>,
}

impl Default for PersonScoreQuantiles {
    fn default() -> Self {
        Self {
            probs: vec![0.1, 0.25, 0.5, 0.75, 0.9],
        }
    }
}

impl TestStatistic for PersonScoreQuantiles {
    fn labels(&self, _problem: &Problem) -> Vec<String> {
        self.probs.iter().map(|p| format!("person_score_q{p}")).collect()
    }

    fn evaluate(&self, problem: &Problem, values: &[f64], _draw: &Snapshot) -> Vec<Option<f64>> {
        let mut score = vec![0.0; problem.persons.len()];
        for (r, v) in problem.responses.iter().zip(values) {
            score[r.person] += v;
        }
        let mut scored: Vec<f64> = score
            .iter()
            .enumerate()
            .filter(|(i, _)| !problem.linkage.person_links(*i).is_empty())
            .map(|(_, s)| *s)
            .collect();
        scored.sort_by(f64::total_cmp);
        self.probs.iter().map(|&p| quantile(&scored, p)).collect()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Log odds ratios between responses to pairs of discrete items answered
/// by the same persons, with responses dichotomized at `y > 0`.
#[derive(Debug, Clone)]
pub struct ItemPairOddsRatio {
    pairs: Vec<(usize, usize)>,
    /// Observation index pairs for each item pair.
    shared: Vec<Vec<(usize, usize)>>,
}

impl ItemPairOddsRatio {
    /// Selects up to `max_pairs` item pairs, spread evenly over all pairs of
    /// discrete items with at least `min_shared` common persons.
    pub fn sampled(problem: &Problem, max_pairs: usize, min_shared: usize) -> Self {
        let mut all: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for i in 0..problem.persons.len() {
            let links: Vec<_> = problem
                .linkage
                .person_links(i)
                .iter()
                .filter(|e| problem.item_family(e.partner).is_discrete())
                .collect();
            for (x, a) in links.iter().enumerate() {
                for b in &links[x + 1..] {
                    let (first, second) = if a.partner < b.partner { (a, b) } else { (b, a) };
                    all.entry((first.partner, second.partner))
                        .or_default()
                        .push((first.obs, second.obs));
                }
            }
        }
        let eligible: Vec<_> = all.into_iter().filter(|(_, v)| v.len() >= min_shared).collect();
        let step = (eligible.len() as f64 / max_pairs.max(1) as f64).max(1.0);
        let mut pairs = Vec::new();
        let mut shared = Vec::new();
        let mut pos = 0.0;
        while (pos as usize) < eligible.len() && pairs.len() < max_pairs {
            let (pair, obs) = &eligible[pos as usize];
            pairs.push(*pair);
            shared.push(obs.clone());
            pos += step;
        }
        Self { pairs, shared }
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }
}

impl TestStatistic for ItemPairOddsRatio {
    fn labels(&self, problem: &Problem) -> Vec<String> {
        self.pairs
            .iter()
            .map(|&(a, b)| {
                format!("log_odds_ratio[item{},item{}]", problem.items[a].id, problem.items[b].id)
            })
            .collect()
    }

    fn evaluate(&self, _problem: &Problem, values: &[f64], _draw: &Snapshot) -> Vec<Option<f64>> {
        self.shared
            .iter()
            .map(|obs| {
                let mut cells = [[0.0f64; 2]; 2];
                for &(na, nb) in obs {
                    cells[(values[na] > 0.0) as usize][(values[nb] > 0.0) as usize] += 1.0;
                }
                let prod = cells[0][0] * cells[1][1] * cells[0][1] * cells[1][0];
                (prod > 0.0).then(|| {
                    (cells[1][1] * cells[0][0]).ln() - (cells[1][0] * cells[0][1]).ln()
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&x, 0.5), Some(3.0));
        assert_eq!(quantile(&x, 0.0), Some(1.0));
        assert_eq!(quantile(&x, 0.1), Some(1.4));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn lowest_group() {
        let g = SubgroupItemMean::lowest("low", &[0.3, -1.0, 2.0, -0.5], 0.5);
        assert_eq!(g.members, vec![false, true, false, true]);
    }
}
