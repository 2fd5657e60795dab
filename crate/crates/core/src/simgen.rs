//! Synthetic data from the full generative model.
//!
//! Unit latents are drawn from their block regressions `u = B'x + e`, each
//! person is assigned `t` distinct items, and responses are drawn from the
//! item families. The truth bundle uses the same parameter names as the
//! sampler's draw files.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockSpec, ItemFamily, ResponseRecord, Unit};
use crate::regression::{free_positions, unconstrained_to_chol, PriorSpec, RegressionParams};
use crate::sampler::{BlockModel, Problem};
use crate::sampler::rng::stream;

/// Truth for a block regression. Missing pieces are drawn from the
/// generator's prior: `B` entries `N(0, 1)`, `S` uniform on `s_range`,
/// `R` from `LKJ(eta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub id: usize,
    pub count: usize,
    /// Persons: latent dimension. Ignored for item blocks.
    #[serde(default = "one")]
    pub dim: usize,
    /// Item blocks only.
    #[serde(default)]
    pub family: Option<ItemFamily>,
    #[serde(default)]
    pub trait_dim: usize,
    /// Number of standard-normal features (excluding the intercept).
    #[serde(default)]
    pub features: usize,
    #[serde(default = "yes")]
    pub intercept: bool,
    /// `p x K`, one row per feature (intercept first).
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub s: Option<Vec<f64>>,
    /// Full correlation matrix.
    #[serde(default)]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_s_range")]
    pub s_range: [f64; 2],
    #[serde(default = "one_f")]
    pub eta: f64,
    /// Fix the regression at its true values in the emitted calibration config.
    #[serde(default)]
    pub fixed: bool,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_s_range() -> [f64; 2] {
    [0.2, 1.0]
}

impl SimBlock {
    pub fn person(id: usize, count: usize, dim: usize) -> Self {
        Self {
            id,
            count,
            dim,
            family: None,
            trait_dim: 0,
            features: 0,
            intercept: true,
            b: None,
            s: None,
            r: None,
            s_range: default_s_range(),
            eta: 1.0,
            fixed: false,
        }
    }

    pub fn items(id: usize, count: usize, family: ItemFamily) -> Self {
        Self {
            family: Some(family),
            dim: family.param_count(),
            ..Self::person(id, count, family.param_count())
        }
    }

    pub fn feature_count(&self) -> usize {
        self.features + self.intercept as usize
    }

    fn latent_dim(&self) -> usize {
        self.family.map_or(self.dim, |f| f.param_count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightScheme {
    Unit,
    Uniform { low: f64, high: f64 },
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::Unit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub seed: u64,
    pub responses_per_person: usize,
    /// Zipf exponent of item popularity; 0 gives uniform assignment.
    #[serde(default)]
    pub popularity_skew: f64,
    #[serde(default)]
    pub weights: WeightScheme,
    pub person_blocks: Vec<SimBlock>,
    pub item_blocks: Vec<SimBlock>,
}

/// Generated data and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub responses: Vec<ResponseRecord>,
    /// Persons with true latents, features and (raw) weights.
    pub persons: Vec<Unit>,
    /// Items with true unconstrained latents and features.
    pub items: Vec<Unit>,
    pub person_blocks: Vec<BlockSpec>,
    pub item_blocks: Vec<BlockSpec>,
    /// True regression of every block, person blocks first.
    pub regressions: Vec<(usize, RegressionParams)>,
    /// `(name, value)` pairs named like the sampler's draw columns, with
    /// item parameters on the natural scale.
    pub truth: Vec<(String, f64)>,
}

impl Generated {
    pub fn truth_value(&self, name: &str) -> Option<f64> {
        self.truth.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Calibration problem for this data set. Every block gets the prior
    /// `B ~ N(0, I / precision)` and `S` bounds `s_bounds`; blocks marked
    /// `fixed` in `spec` have their regression fixed at the truth.
    pub fn problem(&self, spec: &SimSpec, precision: f64, s_bounds: (f64, f64)) -> Result<Problem> {
        let models = |blocks: &[BlockSpec], sims: &[SimBlock]| -> Vec<BlockModel> {
            blocks
                .iter()
                .zip(sims)
                .map(|(b, sim)| {
                    let prior = PriorSpec::diffuse(b.feature_count, b.dim, precision, s_bounds);
                    let model = BlockModel::new(b.clone(), prior);
                    if sim.fixed {
                        let (_, truth) = self
                            .regressions
                            .iter()
                            .find(|(id, _)| *id == b.id)
                            .expect("regression of every block");
                        model.fix_all(truth.b.clone(), truth.s.clone(), truth.l.clone())
                    } else {
                        model
                    }
                })
                .collect()
        };
        Problem::new(
            self.responses.clone(),
            self.persons.clone(),
            self.items.clone(),
            models(&self.person_blocks, &spec.person_blocks),
            models(&self.item_blocks, &spec.item_blocks),
        )
    }

    /// Natural parameters of item `j`.
    pub fn item_natural(&self, j: usize) -> Vec<f64> {
        let fam = self.item_blocks[self.items[j].block].family.expect("item family");
        fam.to_natural(&self.items[j].latent).expect("finite latent")
    }
}

pub fn generate(spec: &SimSpec) -> Result<Generated> {
    validate(spec)?;
    let mut rng = stream(spec.seed, &[0x5147]);
    let mut regressions = Vec::new();
    let mut truth = Vec::new();

    let mut persons = Vec::new();
    let mut person_blocks = Vec::new();
    for (b, block) in spec.person_blocks.iter().enumerate() {
        let params = block_truth(block, &mut rng)?;
        let units = draw_units(block, b, &params, persons.len(), &mut rng);
        let ids: Vec<usize> = units.iter().map(|u| u.id).collect();
        for u in &units {
            for (k, v) in u.latent.iter().enumerate() {
                truth.push((format!("person{}.dim{k}", u.id), *v));
            }
        }
        persons.extend(units);
        person_blocks.push(BlockSpec::person(block.id, block.dim, block.feature_count(), ids));
        regressions.push((block.id, params));
    }
    for u in persons.iter_mut() {
        u.weight = match spec.weights {
            WeightScheme::Unit => 1.0,
            WeightScheme::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        };
    }

    let mut items = Vec::new();
    let mut item_blocks = Vec::new();
    for (b, block) in spec.item_blocks.iter().enumerate() {
        let fam = block.family.expect("validated");
        let params = block_truth(block, &mut rng)?;
        let units = draw_units(block, b, &params, items.len(), &mut rng);
        let ids: Vec<usize> = units.iter().map(|u| u.id).collect();
        for u in &units {
            let nat = fam.to_natural(&u.latent)?;
            for (name, v) in fam.param_names().iter().zip(nat) {
                truth.push((format!("item{}.{name}", u.id), v));
            }
        }
        items.extend(units);
        item_blocks.push(
            BlockSpec::item(block.id, fam, block.feature_count(), ids).with_trait_dim(block.trait_dim),
        );
        regressions.push((block.id, params));
    }
    for (id, params) in &regressions {
        for c in 0..params.k() {
            for r in 0..params.p() {
                truth.push((format!("block{id}.B[{r},{c}]"), params.b[(r, c)]));
            }
        }
        for k in 0..params.k() {
            truth.push((format!("block{id}.S[{k}]"), params.s[k]));
        }
        let corr = params.correlation();
        for (i, j) in free_positions(params.k()) {
            truth.push((format!("block{id}.R[{i},{j}]"), corr[(i, j)]));
        }
    }

    let responses = assign_and_respond(spec, &persons, &items, &item_blocks, &mut rng);
    Ok(Generated {
        responses,
        persons,
        items,
        person_blocks,
        item_blocks,
        regressions,
        truth,
    })
}

fn validate(spec: &SimSpec) -> Result<()> {
    if spec.person_blocks.is_empty() || spec.item_blocks.is_empty() {
        return Err(Error::Validation("need at least one person and one item block".into()));
    }
    let n_items: usize = spec.item_blocks.iter().map(|b| b.count).sum();
    if spec.responses_per_person > n_items {
        return Err(Error::Validation(format!(
            "cannot give each person {} distinct items out of {n_items}",
            spec.responses_per_person
        )));
    }
    if spec.responses_per_person == 0 {
        return Err(Error::Validation("responses_per_person must be positive".into()));
    }
    let person_dim = spec.person_blocks[0].dim;
    for block in &spec.person_blocks {
        if block.family.is_some() {
            return Err(Error::Validation(format!("person block {} has a family", block.id)));
        }
        if block.dim != person_dim || block.dim == 0 {
            return Err(Error::Validation("person blocks must share one positive dimension".into()));
        }
    }
    for block in &spec.item_blocks {
        if block.family.is_none() {
            return Err(Error::Validation(format!("item block {} has no family", block.id)));
        }
        if block.trait_dim >= person_dim {
            return Err(Error::Validation(format!(
                "item block {} loads on missing person dimension {}",
                block.id, block.trait_dim
            )));
        }
    }
    for block in spec.person_blocks.iter().chain(&spec.item_blocks) {
        if block.count == 0 || block.feature_count() == 0 {
            return Err(Error::Validation(format!(
                "block {} needs at least one unit and one feature",
                block.id
            )));
        }
    }
    if let WeightScheme::Uniform { low, high } = spec.weights {
        if !(0.0 <= low && low <= high && high > 0.0) {
            return Err(Error::Validation("weight range must satisfy 0 <= low <= high".into()));
        }
    }
    Ok(())
}

fn block_truth(block: &SimBlock, rng: &mut ChaCha8Rng) -> Result<RegressionParams> {
    let k = block.latent_dim();
    let p = block.feature_count();
    let ctx = |what: &str| Error::Validation(format!("block {}: {what}", block.id));
    let b = match &block.b {
        Some(rows) => {
            if rows.len() != p || rows.iter().any(|r| r.len() != k) {
                return Err(ctx(&format!("B must be {p} x {k}")));
            }
            DMatrix::from_fn(p, k, |r, c| rows[r][c])
        }
        None => DMatrix::from_fn(p, k, |_, _| rng.sample(StandardNormal)),
    };
    let s = match &block.s {
        Some(s) => {
            if s.len() != k || s.iter().any(|v| !(*v >= 0.0)) {
                return Err(ctx(&format!("S must hold {k} non-negative values")));
            }
            DVector::from_vec(s.clone())
        }
        None => {
            let [lo, hi] = block.s_range;
            DVector::from_fn(k, |_, _| lo + (hi - lo) * rng.random::<f64>())
        }
    };
    let l = match &block.r {
        Some(rows) => {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(ctx(&format!("R must be {k} x {k}")));
            }
            let r = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
            if (0..k).any(|i| (r[(i, i)] - 1.0).abs() > 1e-12) {
                return Err(ctx("R must have a unit diagonal"));
            }
            r.cholesky().ok_or_else(|| ctx("R is not positive definite"))?.l()
        }
        None => lkj_cholesky(k, block.eta, rng)?,
    };
    Ok(RegressionParams {
        b,
        s,
        l,
        fixed_b: vec![false; p * k],
        fixed_s: vec![false; k],
        fixed_r: false,
    })
}

/// Cholesky factor of an `LKJ(eta)` draw. The partial correlation in column
/// `c` is `2 Beta(a_c, a_c) - 1` with `a_c = eta + (K - 2 - c)/2`.
pub fn lkj_cholesky<R: Rng + ?Sized>(k: usize, eta: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut y = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for (_, c) in free_positions(k) {
        let a = eta + (k as f64 - 2.0 - c as f64) / 2.0;
        let beta = Beta::new(a, a).map_err(|e| Error::Validation(format!("LKJ shape: {e}")))?;
        let z: f64 = 2.0 * beta.sample(rng) - 1.0;
        y.push(z.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh());
    }
    unconstrained_to_chol(&y)
}

fn draw_units(
    block: &SimBlock,
    b: usize,
    params: &RegressionParams,
    first_id: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Unit> {
    let k = params.k();
    let factor = params.covariance_factor();
    (0..block.count)
        .map(|t| {
            let mut x = Vec::with_capacity(block.feature_count());
            if block.intercept {
                x.push(1.0);
            }
            x.extend((0..block.features).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let latent = (0..k)
                .map(|c| {
                    let mean: f64 = (0..x.len()).map(|r| x[r] * params.b[(r, c)]).sum();
                    let noise: f64 = (0..=c).map(|e| factor[(c, e)] * z[e]).sum();
                    mean + noise
                })
                .collect();
            Unit {
                id: first_id + t,
                block: b,
                latent,
                features: x,
                fixed: false,
                weight: 1.0,
            }
        })
        .collect()
}

fn assign_and_respond(
    spec: &SimSpec,
    persons: &[Unit],
    items: &[Unit],
    item_blocks: &[BlockSpec],
    rng: &mut ChaCha8Rng,
) -> Vec<ResponseRecord> {
    let n_items = items.len();
    let t = spec.responses_per_person;
    let natural: Vec<Vec<f64>> = items
        .iter()
        .map(|u| {
            let fam = item_blocks[u.block].family.expect("item family");
            fam.to_natural(&u.latent).expect("finite latent")
        })
        .collect();
    // Popularity weights by item index; exponent 0 is uniform.
    let popularity: Vec<f64> =
        (0..n_items).map(|j| ((j + 1) as f64).powf(-spec.popularity_skew)).collect();
    let mut responses = Vec::with_capacity(persons.len() * t);
    for (i, person) in persons.iter().enumerate() {
        let chosen = if spec.popularity_skew == 0.0 {
            rand::seq::index::sample(rng, n_items, t).into_vec()
        } else {
            weighted_without_replacement(rng, &popularity, t)
        };
        let mut chosen = chosen;
        chosen.sort_unstable();
        for j in chosen {
            let block = &item_blocks[items[j].block];
            let fam = block.family.expect("item family");
            let theta = person.latent[block.trait_dim];
            let value = fam.sample(&natural[j], theta, rng);
            responses.push(ResponseRecord::new(i, j, value));
        }
    }
    responses
}

/// Efraimidis-Spirakis: keep the `t` largest keys `u^(1/w)`.
fn weighted_without_replacement(rng: &mut ChaCha8Rng, w: &[f64], t: usize) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(j, &wj)| (rng.random::<f64>().ln() / wj, j))
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keys.truncate(t);
    keys.into_iter().map(|(_, j)| j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SimSpec {
        SimSpec {
            seed: 3,
            responses_per_person: 5,
            popularity_skew: 0.0,
            weights: WeightScheme::Unit,
            person_blocks: vec![SimBlock {
                b: Some(vec![vec![0.0]]),
                s: Some(vec![1.0]),
                ..SimBlock::person(0, 100, 1)
            }],
            item_blocks: vec![SimBlock {
                features: 2,
                ..SimBlock::items(1, 30, ItemFamily::TwoPl)
            }],
        }
    }

    #[test]
    fn counting_and_truth_names() {
        let g = generate(&small_spec()).unwrap();
        assert_eq!(g.responses.len(), 500);
        assert_eq!(g.persons.len(), 100);
        assert!(g.truth_value("person7.dim0").is_some());
        assert!(g.truth_value("item3.a").unwrap() > 0.0);
        assert!(g.truth_value("block1.B[2,1]").is_some());
        assert!(g.truth_value("block1.R[1,0]").is_some());
        for i in 0..100 {
            let mut items: Vec<usize> = g
                .responses
                .iter()
                .filter(|r| r.person == i)
                .map(|r| r.item)
                .collect();
            items.dedup();
            assert_eq!(items.len(), 5);
        }
    }

    #[test]
    fn zero_noise_gives_regression_mean() {
        let mut spec = small_spec();
        spec.item_blocks[0].s = Some(vec![0.0, 0.0]);
        let g = generate(&spec).unwrap();
        let (_, params) = &g.regressions[1];
        for u in &g.items {
            for c in 0..2 {
                let mean: f64 = (0..3).map(|r| u.features[r] * params.b[(r, c)]).sum();
                assert_eq!(u.latent[c], mean);
            }
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let a = generate(&small_spec()).unwrap();
        let b = generate(&small_spec()).unwrap();
        assert_eq!(a.responses, b.responses);
        let mut spec = small_spec();
        spec.seed = 4;
        let c = generate(&spec).unwrap();
        assert_ne!(a.responses, c.responses);
    }

    #[test]
    fn infeasible_sparsity() {
        let mut spec = small_spec();
        spec.responses_per_person = 31;
        assert!(matches!(generate(&spec), Err(Error::Validation(_))));
    }

    #[test]
    fn skewed_popularity_favors_low_indices() {
        let mut spec = small_spec();
        spec.popularity_skew = 1.5;
        let g = generate(&spec).unwrap();
        let count = |j: usize| g.responses.iter().filter(|r| r.item == j).count();
        assert!(count(0) > count(29));
        assert_eq!(g.responses.len(), 500);
    }
}
