use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    block_membership, BlockSpec, ItemFamily, LinkageIndex, ResponseRecord, Side, Unit,
};
use crate::regression::{BlockDesign, PriorSpec, RegressionParams};

/// Scales weights so they sum to the number of positive weights.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = w.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!(
            "weight {} at position {bad} is not a finite non-negative number",
            w[bad]
        )));
    }
    let positive = w.iter().filter(|v| **v > 0.0).count();
    if positive == 0 {
        return Err(Error::Validation("all weights are zero".into()));
    }
    let scale = positive as f64 / w.iter().sum::<f64>();
    Ok(w.iter().map(|v| v * scale).collect())
}

/// A block together with its prior and the values of any fixed
/// regression parameters.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub spec: BlockSpec,
    pub prior: PriorSpec,
    /// Fixed masks and values; free entries are overwritten at initialization.
    pub regression: RegressionParams,
}

impl BlockModel {
    /// All regression parameters free.
    pub fn new(spec: BlockSpec, prior: PriorSpec) -> Self {
        let s = DVector::from_fn(spec.dim, |k, _| 0.5 * (prior.s_lower[k] + prior.s_upper[k]));
        let regression = RegressionParams::new(spec.feature_count, spec.dim, s);
        Self {
            spec,
            prior,
            regression,
        }
    }

    pub fn fix_b(mut self, row: usize, col: usize, value: f64) -> Self {
        self.regression.b[(row, col)] = value;
        self.regression.fixed_b[col * self.spec.feature_count + row] = true;
        self
    }

    pub fn fix_s(mut self, dim: usize, value: f64) -> Self {
        self.regression.s[dim] = value;
        self.regression.fixed_s[dim] = true;
        self
    }

    pub fn fix_r(mut self, l: DMatrix<f64>) -> Self {
        self.regression.l = l;
        self.regression.fixed_r = true;
        self
    }

    /// Fixes every regression parameter: `B` to `b`, `S` to `s`, `R` to `L L'`.
    pub fn fix_all(mut self, b: DMatrix<f64>, s: DVector<f64>, l: DMatrix<f64>) -> Self {
        let (p, k) = (self.spec.feature_count, self.spec.dim);
        self.regression.b = b;
        self.regression.s = s;
        self.regression.l = l;
        self.regression.fixed_b = vec![true; p * k];
        self.regression.fixed_s = vec![true; k];
        self.regression.fixed_r = true;
        self
    }
}

/// Validated data, blocks and priors of one calibration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub responses: Vec<ResponseRecord>,
    pub linkage: LinkageIndex,
    /// Persons with normalized weights.
    pub persons: Vec<Unit>,
    pub items: Vec<Unit>,
    pub person_blocks: Vec<BlockModel>,
    pub item_blocks: Vec<BlockModel>,
    pub person_designs: Vec<BlockDesign>,
    pub item_designs: Vec<BlockDesign>,
    /// Latent dimension shared by all person blocks.
    pub person_dim: usize,
    person_local: Vec<usize>,
    item_local: Vec<usize>,
    item_offsets: Vec<usize>,
    item_family: Vec<ItemFamily>,
    item_trait: Vec<usize>,
}

impl Problem {
    pub fn new(
        responses: Vec<ResponseRecord>,
        mut persons: Vec<Unit>,
        mut items: Vec<Unit>,
        person_blocks: Vec<BlockModel>,
        item_blocks: Vec<BlockModel>,
    ) -> Result<Self> {
        if person_blocks.is_empty() || item_blocks.is_empty() {
            return Err(Error::Validation("need at least one person and one item block".into()));
        }
        let mut ids: Vec<usize> = person_blocks
            .iter()
            .chain(&item_blocks)
            .map(|b| b.spec.id)
            .collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("block id {} is used twice", w[0])));
        }
        let person_specs: Vec<BlockSpec> = person_blocks.iter().map(|b| b.spec.clone()).collect();
        let item_specs: Vec<BlockSpec> = item_blocks.iter().map(|b| b.spec.clone()).collect();
        let person_owner = block_membership(&person_specs, persons.len(), Side::Person)?;
        let item_owner = block_membership(&item_specs, items.len(), Side::Item)?;
        let person_dim = person_specs[0].dim;
        for block in person_blocks.iter().chain(&item_blocks) {
            let spec = &block.spec;
            spec.validate()?;
            if spec.side == Side::Person && spec.dim != person_dim {
                return Err(Error::Validation(format!(
                    "person blocks must share one dimension ({} vs {person_dim} in block {})",
                    spec.dim, spec.id
                )));
            }
            if spec.side == Side::Item && spec.trait_dim >= person_dim {
                return Err(Error::Validation(format!(
                    "item block {} loads on person dimension {} but persons have {person_dim}",
                    spec.id, spec.trait_dim
                )));
            }
            let ctx = format!("block {}", spec.id);
            block.prior.validate(spec.feature_count, spec.dim).map_err(|e| e.context(&ctx))?;
        }

        let raw: Vec<f64> = persons.iter().map(|u| u.weight).collect();
        let weights = normalize_weights(&raw).map_err(|e| e.context("person weights"))?;
        for (u, w) in persons.iter_mut().zip(weights) {
            u.weight = w;
        }
        for u in items.iter_mut() {
            u.weight = 1.0;
        }

        let person_local = local_positions(&person_specs, persons.len());
        let item_local = local_positions(&item_specs, items.len());
        check_units(&persons, &person_owner, &person_blocks, Side::Person)?;
        check_units(&items, &item_owner, &item_blocks, Side::Item)?;

        let mut item_offsets = Vec::with_capacity(items.len() + 1);
        let mut item_family = Vec::with_capacity(items.len());
        let mut item_trait = Vec::with_capacity(items.len());
        item_offsets.push(0);
        for &b in &item_owner {
            let spec = &item_blocks[b].spec;
            let fam = spec.family.expect("validated item block");
            item_family.push(fam);
            item_trait.push(spec.trait_dim);
            item_offsets.push(item_offsets.last().unwrap() + fam.param_count());
        }

        for (n, r) in responses.iter().enumerate() {
            if r.item < items.len() {
                item_family[r.item]
                    .check_response(r.value)
                    .map_err(|e| Error::Validation(format!("response row {n}: {e}")))?;
            }
        }
        let linkage = LinkageIndex::build(&responses, &person_specs, &item_specs)?;

        let person_designs = designs(&persons, &person_blocks)?;
        let item_designs = designs(&items, &item_blocks)?;

        let mut person_blocks = person_blocks;
        let mut item_blocks = item_blocks;
        for block in person_blocks.iter_mut().chain(item_blocks.iter_mut()) {
            let reg = &mut block.regression;
            for k in 0..block.spec.dim {
                if !reg.fixed_s[k] {
                    reg.s[k] = 0.5 * (block.prior.s_lower[k] + block.prior.s_upper[k]);
                }
            }
            if !reg.fixed_r {
                reg.l = DMatrix::identity(block.spec.dim, block.spec.dim);
            }
            for t in 0..reg.fixed_b.len() {
                if !reg.fixed_b[t] {
                    reg.b.as_mut_slice()[t] = 0.0;
                }
            }
            reg.validate(&block.prior)
                .map_err(|e| e.context(format!("block {}", block.spec.id)))?;
        }

        Ok(Self {
            responses,
            linkage,
            persons,
            items,
            person_blocks,
            item_blocks,
            person_designs,
            item_designs,
            person_dim,
            person_local,
            item_local,
            item_offsets,
            item_family,
            item_trait,
        })
    }

    pub fn blocks(&self, side: Side) -> &[BlockModel] {
        match side {
            Side::Person => &self.person_blocks,
            Side::Item => &self.item_blocks,
        }
    }

    pub fn designs(&self, side: Side) -> &[BlockDesign] {
        match side {
            Side::Person => &self.person_designs,
            Side::Item => &self.item_designs,
        }
    }

    pub fn units(&self, side: Side) -> &[Unit] {
        match side {
            Side::Person => &self.persons,
            Side::Item => &self.items,
        }
    }

    /// Position of a unit within its block.
    pub fn local_index(&self, side: Side, unit: usize) -> usize {
        match side {
            Side::Person => self.person_local[unit],
            Side::Item => self.item_local[unit],
        }
    }

    pub fn item_family(&self, item: usize) -> ItemFamily {
        self.item_family[item]
    }

    /// Person dimension item `item` loads on.
    pub fn item_trait(&self, item: usize) -> usize {
        self.item_trait[item]
    }

    /// Range of item `item` in a flat natural-parameter vector.
    pub fn item_range(&self, item: usize) -> std::ops::Range<usize> {
        self.item_offsets[item]..self.item_offsets[item + 1]
    }

    pub fn item_param_total(&self) -> usize {
        *self.item_offsets.last().unwrap()
    }

    /// Log-likelihood of every response under the given person latents and
    /// natural item parameters.
    pub fn pointwise_loglik(&self, theta: &[f64], item_natural: &[f64], out: &mut [f64]) {
        let k = self.person_dim;
        for (n, r) in self.responses.iter().enumerate() {
            let psi = &item_natural[self.item_range(r.item)];
            let th = theta[r.person * k + self.item_trait[r.item]];
            out[n] = self.item_family[r.item].log_likelihood_unchecked(psi, th, r.value);
        }
    }

    /// Total number of free scalar parameters.
    pub fn free_parameter_count(&self) -> usize {
        let units = |units: &[Unit]| -> usize {
            units.iter().filter(|u| !u.fixed).map(|u| u.latent.len()).sum()
        };
        let regression: usize = self
            .person_blocks
            .iter()
            .chain(&self.item_blocks)
            .map(|b| {
                let r = &b.regression;
                let free_b = r.fixed_b.iter().filter(|f| !**f).count();
                let free_s = r.fixed_s.iter().filter(|f| !**f).count();
                let free_r = if r.fixed_r { 0 } else { crate::regression::free_count(r.k()) };
                free_b + free_s + free_r
            })
            .sum();
        units(&self.persons) + units(&self.items) + regression
    }
}

fn local_positions(specs: &[BlockSpec], n: usize) -> Vec<usize> {
    let mut local = vec![0; n];
    for spec in specs {
        for (pos, &u) in spec.units.iter().enumerate() {
            local[u] = pos;
        }
    }
    local
}

fn check_units(units: &[Unit], owner: &[usize], blocks: &[BlockModel], side: Side) -> Result<()> {
    for (idx, u) in units.iter().enumerate() {
        let spec = &blocks[owner[idx]].spec;
        if u.block != owner[idx] {
            return Err(Error::Validation(format!(
                "{side} {} records block index {} but is listed in block {}",
                u.id, u.block, spec.id
            )));
        }
        if u.latent.len() != spec.dim {
            return Err(Error::Validation(format!(
                "{side} {} has a latent vector of length {} in a block with K = {}",
                u.id,
                u.latent.len(),
                spec.dim
            )));
        }
        if u.features.len() != spec.feature_count {
            return Err(Error::Validation(format!(
                "{side} {} has {} features, block {} expects {}",
                u.id,
                u.features.len(),
                spec.id,
                spec.feature_count
            )));
        }
        if u.fixed && u.latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "fixed {side} {} has a non-finite latent value",
                u.id
            )));
        }
    }
    Ok(())
}

fn designs(units: &[Unit], blocks: &[BlockModel]) -> Result<Vec<BlockDesign>> {
    blocks
        .iter()
        .map(|block| {
            let spec = &block.spec;
            let x0 = DMatrix::from_fn(spec.units.len(), spec.feature_count, |r, c| {
                units[spec.units[r]].features[c]
            });
            let w = DVector::from_fn(spec.units.len(), |r, _| units[spec.units[r]].weight);
            BlockDesign::new(x0, w).map_err(|e| e.context(format!("block {}", spec.id)))
        })
        .collect()
}
