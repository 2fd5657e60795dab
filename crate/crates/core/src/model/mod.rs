//! Domain types for persons, items, blocks and responses.

mod family;
mod linkage;
pub mod math;

pub use family::ItemFamily;
pub use linkage::{BlockView, LinkEntry, LinkageIndex, SideView};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed person/item interaction. The observation index is the
/// record's position in the response list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseRecord {
    pub person: usize,
    pub item: usize,
    /// Category index for discrete families, real value otherwise.
    pub value: f64,
}

impl ResponseRecord {
    pub fn new(person: usize, item: usize, value: f64) -> Self {
        Self {
            person,
            item,
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Person,
    Item,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Person => f.write_str("person"),
            Side::Item => f.write_str("item"),
        }
    }
}

/// A subpopulation of units sharing one latent regression.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    /// Identifier, unique across both sides.
    pub id: usize,
    pub side: Side,
    /// Latent dimension `K`.
    pub dim: usize,
    /// Number of regression features `p` (including any intercept column).
    pub feature_count: usize,
    /// Response family; item blocks only.
    pub family: Option<ItemFamily>,
    /// Person dimension the items of this block load on; item blocks only.
    pub trait_dim: usize,
    /// Member unit indices, in block order.
    pub units: Vec<usize>,
}

impl BlockSpec {
    pub fn person(id: usize, dim: usize, feature_count: usize, units: Vec<usize>) -> Self {
        Self {
            id,
            side: Side::Person,
            dim,
            feature_count,
            family: None,
            trait_dim: 0,
            units,
        }
    }

    pub fn item(id: usize, family: ItemFamily, feature_count: usize, units: Vec<usize>) -> Self {
        Self {
            id,
            side: Side::Item,
            dim: family.param_count(),
            feature_count,
            family: Some(family),
            trait_dim: 0,
            units,
        }
    }

    pub fn with_trait_dim(mut self, trait_dim: usize) -> Self {
        self.trait_dim = trait_dim;
        self
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.feature_count == 0 {
            return Err(Error::Validation(format!(
                "block {}: K and p must be at least 1",
                self.id
            )));
        }
        match (self.side, self.family) {
            (Side::Item, Some(fam)) if fam.param_count() != self.dim => {
                Err(Error::Validation(format!(
                    "block {}: K = {} but {fam} has {} parameters",
                    self.id,
                    self.dim,
                    fam.param_count()
                )))
            }
            (Side::Item, None) => Err(Error::Validation(format!(
                "item block {} has no response family",
                self.id
            ))),
            (Side::Person, Some(_)) => Err(Error::Validation(format!(
                "person block {} must not declare a family",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

/// A person or item together with its latent vector and features.
///
/// Item latents are stored on the unconstrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: usize,
    /// Index of the block within its side's block list.
    pub block: usize,
    pub latent: Vec<f64>,
    pub features: Vec<f64>,
    /// Fixed units are never modified by the sampler.
    pub fixed: bool,
    /// Person weight; always 1 for items.
    pub weight: f64,
}

/// Checks that the blocks of one side partition `0..n_units` and returns
/// the block index of every unit.
pub fn block_membership(blocks: &[BlockSpec], n_units: usize, side: Side) -> Result<Vec<usize>> {
    let mut owner = vec![usize::MAX; n_units];
    for (b, block) in blocks.iter().enumerate() {
        if block.side != side {
            return Err(Error::Validation(format!(
                "block {} is a {} block listed among {side} blocks",
                block.id, block.side
            )));
        }
        for &u in &block.units {
            if u >= n_units {
                return Err(Error::Validation(format!(
                    "block {} lists {side} {u} but only {n_units} exist",
                    block.id
                )));
            }
            if owner[u] != usize::MAX {
                return Err(Error::Validation(format!(
                    "{side} {u} belongs to blocks {} and {}",
                    blocks[owner[u]].id, block.id
                )));
            }
            owner[u] = b;
        }
    }
    if let Some(u) = owner.iter().position(|&b| b == usize::MAX) {
        return Err(Error::Validation(format!("{side} {u} belongs to no block")));
    }
    Ok(owner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_partition() {
        let blocks = vec![
            BlockSpec::person(0, 1, 1, vec![0, 2]),
            BlockSpec::person(1, 1, 1, vec![1]),
        ];
        assert_eq!(block_membership(&blocks, 3, Side::Person).unwrap(), vec![0, 1, 0]);
        assert!(block_membership(&blocks, 4, Side::Person).is_err());
        let overlapping = vec![
            BlockSpec::person(0, 1, 1, vec![0, 1]),
            BlockSpec::person(1, 1, 1, vec![1]),
        ];
        assert!(block_membership(&overlapping, 2, Side::Person).is_err());
    }

    #[test]
    fn item_block_dim_matches_family() {
        let mut b = BlockSpec::item(3, ItemFamily::ThreePl, 1, vec![0]);
        assert_eq!(b.dim, 3);
        assert!(b.validate().is_ok());
        b.dim = 2;
        assert!(b.validate().is_err());
    }
}
