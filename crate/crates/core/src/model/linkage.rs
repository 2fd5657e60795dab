//! Sparse person/item linkage in compressed-row form.
//!
//! Each side keeps, for every unit, the contiguous list of responses it
//! takes part in together with the partner unit on the other side. The
//! per-block views hold the same entries re-indexed by a unit's position
//! within its block, which is the order the sampler walks them in.

use super::{block_membership, BlockSpec, ResponseRecord, Side};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkEntry {
    pub obs: usize,
    /// Block index (within the partner's side) of the partner unit.
    pub partner_block: usize,
    pub partner: usize,
}

/// Response lists for every unit of one side, indexed by global unit index.
#[derive(Debug, Clone, Default)]
pub struct SideView {
    offsets: Vec<usize>,
    entries: Vec<LinkEntry>,
}

impl SideView {
    pub fn links(&self, unit: usize) -> &[LinkEntry] {
        &self.entries[self.offsets[unit]..self.offsets[unit + 1]]
    }

    pub fn unit_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }
}

/// Response lists for the units of one block, indexed by position in the block.
#[derive(Debug, Clone, Default)]
pub struct BlockView {
    offsets: Vec<usize>,
    entries: Vec<LinkEntry>,
}

impl BlockView {
    pub fn links(&self, local: usize) -> &[LinkEntry] {
        &self.entries[self.offsets[local]..self.offsets[local + 1]]
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone)]
pub struct LinkageIndex {
    pub persons: SideView,
    pub items: SideView,
    pub person_blocks: Vec<BlockView>,
    pub item_blocks: Vec<BlockView>,
    response_count: usize,
}

impl LinkageIndex {
    pub fn build(
        responses: &[ResponseRecord],
        person_blocks: &[BlockSpec],
        item_blocks: &[BlockSpec],
    ) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::Validation("empty response set".into()));
        }
        let n_persons: usize = person_blocks.iter().map(|b| b.units.len()).sum();
        let n_items: usize = item_blocks.iter().map(|b| b.units.len()).sum();
        let person_owner = block_membership(person_blocks, n_persons, Side::Person)?;
        let item_owner = block_membership(item_blocks, n_items, Side::Item)?;

        let dangling: Vec<usize> = responses
            .iter()
            .enumerate()
            .filter(|(_, r)| r.person >= n_persons || r.item >= n_items)
            .map(|(n, _)| n)
            .collect();
        if !dangling.is_empty() {
            let shown: Vec<String> = dangling.iter().take(20).map(|n| n.to_string()).collect();
            return Err(Error::Validation(format!(
                "{} responses reference unknown persons or items (rows {}{})",
                dangling.len(),
                shown.join(", "),
                if dangling.len() > 20 { ", ..." } else { "" }
            )));
        }

        let persons = side_view(responses.len(), n_persons, |n| {
            let r = &responses[n];
            (
                r.person,
                LinkEntry {
                    obs: n,
                    partner_block: item_owner[r.item],
                    partner: r.item,
                },
            )
        });
        let items = side_view(responses.len(), n_items, |n| {
            let r = &responses[n];
            (
                r.item,
                LinkEntry {
                    obs: n,
                    partner_block: person_owner[r.person],
                    partner: r.person,
                },
            )
        });

        Ok(Self {
            person_blocks: person_blocks.iter().map(|b| block_view(b, &persons)).collect(),
            item_blocks: item_blocks.iter().map(|b| block_view(b, &items)).collect(),
            persons,
            items,
            response_count: responses.len(),
        })
    }

    pub fn response_count(&self) -> usize {
        self.response_count
    }

    pub fn person_links(&self, person: usize) -> &[LinkEntry] {
        self.persons.links(person)
    }

    pub fn item_links(&self, item: usize) -> &[LinkEntry] {
        self.items.links(item)
    }

    /// Reconstructs `(person, item)` pairs from the person side.
    pub fn pairs_from_persons(&self) -> Vec<(usize, usize, usize)> {
        (0..self.persons.unit_count())
            .flat_map(|i| self.persons.links(i).iter().map(move |e| (e.obs, i, e.partner)))
            .collect()
    }

    /// Reconstructs `(person, item)` pairs from the item side.
    pub fn pairs_from_items(&self) -> Vec<(usize, usize, usize)> {
        (0..self.items.unit_count())
            .flat_map(|j| self.items.links(j).iter().map(move |e| (e.obs, e.partner, j)))
            .collect()
    }
}

/// Counting sort of observations by owning unit; observation order is
/// preserved within each unit.
fn side_view(
    n_obs: usize,
    n_units: usize,
    entry: impl Fn(usize) -> (usize, LinkEntry),
) -> SideView {
    let mut offsets = vec![0usize; n_units + 1];
    for n in 0..n_obs {
        offsets[entry(n).0 + 1] += 1;
    }
    for u in 0..n_units {
        offsets[u + 1] += offsets[u];
    }
    let mut cursor = offsets.clone();
    let mut entries = vec![
        LinkEntry {
            obs: 0,
            partner_block: 0,
            partner: 0
        };
        n_obs
    ];
    for n in 0..n_obs {
        let (u, e) = entry(n);
        entries[cursor[u]] = e;
        cursor[u] += 1;
    }
    SideView { offsets, entries }
}

fn block_view(block: &BlockSpec, side: &SideView) -> BlockView {
    let mut offsets = Vec::with_capacity(block.units.len() + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for &u in &block.units {
        entries.extend_from_slice(side.links(u));
        offsets.push(entries.len());
    }
    BlockView { offsets, entries }
}
