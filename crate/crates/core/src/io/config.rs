use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::tables::{parse_features, parse_responses, read_roster, ParsedResponses};
use crate::error::{Error, Result};
use crate::model::{BlockSpec, ItemFamily, ResponseRecord, Side, Unit};
use crate::regression::PriorSpec;
use crate::sampler::{BlockModel, Problem, SamplerConfig};

/// Calibration configuration file (TOML).
///
/// ```toml
/// output = "out"
///
/// [sampler]
/// m4 = 2000
/// seed = 7
///
/// [data]
/// responses = "responses.csv"
///
/// [[person_blocks]]
/// id = 0
/// [person_blocks.fixed]
/// b = [{ row = 0, col = 0, value = 0.0 }]
/// s = [{ dim = 0, value = 1.0 }]
///
/// [[item_blocks]]
/// id = 1
/// family = "2PL"
/// features = "item_features.csv"
/// ```
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub data: DataConfig,
    pub person_blocks: Vec<BlockConfig>,
    pub item_blocks: Vec<BlockConfig>,
    #[serde(default)]
    pub fixed_units: Vec<FixedUnit>,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub responses: PathBuf,
    /// Response-file column giving each person's block id.
    #[serde(default)]
    pub person_block_column: Option<String>,
    /// Response-file column giving each item's block id.
    #[serde(default)]
    pub item_block_column: Option<String>,
}

/// One block. Members come from, in order of precedence, an inline list,
/// a roster file (column `id`), the block column of the response file, or
/// (for at most one block per side) every unit not claimed elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub id: usize,
    /// Person blocks: latent dimension.
    #[serde(default = "one")]
    pub dim: usize,
    /// Item blocks: response family.
    #[serde(default)]
    pub family: Option<ItemFamily>,
    /// Item blocks: person dimension the items load on.
    #[serde(default)]
    pub trait_dim: usize,
    #[serde(default)]
    pub members: Option<Vec<String>>,
    #[serde(default)]
    pub roster: Option<PathBuf>,
    /// Feature file with an `id` column; without one the block is
    /// intercept-only.
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub fixed: FixedRegression,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Prior mean of `vec(B)` (column-major); zeros when absent.
    #[serde(default)]
    pub b0: Option<Vec<f64>>,
    /// Common diagonal prior precision of `vec(B)`.
    #[serde(default = "default_precision")]
    pub precision: f64,
    #[serde(default)]
    pub omega0_diag: Option<Vec<f64>>,
    /// Dense prior precision; overrides the diagonal forms.
    #[serde(default)]
    pub omega0: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_s_bounds")]
    pub s_bounds: [f64; 2],
    #[serde(default)]
    pub s_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub s_upper: Option<Vec<f64>>,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_precision() -> f64 {
    0.01
}
fn default_s_bounds() -> [f64; 2] {
    [0.0, 3.0]
}
fn default_eta() -> f64 {
    1.0
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            b0: None,
            precision: default_precision(),
            omega0_diag: None,
            omega0: None,
            s_bounds: default_s_bounds(),
            s_lower: None,
            s_upper: None,
            eta: default_eta(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedRegression {
    #[serde(default)]
    pub b: Vec<FixedEntry>,
    #[serde(default)]
    pub s: Vec<FixedSd>,
    /// Full correlation matrix.
    #[serde(default)]
    pub r: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSd {
    pub dim: usize,
    pub value: f64,
}

/// A unit held at given values. Item values are natural parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedUnit {
    pub side: Side,
    pub id: String,
    pub values: Vec<f64>,
}

/// A configuration resolved against its data files.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: CalibrationConfig,
    pub path: PathBuf,
    pub problem: Problem,
    pub person_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Identification and other non-fatal findings.
    pub warnings: Vec<String>,
}

impl CalibrationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("cannot serialize config: {e}")))
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = CalibrationConfig::from_toml(&text).map_err(|e| e.context(path.display()))?;
    resolve(config, path)
}

/// Resolves a parsed configuration; `path` locates relative file names.
pub fn resolve(config: CalibrationConfig, path: &Path) -> Result<LoadedConfig> {
    config.sampler.validate()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let parsed = parse_responses(&at(&config.data.responses))?;
    let person_ids = parsed.person_ids.clone();
    let item_ids = parsed.item_ids.clone();

    let person_members = assign_members(
        &config.person_blocks,
        &person_ids,
        Side::Person,
        config.data.person_block_column.as_deref(),
        &parsed,
        &at,
    )?;
    let item_members = assign_members(
        &config.item_blocks,
        &item_ids,
        Side::Item,
        config.data.item_block_column.as_deref(),
        &parsed,
        &at,
    )?;

    let fixed = fixed_unit_map(&config.fixed_units, &person_ids, &item_ids)?;

    let mut persons: Vec<Option<Unit>> = vec![None; person_ids.len()];
    let mut items: Vec<Option<Unit>> = vec![None; item_ids.len()];
    let mut person_models = Vec::new();
    let mut item_models = Vec::new();
    for (side, blocks, members, ids, units, models) in [
        (Side::Person, &config.person_blocks, &person_members, &person_ids, &mut persons, &mut person_models),
        (Side::Item, &config.item_blocks, &item_members, &item_ids, &mut items, &mut item_models),
    ] {
        for (b, (block, member)) in blocks.iter().zip(members).enumerate() {
            let ctx = format!("{side} block {}", block.id);
            let member_ids: Vec<String> = member.iter().map(|&u| ids[u].clone()).collect();
            let (x0, _) = parse_features(block.features.as_deref().map(&at).as_deref(), &member_ids, block.intercept)
                .map_err(|e| e.context(&ctx))?;
            let spec = block_spec(block, side, x0.ncols(), member.clone()).map_err(|e| e.context(&ctx))?;
            for (row, &u) in member.iter().enumerate() {
                let features: Vec<f64> = x0.row(row).iter().copied().collect();
                let key = (side, u);
                let (latent, is_fixed) = match fixed.get(&key) {
                    Some(values) => (fixed_latent(&spec, values).map_err(|e| {
                        e.context(format!("fixed {side} {}", ids[u]))
                    })?, true),
                    None => (vec![0.0; spec.dim], false),
                };
                let weight = if side == Side::Person { parsed.person_weights[u] } else { 1.0 };
                units[u] = Some(Unit { id: u, block: b, latent, features, fixed: is_fixed, weight });
            }
            models.push(block_model(block, spec).map_err(|e| e.context(&ctx))?);
        }
    }
    let persons: Vec<Unit> = persons.into_iter().map(|u| u.expect("assigned")).collect();
    let items: Vec<Unit> = items.into_iter().map(|u| u.expect("assigned")).collect();

    let mut warnings = Vec::new();
    let identified = person_models.iter().any(|m| {
        m.regression.fixed_b.iter().all(|&f| f) && m.regression.fixed_s.iter().all(|&f| f)
    }) || persons.iter().chain(&items).any(|u| u.fixed);
    if !identified {
        warnings.push(
            "no person block has fixed location and scale and no anchor units are fixed; \
             the latent scale is not identified"
                .to_string(),
        );
    }

    let responses: Vec<ResponseRecord> = parsed.records.clone();
    let problem = Problem::new(responses, persons, items, person_models, item_models)?;
    Ok(LoadedConfig {
        config,
        path: path.to_path_buf(),
        problem,
        person_ids,
        item_ids,
        warnings,
    })
}

fn assign_members(
    blocks: &[BlockConfig],
    ids: &[String],
    side: Side,
    column: Option<&str>,
    parsed: &ParsedResponses,
    at: &dyn Fn(&Path) -> PathBuf,
) -> Result<Vec<Vec<usize>>> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let by_column = match column {
        Some(col) => Some(parsed.unit_column(side, col)?),
        None => None,
    };
    let mut owner: Vec<Option<usize>> = vec![None; ids.len()];
    let mut catch_all = None;
    for (b, block) in blocks.iter().enumerate() {
        let listed: Option<Vec<String>> = match (&block.members, &block.roster) {
            (Some(m), _) => Some(m.clone()),
            (None, Some(path)) => Some(read_roster(&at(path))?),
            (None, None) => None,
        };
        match listed {
            Some(list) => {
                for id in list {
                    let &u = index.get(id.as_str()).ok_or_else(|| {
                        Error::Validation(format!("block {} lists unknown {side} {id}", block.id))
                    })?;
                    claim(&mut owner, u, b, blocks, ids, side)?;
                }
            }
            None => match &by_column {
                Some(values) => {
                    let key = block.id.to_string();
                    for (u, v) in values.iter().enumerate() {
                        if *v == key {
                            claim(&mut owner, u, b, blocks, ids, side)?;
                        }
                    }
                }
                None => {
                    if catch_all.is_some() {
                        return Err(Error::Validation(format!(
                            "more than one {side} block without a member list"
                        )));
                    }
                    catch_all = Some(b);
                }
            },
        }
    }
    let mut members = vec![Vec::new(); blocks.len()];
    for (u, o) in owner.iter().enumerate() {
        match (*o, catch_all) {
            (Some(b), _) | (None, Some(b)) => members[b].push(u),
            (None, None) => {
                return Err(Error::Validation(format!("{side} {} belongs to no block", ids[u])))
            }
        }
    }
    if let Some(b) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::Validation(format!("{side} block {} has no members", blocks[b].id)));
    }
    Ok(members)
}

fn claim(
    owner: &mut [Option<usize>],
    u: usize,
    b: usize,
    blocks: &[BlockConfig],
    ids: &[String],
    side: Side,
) -> Result<()> {
    if let Some(prev) = owner[u] {
        if prev != b {
            return Err(Error::Validation(format!(
                "{side} {} belongs to blocks {} and {}",
                ids[u], blocks[prev].id, blocks[b].id
            )));
        }
    }
    owner[u] = Some(b);
    Ok(())
}

fn fixed_unit_map(
    fixed: &[FixedUnit],
    person_ids: &[String],
    item_ids: &[String],
) -> Result<BTreeMap<(Side, usize), Vec<f64>>> {
    let mut map = BTreeMap::new();
    for f in fixed {
        let ids = match f.side {
            Side::Person => person_ids,
            Side::Item => item_ids,
        };
        let u = ids.iter().position(|s| *s == f.id).ok_or_else(|| {
            Error::Validation(format!("fixed {} {} does not appear in the responses", f.side, f.id))
        })?;
        if map.insert((f.side, u), f.values.clone()).is_some() {
            return Err(Error::Validation(format!("{} {} is fixed twice", f.side, f.id)));
        }
    }
    Ok(map)
}

fn fixed_latent(spec: &BlockSpec, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != spec.dim {
        return Err(Error::Validation(format!(
            "{} values given, block {} has K = {}",
            values.len(),
            spec.id,
            spec.dim
        )));
    }
    match spec.family {
        Some(fam) => fam.to_unconstrained(values).map_err(|e| Error::Validation(e.to_string())),
        None => Ok(values.to_vec()),
    }
}

fn block_spec(block: &BlockConfig, side: Side, p: usize, units: Vec<usize>) -> Result<BlockSpec> {
    let spec = match side {
        Side::Person => {
            if block.family.is_some() {
                return Err(Error::Validation("person blocks take no family".into()));
            }
            BlockSpec::person(block.id, block.dim, p, units)
        }
        Side::Item => {
            let fam = block
                .family
                .ok_or_else(|| Error::Validation("item blocks need a family".into()))?;
            BlockSpec::item(block.id, fam, p, units).with_trait_dim(block.trait_dim)
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn block_model(block: &BlockConfig, spec: BlockSpec) -> Result<BlockModel> {
    let (p, k) = (spec.feature_count, spec.dim);
    let prior = prior_spec(&block.prior, p, k)?;
    let mut model = BlockModel::new(spec, prior);
    for e in &block.fixed.b {
        if e.row >= p || e.col >= k {
            return Err(Error::Validation(format!(
                "fixed B[{},{}] outside the {p} x {k} coefficient matrix",
                e.row, e.col
            )));
        }
        model = model.fix_b(e.row, e.col, e.value);
    }
    for e in &block.fixed.s {
        if e.dim >= k || !(e.value > 0.0) {
            return Err(Error::Validation(format!("invalid fixed S[{}] = {}", e.dim, e.value)));
        }
        model = model.fix_s(e.dim, e.value);
    }
    if let Some(rows) = &block.fixed.r {
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Validation(format!("fixed R must be {k} x {k}")));
        }
        let r = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        let l = r
            .cholesky()
            .ok_or_else(|| Error::Validation("fixed R is not positive definite".into()))?
            .l();
        model = model.fix_r(l);
    }
    Ok(model)
}

fn prior_spec(cfg: &PriorConfig, p: usize, k: usize) -> Result<PriorSpec> {
    let pk = p * k;
    let vec_of = |v: &Option<Vec<f64>>, n: usize, name: &str, default: f64| -> Result<DVector<f64>> {
        match v {
            Some(v) if v.len() == n => Ok(DVector::from_vec(v.clone())),
            Some(v) => Err(Error::Validation(format!("{name} has {} entries, expected {n}", v.len()))),
            None => Ok(DVector::from_element(n, default)),
        }
    };
    let omega0 = match (&cfg.omega0, &cfg.omega0_diag) {
        (Some(rows), _) => {
            if rows.len() != pk || rows.iter().any(|r| r.len() != pk) {
                return Err(Error::Validation(format!("omega0 must be {pk} x {pk}")));
            }
            DMatrix::from_fn(pk, pk, |i, j| rows[i][j])
        }
        (None, Some(_)) => DMatrix::from_diagonal(&vec_of(&cfg.omega0_diag, pk, "omega0_diag", 0.0)?),
        (None, None) => DMatrix::identity(pk, pk) * cfg.precision,
    };
    let prior = PriorSpec {
        b0: vec_of(&cfg.b0, pk, "b0", 0.0)?,
        omega0,
        s_lower: vec_of(&cfg.s_lower, k, "s_lower", cfg.s_bounds[0])?,
        s_upper: vec_of(&cfg.s_upper, k, "s_upper", cfg.s_bounds[1])?,
        eta: cfg.eta,
    };
    prior.validate(p, k)?;
    Ok(prior)
}
