use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{
    resolve, BlockConfig, CalibrationConfig, DataConfig, FixedEntry, FixedRegression, FixedSd,
    LoadedConfig, PriorConfig,
};
use super::tables::{fmt_f64, parse_f64, read_csv, write_csv};
use crate::diagnostics::{
    posterior_predictive_check, ppp_map, summarize, ChainSummary, FitReport, ItemMeanScore,
    ItemPairOddsRatio, PersonScoreQuantiles, PointwiseAccumulator, PpcResult, LowAbilityItemMean, LowScoreItemMean,
    TestStatistic, WaicEstimate,
};
use crate::error::{Error, Result};
use crate::sampler::{
    run_with_progress, ParameterLayout, Problem, ProgressEvent, RunOutput, RunningMoments, Snapshot,
};
use crate::simgen::{Generated, SimSpec, WeightScheme};

pub const MANIFEST: &str = "manifest.toml";
pub const SUMMARY: &str = "summary.csv";
pub const FIT: &str = "fit.txt";
pub const PPC: &str = "ppc.csv";
pub const IDS: &str = "ids.csv";
pub const TIMING: &str = "timing.txt";
pub const DIAGNOSE_DIR: &str = "diagnose";

pub fn draws_file(chain: usize) -> String {
    format!("draws_chain{chain}.csv")
}

pub fn moments_file(chain: usize) -> String {
    format!("moments_chain{chain}.csv")
}

/// Everything needed to re-run diagnostics on a finished calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    /// Absolute path of the configuration file; relative data paths in
    /// `config` are resolved against its directory.
    pub config_path: PathBuf,
    pub parameters: usize,
    pub draws_per_chain: u64,
    /// The configuration as run, overrides applied and defaults filled in.
    pub config: CalibrationConfig,
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub output: RunOutput,
    pub summary: ChainSummary,
    pub fit: FitReport,
    pub ppc: Vec<PpcResult>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct DiagnoseOutcome {
    pub summary: ChainSummary,
    pub fit: FitReport,
    pub ppc: Vec<PpcResult>,
}

/// Creates `dir` and checks that files can be written into it.
pub fn preflight(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-test");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Runs the sampler for a loaded configuration and writes every output
/// into `out_dir`. The directory is checked before sampling starts.
pub fn calibrate(
    loaded: &LoadedConfig,
    out_dir: &Path,
    observer: &(dyn Fn(&ProgressEvent) + Sync),
) -> Result<CalibrationOutcome> {
    preflight(out_dir)?;
    let problem = &loaded.problem;
    let sampler = &loaded.config.sampler;
    let start = Instant::now();
    let output = run_with_progress(problem, sampler, observer)?;
    let elapsed = start.elapsed();

    let summary = summarize_output(&output);
    let parts: Vec<PointwiseAccumulator> = output.chains.iter().map(|c| c.pointwise.clone()).collect();
    let waic = PointwiseAccumulator::merge(&parts)?.estimate()?;
    let draws: Vec<&[Vec<f64>]> = output.chains.iter().map(|c| c.draws.as_slice()).collect();
    let snapshots = snapshots(problem, &output.layout, &draws)?;
    let ppc = standard_ppc(problem, &snapshots, sampler.seed);
    let fit = FitReport::new(waic, ppp_map(&ppc));
    let outcome = CalibrationOutcome {
        output,
        summary,
        fit,
        ppc,
        elapsed,
    };
    write_outputs(out_dir, loaded, &outcome)?;
    Ok(outcome)
}

fn summarize_output(output: &RunOutput) -> ChainSummary {
    let moments: Vec<&RunningMoments> = output.chains.iter().map(|c| &c.moments).collect();
    let acceptance: Vec<&[f64]> = output.chains.iter().map(|c| c.acceptance.as_slice()).collect();
    let draws: Vec<&[Vec<f64>]> = output.chains.iter().map(|c| c.draws.as_slice()).collect();
    summarize(output.layout.names(), &moments, &acceptance, &draws, false)
}

/// Writes draws, moments, summary, fit report, predictive checks, id
/// maps, manifest and timing. All files except `timing.txt` are
/// byte-identical across reruns with the same inputs and seed.
pub fn write_outputs(dir: &Path, loaded: &LoadedConfig, outcome: &CalibrationOutcome) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layout = &outcome.output.layout;
    let names = layout.names().to_vec();
    for samples in &outcome.output.chains {
        write_csv(
            &dir.join(draws_file(samples.chain)),
            &names,
            samples.draws.iter().map(|row| row.iter().map(|v| fmt_f64(*v)).collect()),
        )?;
        let m = &samples.moments;
        write_csv(
            &dir.join(moments_file(samples.chain)),
            &["parameter", "count", "mean", "m2", "acceptance"].map(String::from),
            names.iter().enumerate().map(|(i, name)| {
                vec![
                    name.clone(),
                    m.count.to_string(),
                    fmt_f64(m.mean[i]),
                    fmt_f64(m.m2[i]),
                    fmt_f64(samples.acceptance[i]),
                ]
            }),
        )?;
    }
    write_summary(&dir.join(SUMMARY), &outcome.summary)?;
    write_fit(&dir.join(FIT), &outcome.fit, None)?;
    write_ppc(&dir.join(PPC), &outcome.ppc)?;
    write_csv(
        &dir.join(IDS),
        &["side", "index", "id"].map(String::from),
        loaded
            .person_ids
            .iter()
            .enumerate()
            .map(|(i, id)| vec!["person".into(), i.to_string(), id.clone()])
            .chain(
                loaded
                    .item_ids
                    .iter()
                    .enumerate()
                    .map(|(i, id)| vec!["item".into(), i.to_string(), id.clone()]),
            ),
    )?;

    let config_path = std::path::absolute(&loaded.path).map_err(|e| Error::io(&loaded.path, e))?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: loaded.config.sampler.seed,
        config_path,
        parameters: names.len(),
        draws_per_chain: loaded.config.sampler.stored_draws(),
        config: loaded.config.clone(),
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::Validation(format!("cannot serialize manifest: {e}")))?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let timing = format!(
        "elapsed_seconds={}\nworkers={}\nchains={}\n",
        outcome.elapsed.as_secs_f64(),
        loaded.config.sampler.workers,
        loaded.config.sampler.chains
    );
    let tpath = dir.join(TIMING);
    std::fs::write(&tpath, timing).map_err(|e| Error::io(&tpath, e))?;
    Ok(path)
}

fn write_summary(path: &Path, summary: &ChainSummary) -> Result<()> {
    write_csv(
        path,
        &["parameter", "mean", "sd", "acceptance", "rhat"].map(String::from),
        summary.parameters.iter().map(|p| {
            vec![
                p.name.clone(),
                fmt_f64(p.mean),
                fmt_f64(p.sd),
                fmt_f64(p.acceptance),
                p.rhat.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )
}

/// `key=value` lines: `elpd`, `p_waic`, `waic`, optionally `waic_draws`,
/// then `ppp.{statistic}` per defined p-value.
fn write_fit(path: &Path, fit: &FitReport, waic_draws: Option<usize>) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "elpd={}", fmt_f64(fit.elpd));
    let _ = writeln!(text, "p_waic={}", fmt_f64(fit.p_waic));
    let _ = writeln!(text, "waic={}", fmt_f64(fit.waic));
    if let Some(n) = waic_draws {
        let _ = writeln!(text, "waic_draws={n}");
    }
    for (label, p) in &fit.ppp {
        let _ = writeln!(text, "ppp.{label}={}", fmt_f64(*p));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a fit report written by this module.
pub fn read_fit(path: &Path) -> Result<FitReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut fields = HashMap::new();
    let mut ppp = std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("{}: bad line {line:?}", path.display())))?;
        let v = parse_f64(value, path)?;
        match key.strip_prefix("ppp.") {
            Some(label) => {
                ppp.insert(label.to_string(), v);
            }
            None => {
                fields.insert(key.to_string(), v);
            }
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Validation(format!("{}: missing {k}", path.display())))
    };
    Ok(FitReport {
        elpd: get("elpd")?,
        p_waic: get("p_waic")?,
        waic: get("waic")?,
        ppp,
    })
}

fn write_ppc(path: &Path, ppc: &[PpcResult]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    write_csv(
        path,
        &["statistic", "observed", "ppp", "used", "skipped"].map(String::from),
        ppc.iter().map(|r| {
            vec![
                r.label.clone(),
                opt(r.observed),
                opt(r.ppp),
                r.used.to_string(),
                r.skipped.to_string(),
            ]
        }),
    )
}

/// Rebuilds unit latents for every stored draw, chains in order.
fn snapshots(problem: &Problem, layout: &ParameterLayout, draws: &[&[Vec<f64>]]) -> Result<Vec<Snapshot>> {
    draws
        .iter()
        .flat_map(|chain| chain.iter())
        .map(|row| layout.snapshot(problem, row))
        .collect()
}

/// The built-in checks: item mean scores, item mean scores among the lowest
/// quarter of persons (by mean response within each data set, and by
/// ability under each draw), person raw-score quantiles and up to 50
/// item-pair log odds ratios.
pub fn standard_ppc(problem: &Problem, snapshots: &[Snapshot], seed: u64) -> Vec<PpcResult> {
    let pairs = ItemPairOddsRatio::sampled(problem, 50, 20);
    let stats: [&dyn TestStatistic; 5] = [
        &ItemMeanScore,
        &LowScoreItemMean::default(),
        &LowAbilityItemMean::default(),
        &PersonScoreQuantiles::default(),
        &pairs,
    ];
    posterior_predictive_check(problem, snapshots, &stats, seed)
}

/// Reads a manifest from a run directory.
pub fn read_manifest(run_dir: &Path) -> Result<Manifest> {
    let path = run_dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Draw rows of one chain, checked against the expected column names.
pub fn read_draws(path: &Path, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_csv(path)?;
    if header != names {
        return Err(Error::Validation(format!(
            "{}: columns do not match the parameters of the configuration",
            path.display()
        )));
    }
    rows.iter()
        .map(|row| row.iter().map(|s| parse_f64(s, path)).collect())
        .collect()
}

fn read_moments(path: &Path, names: &[String]) -> Result<(RunningMoments, Vec<f64>)> {
    let (_, rows) = read_csv(path)?;
    if rows.len() != names.len() || rows.iter().zip(names).any(|(r, n)| r.first() != Some(n)) {
        return Err(Error::Validation(format!(
            "{}: rows do not match the parameters of the configuration",
            path.display()
        )));
    }
    let mut m = RunningMoments::new(names.len());
    let mut acceptance = Vec::with_capacity(names.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 5 {
            return Err(Error::Validation(format!("{}: row {} has {} fields", path.display(), i + 1, row.len())));
        }
        m.count = row[1]
            .parse()
            .map_err(|_| Error::Validation(format!("{}: bad count {:?}", path.display(), row[1])))?;
        m.mean[i] = parse_f64(&row[2], path)?;
        m.m2[i] = parse_f64(&row[3], path)?;
        acceptance.push(parse_f64(&row[4], path)?);
    }
    Ok((m, acceptance))
}

/// Recomputes the summary, WAIC and predictive checks of a finished run
/// from its stored files and writes them under `run_dir/diagnose`.
///
/// The summary is identical to the one written by the run. WAIC here is
/// estimated from the stored (thinned) draws only.
pub fn diagnose(run_dir: &Path) -> Result<DiagnoseOutcome> {
    let manifest = read_manifest(run_dir)?;
    let loaded = resolve(manifest.config.clone(), &manifest.config_path)?;
    let problem = &loaded.problem;
    let layout = ParameterLayout::new(problem);
    let names = layout.names();
    let chains = manifest.config.sampler.chains;
    let mut draws = Vec::with_capacity(chains);
    let mut moments = Vec::with_capacity(chains);
    let mut acceptance = Vec::with_capacity(chains);
    for c in 0..chains {
        draws.push(read_draws(&run_dir.join(draws_file(c)), names)?);
        let (m, a) = read_moments(&run_dir.join(moments_file(c)), names)?;
        moments.push(m);
        acceptance.push(a);
    }
    let moment_refs: Vec<&RunningMoments> = moments.iter().collect();
    let acc_refs: Vec<&[f64]> = acceptance.iter().map(Vec::as_slice).collect();
    let draw_refs: Vec<&[Vec<f64>]> = draws.iter().map(Vec::as_slice).collect();
    let summary = summarize(names, &moment_refs, &acc_refs, &draw_refs, false);

    let snaps = snapshots(problem, &layout, &draw_refs)?;
    let mut acc = PointwiseAccumulator::new(problem.responses.len());
    for s in &snaps {
        acc.push(&s.pointwise_loglik(problem));
    }
    let waic: WaicEstimate = acc.estimate()?;
    let ppc = standard_ppc(problem, &snaps, manifest.seed);
    let fit = FitReport::new(waic, ppp_map(&ppc));

    let out = run_dir.join(DIAGNOSE_DIR);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_summary(&out.join(SUMMARY), &summary)?;
    write_fit(&out.join(FIT), &fit, Some(snaps.len()))?;
    write_ppc(&out.join(PPC), &ppc)?;
    Ok(DiagnoseOutcome { summary, fit, ppc })
}

/// Writes a generated data set as calibration inputs:
/// `responses.csv`, one feature file per block with features,
/// `truth.csv` and a ready-to-run `calibrate.toml`.
///
/// Persons are named `p{i}` and items `i{j}`. Truth parameter names use
/// the indices the calibration will assign (order of first appearance in
/// `responses.csv`); items that received no responses are left out.
pub fn write_simulation(dir: &Path, spec: &SimSpec, generated: &Generated) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let weighted = spec.weights != WeightScheme::Unit;
    let person_col = spec.person_blocks.len() > 1;
    let item_col = spec.item_blocks.len() > 1;
    let person_block_id = |i: usize| spec.person_blocks[generated.persons[i].block].id;
    let item_block_id = |j: usize| spec.item_blocks[generated.items[j].block].id;

    let mut header: Vec<String> = ["person_id", "item_id", "response"].map(String::from).to_vec();
    if weighted {
        header.push("weight".into());
    }
    if person_col {
        header.push("person_block".into());
    }
    if item_col {
        header.push("item_block".into());
    }
    write_csv(
        &dir.join("responses.csv"),
        &header,
        generated.responses.iter().map(|r| {
            let mut row = vec![format!("p{}", r.person), format!("i{}", r.item), fmt_f64(r.value)];
            if weighted {
                row.push(fmt_f64(generated.persons[r.person].weight));
            }
            if person_col {
                row.push(person_block_id(r.person).to_string());
            }
            if item_col {
                row.push(item_block_id(r.item).to_string());
            }
            row
        }),
    )?;

    let mut person_new: HashMap<usize, usize> = HashMap::new();
    let mut item_new: HashMap<usize, usize> = HashMap::new();
    for r in &generated.responses {
        let n = person_new.len();
        person_new.entry(r.person).or_insert(n);
        let n = item_new.len();
        item_new.entry(r.item).or_insert(n);
    }

    let mut blocks = Vec::new();
    for (side, sims, specs, units, present, prefix) in [
        ("person", &spec.person_blocks, &generated.person_blocks, &generated.persons, &person_new, "p"),
        ("item", &spec.item_blocks, &generated.item_blocks, &generated.items, &item_new, "i"),
    ] {
        let mut configs = Vec::new();
        for (sim, block) in sims.iter().zip(specs) {
            let skip = sim.intercept as usize;
            let features = if block.feature_count > skip {
                let file = format!("{side}_block{}_features.csv", block.id);
                let mut header = vec!["id".to_string()];
                header.extend((skip..block.feature_count).map(|c| format!("x{}", c + 1 - skip)));
                write_csv(
                    &dir.join(&file),
                    &header,
                    block
                        .units
                        .iter()
                        .filter(|u| present.contains_key(u))
                        .map(|&u| {
                            let mut row = vec![format!("{prefix}{u}")];
                            row.extend(units[u].features[skip..].iter().map(|v| fmt_f64(*v)));
                            row
                        }),
                )?;
                Some(PathBuf::from(file))
            } else {
                None
            };
            let mut fixed = FixedRegression::default();
            if sim.fixed {
                let (_, truth) = generated
                    .regressions
                    .iter()
                    .find(|(id, _)| *id == block.id)
                    .expect("regression of every block");
                for c in 0..truth.k() {
                    for r in 0..truth.p() {
                        fixed.b.push(FixedEntry { row: r, col: c, value: truth.b[(r, c)] });
                    }
                    fixed.s.push(FixedSd { dim: c, value: truth.s[c] });
                }
                if truth.k() > 1 {
                    let corr = truth.correlation();
                    fixed.r = Some(corr.row_iter().map(|row| row.iter().copied().collect()).collect());
                }
            }
            configs.push(BlockConfig {
                id: block.id,
                dim: sim.dim,
                family: sim.family,
                trait_dim: sim.trait_dim,
                members: None,
                roster: None,
                features,
                intercept: sim.intercept,
                prior: PriorConfig::default(),
                fixed,
            });
        }
        blocks.push(configs);
    }
    let item_blocks = blocks.pop().expect("item blocks");
    let person_blocks = blocks.pop().expect("person blocks");

    let config = CalibrationConfig {
        output: PathBuf::from("output"),
        sampler: Default::default(),
        data: DataConfig {
            responses: PathBuf::from("responses.csv"),
            person_block_column: person_col.then(|| "person_block".to_string()),
            item_block_column: item_col.then(|| "item_block".to_string()),
        },
        person_blocks,
        item_blocks,
        fixed_units: Vec::new(),
    };
    let path = dir.join("calibrate.toml");
    std::fs::write(&path, config.to_toml()?).map_err(|e| Error::io(&path, e))?;

    let rename = |name: &str| -> Option<String> {
        let (head, rest) = name.split_once('.')?;
        if let Some(i) = head.strip_prefix("person").and_then(|s| s.parse::<usize>().ok()) {
            return person_new.get(&i).map(|n| format!("person{n}.{rest}"));
        }
        if let Some(j) = head.strip_prefix("item").and_then(|s| s.parse::<usize>().ok()) {
            return item_new.get(&j).map(|n| format!("item{n}.{rest}"));
        }
        Some(name.to_string())
    };
    write_csv(
        &dir.join("truth.csv"),
        &["parameter", "value"].map(String::from),
        generated
            .truth
            .iter()
            .filter_map(|(name, v)| rename(name).map(|n| vec![n, fmt_f64(*v)])),
    )
}

/// Reads a `parameter,value` truth table.
pub fn read_truth(path: &Path) -> Result<Vec<(String, f64)>> {
    let (_, rows) = read_csv(path)?;
    rows.iter()
        .map(|r| match r.as_slice() {
            [name, value] => Ok((name.clone(), parse_f64(value, path)?)),
            _ => Err(Error::Validation(format!("{}: expected two fields", path.display()))),
        })
        .collect()
}
