use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ResponseRecord, Side};
use crate::regression::first_dependent_column;
use crate::sampler::normalize_weights;

const PERSON: &str = "person_id";
const ITEM: &str = "item_id";
const RESPONSE: &str = "response";
const WEIGHT: &str = "weight";

/// Contents of a response file with string ids re-indexed densely in order
/// of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponses {
    pub records: Vec<ResponseRecord>,
    pub person_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Normalized person weights (all 1 without a weight column).
    pub person_weights: Vec<f64>,
    /// Remaining columns by name, one value per data row.
    pub extra: Vec<(String, Vec<String>)>,
}

impl ParsedResponses {
    /// Per-unit value of an extra column; every row of a unit must agree.
    pub fn unit_column(&self, side: Side, column: &str) -> Result<Vec<String>> {
        let values = self
            .extra
            .iter()
            .find(|(name, _)| name == column)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Validation(format!("response file has no column {column}")))?;
        let n = match side {
            Side::Person => self.person_ids.len(),
            Side::Item => self.item_ids.len(),
        };
        let mut out: Vec<Option<String>> = vec![None; n];
        for (row, (r, v)) in self.records.iter().zip(values).enumerate() {
            let u = match side {
                Side::Person => r.person,
                Side::Item => r.item,
            };
            match &out[u] {
                Some(prev) if prev != v => {
                    return Err(Error::Validation(format!(
                        "row {}: {column} = {v} contradicts earlier value {prev}",
                        row + 1
                    )))
                }
                _ => out[u] = Some(v.clone()),
            }
        }
        Ok(out.into_iter().map(|v| v.unwrap_or_default()).collect())
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::Validation(format!("{}: {e}", path.display())),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        Error::Validation(format!("{}: missing column {name}", path.display()))
    })
}

/// Reads `person_id,item_id,response[,weight]`. Rows are numbered from 1
/// after the header in error messages.
pub fn parse_responses(path: &Path) -> Result<ParsedResponses> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let pc = column(&headers, PERSON, path)?;
    let ic = column(&headers, ITEM, path)?;
    let rc = column(&headers, RESPONSE, path)?;
    let wc = headers.iter().position(|h| h == WEIGHT);
    let extra_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != pc && c != ic && c != rc && Some(c) != wc)
        .collect();

    let mut person_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut person_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut raw_weights: Vec<Option<f64>> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut records = Vec::new();
    let mut extra: Vec<(String, Vec<String>)> =
        extra_cols.iter().map(|&c| (headers[c].to_string(), Vec::new())).collect();

    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |msg: String| Error::Validation(format!("{}: row {row}: {msg}", path.display()));
        let field = |c: usize| rec.get(c).unwrap_or("");
        let intern = |id: &str, index: &mut HashMap<String, usize>, ids: &mut Vec<String>| {
            *index.entry(id.to_string()).or_insert_with(|| {
                ids.push(id.to_string());
                ids.len() - 1
            })
        };
        let (pid, iid) = (field(pc), field(ic));
        if pid.is_empty() || iid.is_empty() {
            return Err(bad("empty person or item id".into()));
        }
        let person = intern(pid, &mut person_index, &mut person_ids);
        let item = intern(iid, &mut item_index, &mut item_ids);
        let value: f64 = field(rc)
            .parse()
            .map_err(|_| bad(format!("response {:?} is not numeric", field(rc))))?;
        if !value.is_finite() {
            return Err(bad(format!("response {value} is not finite")));
        }
        if let Some(first) = seen.insert((person, item), row) {
            return Err(bad(format!("duplicate response of {pid} to {iid} (first at row {first})")));
        }
        if let Some(wc) = wc {
            let w: f64 = field(wc)
                .parse()
                .map_err(|_| bad(format!("weight {:?} is not numeric", field(wc))))?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(bad(format!("weight {w} must be finite and non-negative")));
            }
            if person == raw_weights.len() {
                raw_weights.push(Some(w));
            } else if raw_weights[person] != Some(w) {
                return Err(bad(format!("weight {w} differs from the earlier weight of {pid}")));
            }
        } else if person == raw_weights.len() {
            raw_weights.push(Some(1.0));
        }
        for ((_, values), &c) in extra.iter_mut().zip(&extra_cols) {
            values.push(field(c).to_string());
        }
        records.push(ResponseRecord::new(person, item, value));
    }
    if records.is_empty() {
        return Err(Error::Validation(format!("{}: no responses", path.display())));
    }
    let raw: Vec<f64> = raw_weights.into_iter().map(|w| w.unwrap_or(1.0)).collect();
    let person_weights =
        normalize_weights(&raw).map_err(|e| e.context(path.display()))?;
    Ok(ParsedResponses {
        records,
        person_ids,
        item_ids,
        person_weights,
        extra,
    })
}

/// Ids listed in column `id` of a roster file.
pub fn read_roster(path: &Path) -> Result<Vec<String>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let c = column(&headers, "id", path)?;
    let mut ids = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        ids.push(rec.get(c).unwrap_or("").to_string());
    }
    Ok(ids)
}

/// Builds the feature matrix of a block in the order of `unit_ids`.
///
/// The file has an `id` column and one column per feature, with exactly
/// one row per unit of the block. With `intercept` a leading column of
/// ones is added. Without a file the block is intercept-only. Returns the
/// matrix and its column names.
pub fn parse_features(
    path: Option<&Path>,
    unit_ids: &[String],
    intercept: bool,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let Some(path) = path else {
        return Ok((DMatrix::from_element(unit_ids.len(), 1, 1.0), vec!["intercept".into()]));
    };
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let idc = column(&headers, "id", path)?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != idc).collect();
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |msg: String| Error::Validation(format!("{}: row {row}: {msg}", path.display()));
        let id = rec.get(idc).unwrap_or("").to_string();
        let values = feature_cols
            .iter()
            .map(|&c| {
                let s = rec.get(c).unwrap_or("");
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("feature {} = {s:?} is not a finite number", &headers[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.insert(id.clone(), values).is_some() {
            return Err(bad(format!("unit {id} appears twice")));
        }
    }
    if rows.len() != unit_ids.len() {
        return Err(Error::Validation(format!(
            "{}: {} feature rows for {} units in the block",
            path.display(),
            rows.len(),
            unit_ids.len()
        )));
    }
    let mut names: Vec<String> = Vec::new();
    if intercept {
        names.push("intercept".into());
    }
    names.extend(feature_cols.iter().map(|&c| headers[c].to_string()));
    let p = names.len();
    let offset = intercept as usize;
    let mut x0 = DMatrix::from_element(unit_ids.len(), p, 1.0);
    for (r, id) in unit_ids.iter().enumerate() {
        let values = rows.get(id).ok_or_else(|| {
            Error::Validation(format!("{}: no feature row for unit {id}", path.display()))
        })?;
        for (c, v) in values.iter().enumerate() {
            x0[(r, c + offset)] = *v;
        }
    }
    if p == 0 {
        return Err(Error::Validation(format!("{}: no feature columns", path.display())));
    }
    if let Some(col) = first_dependent_column(&(x0.transpose() * &x0)) {
        return Err(Error::Validation(format!(
            "{}: feature matrix is rank deficient: column {} is linearly dependent on earlier columns",
            path.display(),
            names[col]
        )));
    }
    Ok((x0, names))
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a whole CSV file as a header and string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Validation(format!("{}: {s:?} is not a number", path.display())))
}
