use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

/// One unit of the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Zero-based index of the data row in the source file.
    pub row: usize,
    pub y: f64,
    pub x1: f64,
    pub x2: Option<f64>,
    pub cutoff: Option<f64>,
    pub treat: Option<bool>,
    pub weight: Option<f64>,
}

impl Observation {
    pub fn new(y: f64, x1: f64) -> Self {
        Observation {
            row: 0,
            y,
            x1,
            x2: None,
            cutoff: None,
            treat: None,
            weight: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Disjoint groups, each facing one cutoff.
    MultiCutoff,
    /// One score, an ordered sequence of cutoffs.
    Cumulative,
    /// Two scores and a treatment region.
    Bivariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffGroup {
    pub value: f64,
    pub count: usize,
}

/// Validated sample. `cutoffs` is populated for multi-cutoff designs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DesignKind,
    pub observations: Vec<Observation>,
    pub cutoffs: Vec<CutoffGroup>,
}

pub type MultiCutoffDataset = Dataset;

/// Column names for each field. Optional fields are read only when mapped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub y: String,
    pub x: String,
    pub x2: Option<String>,
    pub cutoff: Option<String>,
    pub treat: Option<String>,
    pub weight: Option<String>,
}

impl ColumnMap {
    pub fn new(y: impl Into<String>, x: impl Into<String>) -> Self {
        ColumnMap {
            y: y.into(),
            x: x.into(),
            x2: None,
            cutoff: None,
            treat: None,
            weight: None,
        }
    }

    pub fn with_cutoff(mut self, c: impl Into<String>) -> Self {
        self.cutoff = Some(c.into());
        self
    }

    pub fn with_x2(mut self, x2: impl Into<String>) -> Self {
        self.x2 = Some(x2.into());
        self
    }

    pub fn with_treat(mut self, t: impl Into<String>) -> Self {
        self.treat = Some(t.into());
        self
    }

    pub fn with_weight(mut self, w: impl Into<String>) -> Self {
        self.weight = Some(w.into());
        self
    }
}

/// What happened during ingestion besides the data itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    /// Observations whose score repeats an earlier one.
    pub repeated_scores: usize,
}

impl LoadReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rows_dropped > 0 {
            out.push(format!("{} rows with missing values dropped", self.rows_dropped));
        }
        if self.repeated_scores > 0 {
            out.push(format!(
                "mass points: {} observations repeat an existing score value; no adjustment applied",
                self.repeated_scores
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub report: LoadReport,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "." | "NA" | "na" | "NaN" | "nan")
}

enum Cell {
    Missing,
    Value(f64),
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<Cell> {
    if is_missing(cell) {
        return Ok(Cell::Missing);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Cell::Value(v)),
        _ => Err(RdError::Parse {
            row,
            column: column.into(),
            value: cell.into(),
        }),
    }
}

fn parse_binary(cell: &str, row: usize, column: &str) -> Result<Option<bool>> {
    if is_missing(cell) {
        return Ok(None);
    }
    match cell {
        "1" | "1.0" | "true" | "TRUE" => Ok(Some(true)),
        "0" | "0.0" | "false" | "FALSE" => Ok(Some(false)),
        _ => Err(RdError::Parse {
            row,
            column: column.into(),
            value: cell.into(),
        }),
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| RdError::MissingColumn(name.into()))
}

impl Dataset {
    /// Builds a dataset and, for multi-cutoff designs, the cutoff groups.
    pub fn new(kind: DesignKind, observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(RdError::EmptyDataset);
        }
        for o in &observations {
            if !o.y.is_finite() || !o.x1.is_finite() || o.x2.is_some_and(|v| !v.is_finite()) {
                return Err(RdError::Invalid(format!("non-finite value in row {}", o.row + 1)));
            }
            if o.weight.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
                return Err(RdError::Invalid(format!("negative weight in row {}", o.row + 1)));
            }
        }
        let mut cutoffs = Vec::new();
        match kind {
            DesignKind::MultiCutoff => {
                let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
                for o in &observations {
                    let c = o.cutoff.ok_or_else(|| {
                        RdError::Invalid(format!("row {} has no cutoff in a multi-cutoff design", o.row + 1))
                    })?;
                    // exact equality: key on the bit pattern of the parsed value
                    let key = if c == 0.0 { 0.0f64.to_bits() } else { c.to_bits() };
                    counts.entry(key).or_insert((c, 0)).1 += 1;
                }
                let mut groups: Vec<CutoffGroup> = counts
                    .into_values()
                    .map(|(value, count)| CutoffGroup { value, count })
                    .collect();
                groups.sort_by(|a, b| a.value.total_cmp(&b.value));
                cutoffs = groups;
            }
            DesignKind::Bivariate => {
                if observations.iter().any(|o| o.x2.is_none() || o.treat.is_none()) {
                    return Err(RdError::Invalid(
                        "bivariate design needs a second score and a treatment indicator".into(),
                    ));
                }
            }
            DesignKind::Cumulative => {}
        }
        Ok(Dataset {
            kind,
            observations,
            cutoffs,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn cutoff_values(&self) -> Vec<f64> {
        self.cutoffs.iter().map(|g| g.value).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    pub fn x1s(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.x1).collect()
    }

    pub fn x2s(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.x2.unwrap_or(f64::NAN)).collect()
    }

    pub fn treats(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.treat.unwrap_or(false)).collect()
    }

    /// Sampling weights, or `None` when no observation carries one.
    pub fn weights(&self) -> Option<Vec<f64>> {
        if self.observations.iter().all(|o| o.weight.is_none()) {
            None
        } else {
            Some(self.observations.iter().map(|o| o.weight.unwrap_or(1.0)).collect())
        }
    }

    /// Indices of the observations facing cutoff `c`.
    pub fn group_indices(&self, c: f64) -> Vec<usize> {
        self.observations
            .iter()
            .enumerate()
            .filter(|(_, o)| o.cutoff == Some(c))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Vec<Observation> {
        idx.iter().map(|&i| self.observations[i].clone()).collect()
    }

    pub fn repeated_scores(&self) -> usize {
        let mut seen = HashSet::with_capacity(self.observations.len());
        self.observations
            .iter()
            .filter(|o| !seen.insert(o.x1.to_bits()))
            .count()
    }
}

/// Parses delimited text with a header row.
pub fn read_dataset<R: Read>(reader: R, schema: &ColumnMap, kind: DesignKind) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| RdError::Csv(e.to_string()))?.clone();

    if kind == DesignKind::MultiCutoff && schema.cutoff.is_none() {
        return Err(RdError::MissingColumn("cutoff (required for a multi-cutoff design)".into()));
    }
    if kind == DesignKind::Bivariate && (schema.x2.is_none() || schema.treat.is_none()) {
        return Err(RdError::Invalid(
            "bivariate design needs both a second score and a treatment column".into(),
        ));
    }
    let iy = column_index(&headers, &schema.y)?;
    let ix = column_index(&headers, &schema.x)?;
    let ix2 = schema.x2.as_deref().map(|n| column_index(&headers, n)).transpose()?;
    let ic = schema.cutoff.as_deref().map(|n| column_index(&headers, n)).transpose()?;
    let it = schema.treat.as_deref().map(|n| column_index(&headers, n)).transpose()?;
    let iw = schema.weight.as_deref().map(|n| column_index(&headers, n)).transpose()?;

    let mut report = LoadReport::default();
    let mut observations = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| RdError::Csv(e.to_string()))?;
        report.rows_read += 1;
        let line = row + 1;
        let get = |i: usize| record.get(i).unwrap_or("");
        let real = |i: usize, name: &str| parse_real(get(i), line, name);
        let opt_real = |i: Option<usize>, name: &Option<String>| -> Result<Option<Cell>> {
            match i {
                Some(i) => real(i, name.as_deref().unwrap_or_default()).map(Some),
                None => Ok(None),
            }
        };

        let y = real(iy, &schema.y)?;
        let x = real(ix, &schema.x)?;
        let x2 = opt_real(ix2, &schema.x2)?;
        let c = opt_real(ic, &schema.cutoff)?;
        let w = opt_real(iw, &schema.weight)?;
        let t = match it {
            Some(i) => Some(parse_binary(get(i), line, schema.treat.as_deref().unwrap_or_default())?),
            None => None,
        };

        let value = |cell: Option<Cell>| -> Option<Option<f64>> {
            match cell {
                None => Some(None),
                Some(Cell::Missing) => None,
                Some(Cell::Value(v)) => Some(Some(v)),
            }
        };
        let (Cell::Value(y), Cell::Value(x)) = (y, x) else {
            report.rows_dropped += 1;
            continue;
        };
        let (Some(x2), Some(c), Some(w)) = (value(x2), value(c), value(w)) else {
            report.rows_dropped += 1;
            continue;
        };
        let treat = match t {
            None => None,
            Some(None) => {
                report.rows_dropped += 1;
                continue;
            }
            Some(Some(b)) => Some(b),
        };
        if let Some(wv) = w {
            if wv < 0.0 {
                return Err(RdError::Invalid(format!("negative weight at row {line}")));
            }
        }
        observations.push(Observation {
            row,
            y,
            x1: x,
            x2,
            cutoff: c,
            treat,
            weight: w,
        });
    }
    let dataset = Dataset::new(kind, observations)?;
    report.repeated_scores = dataset.repeated_scores();
    Ok(LoadedData { dataset, report })
}

pub fn load_dataset(path: &Path, schema: &ColumnMap, kind: DesignKind) -> Result<LoadedData> {
    let file = std::fs::File::open(path).map_err(|source| RdError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, schema, kind)
}

/// Non-missing values of one column, in row order. Used where a column
/// lists cutoffs rather than per-unit data.
pub fn read_column_values<R: Read>(reader: R, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| RdError::Csv(e.to_string()))?.clone();
    let idx = column_index(&headers, column)?;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| RdError::Csv(e.to_string()))?;
        if let Cell::Value(v) = parse_real(record.get(idx).unwrap_or(""), row + 1, column)? {
            out.push(v);
        }
    }
    Ok(out)
}

/// Every value of one column by data row, `None` where missing.
pub fn read_column_by_row<R: Read>(reader: R, column: &str) -> Result<Vec<Option<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| RdError::Csv(e.to_string()))?.clone();
    let idx = column_index(&headers, column)?;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| RdError::Csv(e.to_string()))?;
        out.push(match parse_real(record.get(idx).unwrap_or(""), row + 1, column)? {
            Cell::Value(v) => Some(v),
            Cell::Missing => None,
        });
    }
    Ok(out)
}

/// Writes the mapped columns back in the same delimited format.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset, schema: &ColumnMap) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| RdError::Csv(e.to_string());
    let mut header = vec![schema.y.clone(), schema.x.clone()];
    let optional = [&schema.x2, &schema.cutoff, &schema.treat, &schema.weight];
    header.extend(optional.iter().filter_map(|c| (*c).clone()));
    wtr.write_record(&header).map_err(csv_err)?;
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for o in &dataset.observations {
        let mut rec = vec![o.y.to_string(), o.x1.to_string()];
        if schema.x2.is_some() {
            rec.push(fmt(o.x2));
        }
        if schema.cutoff.is_some() {
            rec.push(fmt(o.cutoff));
        }
        if schema.treat.is_some() {
            rec.push(o.treat.map(|t| if t { "1" } else { "0" }.to_string()).unwrap_or_default());
        }
        if schema.weight.is_some() {
            rec.push(fmt(o.weight));
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| RdError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ColumnMap {
        ColumnMap::new("y", "x").with_cutoff("c")
    }

    #[test]
    fn two_cutoffs() {
        let mut text = String::from("y,x,c\n");
        for i in 0..1000 {
            let c = if i % 2 == 0 { 33 } else { 66 };
            text.push_str(&format!("{},{},{}\n", i as f64 * 0.1, i as f64 / 10.0, c));
        }
        let loaded = read_dataset(text.as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap();
        assert_eq!(loaded.dataset.cutoff_values(), vec![33.0, 66.0]);
        assert_eq!(loaded.dataset.cutoffs.iter().map(|g| g.count).sum::<usize>(), 1000);
    }

    #[test]
    fn constant_cutoff_column() {
        let text = "y,x,c\n1,0.5,0\n2,-0.5,0\n3,1.5,0\n";
        let loaded = read_dataset(text.as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap();
        assert_eq!(loaded.dataset.cutoff_values(), vec![0.0]);
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let mut text = String::from("y,x,c\n");
        for i in 0..10 {
            if i == 6 {
                text.push_str("1,abc,0\n");
            } else {
                text.push_str(&format!("{i},{i},0\n"));
            }
        }
        let err = read_dataset(text.as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap_err();
        match err {
            RdError::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (7, "x", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_values_dropped_and_counted() {
        let text = "y,x,c\n1,2,0\n,3,0\nNA,4,0\n5,6,\n7,8,0\n";
        let loaded = read_dataset(text.as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap();
        assert_eq!(loaded.dataset.len(), 2);
        assert_eq!(loaded.report.rows_dropped, 3);
        assert_eq!(loaded.dataset.observations[1].row, 4);
    }

    #[test]
    fn errors() {
        let err = read_dataset("y,x\n1,2\n".as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap_err();
        assert!(matches!(err, RdError::MissingColumn(ref c) if c == "c"));
        let err = read_dataset("y,x,c\n,,\n".as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap_err();
        assert!(matches!(err, RdError::EmptyDataset));
        let err = read_dataset("y,x\n1,2\n".as_bytes(), &ColumnMap::new("y", "x"), DesignKind::MultiCutoff)
            .unwrap_err();
        assert!(matches!(err, RdError::MissingColumn(_)));
    }

    #[test]
    fn mass_points_reported() {
        let text = "y,x,c\n1,2,0\n2,2,0\n3,2,0\n4,5,0\n";
        let loaded = read_dataset(text.as_bytes(), &schema(), DesignKind::MultiCutoff).unwrap();
        assert_eq!(loaded.report.repeated_scores, 2);
        assert!(loaded.report.warnings().iter().any(|w| w.contains("mass points")));
    }

    #[test]
    fn bivariate_requires_treatment() {
        let s = ColumnMap::new("y", "x1").with_x2("x2");
        assert!(read_dataset("y,x1,x2\n1,2,3\n".as_bytes(), &s, DesignKind::Bivariate).is_err());
        let s = s.with_treat("t");
        let loaded = read_dataset("y,x1,x2,t\n1,2,3,1\n".as_bytes(), &s, DesignKind::Bivariate).unwrap();
        assert_eq!(loaded.dataset.observations[0].treat, Some(true));
        assert!(read_dataset("y,x1,x2,t\n1,2,3,2\n".as_bytes(), &s, DesignKind::Bivariate).is_err());
    }
}
