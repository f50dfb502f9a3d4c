//! Audit records, datasets, CSV ingestion and summaries.
//!
//! A dataset holds one row per scored individual: the observed outcome, the
//! binary prediction (or the score it was dichotomized from), the probability
//! of membership in each declared group, and optionally the true group label.
//! Datasets are immutable once built and are shared read-only by the
//! estimators and the parallel drivers.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on the row sum of an exhaustive probability vector.
pub const EXHAUSTIVE_SUM_TOL: f64 = 1e-6;

/// Threshold used to dichotomize scores when none is given.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub y: bool,
    pub y_hat: bool,
    pub score: Option<f64>,
    /// Aligned with [`AuditDataset::group_ids`].
    pub group_probs: Vec<f64>,
    pub true_group: Option<String>,
}

impl AuditRecord {
    pub fn new(y: bool, y_hat: bool, group_probs: Vec<f64>) -> Self {
        Self {
            y,
            y_hat,
            score: None,
            group_probs,
            true_group: None,
        }
    }

    /// Builds a record from a score, with `y_hat = score > threshold`.
    pub fn from_score(y: bool, score: f64, threshold: f64, group_probs: Vec<f64>) -> Self {
        Self {
            y,
            y_hat: score > threshold,
            score: Some(score),
            group_probs,
            true_group: None,
        }
    }

    pub fn with_true_group(mut self, group: impl Into<String>) -> Self {
        self.true_group = Some(group.into());
        self
    }
}

/// Dichotomizes a score: `1` iff `score > threshold`.
pub fn dichotomize(score: f64, threshold: f64) -> bool {
    score > threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditDataset {
    records: Vec<AuditRecord>,
    group_ids: Vec<String>,
    exhaustive: bool,
}

impl AuditDataset {
    /// Validates and wraps `records`.
    ///
    /// When `exhaustive` is set every probability vector must sum to one
    /// within [`EXHAUSTIVE_SUM_TOL`]; otherwise each group is treated on its
    /// own and the vector may sum to anything in `[0, k]`.
    pub fn new(group_ids: Vec<String>, records: Vec<AuditRecord>, exhaustive: bool) -> Result<Self> {
        if group_ids.is_empty() {
            return Err(Error::InvalidDataset("no group probability columns declared".into()));
        }
        if records.is_empty() {
            return Err(Error::InvalidDataset("dataset has no records".into()));
        }
        let mut seen = HashMap::new();
        for (i, g) in group_ids.iter().enumerate() {
            if seen.insert(g.as_str(), i).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate group id `{g}`")));
            }
        }
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            if r.group_probs.len() != group_ids.len() {
                return Err(Error::Validation {
                    row,
                    message: format!(
                        "expected {} group probabilities, found {}",
                        group_ids.len(),
                        r.group_probs.len()
                    ),
                });
            }
            for (g, &p) in group_ids.iter().zip(&r.group_probs) {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation {
                        row,
                        message: format!("probability for group `{g}` is {p}, outside [0, 1]"),
                    });
                }
            }
            if let Some(s) = r.score {
                if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                    return Err(Error::Validation {
                        row,
                        message: format!("score {s} outside [0, 1]"),
                    });
                }
            }
            if exhaustive {
                let total: f64 = r.group_probs.iter().sum();
                if (total - 1.0).abs() > EXHAUSTIVE_SUM_TOL {
                    return Err(Error::Validation {
                        row,
                        message: format!("group probabilities sum to {total}, expected 1"),
                    });
                }
            }
        }
        Ok(Self {
            records,
            group_ids,
            exhaustive,
        })
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn group_ids(&self) -> &[String] {
        &self.group_ids
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn group_index(&self, group: &str) -> Result<usize> {
        self.group_ids
            .iter()
            .position(|g| g == group)
            .ok_or_else(|| Error::UnknownGroup(group.to_string()))
    }

    /// True when every record carries a true group label.
    pub fn has_labels(&self) -> bool {
        self.records.iter().all(|r| r.true_group.is_some())
    }

    /// Per-group true counts `n_a`, or `None` without labels.
    pub fn group_counts(&self) -> Option<Vec<usize>> {
        if !self.has_labels() {
            return None;
        }
        let mut counts = vec![0usize; self.group_ids.len()];
        for r in &self.records {
            let label = r.true_group.as_deref().unwrap_or_default();
            if let Some(i) = self.group_ids.iter().position(|g| g == label) {
                counts[i] += 1;
            }
        }
        Some(counts)
    }

    /// A copy with records reordered by `order` (a permutation of `0..n`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            records: order.iter().map(|&i| self.records[i].clone()).collect(),
            group_ids: self.group_ids.clone(),
            exhaustive: self.exhaustive,
        }
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvSchema {
    pub outcome: String,
    pub prediction: Option<String>,
    pub score: Option<String>,
    /// `(group id, column name)` pairs, in output order.
    pub prob_columns: Vec<(String, String)>,
    pub true_group: Option<String>,
    pub exhaustive: bool,
}

impl CsvSchema {
    /// Infers the canonical layout `y, y_hat|score, prob_<group>..., true_group?`
    /// from a header row.
    pub fn canonical(headers: &[&str]) -> Result<Self> {
        let has = |name: &str| headers.contains(&name);
        if !has("y") {
            return Err(Error::Schema("missing outcome column `y`".into()));
        }
        let prob_columns: Vec<(String, String)> = headers
            .iter()
            .filter_map(|h| h.strip_prefix("prob_").map(|g| (g.to_string(), h.to_string())))
            .collect();
        let schema = Self {
            outcome: "y".into(),
            prediction: has("y_hat").then(|| "y_hat".into()),
            score: has("score").then(|| "score".into()),
            prob_columns,
            true_group: has("true_group").then(|| "true_group".into()),
            exhaustive: false,
        };
        schema.check_columns(headers)?;
        Ok(schema)
    }

    fn check_columns(&self, headers: &[&str]) -> Result<()> {
        let require = |name: &str, role: &str| {
            if headers.contains(&name) {
                Ok(())
            } else {
                Err(Error::Schema(format!("missing {role} column `{name}`")))
            }
        };
        require(&self.outcome, "outcome")?;
        if self.prediction.is_none() && self.score.is_none() {
            return Err(Error::Schema("schema needs a prediction or a score column".into()));
        }
        if let Some(c) = &self.prediction {
            require(c, "prediction")?;
        }
        if let Some(c) = &self.score {
            require(c, "score")?;
        }
        if self.prob_columns.is_empty() {
            return Err(Error::Schema(
                "schema needs at least one group probability column".into(),
            ));
        }
        for (_, c) in &self.prob_columns {
            require(c, "probability")?;
        }
        if let Some(c) = &self.true_group {
            require(c, "true group")?;
        }
        Ok(())
    }
}

fn parse_binary(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "1" | "1.0" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "0.0" | "false" | "FALSE" | "False" => Ok(false),
        "" => Err(Error::Validation {
            row,
            message: format!("missing value in `{column}`"),
        }),
        other => Err(Error::Validation {
            row,
            message: format!("`{column}` must be binary (0/1), found `{other}`"),
        }),
    }
}

fn parse_real(raw: &str, row: usize, column: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::Validation {
            row,
            message: format!("missing value in `{column}`"),
        });
    }
    raw.parse::<f64>().map_err(|_| Error::Validation {
        row,
        message: format!("`{column}` is not a number: `{raw}`"),
    })
}

/// Reads a dataset from CSV. With no `schema` the canonical layout is
/// inferred from the header. Scores are dichotomized at `threshold`
/// (default 0.5) when the schema has no prediction column. Lines starting
/// with `#` are skipped.
pub fn ingest_csv(path: impl AsRef<Path>, schema: Option<&CsvSchema>, threshold: Option<f64>) -> Result<AuditDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(file, schema, threshold)
}

pub fn ingest_reader<R: Read>(reader: R, schema: Option<&CsvSchema>, threshold: Option<f64>) -> Result<AuditDataset> {
    let threshold = threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let header_names: Vec<&str> = headers.iter().map(str::trim).collect();
    let schema = match schema {
        Some(s) => {
            s.check_columns(&header_names)?;
            s.clone()
        }
        None => CsvSchema::canonical(&header_names)?,
    };
    let col = |name: &str| header_names.iter().position(|h| *h == name).expect("checked column");
    let y_col = col(&schema.outcome);
    let pred_col = schema.prediction.as_deref().map(col);
    let score_col = schema.score.as_deref().map(col);
    let prob_cols: Vec<usize> = schema.prob_columns.iter().map(|(_, c)| col(c)).collect();
    let label_col = schema.true_group.as_deref().map(col);

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let y = parse_binary(field(y_col), row_no, &schema.outcome)?;
        let score = match score_col {
            Some(c) => Some(parse_real(
                field(c),
                row_no,
                schema.score.as_deref().unwrap_or("score"),
            )?),
            None => None,
        };
        let y_hat = match (pred_col, score) {
            (Some(c), _) => parse_binary(field(c), row_no, schema.prediction.as_deref().unwrap_or("y_hat"))?,
            (None, Some(s)) => dichotomize(s, threshold),
            (None, None) => unreachable!("schema requires prediction or score"),
        };
        let group_probs = prob_cols
            .iter()
            .zip(&schema.prob_columns)
            .map(|(&c, (_, name))| parse_real(field(c), row_no, name))
            .collect::<Result<Vec<_>>>()?;
        let true_group = match label_col {
            Some(c) => {
                let v = field(c).trim();
                if v.is_empty() {
                    return Err(Error::Validation {
                        row: row_no,
                        message: "missing value in true group column".into(),
                    });
                }
                Some(v.to_string())
            }
            None => None,
        };
        records.push(AuditRecord {
            y,
            y_hat,
            score,
            group_probs,
            true_group,
        });
    }
    let group_ids = schema.prob_columns.iter().map(|(g, _)| g.clone()).collect();
    AuditDataset::new(group_ids, records, schema.exhaustive)
}

/// Writes the dataset in canonical layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(dataset: &AuditDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_score = dataset.records.iter().all(|r| r.score.is_some());
    let with_labels = dataset.has_labels();
    let mut header = vec!["y".to_string(), "y_hat".to_string()];
    if with_score {
        header.push("score".into());
    }
    header.extend(dataset.group_ids.iter().map(|g| format!("prob_{g}")));
    if with_labels {
        header.push("true_group".into());
    }
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![u8::from(r.y).to_string(), u8::from(r.y_hat).to_string()];
        if with_score {
            row.push(r.score.map(|s| s.to_string()).unwrap_or_default());
        }
        row.extend(r.group_probs.iter().map(|p| p.to_string()));
        if with_labels {
            row.push(r.true_group.clone().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    fn add(&mut self, y: bool, y_hat: bool) {
        match (y, y_hat) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub mean_probability: f64,
    /// True count `n_a`; absent without labels.
    pub n_true: Option<usize>,
    pub confusion: Option<Confusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub groups: Vec<GroupSummary>,
}

pub fn summarize(dataset: &AuditDataset) -> DatasetSummary {
    let n = dataset.n();
    let counts = dataset.group_counts();
    let groups = dataset
        .group_ids
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let mean_probability = dataset.records.iter().map(|r| r.group_probs[gi]).sum::<f64>() / n as f64;
            let confusion = counts.as_ref().map(|_| {
                let mut c = Confusion::default();
                for r in dataset.records.iter().filter(|r| r.true_group.as_deref() == Some(g)) {
                    c.add(r.y, r.y_hat);
                }
                c
            });
            GroupSummary {
                group: g.clone(),
                mean_probability,
                n_true: counts.as_ref().map(|c| c[gi]),
                confusion,
            }
        })
        .collect();
    DatasetSummary { n, groups }
}
