//! Confusion-matrix metrics written as a ratio of two expectations,
//! `E[w h1 h2] / E[w h1]`, where `w` is the group weight of a record.
//!
//! The weight is the membership probability for the weighted estimator, the
//! membership indicator for the oracle estimator, and `1` for the marginal
//! (all-groups) metric. `h1` and `h2` are closed enumerations over the four
//! `(Y, Ŷ)` cells so that every metric is mechanically checkable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::AuditDataset;
use crate::error::{Error, Result};

/// A binary function of `(Y, Ŷ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Indicator {
    One,
    Y,
    NotY,
    YHat,
    NotYHat,
    /// `I(Y != Ŷ)`
    Mismatch,
}

impl Indicator {
    #[inline]
    pub fn eval(self, y: bool, y_hat: bool) -> bool {
        match self {
            Indicator::One => true,
            Indicator::Y => y,
            Indicator::NotY => !y,
            Indicator::YHat => y_hat,
            Indicator::NotYHat => !y_hat,
            Indicator::Mismatch => y != y_hat,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Indicator::One => "1",
            Indicator::Y => "Y",
            Indicator::NotY => "1-Y",
            Indicator::YHat => "Yhat",
            Indicator::NotYHat => "1-Yhat",
            Indicator::Mismatch => "I(Y!=Yhat)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Fnr,
    Fpr,
    Ppv,
    Npv,
    SelectionRate,
    ErrorRate,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Fnr,
        MetricKind::Fpr,
        MetricKind::Ppv,
        MetricKind::Npv,
        MetricKind::SelectionRate,
        MetricKind::ErrorRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Fnr => "fnr",
            MetricKind::Fpr => "fpr",
            MetricKind::Ppv => "ppv",
            MetricKind::Npv => "npv",
            MetricKind::SelectionRate => "selection_rate",
            MetricKind::ErrorRate => "error_rate",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub h1: Indicator,
    pub h2: Indicator,
}

impl MetricSpec {
    /// The `(h1, h2)` pair for a named metric.
    pub fn of(kind: MetricKind) -> Self {
        use Indicator::*;
        let (h1, h2) = match kind {
            MetricKind::Fnr => (Y, NotYHat),
            MetricKind::Fpr => (NotY, YHat),
            MetricKind::Ppv => (YHat, Y),
            MetricKind::Npv => (NotYHat, NotY),
            MetricKind::SelectionRate => (One, YHat),
            MetricKind::ErrorRate => (One, Mismatch),
        };
        Self { kind, h1, h2 }
    }

    /// `(h1, h2)` evaluated on one record.
    #[inline]
    pub fn cells(&self, y: bool, y_hat: bool) -> (bool, bool) {
        (self.h1.eval(y, y_hat), self.h2.eval(y, y_hat))
    }

    /// Human-readable name of the denominator event `h1 = 1`.
    pub fn denominator_cell(&self) -> String {
        format!("h1=1 ({}=1)", self.h1.label())
    }

    /// The numerator cell `h1 h2 = 1`.
    pub fn numerator_cell(&self) -> String {
        format!("h1*h2=1 ({}*{}=1)", self.h1.label(), self.h2.label())
    }

    /// The complement cell `h1 (1 - h2) = 1`.
    pub fn complement_cell(&self) -> String {
        format!("h1*(1-h2)=1 ({}*(1-{})=1)", self.h1.label(), self.h2.label())
    }
}

/// Looks up a metric by its CLI name.
pub fn metric_spec(name: &str) -> Result<MetricSpec> {
    Ok(MetricSpec::of(name.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Weighted,
    Oracle,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub numerator_mass: f64,
    pub denominator_mass: f64,
    pub estimator: Estimator,
}

/// Per-record view of one `(metric, group)` pair: the two cell indicators,
/// the membership probability, and the membership indicator when labelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub h1: bool,
    pub h2: bool,
    pub prob: f64,
    pub member: Option<bool>,
}

/// Projects a dataset onto the cells of `spec` for `group`.
pub fn cell_records(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<Vec<CellRecord>> {
    let gi = dataset.group_index(group)?;
    Ok(dataset
        .records()
        .iter()
        .map(|r| {
            let (h1, h2) = spec.cells(r.y, r.y_hat);
            CellRecord {
                h1,
                h2,
                prob: r.group_probs[gi],
                member: r.true_group.as_deref().map(|g| g == group),
            }
        })
        .collect())
}

/// Sums over the `h1 = 1` records, split by `h2`.
///
/// Everything the estimators, the bias plug-ins and the bootstrap need is a
/// function of these masses, so a resample only has to re-accumulate them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellMasses {
    pub n: usize,
    /// `#{h1 h2 = 1}`
    pub count_num: usize,
    /// `#{h1 (1 - h2) = 1}`
    pub count_comp: usize,
    /// `Σ π h1 h2`
    pub prob_num: f64,
    /// `Σ π h1 (1 - h2)`
    pub prob_comp: f64,
    /// `Σ I h1 h2`, zero without labels.
    pub member_num: f64,
    /// `Σ I h1 (1 - h2)`, zero without labels.
    pub member_comp: f64,
    pub labelled: bool,
}

impl CellMasses {
    pub fn accumulate<'a>(cells: impl IntoIterator<Item = &'a CellRecord>) -> Self {
        let mut m = CellMasses {
            labelled: true,
            ..Default::default()
        };
        for c in cells {
            m.push(c);
        }
        m
    }

    #[inline]
    pub fn push(&mut self, c: &CellRecord) {
        self.n += 1;
        if c.member.is_none() {
            self.labelled = false;
        }
        if !c.h1 {
            return;
        }
        let member = if c.member == Some(true) { 1.0 } else { 0.0 };
        if c.h2 {
            self.count_num += 1;
            self.prob_num += c.prob;
            self.member_num += member;
        } else {
            self.count_comp += 1;
            self.prob_comp += c.prob;
            self.member_comp += member;
        }
    }

    pub fn count_h1(&self) -> usize {
        self.count_num + self.count_comp
    }

    /// `Σ π h1`
    pub fn prob_h1(&self) -> f64 {
        self.prob_num + self.prob_comp
    }

    /// `Σ I h1`
    pub fn member_h1(&self) -> f64 {
        self.member_num + self.member_comp
    }

    pub fn weighted(&self) -> Option<f64> {
        let den = self.prob_h1();
        (den > 0.0).then(|| self.prob_num / den)
    }

    pub fn oracle(&self) -> Option<f64> {
        let den = self.member_h1();
        (self.labelled && den > 0.0).then(|| self.member_num / den)
    }

    pub fn marginal(&self) -> Option<f64> {
        let den = self.count_h1();
        (den > 0).then(|| self.count_num as f64 / den as f64)
    }
}

fn undefined(spec: &MetricSpec, group: &str) -> Error {
    Error::UndefinedMetric {
        metric: spec.kind.to_string(),
        group: group.to_string(),
        cell: spec.denominator_cell(),
    }
}

/// `Σ π h1 h2 / Σ π h1` for `group`.
pub fn weighted_metric(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<MetricEstimate> {
    let cells = cell_records(dataset, spec, group)?;
    let m = CellMasses::accumulate(&cells);
    let value = m.weighted().ok_or_else(|| undefined(spec, group))?;
    Ok(MetricEstimate {
        value,
        numerator_mass: m.prob_num,
        denominator_mass: m.prob_h1(),
        estimator: Estimator::Weighted,
    })
}

/// `Σ I(A=a) h1 h2 / Σ I(A=a) h1`; requires true labels on every record.
pub fn oracle_metric(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<MetricEstimate> {
    if !dataset.has_labels() {
        return Err(Error::MissingLabels("the oracle metric"));
    }
    let cells = cell_records(dataset, spec, group)?;
    let m = CellMasses::accumulate(&cells);
    let value = m.oracle().ok_or_else(|| undefined(spec, group))?;
    Ok(MetricEstimate {
        value,
        numerator_mass: m.member_num,
        denominator_mass: m.member_h1(),
        estimator: Estimator::Oracle,
    })
}

/// `Σ h1 h2 / Σ h1` over all records regardless of group.
pub fn marginal_metric(dataset: &AuditDataset, spec: &MetricSpec) -> Result<MetricEstimate> {
    let (num, den) = dataset.records().iter().fold((0usize, 0usize), |(num, den), r| {
        let (h1, h2) = spec.cells(r.y, r.y_hat);
        (num + usize::from(h1 && h2), den + usize::from(h1))
    });
    if den == 0 {
        return Err(undefined(spec, "(all)"));
    }
    Ok(MetricEstimate {
        value: num as f64 / den as f64,
        numerator_mass: num as f64,
        denominator_mass: den as f64,
        estimator: Estimator::Marginal,
    })
}
