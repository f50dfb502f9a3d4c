//! Bias of the weighted estimator and the quantities used to estimate or
//! bound it.
//!
//! Two sensitivity parameters drive the bias: `eps`, the mean probability
//! error `π - I(A=a)` over the numerator cell `h1 h2 = 1`, and `eps_prime`,
//! the same over the complement cell `h1 (1 - h2) = 1`. With the weighted
//! metric `ν_W`, the marginal metric `ν` and the base rate
//! `E[I(A=a) | h1 = 1]`, the plug-in bias is
//!
//! ```text
//! bias = ((1 - ν_W) ν eps - ν_W (1 - ν) eps') / base_rate
//! ```
//!
//! The same bias can be written with the joint errors `δ = E[(π - I) h1 h2]`
//! and `δ* = E[(I - π) h1]` as `(δ + ν_W δ*) / (base_rate · E[h1])`. When
//! `|δ| <= |δ*|` the absolute bias is at most
//! `(1 + ν_W) |1 - E[π h1] / E[I h1]|`.
//!
//! On a labelled sample, plugging in sample means makes both forms equal the
//! empirical difference `ν̂_W - ν̂_a` exactly, up to rounding.

use serde::{Deserialize, Serialize};

use crate::data::AuditDataset;
use crate::error::{Error, Result};
use crate::metrics::{cell_records, oracle_metric, weighted_metric, CellMasses, MetricKind, MetricSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let out = Interval::new(self.lo.max(other.lo), self.hi.min(other.hi));
        (!out.is_empty()).then_some(out)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPair {
    pub eps: f64,
    pub eps_prime: f64,
}

impl EpsilonPair {
    pub fn new(eps: f64, eps_prime: f64) -> Self {
        Self { eps, eps_prime }
    }
}

/// Feasible ranges for `eps` and `eps_prime`: `[m - 1, m]` where `m` is the
/// mean probability over the corresponding cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonBounds {
    pub eps: Interval,
    pub eps_prime: Interval,
}

impl EpsilonBounds {
    pub fn contains(&self, pair: &EpsilonPair) -> bool {
        self.eps.contains(pair.eps) && self.eps_prime.contains(pair.eps_prime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaPair {
    pub delta: f64,
    pub delta_star: f64,
}

/// Inputs of the bias plug-ins. In simulation or on labelled validation data
/// `base_rate` and `h1_rate` are sample means; in an audit without labels
/// they come from population sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasInputs {
    pub nu_w: f64,
    pub nu: f64,
    /// `E[I(A=a) | h1 = 1]`
    pub base_rate: f64,
    /// `E[h1]`; only the δ form and the audit-mode bound need it.
    pub h1_rate: Option<f64>,
}

impl BiasInputs {
    /// All four quantities from a labelled sample.
    pub fn from_sample(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<Self> {
        let m = masses(dataset, spec, group)?;
        Self::from_masses(&m, spec, group)
    }

    pub fn from_masses(m: &CellMasses, spec: &MetricSpec, group: &str) -> Result<Self> {
        if !m.labelled {
            return Err(Error::MissingLabels("the sample base rate"));
        }
        let undefined = || Error::UndefinedMetric {
            metric: spec.kind.to_string(),
            group: group.to_string(),
            cell: spec.denominator_cell(),
        };
        let nu_w = m.weighted().ok_or_else(undefined)?;
        let nu = m.marginal().ok_or_else(undefined)?;
        let base_rate = m.member_h1() / m.count_h1() as f64;
        Ok(Self {
            nu_w,
            nu,
            base_rate,
            h1_rate: Some(m.count_h1() as f64 / m.n as f64),
        })
    }
}

pub(crate) fn masses(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<CellMasses> {
    Ok(CellMasses::accumulate(&cell_records(dataset, spec, group)?))
}

/// `ν̂_W - ν̂_a` on a labelled dataset.
pub fn empirical_bias(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<f64> {
    let weighted = weighted_metric(dataset, spec, group)?;
    let oracle = oracle_metric(dataset, spec, group)?;
    Ok(weighted.value - oracle.value)
}

fn empty_cell(spec: &MetricSpec, group: &str, cell: String) -> Error {
    Error::EmptyCell {
        metric: spec.kind.to_string(),
        group: group.to_string(),
        cell,
    }
}

pub fn epsilon_sample_from(m: &CellMasses, spec: &MetricSpec, group: &str) -> Result<EpsilonPair> {
    if !m.labelled {
        return Err(Error::MissingLabels("sample epsilons"));
    }
    if m.count_num == 0 {
        return Err(empty_cell(spec, group, spec.numerator_cell()));
    }
    if m.count_comp == 0 {
        return Err(empty_cell(spec, group, spec.complement_cell()));
    }
    Ok(EpsilonPair {
        eps: (m.prob_num - m.member_num) / m.count_num as f64,
        eps_prime: (m.prob_comp - m.member_comp) / m.count_comp as f64,
    })
}

/// Mean probability error over the numerator and complement cells.
pub fn epsilon_sample(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<EpsilonPair> {
    if !dataset.has_labels() {
        return Err(Error::MissingLabels("sample epsilons"));
    }
    epsilon_sample_from(&masses(dataset, spec, group)?, spec, group)
}

/// Mean probabilities `(m, m')` over the numerator and complement cells.
pub fn cell_mean_probs(m: &CellMasses, spec: &MetricSpec, group: &str) -> Result<(f64, f64)> {
    if m.count_num == 0 {
        return Err(empty_cell(spec, group, spec.numerator_cell()));
    }
    if m.count_comp == 0 {
        return Err(empty_cell(spec, group, spec.complement_cell()));
    }
    Ok((m.prob_num / m.count_num as f64, m.prob_comp / m.count_comp as f64))
}

pub fn epsilon_bounds_from(m: &CellMasses, spec: &MetricSpec, group: &str) -> Result<EpsilonBounds> {
    let (mn, mc) = cell_mean_probs(m, spec, group)?;
    Ok(EpsilonBounds {
        eps: Interval::new(mn - 1.0, mn),
        eps_prime: Interval::new(mc - 1.0, mc),
    })
}

/// Feasible `eps` / `eps_prime` ranges; needs no labels.
pub fn epsilon_bounds(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<EpsilonBounds> {
    epsilon_bounds_from(&masses(dataset, spec, group)?, spec, group)
}

/// Plug-in bias for given sensitivity parameters.
pub fn bias_estimate(inputs: &BiasInputs, eps: &EpsilonPair) -> Result<f64> {
    if !(inputs.base_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base rate must be positive, got {}",
            inputs.base_rate
        )));
    }
    let BiasInputs {
        nu_w, nu, base_rate, ..
    } = *inputs;
    Ok(((1.0 - nu_w) * nu * eps.eps - nu_w * (1.0 - nu) * eps.eps_prime) / base_rate)
}

pub fn deltas_from(m: &CellMasses) -> Result<DeltaPair> {
    if !m.labelled {
        return Err(Error::MissingLabels("delta quantities"));
    }
    let n = m.n as f64;
    Ok(DeltaPair {
        delta: (m.prob_num - m.member_num) / n,
        delta_star: (m.member_h1() - m.prob_h1()) / n,
    })
}

/// Sample means of `(π - I) h1 h2` and `(I - π) h1` over all records.
pub fn deltas(dataset: &AuditDataset, spec: &MetricSpec, group: &str) -> Result<DeltaPair> {
    if !dataset.has_labels() {
        return Err(Error::MissingLabels("delta quantities"));
    }
    deltas_from(&masses(dataset, spec, group)?)
}

/// Bias written with the joint errors: `(δ + ν_W δ*) / (base_rate · E[h1])`.
pub fn delta_form_bias(inputs: &BiasInputs, deltas: &DeltaPair) -> Result<f64> {
    let h1_rate = inputs
        .h1_rate
        .ok_or_else(|| Error::InvalidParameter("the delta form needs E[h1]".into()))?;
    let denom = inputs.base_rate * h1_rate;
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base_rate * h1_rate must be positive, got {denom}"
        )));
    }
    Ok((deltas.delta + inputs.nu_w * deltas.delta_star) / denom)
}

/// `|δ| <= |δ*|`, the condition under which [`bias_bound`] holds.
pub fn assumption1_check(deltas: &DeltaPair) -> bool {
    deltas.delta.abs() <= deltas.delta_star.abs()
}

/// `eps · eps' >= 0`. Zero counts as either sign. Sufficient for
/// [`assumption1_check`].
pub fn same_sign_condition(pair: &EpsilonPair) -> bool {
    pair.eps * pair.eps_prime >= 0.0
}

/// `(1 + ν_W) |1 - ratio|` with `ratio = E[π h1] / E[I(A=a) h1]`.
pub fn bias_bound(nu_w: f64, pi_mass_ratio: f64) -> Result<f64> {
    if !(pi_mass_ratio > 0.0) || !pi_mass_ratio.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "probability mass ratio must be positive, got {pi_mass_ratio}"
        )));
    }
    Ok((1.0 + nu_w) * (1.0 - pi_mass_ratio).abs())
}

/// `Σ π h1 / Σ I h1` from a labelled sample.
pub fn sample_mass_ratio(m: &CellMasses) -> Result<f64> {
    if !m.labelled {
        return Err(Error::MissingLabels("the sample mass ratio"));
    }
    let den = m.member_h1();
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("no labelled group members with h1 = 1".into()));
    }
    Ok(m.prob_h1() / den)
}

/// `mean(π h1) / (base_rate · h1_rate)`, with the denominator taken from
/// population sources.
pub fn population_mass_ratio(m: &CellMasses, base_rate: f64, h1_rate: f64) -> Result<f64> {
    let den = base_rate * h1_rate;
    if !(den > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base_rate * h1_rate must be positive, got {den}"
        )));
    }
    Ok(m.prob_h1() / m.n as f64 / den)
}

/// False for metrics where the bound is valid but too loose to be useful.
pub fn bound_is_sharp(kind: MetricKind) -> bool {
    !matches!(kind, MetricKind::Ppv | MetricKind::Npv)
}

pub const LOOSE_BOUND_WARNING: &str =
    "the bias bound holds for PPV/NPV but is not sharp enough for practical application";
