//! Bias-corrected sensitivity analysis over assumed probability error.
//!
//! For a practitioner-chosen range of `(eps, eps')`, every bootstrap resample
//! recomputes the weighted and marginal metrics and the feasible epsilon
//! ranges, then evaluates the bias-corrected estimate at the two corners of
//! the constrained range that produce the smallest and largest bias (the
//! plug-in bias is increasing in `eps` and decreasing in `eps'`, so no other
//! grid point can be more extreme). Means of the two corner series give the
//! plausible mean interval; their outer percentile bounds give the
//! sensitivity interval.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bias::{bias_estimate, cell_mean_probs, epsilon_bounds_from, BiasInputs, EpsilonPair, Interval};
use crate::data::AuditDataset;
use crate::error::{Error, Result};
use crate::metrics::{cell_records, CellMasses, CellRecord, MetricSpec};
use crate::parallel::map_indexed;
use crate::stats::{linspace, mean, percentile_sorted, stream_rng};

/// How the `(eps, eps')` ranges are given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RangeSpec {
    Absolute {
        eps: Interval,
        eps_prime: Interval,
    },
    /// `±level` times the mean probability of each cell, e.g. `0.1` for
    /// ten percent relative error.
    Relative {
        level: f64,
    },
}

/// Which corners of the epsilon rectangle bound the bias.
///
/// `Correlated` lets the two cell errors move in opposite directions (the
/// worst case, corners `(lo, hi')` and `(hi, lo')`). `Uncorrelated` assumes
/// the probability error does not depend on whether the prediction was
/// right, so both errors move together (corners `(lo, lo')` and `(hi, hi')`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCorrelation {
    #[default]
    Correlated,
    Uncorrelated,
}

/// Direction in which the bias estimate is applied to the weighted estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `ν̂_W - bias`; recovers the oracle metric when the bias is exact.
    #[default]
    Subtract,
    /// `ν̂_W + bias`
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub range: RangeSpec,
    pub grid_resolution: usize,
    /// `E[I(A=a) | h1 = 1]`, usually from population sources.
    pub base_rate: f64,
    pub bootstrap_reps: usize,
    pub alpha: f64,
    pub seed: u64,
    /// When false a single pass over the original sample replaces the
    /// bootstrap.
    pub resample: bool,
    pub correlation: ErrorCorrelation,
    pub sign: SignConvention,
}

impl SensitivityConfig {
    pub fn new(range: RangeSpec, base_rate: f64) -> Self {
        Self {
            range,
            grid_resolution: 21,
            base_rate,
            bootstrap_reps: 1000,
            alpha: 0.05,
            seed: 0,
            resample: true,
            correlation: ErrorCorrelation::Correlated,
            sign: SignConvention::Subtract,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_rate > 0.0 && self.base_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "base rate {} outside (0, 1]",
                self.base_rate
            )));
        }
        if self.bootstrap_reps == 0 {
            return Err(Error::InvalidParameter("bootstrap_reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.grid_resolution == 0 {
            return Err(Error::InvalidParameter("grid_resolution must be positive".into()));
        }
        match self.range {
            RangeSpec::Absolute { eps, eps_prime } => {
                if eps.is_empty() || eps_prime.is_empty() {
                    return Err(Error::InfeasibleRange("configured epsilon range is empty".into()));
                }
            }
            RangeSpec::Relative { level } => {
                if !(level >= 0.0) {
                    return Err(Error::InvalidParameter(format!("relative level {level} must be >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// Applies a bias estimate to `nu_w` and clamps the result to `[0, 1]`.
pub fn corrected_estimate(nu_w: f64, bias: f64, sign: SignConvention) -> f64 {
    let v = match sign {
        SignConvention::Subtract => nu_w - bias,
        SignConvention::Add => nu_w + bias,
    };
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CornerValue {
    pub eps: f64,
    pub eps_prime: f64,
    pub bias: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub eps: f64,
    pub eps_prime: f64,
    pub bias: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityResult {
    pub weighted_estimate: f64,
    /// Configured range intersected with the feasible range on the full sample.
    pub eps_range: Interval,
    pub eps_prime_range: Interval,
    /// All four corners of the constrained rectangle, evaluated on the full
    /// sample: `(lo, lo')`, `(lo, hi')`, `(hi, lo')`, `(hi, hi')`.
    pub corrected_at_corners: [CornerValue; 4],
    pub plausible_mean_interval: Interval,
    pub sensitivity_interval: Interval,
    /// Percentile interval of the uncorrected weighted estimate.
    pub weighted_interval: Interval,
    pub replicates_used: usize,
    pub replicates_skipped: usize,
    pub grid: Option<Vec<GridRow>>,
}

struct Prepared {
    cells: Vec<CellRecord>,
    full: CellMasses,
    /// As configured (relative ranges already resolved on the full sample).
    eps_cfg: Interval,
    eps_prime_cfg: Interval,
    /// Configured ranges intersected with the full-sample feasible ranges.
    eps_range: Interval,
    eps_prime_range: Interval,
}

fn configured_ranges(
    config: &SensitivityConfig,
    m: &CellMasses,
    spec: &MetricSpec,
    group: &str,
) -> Result<(Interval, Interval)> {
    Ok(match config.range {
        RangeSpec::Absolute { eps, eps_prime } => (eps, eps_prime),
        RangeSpec::Relative { level } => {
            let (mn, mc) = cell_mean_probs(m, spec, group)?;
            (
                Interval::new(-level * mn, level * mn),
                Interval::new(-level * mc, level * mc),
            )
        }
    })
}

fn infeasible(name: &str, cfg: Interval, feasible: Interval) -> Error {
    Error::InfeasibleRange(format!(
        "{name} range [{}, {}] does not meet the feasible range [{}, {}]; widen or shift the range",
        cfg.lo, cfg.hi, feasible.lo, feasible.hi
    ))
}

fn prepare(dataset: &AuditDataset, spec: &MetricSpec, group: &str, config: &SensitivityConfig) -> Result<Prepared> {
    config.validate()?;
    let cells = cell_records(dataset, spec, group)?;
    let full = CellMasses::accumulate(&cells);
    if full.weighted().is_none() {
        return Err(Error::UndefinedMetric {
            metric: spec.kind.to_string(),
            group: group.to_string(),
            cell: spec.denominator_cell(),
        });
    }
    let (eps_cfg, eps_prime_cfg) = configured_ranges(config, &full, spec, group)?;
    let bounds = epsilon_bounds_from(&full, spec, group)?;
    let eps_range = eps_cfg
        .intersect(&bounds.eps)
        .ok_or_else(|| infeasible("eps", eps_cfg, bounds.eps))?;
    let eps_prime_range = eps_prime_cfg
        .intersect(&bounds.eps_prime)
        .ok_or_else(|| infeasible("eps'", eps_prime_cfg, bounds.eps_prime))?;
    Ok(Prepared {
        cells,
        full,
        eps_cfg,
        eps_prime_cfg,
        eps_range,
        eps_prime_range,
    })
}

/// The two designated corners for a constrained rectangle.
fn designated_corners(eps: Interval, eps_prime: Interval, correlation: ErrorCorrelation) -> [EpsilonPair; 2] {
    match correlation {
        ErrorCorrelation::Correlated => [
            EpsilonPair::new(eps.lo, eps_prime.hi),
            EpsilonPair::new(eps.hi, eps_prime.lo),
        ],
        ErrorCorrelation::Uncorrelated => [
            EpsilonPair::new(eps.lo, eps_prime.lo),
            EpsilonPair::new(eps.hi, eps_prime.hi),
        ],
    }
}

fn inputs_from(m: &CellMasses, base_rate: f64) -> Option<BiasInputs> {
    Some(BiasInputs {
        nu_w: m.weighted()?,
        nu: m.marginal()?,
        base_rate,
        h1_rate: None,
    })
}

/// Corrected estimates at the two designated corners for one (re)sample, or
/// `None` when the resample leaves a cell empty or the range infeasible.
fn replicate_corners(
    m: &CellMasses,
    p: &Prepared,
    spec: &MetricSpec,
    config: &SensitivityConfig,
) -> Option<(f64, [f64; 2])> {
    let inputs = inputs_from(m, config.base_rate)?;
    let bounds = epsilon_bounds_from(m, spec, "").ok()?;
    let eps = p.eps_cfg.intersect(&bounds.eps)?;
    let eps_prime = p.eps_prime_cfg.intersect(&bounds.eps_prime)?;
    let corners = designated_corners(eps, eps_prime, config.correlation);
    let mut out = [0.0; 2];
    for (slot, c) in out.iter_mut().zip(&corners) {
        let bias = bias_estimate(&inputs, c).ok()?;
        *slot = corrected_estimate(inputs.nu_w, bias, config.sign);
    }
    Some((inputs.nu_w, out))
}

fn resample_masses(cells: &[CellRecord], seed: u64, rep: usize) -> CellMasses {
    use rand::Rng;
    let mut rng = stream_rng(seed, rep as u64);
    let n = cells.len();
    let mut m = CellMasses {
        labelled: false,
        ..Default::default()
    };
    for _ in 0..n {
        m.push(&cells[rng.random_range(0..n)]);
    }
    m
}

fn percentile_interval(mut xs: Vec<f64>, alpha: f64) -> (f64, Interval) {
    let avg = mean(&xs);
    xs.sort_by(|a, b| a.total_cmp(b));
    let lo = percentile_sorted(&xs, alpha / 2.0);
    let hi = percentile_sorted(&xs, 1.0 - alpha / 2.0);
    (avg, Interval::new(lo, hi))
}

/// Runs the bootstrap sensitivity analysis for one metric and group.
pub fn run_sensitivity(
    dataset: &AuditDataset,
    spec: &MetricSpec,
    group: &str,
    config: &SensitivityConfig,
) -> Result<SensitivityResult> {
    let p = prepare(dataset, spec, group, config)?;
    let inputs = inputs_from(&p.full, config.base_rate).ok_or_else(|| Error::UndefinedMetric {
        metric: spec.kind.to_string(),
        group: group.to_string(),
        cell: spec.denominator_cell(),
    })?;

    let corner_at = |eps: f64, eps_prime: f64| -> Result<CornerValue> {
        let bias = bias_estimate(&inputs, &EpsilonPair::new(eps, eps_prime))?;
        Ok(CornerValue {
            eps,
            eps_prime,
            bias,
            corrected: corrected_estimate(inputs.nu_w, bias, config.sign),
        })
    };
    let (e, ep) = (p.eps_range, p.eps_prime_range);
    let corrected_at_corners = [
        corner_at(e.lo, ep.lo)?,
        corner_at(e.lo, ep.hi)?,
        corner_at(e.hi, ep.lo)?,
        corner_at(e.hi, ep.hi)?,
    ];

    let replicates: Vec<Option<(f64, [f64; 2])>> = if config.resample {
        map_indexed(config.bootstrap_reps, |rep| {
            let m = resample_masses(&p.cells, config.seed, rep);
            replicate_corners(&m, &p, spec, config)
        })
    } else {
        vec![replicate_corners(&p.full, &p, spec, config)]
    };
    let kept: Vec<(f64, [f64; 2])> = replicates.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::InfeasibleRange(
            "no bootstrap replicate had non-empty cells and a feasible range".into(),
        ));
    }
    let weighted: Vec<f64> = kept.iter().map(|r| r.0).collect();
    let corner_a: Vec<f64> = kept.iter().map(|r| r.1[0]).collect();
    let corner_b: Vec<f64> = kept.iter().map(|r| r.1[1]).collect();
    let (_, weighted_interval) = percentile_interval(weighted, config.alpha);
    let (mean_a, ci_a) = percentile_interval(corner_a, config.alpha);
    let (mean_b, ci_b) = percentile_interval(corner_b, config.alpha);

    Ok(SensitivityResult {
        weighted_estimate: inputs.nu_w,
        eps_range: e,
        eps_prime_range: ep,
        corrected_at_corners,
        plausible_mean_interval: Interval::new(mean_a.min(mean_b), mean_a.max(mean_b)),
        sensitivity_interval: Interval::new(ci_a.lo.min(ci_b.lo), ci_a.hi.max(ci_b.hi)),
        weighted_interval,
        replicates_used: kept.len(),
        replicates_skipped: replicates.len() - kept.len(),
        grid: None,
    })
}

/// Plug-in bias over a `grid_resolution × grid_resolution` grid spanning the
/// configured range intersected with the feasible range.
pub fn contour_grid(
    dataset: &AuditDataset,
    spec: &MetricSpec,
    group: &str,
    config: &SensitivityConfig,
) -> Result<Vec<GridRow>> {
    let p = prepare(dataset, spec, group, config)?;
    let inputs = inputs_from(&p.full, config.base_rate).expect("prepare checked the weighted metric");
    let eps_axis = linspace(p.eps_range.lo, p.eps_range.hi, config.grid_resolution);
    let eps_prime_axis = linspace(p.eps_prime_range.lo, p.eps_prime_range.hi, config.grid_resolution);
    let mut rows = Vec::with_capacity(eps_axis.len() * eps_prime_axis.len());
    for &eps in &eps_axis {
        for &eps_prime in &eps_prime_axis {
            let bias = bias_estimate(&inputs, &EpsilonPair::new(eps, eps_prime))?;
            rows.push(GridRow {
                eps,
                eps_prime,
                bias,
                corrected: corrected_estimate(inputs.nu_w, bias, config.sign),
            });
        }
    }
    Ok(rows)
}

/// Writes grid rows as CSV with header `eps,eps_prime,bias,corrected`.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eps", "eps_prime", "bias", "corrected"])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.eps_prime.to_string(),
            r.bias.to_string(),
            r.corrected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
