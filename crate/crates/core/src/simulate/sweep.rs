//! Replicated scenario sweeps and the sensitivity-interval coverage study.
//!
//! Replication `r` always uses RNG stream `r` of the configured seed, in
//! every cell of a sweep. Cells therefore differ only in the swept parameter
//! (common random numbers), and the test samples of an `n_sample` sweep are
//! nested prefixes of the same shuffled pool.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bias::{
    assumption1_check, bias_bound, bias_estimate, delta_form_bias, deltas, empirical_bias, epsilon_sample, masses,
    same_sign_condition, sample_mass_ratio, BiasInputs, EpsilonPair, Interval,
};
use crate::error::{Error, Result};
use crate::metrics::{oracle_metric, weighted_metric, CellMasses, CellRecord, MetricSpec};
use crate::parallel::map_indexed;
use crate::sensitivity::{run_sensitivity, RangeSpec, SensitivityConfig};
use crate::simulate::auc::group_auc;
use crate::simulate::dgp::{generate_population, SimConfig, SimPopulation};
use crate::stats::{mean, percentile, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Beta1,
    Beta2,
    Beta3,
    NSample,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Beta1 => "beta1",
            SweepAxis::Beta2 => "beta2",
            SweepAxis::Beta3 => "beta3",
            SweepAxis::NSample => "n_sample",
        }
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::Beta1 => c.beta1 = value,
            SweepAxis::Beta2 => c.beta2 = value,
            SweepAxis::Beta3 => c.beta3 = value,
            SweepAxis::NSample => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "n_sample must be a positive integer, got {value}"
                    )));
                }
                c.n_sample = value as usize;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beta1" => Ok(SweepAxis::Beta1),
            "beta2" => Ok(SweepAxis::Beta2),
            "beta3" => Ok(SweepAxis::Beta3),
            "n_sample" | "nsample" => Ok(SweepAxis::NSample),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep axis `{other}` (beta1, beta2, beta3, n_sample)"
            ))),
        }
    }
}

/// Everything measured on one simulated test sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub weighted: f64,
    pub oracle: f64,
    /// `weighted - oracle`
    pub bias: f64,
    /// Epsilon plug-in with sample inputs.
    pub plugin_bias: f64,
    /// Delta form with sample inputs.
    pub delta_form_bias: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub delta: f64,
    pub delta_star: f64,
    pub assumption1: bool,
    pub same_sign: bool,
    pub pi_mass_ratio: f64,
    pub bound: f64,
    pub base_rate: f64,
    pub h1_rate: f64,
    pub group_share: f64,
    pub proxy_auc: f64,
}

impl ReplicationRow {
    /// Largest disagreement among the three bias routes.
    pub fn identity_gap(&self) -> f64 {
        (self.bias - self.plugin_bias)
            .abs()
            .max((self.bias - self.delta_form_bias).abs())
    }
}

/// Draws, trains and scores replication `replication`, returning the
/// population and the test-sample indices.
pub fn simulate_replication(config: &SimConfig, replication: usize) -> Result<(SimPopulation, Vec<usize>, Vec<usize>)> {
    let mut rng = stream_rng(config.seed, replication as u64);
    let mut pop = generate_population(config, &mut rng)?;
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.shuffle(&mut rng);
    let pool = order.split_off(config.n_train);
    let train = order;
    let model = pop.train_predictor(&train)?;
    pop.apply_predictor(&model, config.threshold);
    let test = pool[..config.n_sample].to_vec();
    Ok((pop, test, pool))
}

/// Runs one replication of `config` and measures the audited metric.
pub fn run_replication(config: &SimConfig, replication: usize) -> Result<ReplicationRow> {
    let (pop, test, _) = simulate_replication(config, replication)?;
    let ds = pop.dataset(&test)?;
    let spec = MetricSpec::of(config.metric);
    let group = config.group.to_string();

    let weighted = weighted_metric(&ds, &spec, &group)?.value;
    let oracle = oracle_metric(&ds, &spec, &group)?.value;
    let bias = empirical_bias(&ds, &spec, &group)?;
    let eps = epsilon_sample(&ds, &spec, &group)?;
    let d = deltas(&ds, &spec, &group)?;
    let inputs = BiasInputs::from_sample(&ds, &spec, &group)?;
    let m = masses(&ds, &spec, &group)?;
    let ratio = sample_mass_ratio(&m)?;
    let member_labels: Vec<bool> = pop.member.iter().map(|&a| a == (config.group == 1)).collect();
    let group_probs: Vec<f64> = (0..pop.len()).map(|i| pop.group_view(i, config.group).0).collect();

    Ok(ReplicationRow {
        replication,
        weighted,
        oracle,
        bias,
        plugin_bias: bias_estimate(&inputs, &eps)?,
        delta_form_bias: delta_form_bias(&inputs, &d)?,
        eps: eps.eps,
        eps_prime: eps.eps_prime,
        delta: d.delta,
        delta_star: d.delta_star,
        assumption1: assumption1_check(&d),
        same_sign: same_sign_condition(&eps),
        pi_mass_ratio: ratio,
        bound: bias_bound(weighted, ratio)?,
        base_rate: inputs.base_rate,
        h1_rate: inputs.h1_rate.unwrap_or(f64::NAN),
        group_share: member_labels.iter().filter(|&&a| a).count() as f64 / pop.len() as f64,
        proxy_auc: group_auc(&group_probs, &member_labels)?,
    })
}

/// Per-cell aggregate over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellSummary {
    pub value: f64,
    pub replications: usize,
    pub mean_weighted: f64,
    pub weighted_lo: f64,
    pub weighted_hi: f64,
    pub mean_oracle: f64,
    pub mean_bias: f64,
    pub bias_lo: f64,
    pub bias_hi: f64,
    pub mean_abs_bias: f64,
    pub mean_bound: f64,
    pub mean_eps: f64,
    pub mean_eps_prime: f64,
    pub mean_abs_delta: f64,
    pub mean_abs_delta_star: f64,
    /// `mean |δ| <= mean |δ*|` across replications.
    pub assumption1: bool,
    /// Share of replications where `|δ| <= |δ*|` on the sample.
    pub assumption1_rate: f64,
    pub max_identity_gap: f64,
    pub mean_proxy_auc: f64,
    pub mean_group_share: f64,
}

impl CellSummary {
    pub fn from_rows(value: f64, rows: &[ReplicationRow]) -> Self {
        let col = |f: fn(&ReplicationRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let weighted = col(|r| r.weighted);
        let bias = col(|r| r.bias);
        let mean_abs_delta = mean(&col(|r| r.delta.abs()));
        let mean_abs_delta_star = mean(&col(|r| r.delta_star.abs()));
        Self {
            value,
            replications: rows.len(),
            mean_weighted: mean(&weighted),
            weighted_lo: percentile(&weighted, 0.025),
            weighted_hi: percentile(&weighted, 0.975),
            mean_oracle: mean(&col(|r| r.oracle)),
            mean_bias: mean(&bias),
            bias_lo: percentile(&bias, 0.025),
            bias_hi: percentile(&bias, 0.975),
            mean_abs_bias: mean(&col(|r| r.bias.abs())),
            mean_bound: mean(&col(|r| r.bound)),
            mean_eps: mean(&col(|r| r.eps)),
            mean_eps_prime: mean(&col(|r| r.eps_prime)),
            mean_abs_delta,
            mean_abs_delta_star,
            assumption1: mean_abs_delta <= mean_abs_delta_star,
            assumption1_rate: rows.iter().filter(|r| r.assumption1).count() as f64 / rows.len() as f64,
            max_identity_gap: rows.iter().map(ReplicationRow::identity_gap).fold(0.0, f64::max),
            mean_proxy_auc: mean(&col(|r| r.proxy_auc)),
            mean_group_share: mean(&col(|r| r.group_share)),
        }
    }

    /// Width of the 95% percentile interval of the weighted estimate.
    pub fn weighted_width(&self) -> f64 {
        self.weighted_hi - self.weighted_lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// `rows[cell][replication]`
    pub rows: Vec<Vec<ReplicationRow>>,
    pub summaries: Vec<CellSummary>,
}

/// Runs `replications` replications at every value of `axis`.
pub fn run_scenario_sweep(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[f64],
    replications: usize,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be positive".into()));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let flat = map_indexed(values.len() * replications, |job| {
        let (cell, rep) = (job / replications, job % replications);
        run_replication(&configs[cell], rep)
    });
    let flat = flat.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<ReplicationRow>> = flat.chunks(replications).map(<[_]>::to_vec).collect();
    let summaries = values
        .iter()
        .zip(&rows)
        .map(|(&v, r)| CellSummary::from_rows(v, r))
        .collect();
    Ok(SweepTable {
        axis,
        values: values.to_vec(),
        rows,
        summaries,
    })
}

const SWEEP_COLUMNS: [&str; 31] = [
    "axis",
    "value",
    "replication",
    "summary",
    "weighted",
    "weighted_lo",
    "weighted_hi",
    "oracle",
    "bias",
    "bias_lo",
    "bias_hi",
    "abs_bias",
    "plugin_bias",
    "delta_form_bias",
    "eps",
    "eps_prime",
    "delta",
    "delta_star",
    "abs_delta",
    "abs_delta_star",
    "assumption1",
    "assumption1_rate",
    "same_sign",
    "pi_mass_ratio",
    "bound",
    "base_rate",
    "h1_rate",
    "group_share",
    "proxy_auc",
    "identity_gap",
    "replications",
];

/// One row per replication and cell, then one `summary=1` row per cell
/// (means, with 2.5%/97.5% percentiles in the `_lo`/`_hi` columns).
pub fn write_sweep_csv<W: Write>(table: &SweepTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_COLUMNS)?;
    let axis = table.axis.name();
    let f = |x: f64| x.to_string();
    let b = |x: bool| u8::from(x).to_string();
    for (value, rows) in table.values.iter().zip(&table.rows) {
        for r in rows {
            w.write_record([
                axis.to_string(),
                f(*value),
                r.replication.to_string(),
                "0".into(),
                f(r.weighted),
                String::new(),
                String::new(),
                f(r.oracle),
                f(r.bias),
                String::new(),
                String::new(),
                f(r.bias.abs()),
                f(r.plugin_bias),
                f(r.delta_form_bias),
                f(r.eps),
                f(r.eps_prime),
                f(r.delta),
                f(r.delta_star),
                f(r.delta.abs()),
                f(r.delta_star.abs()),
                b(r.assumption1),
                String::new(),
                b(r.same_sign),
                f(r.pi_mass_ratio),
                f(r.bound),
                f(r.base_rate),
                f(r.h1_rate),
                f(r.group_share),
                f(r.proxy_auc),
                f(r.identity_gap()),
                String::new(),
            ])?;
        }
    }
    for s in &table.summaries {
        w.write_record([
            axis.to_string(),
            f(s.value),
            String::new(),
            "1".into(),
            f(s.mean_weighted),
            f(s.weighted_lo),
            f(s.weighted_hi),
            f(s.mean_oracle),
            f(s.mean_bias),
            f(s.bias_lo),
            f(s.bias_hi),
            f(s.mean_abs_bias),
            String::new(),
            String::new(),
            f(s.mean_eps),
            f(s.mean_eps_prime),
            String::new(),
            String::new(),
            f(s.mean_abs_delta),
            f(s.mean_abs_delta_star),
            b(s.assumption1),
            f(s.assumption1_rate),
            String::new(),
            String::new(),
            f(s.mean_bound),
            String::new(),
            String::new(),
            f(s.mean_group_share),
            f(s.mean_proxy_auc),
            f(s.max_identity_gap),
            s.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Population-level quantities of a scored simulated population, computed
/// over `indices` (normally the non-training pool).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationTruth {
    /// Oracle metric `ν(a)`.
    pub metric: f64,
    /// `E[I(A=a) | h1 = 1]`
    pub base_rate: f64,
    pub eps: EpsilonPair,
}

pub fn population_truth(
    pop: &SimPopulation,
    indices: &[usize],
    spec: &MetricSpec,
    group: u8,
) -> Result<PopulationTruth> {
    let m = CellMasses::accumulate(
        indices
            .iter()
            .map(|&i| {
                let (prob, member) = pop.group_view(i, group);
                let (h1, h2) = spec.cells(pop.y[i], pop.y_hat[i]);
                CellRecord {
                    h1,
                    h2,
                    prob,
                    member: Some(member),
                }
            })
            .collect::<Vec<_>>()
            .iter(),
    );
    let group_name = group.to_string();
    let metric = m.oracle().ok_or_else(|| Error::UndefinedMetric {
        metric: spec.kind.to_string(),
        group: group_name.clone(),
        cell: spec.denominator_cell(),
    })?;
    Ok(PopulationTruth {
        metric,
        base_rate: m.member_h1() / m.count_h1() as f64,
        eps: crate::bias::epsilon_sample_from(&m, spec, &group_name)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageRun {
    pub replication: usize,
    pub truth: PopulationTruth,
    pub truth_in_range: bool,
    pub weighted: f64,
    pub plausible_mean_interval: Interval,
    pub sensitivity_interval: Interval,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub runs: Vec<CoverageRun>,
    pub covered: usize,
    pub rate: f64,
}

/// Repeats the sensitivity analysis on `runs` simulated test samples and
/// counts how often the sensitivity interval contains the population metric.
/// The base rate is the population value, as it would be in an audit that
/// takes it from published sources.
pub fn run_coverage_study(
    sim: &SimConfig,
    range: RangeSpec,
    bootstrap_reps: usize,
    alpha: f64,
    runs: usize,
) -> Result<CoverageSummary> {
    sim.validate()?;
    let spec = MetricSpec::of(sim.metric);
    let group = sim.group.to_string();
    let results = map_indexed(runs, |r| -> Result<CoverageRun> {
        let (pop, test, pool) = simulate_replication(sim, r)?;
        let truth = population_truth(&pop, &pool, &spec, sim.group)?;
        let ds = pop.dataset(&test)?;
        let mut cfg = SensitivityConfig::new(range, truth.base_rate);
        cfg.bootstrap_reps = bootstrap_reps;
        cfg.alpha = alpha;
        cfg.seed = sim.seed.wrapping_add(r as u64);
        let res = run_sensitivity(&ds, &spec, &group, &cfg)?;
        let truth_in_range = match range {
            RangeSpec::Absolute { eps, eps_prime } => {
                eps.contains(truth.eps.eps) && eps_prime.contains(truth.eps.eps_prime)
            }
            RangeSpec::Relative { .. } => false,
        };
        Ok(CoverageRun {
            replication: r,
            truth,
            truth_in_range,
            weighted: res.weighted_estimate,
            plausible_mean_interval: res.plausible_mean_interval,
            sensitivity_interval: res.sensitivity_interval,
            covered: res.sensitivity_interval.contains(truth.metric),
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let covered = runs.iter().filter(|r| r.covered).count();
    let rate = covered as f64 / runs.len().max(1) as f64;
    Ok(CoverageSummary { runs, covered, rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            n_population: 4000,
            n_train: 2000,
            n_sample: 1000,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn replication_identity_chain() {
        let row = run_replication(&small(), 0).unwrap();
        assert!(row.identity_gap() < 1e-10, "{row:?}");
        assert!(!row.assumption1 || row.bias.abs() <= row.bound + 1e-10);
    }

    #[test]
    fn sweep_is_reproducible_and_ordered() {
        let a = run_scenario_sweep(&small(), SweepAxis::Beta1, &[0.0, 0.5], 3).unwrap();
        let b = run_scenario_sweep(&small(), SweepAxis::Beta1, &[0.0, 0.5], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows[1][2].replication, 2);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_sweep_csv(&a, &mut buf_a).unwrap();
        write_sweep_csv(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        let text = String::from_utf8(buf_a).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 + 2);
        assert_eq!(text.lines().filter(|l| l.split(',').nth(3) == Some("1")).count(), 2);
    }

    #[test]
    fn n_sample_cells_share_populations() {
        let t = run_scenario_sweep(&small(), SweepAxis::NSample, &[500.0, 1000.0], 2).unwrap();
        // same population and training split, so the same proxy AUC
        assert_eq!(t.rows[0][1].proxy_auc, t.rows[1][1].proxy_auc);
        assert!(SweepAxis::NSample.apply(&small(), 1.5).is_err());
    }

    #[test]
    fn axis_names_parse() {
        assert_eq!("BETA2".parse::<SweepAxis>().unwrap(), SweepAxis::Beta2);
        assert!("gamma".parse::<SweepAxis>().is_err());
    }
}
