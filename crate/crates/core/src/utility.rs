//! Expected utility of a risk threshold and per-group utility reports.
//!
//! `EU = p0 (1 - τ0) r + p1 (1 - τ1)` weighs true negatives by the utility
//! ratio `r` against true positives. `r` is a user-supplied parameter; the
//! threshold (through τ0 = FPR and τ1 = FNR) is what gets optimized. The
//! admissible range `p1/p0 < r < P1/(1 - P1)` is only checked to produce a
//! warning, since a linear function of `r` has no interior maximum and the
//! range is informative rather than binding.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bias::Interval;
use crate::data::AuditDataset;
use crate::error::{Error, Result};
use crate::metrics::{weighted_metric, MetricKind, MetricSpec};
use crate::parallel::map_indexed;
use crate::sensitivity::{run_sensitivity, ErrorCorrelation, RangeSpec, SensitivityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityInputs {
    pub p0: f64,
    pub p1: f64,
    /// False positive rate.
    pub tau0: f64,
    /// False negative rate.
    pub tau1: f64,
    /// Mean predicted value among positive cases; enables the admissibility
    /// check on `r`.
    pub p_mean_pos: Option<f64>,
    pub r: f64,
}

impl UtilityInputs {
    pub fn new(p1: f64, tau0: f64, tau1: f64, r: f64) -> Self {
        Self {
            p0: 1.0 - p1,
            p1,
            tau0,
            tau1,
            p_mean_pos: None,
            r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p0", self.p0),
            ("p1", self.p1),
            ("tau0", self.tau0),
            ("tau1", self.tau1),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if (self.p0 + self.p1 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "class proportions must sum to 1, got {} + {}",
                self.p0, self.p1
            )));
        }
        if let Some(pm) = self.p_mean_pos {
            if !(0.0..=1.0).contains(&pm) {
                return Err(Error::InvalidParameter(format!("P1 = {pm} outside [0, 1]")));
            }
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "utility ratio r = {} must be positive",
                self.r
            )));
        }
        Ok(())
    }

    /// The open interval `(p1/p0, P1/(1-P1))`, when `P1` is known.
    pub fn admissible_r(&self) -> Option<(f64, f64)> {
        self.p_mean_pos.map(|pm| (self.p1 / self.p0, pm / (1.0 - pm)))
    }

    /// A warning when `r` falls outside the admissible interval.
    pub fn admissibility_warning(&self) -> Option<String> {
        let (lo, hi) = self.admissible_r()?;
        (!(self.r > lo && self.r < hi))
            .then(|| format!("utility ratio r = {} outside admissible interval ({lo}, {hi})", self.r))
    }
}

/// `p0 (1 - τ0) r + p1 (1 - τ1)`
pub fn expected_utility(inputs: &UtilityInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(eu(inputs.p0, inputs.p1, inputs.tau0, inputs.tau1, inputs.r))
}

fn eu(p0: f64, p1: f64, tau0: f64, tau1: f64, r: f64) -> f64 {
    p0 * (1.0 - tau0) * r + p1 * (1.0 - tau1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub expected_utility: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Expected utility of classifying `score > threshold` as positive.
pub fn utility_at(scores: &[f64], outcomes: &[bool], threshold: f64, r: f64) -> Result<ThresholdChoice> {
    let (n0, n1) = class_counts(scores, outcomes)?;
    let fp = scores
        .iter()
        .zip(outcomes)
        .filter(|(&s, &y)| !y && s > threshold)
        .count();
    let fneg = scores
        .iter()
        .zip(outcomes)
        .filter(|(&s, &y)| y && s <= threshold)
        .count();
    Ok(choice(threshold, n0, n1, fp, fneg, r))
}

fn choice(threshold: f64, n0: usize, n1: usize, fp: usize, fneg: usize, r: f64) -> ThresholdChoice {
    let n = (n0 + n1) as f64;
    let fpr = fp as f64 / n0 as f64;
    let fnr = fneg as f64 / n1 as f64;
    ThresholdChoice {
        threshold,
        expected_utility: eu(n0 as f64 / n, n1 as f64 / n, fpr, fnr, r),
        fpr,
        fnr,
    }
}

fn class_counts(scores: &[f64], outcomes: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != outcomes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores but {} outcomes",
            scores.len(),
            outcomes.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("scores contain NaN".into()));
    }
    let n1 = outcomes.iter().filter(|&&y| y).count();
    let n0 = outcomes.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidParameter(
            "threshold selection needs both outcome classes".into(),
        ));
    }
    Ok((n0, n1))
}

/// EU-maximizing threshold over `{0, 1}` and the midpoints between
/// consecutive distinct scores. Ties go to the smaller threshold.
pub fn select_threshold(scores: &[f64], outcomes: &[bool], r: f64) -> Result<ThresholdChoice> {
    let (n0, n1) = class_counts(scores, outcomes)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "utility ratio r = {r} must be positive"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut candidates = vec![0.0];
    candidates.extend(order.windows(2).filter_map(|w| {
        let (a, b) = (scores[w[0]], scores[w[1]]);
        (a < b).then(|| a + (b - a) / 2.0)
    }));
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // walk candidates upward, moving records with score <= t to the negative side
    let mut next = 0;
    let (mut fp, mut fneg) = (n0, 0);
    let mut best: Option<ThresholdChoice> = None;
    for t in candidates {
        while next < order.len() && scores[order[next]] <= t {
            if outcomes[order[next]] {
                fneg += 1;
            } else {
                fp -= 1;
            }
            next += 1;
        }
        let c = choice(t, n0, n1, fp, fneg, r);
        if best.is_none_or(|b| c.expected_utility > b.expected_utility) {
            best = Some(c);
        }
    }
    Ok(best.expect("candidate set is never empty"))
}

/// Per-group inputs for a utility report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupUtilityParams {
    /// Prevalence of the condition in the group, `p1`.
    pub prevalence: f64,
    /// `E[I(A=a) | Y=1]`, the FNR base rate.
    pub base_rate_pos: f64,
    /// `E[I(A=a) | Y=0]`, the FPR base rate.
    pub base_rate_neg: f64,
}

impl GroupUtilityParams {
    /// Derives the base rates from group and overall prevalence and the
    /// group's population share.
    pub fn from_population(group_prevalence: f64, overall_prevalence: f64, share: f64) -> Result<Self> {
        if !(overall_prevalence > 0.0 && overall_prevalence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "overall prevalence {overall_prevalence} must lie in (0, 1)"
            )));
        }
        if !(0.0..=1.0).contains(&group_prevalence) || !(0.0..=1.0).contains(&share) {
            return Err(Error::InvalidParameter(
                "group prevalence and share must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            prevalence: group_prevalence,
            base_rate_pos: share * group_prevalence / overall_prevalence,
            base_rate_neg: share * (1.0 - group_prevalence) / (1.0 - overall_prevalence),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReportConfig {
    /// Relative error levels; `0.0` gives the uncorrected estimate.
    pub levels: Vec<f64>,
    pub r: f64,
    pub bootstrap_reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub resample: bool,
}

impl Default for UtilityReportConfig {
    fn default() -> Self {
        Self {
            levels: vec![0.05, 0.10, 0.20],
            r: 1.0,
            bootstrap_reps: 1000,
            alpha: 0.05,
            seed: 0,
            resample: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateIntervals {
    pub plausible: Interval,
    pub sensitivity: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeReport {
    pub mode: ErrorCorrelation,
    pub fpr: RateIntervals,
    pub fnr: RateIntervals,
    pub eu: RateIntervals,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: f64,
    pub correlated: ModeReport,
    pub uncorrelated: ModeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupUtilityReport {
    pub group: String,
    pub params: GroupUtilityParams,
    pub weighted_fpr: f64,
    pub weighted_fnr: f64,
    pub expected_utility: f64,
    pub levels: Vec<LevelReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityReport {
    pub config: UtilityReportConfig,
    pub groups: Vec<GroupUtilityReport>,
}

/// EU is decreasing in both error rates, so the upper ends of the rate
/// intervals give the lower end of the EU interval and vice versa.
pub fn eu_interval(p1: f64, fpr: Interval, fnr: Interval, r: f64) -> Interval {
    let p0 = 1.0 - p1;
    Interval::new(eu(p0, p1, fpr.hi, fnr.hi, r), eu(p0, p1, fpr.lo, fnr.lo, r))
}

/// π-weighted mean score among positive cases of `group`.
fn weighted_mean_positive_score(dataset: &AuditDataset, gi: usize) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for rec in dataset.records().iter().filter(|r| r.y) {
        let p = rec.group_probs[gi];
        num += p * rec.score.unwrap_or(if rec.y_hat { 1.0 } else { 0.0 });
        den += p;
    }
    (den > 0.0).then(|| num / den)
}

fn group_report(
    dataset: &AuditDataset,
    group: &str,
    params: GroupUtilityParams,
    config: &UtilityReportConfig,
) -> Result<GroupUtilityReport> {
    let fpr_spec = MetricSpec::of(MetricKind::Fpr);
    let fnr_spec = MetricSpec::of(MetricKind::Fnr);
    let weighted_fpr = weighted_metric(dataset, &fpr_spec, group)?.value;
    let weighted_fnr = weighted_metric(dataset, &fnr_spec, group)?.value;
    let inputs = UtilityInputs {
        p_mean_pos: weighted_mean_positive_score(dataset, dataset.group_index(group)?),
        ..UtilityInputs::new(params.prevalence, weighted_fpr, weighted_fnr, config.r)
    };
    let expected_utility = expected_utility(&inputs)?;
    let warnings = inputs.admissibility_warning().into_iter().collect();

    let run = |spec: &MetricSpec, base_rate: f64, level: f64, mode: ErrorCorrelation| -> Result<RateIntervals> {
        let mut cfg = SensitivityConfig::new(RangeSpec::Relative { level }, base_rate);
        cfg.bootstrap_reps = config.bootstrap_reps;
        cfg.alpha = config.alpha;
        cfg.seed = config.seed;
        cfg.resample = config.resample;
        cfg.correlation = mode;
        let res = run_sensitivity(dataset, spec, group, &cfg)?;
        Ok(RateIntervals {
            plausible: res.plausible_mean_interval,
            sensitivity: res.sensitivity_interval,
        })
    };
    let mode_report = |level: f64, mode: ErrorCorrelation| -> Result<ModeReport> {
        let fpr = run(&fpr_spec, params.base_rate_neg, level, mode)?;
        let fnr = run(&fnr_spec, params.base_rate_pos, level, mode)?;
        let p1 = params.prevalence;
        Ok(ModeReport {
            mode,
            fpr,
            fnr,
            eu: RateIntervals {
                plausible: eu_interval(p1, fpr.plausible, fnr.plausible, config.r),
                sensitivity: eu_interval(p1, fpr.sensitivity, fnr.sensitivity, config.r),
            },
        })
    };
    let levels = config
        .levels
        .iter()
        .map(|&level| {
            Ok(LevelReport {
                level,
                correlated: mode_report(level, ErrorCorrelation::Correlated)?,
                uncorrelated: mode_report(level, ErrorCorrelation::Uncorrelated)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GroupUtilityReport {
        group: group.to_string(),
        params,
        weighted_fpr,
        weighted_fnr,
        expected_utility,
        levels,
        warnings,
    })
}

/// Builds the utility report for `groups`. Every group needs an entry in
/// `params`; the error lists all groups that lack one.
pub fn group_utility_report(
    dataset: &AuditDataset,
    groups: &[String],
    params: &BTreeMap<String, GroupUtilityParams>,
    config: &UtilityReportConfig,
) -> Result<UtilityReport> {
    if !(config.r > 0.0 && config.r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "utility ratio r = {} must be positive",
            config.r
        )));
    }
    for g in groups {
        dataset.group_index(g)?;
    }
    let missing: Vec<&str> = groups
        .iter()
        .filter(|g| !params.contains_key(*g))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPrevalence(missing.join(", ")));
    }
    let reports = map_indexed(groups.len(), |i| {
        group_report(dataset, &groups[i], params[&groups[i]], config)
    });
    Ok(UtilityReport {
        config: config.clone(),
        groups: reports.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// Flat CSV: one row per group, level, mode and quantity (`fpr`, `fnr`, `eu`).
pub fn write_utility_csv<W: Write>(report: &UtilityReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "level",
        "mode",
        "quantity",
        "estimate",
        "plausible_lo",
        "plausible_hi",
        "sensitivity_lo",
        "sensitivity_hi",
    ])?;
    for g in &report.groups {
        for lv in &g.levels {
            for m in [&lv.correlated, &lv.uncorrelated] {
                let mode = match m.mode {
                    ErrorCorrelation::Correlated => "correlated",
                    ErrorCorrelation::Uncorrelated => "uncorrelated",
                };
                for (q, est, iv) in [
                    ("fpr", g.weighted_fpr, m.fpr),
                    ("fnr", g.weighted_fnr, m.fnr),
                    ("eu", g.expected_utility, m.eu),
                ] {
                    w.write_record([
                        g.group.clone(),
                        lv.level.to_string(),
                        mode.to_string(),
                        q.to_string(),
                        est.to_string(),
                        iv.plausible.lo.to_string(),
                        iv.plausible.hi.to_string(),
                        iv.sensitivity.lo.to_string(),
                        iv.sensitivity.hi.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AuditRecord;
    use crate::stats::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn worked_example() {
        let v = expected_utility(&UtilityInputs::new(0.2, 0.1, 0.3, 0.5)).unwrap();
        assert!((v - 0.50).abs() < 1e-12);
        let ceiling = expected_utility(&UtilityInputs::new(0.2, 0.0, 0.0, 0.5)).unwrap();
        assert!((ceiling - (0.8 * 0.5 + 0.2)).abs() < 1e-12);
        assert_eq!(expected_utility(&UtilityInputs::new(0.2, 1.0, 1.0, 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn inadmissible_r_only_warns() {
        let mut inputs = UtilityInputs::new(0.2, 0.1, 0.3, 0.1);
        inputs.p_mean_pos = Some(0.6);
        assert!(expected_utility(&inputs).is_ok());
        assert!(inputs.admissibility_warning().is_some());
        inputs.r = 1.0;
        assert!(inputs.admissibility_warning().is_none());
        inputs.r = 0.0;
        assert!(expected_utility(&inputs).is_err());
    }

    #[test]
    fn separated_classes_pick_the_gap_midpoint() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8];
        let y = [false, false, false, true, true];
        let c = select_threshold(&scores, &y, 1.0).unwrap();
        assert!((c.threshold - 0.5).abs() < 1e-15);
        assert_eq!((c.fpr, c.fnr), (0.0, 0.0));
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(select_threshold(&[0.2, 0.4], &[true, true], 1.0).is_err());
    }

    #[test]
    fn ties_go_to_the_smaller_threshold() {
        // t = 0.3 and t = 1 both give EU 2/3
        let c = select_threshold(&[0.2, 0.4, 0.4], &[false, true, false], 1.0).unwrap();
        let again = utility_at(&[0.2, 0.4, 0.4], &[false, true, false], c.threshold, 1.0).unwrap();
        assert_eq!(c.expected_utility, again.expected_utility);
        assert!((c.threshold - 0.3).abs() < 1e-12);
        assert!((c.expected_utility - 2.0 / 3.0).abs() < 1e-12);
    }

    fn random_instance(seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = stream_rng(seed, 0);
        loop {
            let scores: Vec<f64> = (0..50).map(|_| rng.random()).collect();
            let y: Vec<bool> = scores.iter().map(|&s| rng.random::<f64>() < s).collect();
            if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
                return (scores, y);
            }
        }
    }

    #[test]
    fn threshold_nondecreasing_in_r() {
        for seed in 0..20 {
            let (s, y) = random_instance(seed);
            let mut prev = f64::NEG_INFINITY;
            for r in [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0] {
                let t = select_threshold(&s, &y, r).unwrap().threshold;
                assert!(t >= prev, "seed {seed}, r {r}: {t} < {prev}");
                prev = t;
            }
        }
    }

    proptest! {
        #[test]
        fn partition_invariant_under_monotone_transform(seed in 0u64..500, r in 0.1f64..5.0) {
            let (s, y) = random_instance(seed);
            let t1 = select_threshold(&s, &y, r).unwrap();
            let cubed: Vec<f64> = s.iter().map(|v| v.powi(3)).collect();
            let t2 = select_threshold(&cubed, &y, r).unwrap();
            let part1: Vec<bool> = s.iter().map(|&v| v > t1.threshold).collect();
            let part2: Vec<bool> = cubed.iter().map(|&v| v > t2.threshold).collect();
            prop_assert_eq!(part1, part2);
            prop_assert_eq!(t1.expected_utility, t2.expected_utility);
        }

        #[test]
        fn eu_monotone_in_rates_and_r(p1 in 0.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0, r in 0.01f64..10.0) {
            let base = expected_utility(&UtilityInputs::new(p1, a, b, r)).unwrap();
            prop_assert!(expected_utility(&UtilityInputs::new(p1, (a + 0.1).min(1.0), b, r)).unwrap() <= base + 1e-15);
            prop_assert!(expected_utility(&UtilityInputs::new(p1, a, (b + 0.1).min(1.0), r)).unwrap() <= base + 1e-15);
            prop_assert!(expected_utility(&UtilityInputs::new(p1, a, b, r * 2.0)).unwrap() >= base - 1e-15);
        }
    }

    fn two_group_cohort(seed: u64, n: usize) -> AuditDataset {
        let mut rng = stream_rng(seed, 1);
        let records = (0..n)
            .map(|_| {
                let score: f64 = rng.random();
                let y = rng.random::<f64>() < score;
                let p: f64 = rng.random();
                AuditRecord::from_score(y, score, 0.5, vec![1.0 - p, p])
            })
            .collect();
        AuditDataset::new(vec!["a".into(), "b".into()], records, true).unwrap()
    }

    fn params() -> BTreeMap<String, GroupUtilityParams> {
        let p = GroupUtilityParams::from_population(0.5, 0.5, 0.5).unwrap();
        [("a".to_string(), p), ("b".to_string(), p)].into_iter().collect()
    }

    #[test]
    fn missing_prevalence_names_the_group() {
        let ds = two_group_cohort(0, 100);
        let mut p = params();
        p.remove("b");
        let err =
            group_utility_report(&ds, &["a".into(), "b".into()], &p, &UtilityReportConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingPrevalence(ref g) if g == "b"), "{err}");
    }

    #[test]
    fn zero_level_collapses_to_point() {
        let ds = two_group_cohort(1, 400);
        let cfg = UtilityReportConfig {
            levels: vec![0.0],
            resample: false,
            ..Default::default()
        };
        let rep = group_utility_report(&ds, &["a".into()], &params(), &cfg).unwrap();
        let g = &rep.groups[0];
        let eu = g.levels[0].correlated.eu.plausible;
        assert!((eu.lo - g.expected_utility).abs() < 1e-12 && (eu.hi - g.expected_utility).abs() < 1e-12);
    }

    #[test]
    fn correlated_contains_uncorrelated_and_groups_overlap() {
        let ds = two_group_cohort(2, 600);
        let cfg = UtilityReportConfig {
            bootstrap_reps: 200,
            ..Default::default()
        };
        let rep = group_utility_report(&ds, &["a".into(), "b".into()], &params(), &cfg).unwrap();
        for g in &rep.groups {
            for lv in &g.levels {
                let (c, u) = (&lv.correlated, &lv.uncorrelated);
                for (ci, ui) in [(c.fpr, u.fpr), (c.fnr, u.fnr), (c.eu, u.eu)] {
                    assert!(ci.plausible.contains_interval(&ui.plausible));
                    assert!(ci.sensitivity.contains_interval(&ui.sensitivity));
                }
            }
        }
        for (la, lb) in rep.groups[0].levels.iter().zip(&rep.groups[1].levels) {
            assert!(la
                .correlated
                .eu
                .sensitivity
                .intersect(&lb.correlated.eu.sensitivity)
                .is_some());
        }
        let mut buf = Vec::new();
        write_utility_csv(&rep, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 3 * 2 * 3);
    }
}
