//! One-call audit of a dataset: every requested metric for every requested
//! group, with whatever bias diagnostics the available labels allow.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::{
    assumption1_check, bias_bound, bound_is_sharp, deltas_from, epsilon_bounds_from, epsilon_sample_from, masses,
    population_mass_ratio, same_sign_condition, sample_mass_ratio, DeltaPair, EpsilonBounds, EpsilonPair,
    LOOSE_BOUND_WARNING,
};
use crate::data::AuditDataset;
use crate::error::Result;
use crate::metrics::{marginal_metric, MetricEstimate, MetricKind, MetricSpec};

/// Population values for one `(metric, group)` pair, used when the sample
/// carries no true group labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRates {
    /// `E[I(A=a) | h1 = 1]`
    pub base_rate: f64,
    /// `E[h1]`
    pub h1_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// Mass ratio from true labels in the sample.
    Sample,
    /// Mass ratio denominator from population rates.
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAudit {
    pub metric: MetricKind,
    pub group: String,
    pub weighted: MetricEstimate,
    pub marginal: f64,
    pub oracle: Option<MetricEstimate>,
    /// `weighted - oracle`
    pub empirical_bias: Option<f64>,
    pub eps_sample: Option<EpsilonPair>,
    pub eps_bounds: EpsilonBounds,
    pub deltas: Option<DeltaPair>,
    pub assumption1: Option<bool>,
    pub same_sign: Option<bool>,
    pub bound: Option<f64>,
    pub bound_source: Option<BoundSource>,
    pub warnings: Vec<String>,
}

/// Audits one metric for one group. Labelled data yields the full set of
/// diagnostics; otherwise the bound needs `population`.
pub fn audit_metric(
    dataset: &AuditDataset,
    spec: &MetricSpec,
    group: &str,
    population: Option<PopulationRates>,
) -> Result<MetricAudit> {
    let m = masses(dataset, spec, group)?;
    let weighted_value = m.weighted().ok_or_else(|| crate::error::Error::UndefinedMetric {
        metric: spec.kind.to_string(),
        group: group.to_string(),
        cell: spec.denominator_cell(),
    })?;
    let weighted = MetricEstimate {
        value: weighted_value,
        numerator_mass: m.prob_num,
        denominator_mass: m.prob_h1(),
        estimator: crate::metrics::Estimator::Weighted,
    };
    let marginal = marginal_metric(dataset, spec)?.value;
    let eps_bounds = epsilon_bounds_from(&m, spec, group)?;
    let mut warnings = Vec::new();
    if !bound_is_sharp(spec.kind) {
        warnings.push(LOOSE_BOUND_WARNING.to_string());
    }

    let mut audit = MetricAudit {
        metric: spec.kind,
        group: group.to_string(),
        weighted,
        marginal,
        oracle: None,
        empirical_bias: None,
        eps_sample: None,
        eps_bounds,
        deltas: None,
        assumption1: None,
        same_sign: None,
        bound: None,
        bound_source: None,
        warnings,
    };

    if m.labelled {
        let oracle = crate::metrics::oracle_metric(dataset, spec, group)?;
        let eps = epsilon_sample_from(&m, spec, group)?;
        let d = deltas_from(&m)?;
        audit.empirical_bias = Some(weighted_value - oracle.value);
        audit.oracle = Some(oracle);
        audit.eps_sample = Some(eps);
        audit.deltas = Some(d);
        audit.assumption1 = Some(assumption1_check(&d));
        audit.same_sign = Some(same_sign_condition(&eps));
        audit.bound = Some(bias_bound(weighted_value, sample_mass_ratio(&m)?)?);
        audit.bound_source = Some(BoundSource::Sample);
    } else if let Some(p) = population {
        let ratio = population_mass_ratio(&m, p.base_rate, p.h1_rate)?;
        audit.bound = Some(bias_bound(weighted_value, ratio)?);
        audit.bound_source = Some(BoundSource::Population);
        audit
            .warnings
            .push("bound assumes |δ| <= |δ*|, which cannot be checked without true group labels".into());
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n: usize,
    pub labelled: bool,
    pub entries: Vec<MetricAudit>,
}

/// Audits every `(metric, group)` combination, metrics outermost.
/// `population` is keyed by `(metric, group)`.
pub fn audit_dataset(
    dataset: &AuditDataset,
    metrics: &[MetricKind],
    groups: &[String],
    population: &BTreeMap<(MetricKind, String), PopulationRates>,
) -> Result<AuditReport> {
    let mut entries = Vec::with_capacity(metrics.len() * groups.len());
    for &kind in metrics {
        let spec = MetricSpec::of(kind);
        for g in groups {
            let pop = population.get(&(kind, g.clone())).copied();
            entries.push(audit_metric(dataset, &spec, g, pop)?);
        }
    }
    Ok(AuditReport {
        n: dataset.n(),
        labelled: dataset.has_labels(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AuditRecord;
    use crate::error::Error;
    use crate::fixtures::d4;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn d4_fnr_report() {
        let a = audit_metric(&d4(), &MetricSpec::of(MetricKind::Fnr), "1", None).unwrap();
        assert!(close(a.weighted.value, 0.625));
        assert!(close(a.oracle.unwrap().value, 0.5));
        assert!(close(a.empirical_bias.unwrap(), 0.125));
        assert!(close(a.bound.unwrap(), 0.325));
        assert_eq!(a.assumption1, Some(true));
        assert_eq!(a.bound_source, Some(BoundSource::Sample));
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn unlabelled_needs_population_rates_for_bound() {
        let records: Vec<AuditRecord> = d4()
            .records()
            .iter()
            .map(|r| AuditRecord::new(r.y, r.y_hat, r.group_probs.clone()))
            .collect();
        let ds = AuditDataset::new(vec!["1".into()], records, false).unwrap();
        let spec = MetricSpec::of(MetricKind::Fnr);
        let a = audit_metric(&ds, &spec, "1", None).unwrap();
        assert!(a.oracle.is_none() && a.bound.is_none() && a.assumption1.is_none());
        // base_rate 2/3 and h1_rate 3/4 reproduce the sample ratio 1.6/2
        let a = audit_metric(
            &ds,
            &spec,
            "1",
            Some(PopulationRates {
                base_rate: 2.0 / 3.0,
                h1_rate: 0.75,
            }),
        )
        .unwrap();
        assert!(close(a.bound.unwrap(), 0.325));
        assert_eq!(a.bound_source, Some(BoundSource::Population));
    }

    #[test]
    fn ppv_carries_loose_bound_warning() {
        let a = audit_metric(&d4(), &MetricSpec::of(MetricKind::Ppv), "1", None).unwrap();
        assert_eq!(a.warnings, vec![LOOSE_BOUND_WARNING.to_string()]);
    }

    #[test]
    fn undefined_metric_names_cell() {
        let ds = AuditDataset::new(vec!["1".into()], vec![AuditRecord::new(false, false, vec![0.5])], false).unwrap();
        let err = audit_dataset(&ds, &[MetricKind::Fnr], &["1".into()], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric { .. }), "{err}");
    }
}
