//! Synthetic population with a known protected group.
//!
//! Each record draws a proxy covariate `Z ~ N(-0.4, 1)`, outcome covariates
//! `X ~ N((0, 1, -1), diag(0.5))`, and a latent pair `(Q1, Q2)` that is
//! bivariate normal around `(Z, Z + beta2)` with variances 20 and covariance
//! `beta3`. The true membership probability is `expit(Q1)`, the proxy
//! probability handed to the auditor is `π = expit(Q2)`, and the outcome is
//! `Y ~ Bernoulli(expit(-0.2 + Z + X1 + X2 + X3 + beta1 A))`.
//!
//! `beta1` adds dependence between `Y` and `A` beyond what the proxy explains,
//! `beta2` shifts the proxy probabilities away from the truth, and `beta3`
//! controls how well the proxy ranks true members (20 is a perfect ranking,
//! 0 leaves only the shared dependence on `Z`).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{AuditDataset, AuditRecord};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::simulate::logistic::{fit_logistic, LogisticModel};
use crate::stats::expit;

pub const LATENT_VARIANCE: f64 = 20.0;
const Z_MEAN: f64 = -0.4;
const X_MEANS: [f64; 3] = [0.0, 1.0, -1.0];
const X_VARIANCE: f64 = 0.5;
const OUTCOME_INTERCEPT: f64 = -0.2;

/// How the true group label is realized from `expit(Q1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    /// `A ~ Bernoulli(expit(Q1))`
    #[default]
    Bernoulli,
    /// `A = I(expit(Q1) > 0.5)`
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub n_population: usize,
    pub n_sample: usize,
    pub n_train: usize,
    pub threshold: f64,
    pub seed: u64,
    pub replications: usize,
    pub membership: Membership,
    pub metric: MetricKind,
    /// Audited group, 0 or 1.
    pub group: u8,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            beta1: 0.25,
            beta2: 0.0,
            beta3: 20.0,
            n_population: 50_000,
            n_sample: 2_000,
            n_train: 25_000,
            threshold: 0.5,
            seed: 0,
            replications: 100,
            membership: Membership::Bernoulli,
            metric: MetricKind::Fnr,
            group: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=LATENT_VARIANCE).contains(&self.beta3) {
            return Err(Error::InvalidParameter(format!(
                "beta3 = {} must lie in [0, {LATENT_VARIANCE}] for a valid covariance matrix",
                self.beta3
            )));
        }
        if !self.beta1.is_finite() || !self.beta2.is_finite() {
            return Err(Error::InvalidParameter("beta1 and beta2 must be finite".into()));
        }
        if self.n_population == 0 || self.n_sample == 0 || self.n_train == 0 {
            return Err(Error::InvalidParameter(
                "population, sample and training sizes must be positive".into(),
            ));
        }
        if self.n_train + self.n_sample > self.n_population {
            return Err(Error::InvalidParameter(format!(
                "n_train ({}) + n_sample ({}) exceeds n_population ({})",
                self.n_train, self.n_sample, self.n_population
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be positive".into()));
        }
        if self.group > 1 {
            return Err(Error::InvalidParameter("simulated groups are 0 and 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPopulation {
    pub z: Vec<f64>,
    pub x: Vec<[f64; 3]>,
    /// `A = 1`
    pub member: Vec<bool>,
    /// `expit(Q1)`
    pub true_prob: Vec<f64>,
    /// `π = expit(Q2)`, the proxy probability of `A = 1`
    pub prob: Vec<f64>,
    pub y: Vec<bool>,
    /// Empty until [`SimPopulation::apply_predictor`] runs.
    pub score: Vec<f64>,
    pub y_hat: Vec<bool>,
}

/// Draws a population from `rng`. Validates `config` first.
pub fn generate_population<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<SimPopulation> {
    config.validate()?;
    let n = config.n_population;
    let sd_latent = LATENT_VARIANCE.sqrt();
    // Cholesky factor of [[20, b3], [b3, 20]]
    let l21 = config.beta3 / sd_latent;
    let l22 = (LATENT_VARIANCE - l21 * l21).max(0.0).sqrt();
    let sd_x = X_VARIANCE.sqrt();

    let mut pop = SimPopulation {
        z: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        member: Vec::with_capacity(n),
        true_prob: Vec::with_capacity(n),
        prob: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        score: Vec::new(),
        y_hat: Vec::new(),
    };
    for _ in 0..n {
        let z = Z_MEAN + rng.sample::<f64, _>(StandardNormal);
        let x = X_MEANS.map(|m| m + sd_x * rng.sample::<f64, _>(StandardNormal));
        let u1: f64 = rng.sample(StandardNormal);
        let u2: f64 = rng.sample(StandardNormal);
        let q1 = z + sd_latent * u1;
        let q2 = z + config.beta2 + l21 * u1 + l22 * u2;
        let true_prob = expit(q1);
        let draw_a: f64 = rng.random();
        let member = match config.membership {
            Membership::Bernoulli => draw_a < true_prob,
            Membership::Threshold => true_prob > 0.5,
        };
        let eta = OUTCOME_INTERCEPT + z + x.iter().sum::<f64>() + config.beta1 * f64::from(u8::from(member));
        let draw_y: f64 = rng.random();
        pop.z.push(z);
        pop.x.push(x);
        pop.member.push(member);
        pop.true_prob.push(true_prob);
        pop.prob.push(expit(q2));
        pop.y.push(draw_y < expit(eta));
    }
    Ok(pop)
}

impl SimPopulation {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Predictor inputs `(Z, X1, X2, X3)` of record `i`.
    pub fn features(&self, i: usize) -> [f64; 4] {
        let x = self.x[i];
        [self.z[i], x[0], x[1], x[2]]
    }

    /// Share of records with `A = 1`.
    pub fn group_share(&self) -> f64 {
        self.member.iter().filter(|&&a| a).count() as f64 / self.len() as f64
    }

    /// Fits the outcome model on the records in `train`.
    pub fn train_predictor(&self, train: &[usize]) -> Result<LogisticModel> {
        let rows: Vec<[f64; 4]> = train.iter().map(|&i| self.features(i)).collect();
        let y: Vec<bool> = train.iter().map(|&i| self.y[i]).collect();
        fit_logistic(&rows, &y)
    }

    /// Scores every record and dichotomizes at `threshold`.
    pub fn apply_predictor(&mut self, model: &LogisticModel, threshold: f64) {
        self.score = (0..self.len()).map(|i| model.score(&self.features(i))).collect();
        self.y_hat = self.score.iter().map(|&s| s > threshold).collect();
    }

    /// Membership probability and indicator for `group` (0 or 1).
    pub fn group_view(&self, i: usize, group: u8) -> (f64, bool) {
        if group == 1 {
            (self.prob[i], self.member[i])
        } else {
            (1.0 - self.prob[i], !self.member[i])
        }
    }

    /// Labelled audit dataset over `indices`, with exhaustive groups "0"/"1".
    /// Requires [`SimPopulation::apply_predictor`] to have run.
    pub fn dataset(&self, indices: &[usize]) -> Result<AuditDataset> {
        if self.y_hat.len() != self.len() {
            return Err(Error::InvalidParameter("population has not been scored".into()));
        }
        let records = indices
            .iter()
            .map(|&i| AuditRecord {
                y: self.y[i],
                y_hat: self.y_hat[i],
                score: Some(self.score[i]),
                group_probs: vec![1.0 - self.prob[i], self.prob[i]],
                true_group: Some(if self.member[i] { "1" } else { "0" }.to_string()),
            })
            .collect();
        AuditDataset::new(vec!["0".into(), "1".into()], records, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::stream_rng;

    #[test]
    fn beta3_above_variance_is_rejected() {
        let cfg = SimConfig {
            beta3: 20.5,
            ..Default::default()
        };
        let err = generate_population(&cfg, &mut stream_rng(0, 0)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(m) if m.contains("covariance")));
    }

    #[test]
    fn oversized_splits_are_rejected() {
        let cfg = SimConfig {
            n_population: 100,
            n_train: 60,
            n_sample: 50,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn same_seed_same_population() {
        let cfg = SimConfig {
            n_population: 500,
            n_train: 200,
            n_sample: 100,
            ..Default::default()
        };
        let a = generate_population(&cfg, &mut stream_rng(5, 2)).unwrap();
        let b = generate_population(&cfg, &mut stream_rng(5, 2)).unwrap();
        assert_eq!(a, b);
        let c = generate_population(&cfg, &mut stream_rng(5, 3)).unwrap();
        assert_ne!(a.z, c.z);
    }

    #[test]
    fn probabilities_are_interior() {
        let cfg = SimConfig {
            n_population: 2000,
            n_train: 1000,
            n_sample: 500,
            ..Default::default()
        };
        let mut pop = generate_population(&cfg, &mut stream_rng(1, 0)).unwrap();
        assert!(pop.prob.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let train: Vec<usize> = (0..1000).collect();
        let model = pop.train_predictor(&train).unwrap();
        pop.apply_predictor(&model, 0.5);
        assert!(pop.score.iter().all(|&s| s > 0.0 && s < 1.0));
        assert!(pop.score.iter().zip(&pop.y_hat).all(|(&s, &yh)| yh == (s > 0.5)));
        let ds = pop.dataset(&[0, 1, 2]).unwrap();
        assert!(ds.is_exhaustive() && ds.has_labels());
    }

    #[test]
    fn threshold_membership_is_deterministic_in_q1() {
        let cfg = SimConfig {
            n_population: 1000,
            n_train: 500,
            n_sample: 100,
            membership: Membership::Threshold,
            ..Default::default()
        };
        let pop = generate_population(&cfg, &mut stream_rng(2, 0)).unwrap();
        assert!(pop.true_prob.iter().zip(&pop.member).all(|(&p, &a)| a == (p > 0.5)));
    }
}
