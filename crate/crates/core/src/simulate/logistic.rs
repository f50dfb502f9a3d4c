//! Logistic regression fitted by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::expit;

pub const MAX_ITERATIONS: usize = 100;
/// Convergence threshold on the max-norm of the mean log-likelihood gradient.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

const SEPARATION_LOGLIK: f64 = 1e-6;

fn ln_expit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per feature.
    pub coefficients: Vec<f64>,
    /// Standard errors from the inverse observed information at the optimum.
    pub standard_errors: Vec<f64>,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn linear_predictor(&self, features: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(features)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    /// Predicted probability in `(0, 1)`.
    pub fn score(&self, features: &[f64]) -> f64 {
        expit(self.linear_predictor(features))
    }
}

/// Fits `P(y = 1 | x) = expit(b0 + b·x)`. Every row must have the same
/// number of features (possibly zero, for an intercept-only model).
pub fn fit_logistic<R: AsRef<[f64]>>(rows: &[R], y: &[bool]) -> Result<LogisticModel> {
    if rows.is_empty() || rows.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "training set needs matching non-empty rows and outcomes ({} vs {})",
            rows.len(),
            y.len()
        )));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::InvalidParameter(
            "training outcomes must contain both classes".into(),
        ));
    }
    let p = rows[0].as_ref().len() + 1;
    if rows.iter().any(|r| r.as_ref().len() + 1 != p) {
        return Err(Error::InvalidParameter("ragged feature rows".into()));
    }
    let n = rows.len() as f64;
    let mut beta = DVector::<f64>::zeros(p);
    let mut design = vec![0.0; p];

    for iteration in 0..=MAX_ITERATIONS {
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut loglik = 0.0;
        for (row, &yi) in rows.iter().zip(y) {
            design[0] = 1.0;
            design[1..].copy_from_slice(row.as_ref());
            let eta: f64 = design.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            let mu = expit(eta);
            let w = mu * (1.0 - mu);
            let resid = f64::from(u8::from(yi)) - mu;
            loglik += if yi { ln_expit(eta) } else { ln_expit(-eta) };
            for j in 0..p {
                grad[j] += design[j] * resid;
                let wj = w * design[j];
                for k in 0..=j {
                    info[(j, k)] += wj * design[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(k, j)] = info[(j, k)];
            }
        }
        // a perfectly separated sample drives the deviance to zero while the
        // gradient vanishes, so it has to be caught before the convergence test
        if loglik / n > -SEPARATION_LOGLIK {
            return Err(Error::Convergence(
                "outcomes are perfectly separated by the features".into(),
            ));
        }
        let converged = grad.amax() / n < GRADIENT_TOLERANCE;
        let chol = info.clone().cholesky().ok_or_else(|| {
            Error::Convergence(format!(
                "information matrix is singular at iteration {iteration} (perfect separation or collinear features)"
            ))
        })?;
        if converged {
            let cov = chol.inverse();
            return Ok(LogisticModel {
                coefficients: beta.iter().copied().collect(),
                standard_errors: (0..p).map(|j| cov[(j, j)].sqrt()).collect(),
                iterations: iteration,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let step = chol.solve(&grad);
        beta += step;
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 1e6) {
            return Err(Error::Convergence("coefficients diverged (perfect separation?)".into()));
        }
    }
    Err(Error::Convergence(format!(
        "no convergence after {MAX_ITERATIONS} iterations"
    )))
}
