//! Small datasets shared by unit tests, integration tests and benches.

use rand::Rng;

use crate::data::{AuditDataset, AuditRecord};

/// The four-record toy dataset: `(Y, Ŷ, π, A)` =
/// `(1,0,0.8,1), (1,1,0.6,1), (1,0,0.2,0), (0,1,0.5,1)`, audited for group "1".
pub fn d4() -> AuditDataset {
    let rows = [
        (true, false, 0.8, "1"),
        (true, true, 0.6, "1"),
        (true, false, 0.2, "0"),
        (false, true, 0.5, "1"),
    ];
    let records = rows
        .iter()
        .map(|&(y, yh, p, a)| AuditRecord::new(y, yh, vec![p]).with_true_group(a))
        .collect();
    AuditDataset::new(vec!["1".into()], records, false).expect("valid toy dataset")
}

/// A labelled single-group dataset with uniform probabilities and random
/// outcomes, predictions and memberships. Group "1" is audited.
pub fn random_labelled<R: Rng>(rng: &mut R, n: usize) -> AuditDataset {
    let p_y: f64 = rng.random_range(0.2..0.8);
    let p_yh: f64 = rng.random_range(0.2..0.8);
    let records = (0..n)
        .map(|_| {
            let prob: f64 = rng.random();
            let member = rng.random_bool(prob.clamp(0.05, 0.95));
            AuditRecord::new(rng.random_bool(p_y), rng.random_bool(p_yh), vec![prob]).with_true_group(if member {
                "1"
            } else {
                "0"
            })
        })
        .collect();
    AuditDataset::new(vec!["1".into()], records, false).expect("valid random dataset")
}
