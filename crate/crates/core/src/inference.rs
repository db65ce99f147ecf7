//! Permutation test for the significance of the detected subgroup.
//!
//! Each replicate shuffles the protected indicator across all rows and reruns
//! the whole audit, so the null distribution accounts for the search over
//! subgroups as well as for model fitting.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{run_audit, AuditConfig, AuditResult};
use crate::rng;

/// Redraws allowed when a shuffle leaves a conditioned class empty.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationReport {
    pub observed: f64,
    /// maximum score of each null replicate, in replicate order
    pub null_scores: Vec<f64>,
    pub p_value: f64,
    pub alpha: f64,
    /// empirical `1 - alpha` quantile of the null scores
    pub critical_value: f64,
    pub reject: bool,
    /// seed actually used by each replicate (after any redraws)
    pub seeds: Vec<u64>,
    pub redraws: usize,
}

/// `(1 + #{null >= observed}) / (n + 1)`.
pub fn p_value(observed: f64, null_scores: &[f64]) -> f64 {
    let k = null_scores.iter().filter(|&&s| s >= observed).count();
    (1 + k) as f64 / (null_scores.len() + 1) as f64
}

/// Null score at 1-based rank `ceil((1 - alpha) n)` in ascending order.
pub fn critical_value(null_scores: &[f64], alpha: f64) -> f64 {
    let mut s = null_scores.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

/// Shuffle of the protected column for replicate seed `seed`.
pub fn permuted_protected(ds: &Dataset, seed: u64) -> Vec<bool> {
    let mut a: Vec<bool> = ds.rows.iter().map(|r| r.protected).collect();
    a.shuffle(&mut rng::stream(seed, 0));
    a
}

fn replicate(ds: &Dataset, cfg: &AuditConfig, seed: u64, index: usize) -> Result<(f64, u64, usize)> {
    let mut s = rng::derive(seed, index as u64);
    for attempt in 0..=MAX_REDRAWS {
        let null = ds.with_protected(&permuted_protected(ds, s));
        match run_audit(&null, cfg) {
            Ok(r) => return Ok((r.score, s, attempt)),
            Err(Error::DegenerateFilter(msg)) => {
                log::info!("replicate {index}: {msg}; redrawing");
                s = rng::derive(s, attempt as u64 + 1);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateFilter(format!("replicate {index} still degenerate after {MAX_REDRAWS} redraws")))
}

/// Permutation test of `observed` (typically from [`run_audit`] on `ds` with `cfg`).
pub fn permutation_test(
    ds: &Dataset,
    cfg: &AuditConfig,
    observed: &AuditResult,
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<PermutationReport> {
    if n_perm == 0 {
        return Err(Error::Config("n_perm must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let reps: Vec<(f64, u64, usize)> =
        (0..n_perm).into_par_iter().map(|i| replicate(ds, cfg, seed, i)).collect::<Result<_>>()?;
    let null_scores: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let critical = critical_value(&null_scores, alpha);
    Ok(PermutationReport {
        observed: observed.score,
        p_value: p_value(observed.score, &null_scores),
        alpha,
        critical_value: critical,
        reject: observed.score > critical,
        seeds: reps.iter().map(|r| r.1).collect(),
        redraws: reps.iter().map(|r| r.2).sum(),
        null_scores,
    })
}

/// Audit `ds` and test the result in one call.
pub fn audit_with_significance(
    ds: &Dataset,
    cfg: &AuditConfig,
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<(AuditResult, PermutationReport)> {
    let observed = run_audit(ds, cfg)?;
    let report = permutation_test(ds, cfg, &observed, n_perm, alpha, seed)?;
    Ok((observed, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p_value_examples() {
        let null: Vec<f64> = (0..99).map(|i| i as f64).collect();
        assert_eq!(p_value(1000.0, &null), 0.01);
        assert_eq!(p_value(0.0, &null), 1.0);
    }

    #[test]
    fn critical_value_rank() {
        let null: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(critical_value(&null, 0.05), 95.0);
        let null: Vec<f64> = (1..=99).map(|i| i as f64).collect();
        // ceil(0.95 * 99) = 95
        assert_eq!(critical_value(&null, 0.05), 95.0);
    }

    proptest! {
        #[test]
        fn p_value_in_unit_interval(null in prop::collection::vec(0.0f64..10.0, 1..50), obs in 0.0f64..12.0) {
            let p = p_value(obs, &null);
            prop_assert!(p > 0.0 && p <= 1.0);
            let mut more = null.clone();
            more.push(obs + 1.0);
            let k = null.iter().filter(|&&s| s >= obs).count();
            prop_assert_eq!(p_value(obs, &more), (k + 2) as f64 / (null.len() + 2) as f64);
        }

        #[test]
        fn reject_iff_above_critical(null in prop::collection::vec(0.0f64..10.0, 1..50), obs in 0.0f64..12.0) {
            let c = critical_value(&null, 0.05);
            let above = null.iter().filter(|&&s| s >= obs).count();
            // exceeding the critical value means fewer than alpha*n null scores reach obs
            if obs > c {
                prop_assert!((above as f64) <= 0.05 * null.len() as f64 + 1e-9);
            }
        }
    }
}
