//! End-to-end audit: propensity fit, optional value-conditioning, expectation
//! fit, and subgroup scan.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{Column, Dataset, Record};
use crate::error::{Error, Result};
use crate::expectation::{
    fit_expectation_model, fit_propensity, predict_expectations, ExpectationOptions, ScanVariant,
};
use crate::scan::{scan, ScanData, ScanOptions, ScanRow, ScoreFamily, Subgroup};
use crate::score::Direction;

/// Everything needed to run one audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditConfig {
    pub variant: ScanVariant,
    /// Restrict to rows whose conditional column equals this value.
    pub conditional_value: Option<bool>,
    pub scan: ScanOptions,
    /// Attributes searched over; `None` means all covariates.
    pub scan_attributes: Option<Vec<String>>,
    /// Attributes used by the propensity and expectation models; `None` means all covariates.
    pub expectation_attributes: Option<Vec<String>>,
    pub expectation: ExpectationOptions,
}

impl AuditConfig {
    pub fn new(variant: ScanVariant, direction: Direction) -> Self {
        AuditConfig {
            variant,
            conditional_value: None,
            scan: ScanOptions { direction, ..Default::default() },
            scan_attributes: None,
            expectation_attributes: None,
            expectation: ExpectationOptions::default(),
        }
    }
}

/// Row count and mean event value of a group of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupRate {
    pub count: usize,
    /// mean of the event variable; `None` for an empty group
    pub event_rate: Option<f64>,
}

impl GroupRate {
    fn of<'a>(rows: impl Iterator<Item = &'a Record>, event: Column) -> Self {
        let (n, s) = rows.fold((0usize, 0.0), |(n, s), r| (n + 1, s + Dataset::value(r, event)));
        GroupRate { count: n, event_rate: (n > 0).then(|| s / n as f64) }
    }
}

/// Event rates of the detected subgroup against its non-protected
/// counterpart (same covariate values, `A = 0`), plus the classes overall.
/// When the scan is value-conditioned these are conditional rates, e.g.
/// false positive rates for a recommendations scan with `Y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub subgroup_protected: GroupRate,
    pub subgroup_non_protected: GroupRate,
    pub class_protected: GroupRate,
    pub class_non_protected: GroupRate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditResult {
    pub variant: ScanVariant,
    pub direction: Direction,
    pub conditional_value: Option<bool>,
    /// attribute -> included values, for attributes not fully included
    pub subgroup: BTreeMap<String, Vec<String>>,
    pub score: f64,
    /// maximising `q` (binary events) or `μ` (probability events)
    pub theta: f64,
    pub iteration: usize,
    pub family: ScoreFamily,
    /// ids of the protected rows in the subgroup
    pub members: Vec<usize>,
    pub rows_scanned: usize,
    pub protected_rows_scanned: usize,
    pub comparison: Comparison,
    pub unseen_rows: usize,
    pub propensity_converged: bool,
    pub expectation_converged: bool,
    #[serde(skip)]
    pub raw_subgroup: Subgroup,
}

fn resolve(ds: &Dataset, names: &Option<Vec<String>>, what: &str) -> Result<Vec<usize>> {
    match names {
        None => Ok((0..ds.attributes.len()).collect()),
        Some(names) => {
            if names.is_empty() {
                return Err(Error::Config(format!("{what} attribute list is empty")));
            }
            names
                .iter()
                .map(|n| ds.attribute_index(n).ok_or_else(|| Error::Config(format!("unknown {what} attribute `{n}`"))))
                .collect()
        }
    }
}

/// Check that `cfg` can run on `ds` without fitting anything.
pub fn validate(ds: &Dataset, cfg: &AuditConfig) -> Result<()> {
    let v = cfg.variant;
    for col in [v.event(), v.conditional()] {
        if !ds.has_column(col) {
            return Err(Error::Schema(format!("variant {v} needs column {}, which the dataset lacks", col.symbol())));
        }
    }
    if cfg.conditional_value.is_some() && !v.conditional().is_binary() {
        return Err(Error::Config(format!("variant {v} conditions on the continuous column P; conditional value must be none")));
    }
    if cfg.scan.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if !(cfg.scan.penalty >= 0.0 && cfg.scan.penalty.is_finite()) {
        return Err(Error::Config(format!("penalty must be a non-negative number, got {}", cfg.scan.penalty)));
    }
    resolve(ds, &cfg.scan_attributes, "scan")?;
    resolve(ds, &cfg.expectation_attributes, "expectation")?;
    Ok(())
}

/// Run the whole audit on `ds`.
pub fn run_audit(ds: &Dataset, cfg: &AuditConfig) -> Result<AuditResult> {
    validate(ds, cfg)?;
    ds.require_both_classes()?;
    let scan_attrs = resolve(ds, &cfg.scan_attributes, "scan")?;
    let model_attrs = resolve(ds, &cfg.expectation_attributes, "expectation")?;
    let variant = cfg.variant;

    let conditioned = match cfg.conditional_value {
        Some(z) => ds.filter_by_conditional(variant.conditional(), z)?,
        None => ds.clone(),
    };
    let propensity_source = if cfg.expectation.propensity_after_filter { &conditioned } else { ds };
    let propensity = fit_propensity(propensity_source, &model_attrs, cfg.expectation.irls)?;
    let model = fit_expectation_model(&conditioned, variant, cfg.conditional_value, &propensity, &model_attrs, cfg.expectation.irls)?;
    let expected = predict_expectations(&model, &conditioned);

    let event = variant.event();
    let protected: Vec<&Record> = conditioned.rows.iter().filter(|r| r.protected).collect();
    let rows: Vec<ScanRow> = protected
        .iter()
        .zip(&expected.values)
        .map(|(r, &e)| ScanRow {
            id: r.id,
            cell: scan_attrs.iter().map(|&a| r.covariates[a]).collect(),
            event: Dataset::value(r, event),
            expectation: e,
        })
        .collect();
    let attributes: Vec<_> = scan_attrs.iter().map(|&a| ds.attributes[a].clone()).collect();
    let data = ScanData::new(attributes, variant.family(), &rows)?;
    let out = scan(&data, &cfg.scan)?;

    let in_subgroup = |r: &Record| {
        let cell: Vec<usize> = scan_attrs.iter().map(|&a| r.covariates[a]).collect();
        out.subgroup.contains_cell(&cell)
    };
    let comparison = Comparison {
        subgroup_protected: GroupRate::of(conditioned.rows.iter().filter(|r| r.protected && in_subgroup(r)), event),
        subgroup_non_protected: GroupRate::of(conditioned.rows.iter().filter(|r| !r.protected && in_subgroup(r)), event),
        class_protected: GroupRate::of(conditioned.rows.iter().filter(|r| r.protected), event),
        class_non_protected: GroupRate::of(conditioned.rows.iter().filter(|r| !r.protected), event),
    };

    Ok(AuditResult {
        variant,
        direction: cfg.scan.direction,
        conditional_value: cfg.conditional_value,
        subgroup: out.subgroup.describe(data.attributes()),
        score: out.score,
        theta: out.theta,
        iteration: out.iteration,
        family: data.family(),
        members: out.members,
        rows_scanned: conditioned.len(),
        protected_rows_scanned: rows.len(),
        comparison,
        unseen_rows: expected.unseen_rows,
        propensity_converged: propensity.fit.converged,
        expectation_converged: model.fit.converged,
        raw_subgroup: out.subgroup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Attribute;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn biased_dataset(seed: u64) -> Dataset {
        // protected rows with g = "b" get recommended more often at equal outcome
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attributes = vec![
            Attribute { name: "g".into(), values: vec!["a".into(), "b".into(), "c".into()] },
            Attribute { name: "h".into(), values: vec!["x".into(), "y".into()] },
        ];
        let rows = (0..3000)
            .map(|id| {
                let g = rng.random_range(0..3);
                let h = rng.random_range(0..2);
                let a = rng.random_bool(0.4);
                let y = rng.random_bool(0.4);
                let base = if y { 0.6 } else { 0.2 };
                let p: f64 = if a && g == 1 { (base + 0.35f64).min(0.95) } else { base };
                let rec = rng.random_bool(p);
                Record { id, covariates: vec![g, h], protected: a, outcome: y, prediction: Some(p), recommendation: Some(rec) }
            })
            .collect();
        Dataset::new(attributes, rows).unwrap()
    }

    #[test]
    fn finds_the_injected_cell() {
        let ds = biased_dataset(1);
        let mut cfg = AuditConfig::new(ScanVariant::SEPARATION_RECOMMENDATIONS, Direction::Positive);
        cfg.conditional_value = Some(false);
        cfg.scan.iterations = 10;
        let res = run_audit(&ds, &cfg).unwrap();
        assert_eq!(res.subgroup.get("g"), Some(&vec!["b".to_string()]));
        assert!(!res.subgroup.contains_key("h"));
        let c = res.comparison;
        assert!(c.subgroup_protected.event_rate.unwrap() > c.subgroup_non_protected.event_rate.unwrap() + 0.2);
        assert_eq!(c.subgroup_protected.count, res.members.len());
        assert!(res.score > 10.0);
    }

    #[test]
    fn gaussian_variant_runs() {
        let ds = biased_dataset(2);
        let mut cfg = AuditConfig::new(ScanVariant::SEPARATION_PREDICTIONS, Direction::Positive);
        cfg.scan.iterations = 5;
        let res = run_audit(&ds, &cfg).unwrap();
        assert!(matches!(res.family, ScoreFamily::Gaussian { .. }));
        assert_eq!(res.subgroup.get("g"), Some(&vec!["b".to_string()]));
    }

    #[test]
    fn config_errors() {
        let ds = biased_dataset(3);
        let mut cfg = AuditConfig::new(ScanVariant::SUFFICIENCY_PREDICTIONS, Direction::Negative);
        cfg.conditional_value = Some(true);
        assert!(matches!(run_audit(&ds, &cfg), Err(Error::Config(_))));
        cfg.conditional_value = None;
        cfg.scan_attributes = Some(vec!["nope".into()]);
        assert!(matches!(run_audit(&ds, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let mut ds = biased_dataset(4);
        for r in &mut ds.rows {
            r.prediction = None;
        }
        let cfg = AuditConfig::new(ScanVariant::SEPARATION_PREDICTIONS, Direction::Positive);
        assert!(matches!(run_audit(&ds, &cfg), Err(Error::Schema(_))));
    }
}
