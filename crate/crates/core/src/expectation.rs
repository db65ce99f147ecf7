//! Expected values of the event variable for protected-class rows under the
//! null hypothesis of no bias (`I` independent of `A` given `C` and `X`).
//!
//! The estimate is built in three steps:
//!
//! 1. a propensity model `Pr(A = 1 | X)` is fit on every row;
//! 2. each non-protected row is weighted by the odds `p / (1 - p)` of its
//!    propensity, which reweights the non-protected class towards the
//!    covariate distribution of the protected class;
//! 3. a weighted logistic model of `E[I | C, X]` is fit on the non-protected
//!    rows and evaluated on the protected rows.

use serde::Serialize;

use crate::data::{Column, Dataset, Record};
use crate::error::{Error, Result};
use crate::glm::{irls_weighted_logistic, Design, GlmFit, IrlsOptions};

/// Probability clamp applied before every logit and odds computation.
pub const PROB_EPS: f64 = 1e-6;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fairness {
    Separation,
    Sufficiency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Predictions,
    Recommendations,
}

/// Which score family a variant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    Bernoulli,
    Gaussian,
}

/// One of the four scan variants.
///
/// | variant | event `I` | conditional `C` |
/// |---|---|---|
/// | separation / predictions | `P` | `Y` |
/// | separation / recommendations | `P_bin` | `Y` |
/// | sufficiency / predictions | `Y` | `P` |
/// | sufficiency / recommendations | `Y` | `P_bin` |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "String")]
pub struct ScanVariant {
    pub fairness: Fairness,
    pub target: Target,
}

impl ScanVariant {
    pub const SEPARATION_PREDICTIONS: ScanVariant =
        ScanVariant { fairness: Fairness::Separation, target: Target::Predictions };
    pub const SEPARATION_RECOMMENDATIONS: ScanVariant =
        ScanVariant { fairness: Fairness::Separation, target: Target::Recommendations };
    pub const SUFFICIENCY_PREDICTIONS: ScanVariant =
        ScanVariant { fairness: Fairness::Sufficiency, target: Target::Predictions };
    pub const SUFFICIENCY_RECOMMENDATIONS: ScanVariant =
        ScanVariant { fairness: Fairness::Sufficiency, target: Target::Recommendations };

    pub const ALL: [ScanVariant; 4] = [
        Self::SEPARATION_PREDICTIONS,
        Self::SEPARATION_RECOMMENDATIONS,
        Self::SUFFICIENCY_PREDICTIONS,
        Self::SUFFICIENCY_RECOMMENDATIONS,
    ];

    fn audited(self) -> Column {
        match self.target {
            Target::Predictions => Column::Prediction,
            Target::Recommendations => Column::Recommendation,
        }
    }

    /// The event variable `I`.
    pub fn event(self) -> Column {
        match self.fairness {
            Fairness::Separation => self.audited(),
            Fairness::Sufficiency => Column::Outcome,
        }
    }

    /// The conditional variable `C`.
    pub fn conditional(self) -> Column {
        match self.fairness {
            Fairness::Separation => Column::Outcome,
            Fairness::Sufficiency => self.audited(),
        }
    }

    pub fn family(self) -> FamilyKind {
        if self.event().is_binary() { FamilyKind::Bernoulli } else { FamilyKind::Gaussian }
    }

    /// Short name used on the command line: `sep-pred`, `sep-rec`, `suf-pred`, `suf-rec`.
    pub fn short_name(self) -> &'static str {
        match (self.fairness, self.target) {
            (Fairness::Separation, Target::Predictions) => "sep-pred",
            (Fairness::Separation, Target::Recommendations) => "sep-rec",
            (Fairness::Sufficiency, Target::Predictions) => "suf-pred",
            (Fairness::Sufficiency, Target::Recommendations) => "suf-rec",
        }
    }
}

impl std::str::FromStr for ScanVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScanVariant::ALL
            .into_iter()
            .find(|v| v.short_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}` (expected sep-pred, sep-rec, suf-pred or suf-rec)")))
    }
}

impl From<ScanVariant> for String {
    fn from(v: ScanVariant) -> String {
        v.short_name().to_string()
    }
}

impl std::fmt::Display for ScanVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// How the conditional variable enters the expectation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionalFeature {
    /// raw 0/1 value of a binary column
    Binary(Column),
    /// `log(P / (1 - P))` after clamping
    LogOdds,
}

/// One-hot encoding of selected covariates plus an optional conditional
/// feature. Column 0 is the intercept. Each attribute's reference level is
/// the first value (in vocabulary order) seen in the training rows; values
/// never seen in training also map to the reference level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureEncoder {
    attributes: Vec<usize>,
    /// per attribute, per value: design column, or `None` for reference/unseen
    columns: Vec<Vec<Option<usize>>>,
    /// per attribute, per value: seen in training
    seen: Vec<Vec<bool>>,
    conditional: Option<ConditionalFeature>,
    n_columns: usize,
}

impl FeatureEncoder {
    pub fn fit<'a>(
        ds: &Dataset,
        attributes: &[usize],
        rows: impl Iterator<Item = &'a Record>,
        conditional: Option<ConditionalFeature>,
    ) -> Self {
        let mut seen: Vec<Vec<bool>> = attributes.iter().map(|&a| vec![false; ds.attributes[a].arity()]).collect();
        for r in rows {
            for (k, &a) in attributes.iter().enumerate() {
                seen[k][r.covariates[a]] = true;
            }
        }
        let mut n_columns = 1;
        let columns = seen
            .iter()
            .map(|s| {
                let reference = s.iter().position(|&x| x);
                s.iter()
                    .enumerate()
                    .map(|(v, &present)| {
                        if present && Some(v) != reference {
                            n_columns += 1;
                            Some(n_columns - 1)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        if conditional.is_some() {
            n_columns += 1;
        }
        FeatureEncoder { attributes: attributes.to_vec(), columns, seen, conditional, n_columns }
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn conditional(&self) -> Option<ConditionalFeature> {
        self.conditional
    }

    /// Design row for `r`, and whether any covariate value was unseen in training.
    pub fn encode(&self, r: &Record) -> (Vec<f64>, bool) {
        let mut x = vec![0.0; self.n_columns];
        x[0] = 1.0;
        let mut unseen = false;
        for (k, &a) in self.attributes.iter().enumerate() {
            let v = r.covariates[a];
            if let Some(c) = self.columns[k][v] {
                x[c] = 1.0;
            }
            unseen |= !self.seen[k][v];
        }
        if let Some(cf) = self.conditional {
            x[self.n_columns - 1] = match cf {
                ConditionalFeature::Binary(col) => Dataset::value(r, col),
                ConditionalFeature::LogOdds => logit(Dataset::value(r, Column::Prediction)),
            };
        }
        (x, unseen)
    }
}

/// A fitted logistic model together with its feature encoding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmModel {
    pub encoder: FeatureEncoder,
    pub fit: GlmFit,
    /// Number of training records (after any duplication).
    pub training_records: usize,
}

impl GlmModel {
    pub fn coefficients(&self) -> &[f64] {
        &self.fit.coefficients
    }

    pub fn predict(&self, r: &Record) -> (f64, bool) {
        let (x, unseen) = self.encoder.encode(r);
        (crate::glm::predict_row(&self.fit.coefficients, &x), unseen)
    }
}

/// Settings for the two logistic fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationOptions {
    pub irls: IrlsOptions,
    /// Fit the propensity model on the value-conditioned rows instead of all rows.
    pub propensity_after_filter: bool,
}

impl Default for ExpectationOptions {
    fn default() -> Self {
        ExpectationOptions { irls: IrlsOptions::default(), propensity_after_filter: false }
    }
}

/// `Pr(A = 1 | X)` from covariates only, unit weights, all rows.
pub fn fit_propensity(ds: &Dataset, attributes: &[usize], opts: IrlsOptions) -> Result<GlmModel> {
    ds.require_both_classes()?;
    let encoder = FeatureEncoder::fit(ds, attributes, ds.rows.iter(), None);
    let mut x = Design::new(encoder.n_columns());
    let mut labels = Vec::with_capacity(ds.len());
    for r in &ds.rows {
        x.push_row(&encoder.encode(r).0);
        labels.push(f64::from(u8::from(r.protected)));
    }
    let fit = irls_weighted_logistic(&x, &labels, &vec![1.0; ds.len()], opts)?;
    if !fit.converged {
        log::warn!("propensity fit stopped after {} iterations (gradient {:.3e})", fit.iterations, fit.gradient_norm);
    }
    Ok(GlmModel { encoder, fit, training_records: ds.len() })
}

/// Propensity odds weight `p / (1 - p)` after clamping `p`.
pub fn compute_odds_weights(p: f64) -> f64 {
    let p = clamp_prob(p);
    p / (1.0 - p)
}

/// Weighted model of `E[I | C, X]` fit on the non-protected rows of `ds`.
///
/// `ds` must already be value-conditioned when `z` is given; in that case the
/// conditional variable is constant and is left out of the model.
pub fn fit_expectation_model(
    ds: &Dataset,
    variant: ScanVariant,
    z: Option<bool>,
    propensity: &GlmModel,
    attributes: &[usize],
    opts: IrlsOptions,
) -> Result<GlmModel> {
    fit_expectation_model_weighted(ds, variant, z, attributes, opts, |r| compute_odds_weights(propensity.predict(r).0))
}

pub(crate) fn fit_expectation_model_weighted(
    ds: &Dataset,
    variant: ScanVariant,
    z: Option<bool>,
    attributes: &[usize],
    opts: IrlsOptions,
    weight: impl Fn(&Record) -> f64,
) -> Result<GlmModel> {
    let event = variant.event();
    let conditional = variant.conditional();
    for col in [event, conditional] {
        if !ds.has_column(col) {
            return Err(Error::Schema(format!("variant {variant} needs column {}", col.symbol())));
        }
    }
    let feature = match z {
        Some(_) if !conditional.is_binary() => {
            return Err(Error::Config(format!("variant {variant} conditions on a continuous column; no conditional value allowed")))
        }
        Some(_) => None,
        None if conditional.is_binary() => Some(ConditionalFeature::Binary(conditional)),
        None => Some(ConditionalFeature::LogOdds),
    };

    let training: Vec<&Record> = ds.rows.iter().filter(|r| !r.protected).collect();
    if training.is_empty() {
        return Err(Error::DegenerateFilter("no non-protected rows to learn expectations from".into()));
    }
    let encoder = FeatureEncoder::fit(ds, attributes, training.iter().copied(), feature);
    let mut x = Design::new(encoder.n_columns());
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for r in &training {
        let w = weight(r);
        let row = encoder.encode(r).0;
        let value = Dataset::value(r, event);
        if event.is_binary() {
            x.push_row(&row);
            labels.push(value);
            weights.push(w);
        } else {
            // real-valued event: one positive and one negative record
            x.push_row(&row);
            labels.push(1.0);
            weights.push(w * value);
            x.push_row(&row);
            labels.push(0.0);
            weights.push(w * (1.0 - value));
        }
    }
    let fit = irls_weighted_logistic(&x, &labels, &weights, opts)?;
    if !fit.converged {
        log::warn!("expectation fit stopped after {} iterations (gradient {:.3e})", fit.iterations, fit.gradient_norm);
    }
    Ok(GlmModel { encoder, fit, training_records: labels.len() })
}

/// Clamped `Î` for every protected row, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationSet {
    pub row_ids: Vec<usize>,
    pub values: Vec<f64>,
    /// protected rows with at least one covariate value unseen in training
    pub unseen_rows: usize,
}

pub fn predict_expectations(model: &GlmModel, ds: &Dataset) -> ExpectationSet {
    let mut set = ExpectationSet { row_ids: Vec::new(), values: Vec::new(), unseen_rows: 0 };
    for r in ds.rows.iter().filter(|r| r.protected) {
        let (p, unseen) = model.predict(r);
        set.row_ids.push(r.id);
        set.values.push(clamp_prob(p));
        set.unseen_rows += usize::from(unseen);
    }
    if set.unseen_rows > 0 {
        log::warn!("{} protected rows have covariate values unseen by the expectation model", set.unseen_rows);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Attribute;
    use crate::glm::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn attr(name: &str, values: &[&str]) -> Attribute {
        Attribute { name: name.into(), values: values.iter().map(|s| s.to_string()).collect() }
    }

    fn row(id: usize, cov: Vec<usize>, a: bool, y: bool, p: f64) -> Record {
        Record { id, covariates: cov, protected: a, outcome: y, prediction: Some(p), recommendation: Some(p >= 0.5) }
    }

    #[test]
    fn variant_table() {
        use Column::*;
        let v = ScanVariant::SEPARATION_PREDICTIONS;
        assert_eq!((v.event(), v.conditional(), v.family()), (Prediction, Outcome, FamilyKind::Gaussian));
        let v = ScanVariant::SEPARATION_RECOMMENDATIONS;
        assert_eq!((v.event(), v.conditional(), v.family()), (Recommendation, Outcome, FamilyKind::Bernoulli));
        let v = ScanVariant::SUFFICIENCY_PREDICTIONS;
        assert_eq!((v.event(), v.conditional(), v.family()), (Outcome, Prediction, FamilyKind::Bernoulli));
        let v = ScanVariant::SUFFICIENCY_RECOMMENDATIONS;
        assert_eq!((v.event(), v.conditional(), v.family()), (Outcome, Recommendation, FamilyKind::Bernoulli));
        for v in ScanVariant::ALL {
            assert_eq!(v.short_name().parse::<ScanVariant>().unwrap(), v);
        }
    }

    #[test]
    fn odds_weights() {
        assert_eq!(compute_odds_weights(0.5), 1.0);
        assert!((compute_odds_weights(0.8) - 4.0).abs() < 1e-12);
        let w = compute_odds_weights(1.0);
        assert!((w - (1.0 - PROB_EPS) / PROB_EPS).abs() < 1e-3);
        assert!((w - 1e6).abs() / 1e6 < 1e-5);
    }

    #[test]
    fn propensity_tracks_independent_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5000;
        let rows: Vec<Record> = (0..n)
            .map(|i| row(i, vec![rng.random_range(0..3), rng.random_range(0..2)], rng.random_bool(0.3), false, 0.5))
            .collect();
        let ds = Dataset::new(vec![attr("g", &["a", "b", "c"]), attr("h", &["x", "y"])], rows).unwrap();
        let m = fit_propensity(&ds, &[0, 1], IrlsOptions::default()).unwrap();
        let max_dev = ds.rows.iter().map(|r| (m.predict(r).0 - 0.3).abs()).fold(0.0, f64::max);
        assert!(max_dev < 0.05, "max deviation {max_dev}");
        // intercept + (3-1) + (2-1)
        assert_eq!(m.coefficients().len(), 4);
    }

    #[test]
    fn propensity_follows_deterministic_membership() {
        let rows: Vec<Record> = (0..200).map(|i| row(i, vec![i % 2], i % 2 == 1, false, 0.5)).collect();
        let ds = Dataset::new(vec![attr("g", &["m", "f"])], rows).unwrap();
        let m = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        assert!(m.predict(&ds.rows[1]).0 > 0.99);
        assert!(m.predict(&ds.rows[0]).0 < 0.01);
    }

    #[test]
    fn propensity_needs_both_classes() {
        let ds = Dataset::new(vec![attr("g", &["m"])], vec![row(0, vec![0], true, false, 0.5)]).unwrap();
        assert!(matches!(fit_propensity(&ds, &[0], IrlsOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn separation_for_predictions_duplicates_records() {
        let rows: Vec<Record> = (0..70).map(|i| row(i, vec![i % 2], i >= 50, i % 3 == 0, 0.3)).collect();
        let ds = Dataset::new(vec![attr("g", &["m", "f"])], rows).unwrap();
        let prop = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        let m = fit_expectation_model(&ds, ScanVariant::SEPARATION_PREDICTIONS, None, &prop, &[0], IrlsOptions::default())
            .unwrap();
        assert_eq!(m.training_records, 100);
        assert_eq!(m.encoder.conditional(), Some(ConditionalFeature::Binary(Column::Outcome)));
    }

    #[test]
    fn value_conditional_drops_the_conditional_feature() {
        let rows: Vec<Record> = (0..40).map(|i| row(i, vec![i % 2], i % 4 == 0, i % 3 == 0, 0.2 + 0.6 * ((i % 5) as f64 / 4.0))).collect();
        let ds = Dataset::new(vec![attr("g", &["m", "f"])], rows).unwrap();
        let prop = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        let cond = ds.filter_by_conditional(Column::Recommendation, true).unwrap();
        assert!(cond.rows.iter().all(|r| r.recommendation == Some(true)));
        let m = fit_expectation_model(&cond, ScanVariant::SUFFICIENCY_RECOMMENDATIONS, Some(true), &prop, &[0], IrlsOptions::default())
            .unwrap();
        assert_eq!(m.encoder.conditional(), None);
        assert_eq!(m.coefficients().len(), 2);
        // continuous conditional cannot be value-conditioned
        assert!(fit_expectation_model(&ds, ScanVariant::SUFFICIENCY_PREDICTIONS, Some(true), &prop, &[0], IrlsOptions::default()).is_err());
    }

    #[test]
    fn sufficiency_for_predictions_uses_log_odds() {
        let rows: Vec<Record> = (0..40).map(|i| row(i, vec![i % 2], i % 4 == 0, i % 3 == 0, 0.1 + 0.02 * i as f64)).collect();
        let ds = Dataset::new(vec![attr("g", &["m", "f"])], rows).unwrap();
        let prop = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        let m = fit_expectation_model(&ds, ScanVariant::SUFFICIENCY_PREDICTIONS, None, &prop, &[0], IrlsOptions::default()).unwrap();
        let (x, _) = m.encoder.encode(&ds.rows[5]);
        let p: f64 = 0.2;
        assert!((x[2] - (p / (1.0 - p)).ln()).abs() < 1e-12);
    }

    #[test]
    fn all_zero_labels_push_expectations_to_the_clamp() {
        let rows: Vec<Record> = (0..60).map(|i| row(i, vec![i % 3], i % 4 == 0, false, 0.5)).collect();
        let ds = Dataset::new(vec![attr("g", &["a", "b", "c"])], rows).unwrap();
        let prop = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        let m = fit_expectation_model(&ds, ScanVariant::SUFFICIENCY_RECOMMENDATIONS, None, &prop, &[0], IrlsOptions::default())
            .unwrap();
        let e = predict_expectations(&m, &ds);
        assert_eq!(e.values.len(), 15);
        assert!(e.values.iter().all(|&v| v < 1e-5 && v >= PROB_EPS));
    }

    #[test]
    fn zero_coefficients_predict_one_half() {
        let rows: Vec<Record> = (0..6).map(|i| row(i, vec![i % 2], i < 3, false, 0.5)).collect();
        let ds = Dataset::new(vec![attr("g", &["a", "b"])], rows).unwrap();
        let encoder = FeatureEncoder::fit(&ds, &[0], ds.rows.iter(), None);
        let model = GlmModel {
            fit: GlmFit { coefficients: vec![0.0; encoder.n_columns()], iterations: 0, gradient_norm: 0.0, converged: true },
            encoder,
            training_records: 6,
        };
        let e = predict_expectations(&model, &ds);
        assert_eq!(e.values, vec![0.5; 3]);
    }

    #[test]
    fn two_cell_model_matches_weighted_cell_means() {
        // one binary covariate, unpenalized, no conditional feature -> the
        // saturated model reproduces weighted cell means of I among A=0 rows
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Record> = (0..400)
            .map(|i| {
                let g = rng.random_range(0..2);
                let a = rng.random_bool(if g == 0 { 0.2 } else { 0.6 });
                let y = rng.random_bool(if g == 0 { 0.3 } else { 0.7 });
                row(i, vec![g], a, y, 0.5)
            })
            .collect();
        let ds = Dataset::new(vec![attr("g", &["a", "b"])], rows).unwrap();
        let opts = IrlsOptions { ridge: 0.0, ..Default::default() };
        let prop = fit_propensity(&ds, &[0], opts).unwrap();
        let y0 = ds.filter_by_conditional(Column::Recommendation, true).unwrap();
        let m = fit_expectation_model(&y0, ScanVariant::SUFFICIENCY_RECOMMENDATIONS, Some(true), &prop, &[0], opts).unwrap();
        let e = predict_expectations(&m, &y0);
        for g in 0..2 {
            let (num, den) = y0
                .rows
                .iter()
                .filter(|r| !r.protected && r.covariates[0] == g)
                .map(|r| (compute_odds_weights(prop.predict(r).0), f64::from(u8::from(r.outcome))))
                .fold((0.0, 0.0), |(n, d), (w, y)| (n + w * y, d + w));
            let cell_mean = num / den;
            for (id, v) in e.row_ids.iter().zip(&e.values) {
                if y0.rows.iter().find(|r| r.id == *id).unwrap().covariates[0] == g {
                    assert!((v - cell_mean).abs() < 1e-8, "{v} vs {cell_mean}");
                }
            }
        }
    }

    #[test]
    fn unit_weights_equal_unweighted_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Record> = (0..300)
            .map(|i| row(i, vec![rng.random_range(0..3)], rng.random_bool(0.4), rng.random_bool(0.5), rng.random()))
            .collect();
        let ds = Dataset::new(vec![attr("g", &["a", "b", "c"])], rows).unwrap();
        let flat_prop = GlmModel {
            encoder: FeatureEncoder::fit(&ds, &[0], ds.rows.iter(), None),
            fit: GlmFit { coefficients: vec![0.0; 3], iterations: 0, gradient_norm: 0.0, converged: true },
            training_records: 0,
        };
        for v in ScanVariant::ALL {
            let weighted = fit_expectation_model(&ds, v, None, &flat_prop, &[0], IrlsOptions::default()).unwrap();
            let plain = fit_expectation_model_weighted(&ds, v, None, &[0], IrlsOptions::default(), |_| 1.0).unwrap();
            for (a, b) in weighted.coefficients().iter().zip(plain.coefficients()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duplicated_records_match_binary_fit_for_binary_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Record> = (0..300)
            .map(|i| {
                let p = if rng.random_bool(0.4) { 1.0 } else { 0.0 };
                row(i, vec![rng.random_range(0..3)], rng.random_bool(0.3), rng.random_bool(0.5), p)
            })
            .collect();
        let ds = Dataset::new(vec![attr("g", &["a", "b", "c"])], rows).unwrap();
        let prop = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        let real = fit_expectation_model(&ds, ScanVariant::SEPARATION_PREDICTIONS, None, &prop, &[0], IrlsOptions::default()).unwrap();
        let binary =
            fit_expectation_model(&ds, ScanVariant::SEPARATION_RECOMMENDATIONS, None, &prop, &[0], IrlsOptions::default()).unwrap();
        for (a, b) in real.coefficients().iter().zip(binary.coefficients()) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn unseen_value_falls_back_to_reference() {
        // value "c" only occurs among protected rows
        let mut rows: Vec<Record> = (0..40).map(|i| row(i, vec![i % 2], i % 5 == 0, i % 3 == 0, 0.5)).collect();
        rows.push(row(40, vec![2], true, true, 0.5));
        let ds = Dataset::new(vec![attr("g", &["a", "b", "c"])], rows).unwrap();
        let prop = fit_propensity(&ds, &[0], IrlsOptions::default()).unwrap();
        let m = fit_expectation_model(&ds, ScanVariant::SUFFICIENCY_RECOMMENDATIONS, Some(false), &prop, &[0], IrlsOptions::default());
        // all P_bin are true, so z=0 conditioning is invalid on unfiltered data; use None instead
        drop(m);
        let m = fit_expectation_model(&ds, ScanVariant::SEPARATION_RECOMMENDATIONS, None, &prop, &[0], IrlsOptions::default()).unwrap();
        let e = predict_expectations(&m, &ds);
        assert_eq!(e.unseen_rows, 1);
        let reference = m.predict(&Record { covariates: vec![0], ..ds.rows[40].clone() }).0;
        let unseen = m.predict(&ds.rows[40]).0;
        assert!((reference - unseen).abs() < 1e-15);
        let _ = sigmoid(0.0);
    }
}
