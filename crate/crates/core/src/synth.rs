//! Semi-synthetic data: outcomes and predictions generated from categorical
//! covariates, bias injected into a chosen subgroup of the protected class,
//! and sweeps measuring how well each scan variant recovers that subgroup.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Attribute, Dataset, Record};
use crate::error::{Error, Result};
use crate::expectation::{Fairness, ScanVariant};
use crate::glm::sigmoid;
use crate::pipeline::{run_audit, AuditConfig};
use crate::rng;
use crate::scan::Subgroup;
use crate::score::Direction;

/// Categorical covariates to build synthetic datasets on.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub attributes: Vec<Attribute>,
    /// value index per attribute, per row
    pub rows: Vec<Vec<usize>>,
}

impl CovariateTable {
    pub fn new(attributes: Vec<Attribute>, rows: Vec<Vec<usize>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if attributes.len() < 2 {
            return Err(Error::Precondition("need at least two attributes (one becomes the protected class)".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != attributes.len() || r.iter().zip(&attributes).any(|(&v, a)| v >= a.arity()) {
                return Err(Error::Precondition(format!("covariate row {i} does not match the attributes")));
            }
        }
        Ok(CovariateTable { attributes, rows })
    }

    /// Independent uniform values; attribute `k` is named `x{k}` with values `v0, v1, ...`.
    pub fn random(arities: &[usize], n: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, 0);
        let attributes = arities
            .iter()
            .enumerate()
            .map(|(k, &a)| Attribute { name: format!("x{k}"), values: (0..a).map(|v| format!("v{v}")).collect() })
            .collect();
        let rows = (0..n).map(|_| arities.iter().map(|&a| rng.random_range(0..a)).collect()).collect();
        CovariateTable::new(attributes, rows)
    }
}

/// Generator settings. Noise parameters are standard deviations on the log-odds scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthSpec {
    pub sigma_true: f64,
    pub sigma_predict: f64,
    /// standard deviation of the per-value weights
    pub weight_sd: f64,
    pub mu_sep: f64,
    pub mu_suf: f64,
    pub delta: f64,
    pub n_bias: usize,
    pub p_bias: f64,
    pub threshold: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sigma_true: 0.6,
            sigma_predict: 0.2,
            weight_sd: 0.2,
            mu_sep: 0.0,
            mu_suf: 0.0,
            delta: 0.0,
            n_bias: 2,
            p_bias: 0.5,
            threshold: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("sigma_true", self.sigma_true), ("sigma_predict", self.sigma_predict), ("weight_sd", self.weight_sd)];
        for (k, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be a non-negative number, got {v}")));
            }
        }
        for (k, v) in [("mu_sep", self.mu_sep), ("mu_suf", self.mu_suf), ("delta", self.delta)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{k} must be finite")));
            }
        }
        if self.n_bias == 0 {
            return Err(Error::Config("n_bias must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_bias) {
            return Err(Error::Config(format!("p_bias must lie in [0, 1], got {}", self.p_bias)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub true_log_odds: Vec<f64>,
    pub predicted_log_odds: Vec<f64>,
    /// per row: `A = 1` and inside the bias subgroup
    pub in_bias: Vec<bool>,
    pub protected_attribute: String,
    pub protected_value: String,
    pub threshold: f64,
    pub seed: u64,
    /// number of outcome redraws so far
    pub epoch: u64,
}

impl SynthDataset {
    /// Ids of protected rows in the bias subgroup.
    pub fn biased_ids(&self) -> Vec<usize> {
        self.dataset.rows.iter().filter(|r| self.in_bias[r.id]).map(|r| r.id).collect()
    }
}

// uniform in [0, 1) keyed by (seed, row, epoch)
fn keyed_uniform(seed: u64, row: usize, epoch: u64) -> f64 {
    let k = rng::derive(rng::derive(seed, 0x4F55_5443_4F4D_4500 ^ epoch), row as u64);
    (k >> 11) as f64 / (1u64 << 53) as f64
}

fn draw_outcome(seed: u64, row: usize, epoch: u64, log_odds: f64) -> bool {
    keyed_uniform(seed, row, epoch) < sigmoid(log_odds)
}

/// Draw a dataset: choose a protected attribute and value at random, remove
/// that attribute from the covariates, and generate outcomes and predictions.
pub fn generate_dataset(table: &CovariateTable, spec: &SynthSpec, seed: u64) -> Result<SynthDataset> {
    spec.validate()?;
    let mut pick = rng::stream(seed, 0);
    let mut choice = None;
    for _ in 0..10 {
        let a = pick.random_range(0..table.attributes.len());
        let v = pick.random_range(0..table.attributes[a].arity());
        let n1 = table.rows.iter().filter(|r| r[a] == v).count();
        if n1 > 0 && n1 < table.rows.len() {
            choice = Some((a, v));
            break;
        }
    }
    let (pa, pv) = choice.ok_or_else(|| Error::DegenerateFilter("no protected attribute/value split found in 10 draws".into()))?;

    let kept: Vec<usize> = (0..table.attributes.len()).filter(|&a| a != pa).collect();
    let attributes: Vec<Attribute> = kept.iter().map(|&a| table.attributes[a].clone()).collect();

    let weight = Normal::new(0.0, spec.weight_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut wrng = rng::stream(seed, 1);
    let weights: Vec<Vec<f64>> =
        attributes.iter().map(|a| (0..a.arity()).map(|_| weight.sample(&mut wrng)).collect()).collect();

    let e_true = Normal::new(0.0, spec.sigma_true).map_err(|e| Error::Config(e.to_string()))?;
    let e_pred = Normal::new(0.0, spec.sigma_predict).map_err(|e| Error::Config(e.to_string()))?;
    let mut nrng = rng::stream(seed, 2);

    let mut true_lo = Vec::with_capacity(table.rows.len());
    let mut pred_lo = Vec::with_capacity(table.rows.len());
    let mut records = Vec::with_capacity(table.rows.len());
    for (id, row) in table.rows.iter().enumerate() {
        let covariates: Vec<usize> = kept.iter().map(|&a| row[a]).collect();
        let base: f64 = covariates.iter().zip(&weights).map(|(&v, w)| w[v]).sum();
        let t = base + e_true.sample(&mut nrng);
        let p = t + e_pred.sample(&mut nrng);
        let prediction = sigmoid(p);
        records.push(Record {
            id,
            covariates,
            protected: row[pa] == pv,
            outcome: draw_outcome(seed, id, 0, t),
            prediction: Some(prediction),
            recommendation: Some(prediction >= spec.threshold),
        });
        true_lo.push(t);
        pred_lo.push(p);
    }
    let n = records.len();
    Ok(SynthDataset {
        dataset: Dataset::new(attributes, records)?,
        true_log_odds: true_lo,
        predicted_log_odds: pred_lo,
        in_bias: vec![false; n],
        protected_attribute: table.attributes[pa].name.clone(),
        protected_value: table.attributes[pa].values[pv].clone(),
        threshold: spec.threshold,
        seed,
        epoch: 0,
    })
}

/// Choose `n_bias` attributes and include each of their values with
/// probability `p_bias` (redrawing empty sets); other attributes are fully
/// included. With `p_bias = 0` a single value is chosen uniformly.
pub fn select_bias_subgroup(attributes: &[Attribute], n_bias: usize, p_bias: f64, rng: &mut impl Rng) -> Result<Subgroup> {
    if n_bias == 0 || n_bias > attributes.len() {
        return Err(Error::Config(format!("n_bias must lie in 1..={}, got {n_bias}", attributes.len())));
    }
    let idx: Vec<usize> = (0..attributes.len()).collect();
    let chosen: Vec<usize> = idx.choose_multiple(rng, n_bias).copied().collect();
    let mut sub = Subgroup::all(attributes);
    for a in chosen {
        let k = attributes[a].arity();
        sub.masks[a] = if p_bias <= 0.0 {
            let mut m = vec![false; k];
            m[rng.random_range(0..k)] = true;
            m
        } else {
            loop {
                let m: Vec<bool> = (0..k).map(|_| rng.random_bool(p_bias)).collect();
                if m.iter().any(|&b| b) {
                    break m;
                }
            }
        };
    }
    Ok(sub)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    /// raise predicted log-odds
    MuSep,
    /// lower true log-odds and redraw outcomes
    MuSuf,
    /// raise both and redraw outcomes
    Delta,
}

impl std::str::FromStr for BiasKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu_sep" => Ok(BiasKind::MuSep),
            "mu_suf" => Ok(BiasKind::MuSuf),
            "delta" => Ok(BiasKind::Delta),
            other => Err(Error::Config(format!("unknown bias kind `{other}` (expected mu_sep, mu_suf or delta)"))),
        }
    }
}

/// Apply a bias of `magnitude` to protected rows inside `s_bias`. Other rows
/// are returned unchanged; a zero magnitude returns an identical dataset.
pub fn inject_bias(sd: &SynthDataset, s_bias: &Subgroup, kind: BiasKind, magnitude: f64) -> SynthDataset {
    let mut out = sd.clone();
    for r in &out.dataset.rows {
        if r.protected && s_bias.contains_cell(&r.covariates) {
            out.in_bias[r.id] = true;
        }
    }
    if magnitude == 0.0 {
        return out;
    }
    let redraw = kind != BiasKind::MuSep;
    if redraw {
        out.epoch += 1;
    }
    for r in out.dataset.rows.iter_mut() {
        if !out.in_bias[r.id] {
            continue;
        }
        let i = r.id;
        match kind {
            BiasKind::MuSep => out.predicted_log_odds[i] += magnitude,
            BiasKind::MuSuf => out.true_log_odds[i] -= magnitude,
            BiasKind::Delta => {
                out.true_log_odds[i] += magnitude;
                out.predicted_log_odds[i] += magnitude;
            }
        }
        let p = sigmoid(out.predicted_log_odds[i]);
        r.prediction = Some(p);
        r.recommendation = Some(p >= out.threshold);
        if redraw {
            r.outcome = draw_outcome(out.seed, i, out.epoch, out.true_log_odds[i]);
        }
    }
    out
}

/// `|a ∩ b| / |a ∪ b|` for sets of row ids; two empty sets give 1.
pub fn jaccard_accuracy(detected: &[usize], truth: &[usize]) -> f64 {
    use std::collections::BTreeSet;
    let a: BTreeSet<usize> = detected.iter().copied().collect();
    let b: BTreeSet<usize> = truth.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Direction in which each variant looks for injected bias: predictions
/// pushed up (separation) and outcomes pushed down (sufficiency).
pub fn default_direction(variant: ScanVariant) -> Direction {
    match variant.fairness {
        Fairness::Separation => Direction::Positive,
        Fairness::Sufficiency => Direction::Negative,
    }
}

/// One experiment arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arm {
    pub id: String,
    pub spec: SynthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub arms: Vec<Arm>,
    pub variants: Vec<ScanVariant>,
    pub n_datasets: usize,
    pub seed: u64,
    pub iterations: usize,
    pub penalty: f64,
}

/// Summary for one arm and variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub arm: String,
    pub variant: ScanVariant,
    pub spec: SynthSpec,
    pub mean_jaccard: f64,
    /// half-width of the normal-approximation 95% interval
    pub ci_half_width: f64,
    pub n: usize,
    /// per-dataset Jaccard (`None` where the scan failed)
    pub jaccard: Vec<Option<f64>>,
    pub scores: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, 1.96 * (var / n).sqrt())
}

/// Build dataset `index` of an arm. The same index gives the same base data
/// and bias subgroup in every arm.
pub fn arm_dataset(table: &CovariateTable, spec: &SynthSpec, seed: u64, index: usize) -> Result<SynthDataset> {
    let s = rng::derive(seed, index as u64);
    let base = generate_dataset(table, spec, s)?;
    let mut brng = rng::stream(s, 3);
    let s_bias = select_bias_subgroup(&base.dataset.attributes, spec.n_bias, spec.p_bias, &mut brng)?;
    let d = inject_bias(&base, &s_bias, BiasKind::Delta, spec.delta);
    let d = inject_bias(&d, &s_bias, BiasKind::MuSep, spec.mu_sep);
    Ok(inject_bias(&d, &s_bias, BiasKind::MuSuf, spec.mu_suf))
}

type Cell = std::result::Result<(f64, f64), String>;

/// Rows flagged by an audit: the members of the best subgroup, or nothing
/// when its score is zero (no deviation in the scanned direction).
pub fn detected(result: &crate::pipeline::AuditResult) -> &[usize] {
    if result.score > 0.0 { &result.members } else { &[] }
}

/// Run every arm × variant on `n_datasets` datasets and summarise Jaccard accuracy.
pub fn run_experiment_sweep(table: &CovariateTable, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.arms.is_empty() || cfg.variants.is_empty() {
        return Err(Error::Config("sweep needs at least one arm and one variant".into()));
    }
    if cfg.n_datasets == 0 {
        return Err(Error::Config("n_datasets must be at least 1".into()));
    }
    for arm in &cfg.arms {
        arm.spec.validate().map_err(|e| Error::Config(format!("arm `{}`: {e}", arm.id)))?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..cfg.arms.len()).flat_map(|a| (0..cfg.n_datasets).map(move |j| (a, j))).collect();
    let cells: Vec<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(a, j)| {
            let spec = &cfg.arms[a].spec;
            match arm_dataset(table, spec, cfg.seed, j) {
                Err(e) => vec![Err(format!("dataset {j}: {e}")); cfg.variants.len()],
                Ok(sd) => {
                    let truth = sd.biased_ids();
                    cfg.variants
                        .iter()
                        .map(|&v| {
                            let mut ac = AuditConfig::new(v, default_direction(v));
                            ac.scan.iterations = cfg.iterations;
                            ac.scan.penalty = cfg.penalty;
                            ac.scan.seed = rng::derive(sd.seed, 7);
                            run_audit(&sd.dataset, &ac)
                                .map(|r| (jaccard_accuracy(detected(&r), &truth), r.score))
                                .map_err(|e| format!("dataset {j}, {v}: {e}"))
                        })
                        .collect()
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    for (a, arm) in cfg.arms.iter().enumerate() {
        for (k, &v) in cfg.variants.iter().enumerate() {
            let per: Vec<&Cell> = (0..cfg.n_datasets).map(|j| &cells[a * cfg.n_datasets + j][k]).collect();
            let jaccard: Vec<Option<f64>> = per.iter().map(|c| c.as_ref().ok().map(|x| x.0)).collect();
            let scores: Vec<Option<f64>> = per.iter().map(|c| c.as_ref().ok().map(|x| x.1)).collect();
            let failures: Vec<String> = per.iter().filter_map(|c| c.as_ref().err().cloned()).collect();
            let ok: Vec<f64> = jaccard.iter().flatten().copied().collect();
            let (mean, ci) = mean_ci(&ok);
            rows.push(SweepRow {
                arm: arm.id.clone(),
                variant: v,
                spec: arm.spec,
                mean_jaccard: mean,
                ci_half_width: ci,
                n: ok.len(),
                jaccard,
                scores,
                failures,
            });
        }
    }
    Ok(rows)
}

/// Delimited results table, one line per arm × variant.
pub fn write_sweep_table<W: std::io::Write>(rows: &[SweepRow], writer: W, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    w.write_record([
        "arm", "variant", "mu_sep", "mu_suf", "delta", "sigma_true", "sigma_predict", "n_bias", "p_bias", "mean_jaccard",
        "ci_half_width", "n", "failures",
    ])?;
    for r in rows {
        let s = &r.spec;
        w.write_record([
            r.arm.clone(),
            r.variant.to_string(),
            s.mu_sep.to_string(),
            s.mu_suf.to_string(),
            s.delta.to_string(),
            s.sigma_true.to_string(),
            s.sigma_predict.to_string(),
            s.n_bias.to_string(),
            s.p_bias.to_string(),
            format!("{:.6}", r.mean_jaccard),
            format!("{:.6}", r.ci_half_width),
            r.n.to_string(),
            r.failures.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
