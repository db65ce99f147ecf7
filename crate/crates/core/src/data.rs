//! Tabular audit data: loading, validation, and conditioning.
//!
//! A [`Dataset`] holds, for every individual, categorical covariates, the
//! protected-class indicator `A`, the observed binary outcome `Y`, and the
//! audited probabilistic prediction `P` and/or binary recommendation `P_bin`.
//! The sensitive column `A` was derived from never appears among the
//! covariates.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::discretize::{discretize_column, BinStrategy};
use crate::error::{Error, Result};

/// Category used for empty covariate cells.
pub const MISSING: &str = "(missing)";

/// Name of the derived protected-class column in the canonical file layout.
pub const PROTECTED_COLUMN: &str = "A";

/// A categorical attribute and its ordered value set (first-appearance order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

impl Attribute {
    pub fn arity(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// One individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Position of the row in the dataset as loaded; preserved by filtering.
    pub id: usize,
    /// Value index per attribute, aligned with [`Dataset::attributes`].
    pub covariates: Vec<usize>,
    pub protected: bool,
    pub outcome: bool,
    pub prediction: Option<f64>,
    pub recommendation: Option<bool>,
}

/// The columns an audit can test or condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Column {
    /// `Y`
    Outcome,
    /// `P`
    Prediction,
    /// `P_bin`
    Recommendation,
}

impl Column {
    pub fn symbol(self) -> &'static str {
        match self {
            Column::Outcome => "Y",
            Column::Prediction => "P",
            Column::Recommendation => "P_bin",
        }
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, Column::Prediction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub attributes: Vec<Attribute>,
    pub rows: Vec<Record>,
}

impl Dataset {
    /// Build a dataset, checking every structural invariant.
    pub fn new(attributes: Vec<Attribute>, rows: Vec<Record>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let has_p = rows[0].prediction.is_some();
        let has_rec = rows[0].recommendation.is_some();
        if !has_p && !has_rec {
            return Err(Error::Schema("dataset needs a prediction or a recommendation column".into()));
        }
        for r in &rows {
            if r.covariates.len() != attributes.len() {
                return Err(Error::Precondition(format!("row {} has {} covariates, expected {}", r.id, r.covariates.len(), attributes.len())));
            }
            for (a, &v) in attributes.iter().zip(&r.covariates) {
                if v >= a.arity() {
                    return Err(Error::Precondition(format!("row {}: value index {v} outside vocabulary of `{}`", r.id, a.name)));
                }
            }
            if r.prediction.is_some() != has_p || r.recommendation.is_some() != has_rec {
                return Err(Error::Precondition(format!("row {} has inconsistent optional columns", r.id)));
            }
            if let Some(p) = r.prediction {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Parse { row: r.id, message: format!("prediction {p} outside [0, 1]") });
                }
            }
        }
        Ok(Dataset { attributes, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_prediction(&self) -> bool {
        self.rows[0].prediction.is_some()
    }

    pub fn has_recommendation(&self) -> bool {
        self.rows[0].recommendation.is_some()
    }

    pub fn has_column(&self, column: Column) -> bool {
        match column {
            Column::Outcome => true,
            Column::Prediction => self.has_prediction(),
            Column::Recommendation => self.has_recommendation(),
        }
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn protected_count(&self) -> usize {
        self.rows.iter().filter(|r| r.protected).count()
    }

    /// Numeric value of `column` for `row`; panics if the column is absent.
    pub fn value(row: &Record, column: Column) -> f64 {
        match column {
            Column::Outcome => f64::from(u8::from(row.outcome)),
            Column::Prediction => row.prediction.expect("prediction column absent"),
            Column::Recommendation => f64::from(u8::from(row.recommendation.expect("recommendation column absent"))),
        }
    }

    /// Rows whose binary `conditional` column equals `z`. Vocabularies are kept.
    pub fn filter_by_conditional(&self, conditional: Column, z: bool) -> Result<Dataset> {
        if !conditional.is_binary() {
            return Err(Error::Precondition(format!("cannot value-condition on continuous column {}", conditional.symbol())));
        }
        if !self.has_column(conditional) {
            return Err(Error::Schema(format!("conditional column {} is not present", conditional.symbol())));
        }
        let target = if z { 1.0 } else { 0.0 };
        let rows: Vec<Record> = self.rows.iter().filter(|r| Dataset::value(r, conditional) == target).cloned().collect();
        let protected = rows.iter().filter(|r| r.protected).count();
        if protected == 0 || protected == rows.len() {
            return Err(Error::DegenerateFilter(format!(
                "{}={} leaves {} protected and {} non-protected rows",
                conditional.symbol(),
                u8::from(z),
                protected,
                rows.len() - protected
            )));
        }
        Ok(Dataset { attributes: self.attributes.clone(), rows })
    }

    /// Same data with the protected indicator replaced (used for permutation).
    pub fn with_protected(&self, protected: &[bool]) -> Dataset {
        assert_eq!(protected.len(), self.rows.len());
        let rows = self.rows.iter().zip(protected).map(|(r, &a)| Record { protected: a, ..r.clone() }).collect();
        Dataset { attributes: self.attributes.clone(), rows }
    }

    /// Both classes must be present before anything can be scanned.
    pub fn require_both_classes(&self) -> Result<()> {
        let p = self.protected_count();
        if p == 0 || p == self.len() {
            return Err(Error::Precondition(format!("need both classes; found {p} protected of {} rows", self.len())));
        }
        Ok(())
    }

    /// Write the canonical delimited layout: covariates, `Y`, `P`, `P_bin`, `A`.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        let mut header: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
        header.push("Y");
        if self.has_prediction() {
            header.push("P");
        }
        if self.has_recommendation() {
            header.push("P_bin");
        }
        header.push(PROTECTED_COLUMN);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut fields: Vec<String> =
                self.attributes.iter().zip(&r.covariates).map(|(a, &v)| a.values[v].clone()).collect();
            fields.push(u8::from(r.outcome).to_string());
            if let Some(p) = r.prediction {
                fields.push(format!("{p:?}"));
            }
            if let Some(b) = r.recommendation {
                fields.push(u8::from(b).to_string());
            }
            fields.push(u8::from(r.protected).to_string());
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How to discretize one numeric covariate column at load time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinDirective {
    pub column: String,
    pub n_bins: usize,
    pub strategy: BinStrategy,
}

/// Mapping from a delimited file's columns onto a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemaSpec {
    pub covariates: Vec<String>,
    pub outcome: String,
    pub prediction: Option<String>,
    pub recommendation: Option<String>,
    pub sensitive: String,
    /// Value of the sensitive column that maps to `A = 1`.
    pub protected_value: String,
    pub bins: Vec<BinDirective>,
    /// Threshold used to derive `P_bin = 1{P >= threshold}` when no
    /// recommendation column is given.
    pub threshold: f64,
    pub delimiter: u8,
}

impl SchemaSpec {
    /// Schema matching the layout written by [`Dataset::write_delimited`].
    pub fn canonical(ds: &Dataset, delimiter: u8) -> SchemaSpec {
        SchemaSpec {
            covariates: ds.attributes.iter().map(|a| a.name.clone()).collect(),
            outcome: "Y".into(),
            prediction: ds.has_prediction().then(|| "P".into()),
            recommendation: ds.has_recommendation().then(|| "P_bin".into()),
            sensitive: PROTECTED_COLUMN.into(),
            protected_value: "1".into(),
            bins: Vec::new(),
            threshold: 0.5,
            delimiter,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.covariates.iter().any(|c| *c == self.outcome) {
            return Err(Error::Schema(format!("outcome column `{}` is also listed as a covariate", self.outcome)));
        }
        if self.prediction.is_none() && self.recommendation.is_none() {
            return Err(Error::Schema("at least one of the prediction and recommendation columns is required".into()));
        }
        for c in [&self.prediction, &self.recommendation].into_iter().flatten() {
            if self.covariates.contains(c) {
                return Err(Error::Schema(format!("column `{c}` cannot be both audited and a covariate")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Schema(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        for b in &self.bins {
            if !self.covariates.contains(&b.column) {
                return Err(Error::Schema(format!("binning directive for `{}`, which is not a covariate", b.column)));
            }
            if b.n_bins == 0 {
                return Err(Error::Schema(format!("binning directive for `{}` needs at least one bin", b.column)));
            }
        }
        Ok(())
    }
}

/// Summary of what [`load_dataset`] skipped or adjusted.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
    pub recommendation_derived: bool,
    pub warnings: Vec<String>,
}

fn parse_binary(field: &str, what: &str, row: usize) -> Result<bool> {
    match field.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(false),
        Ok(v) if v == 1.0 => Ok(true),
        _ => Err(Error::Parse { row, message: format!("{what} `{field}` is not 0 or 1") }),
    }
}

/// Read a delimited stream with a header row into a [`Dataset`].
///
/// Row numbers in errors count data rows from 1. Rows with an empty outcome,
/// sensitive, prediction or recommendation field are dropped; empty covariate
/// cells become the [`MISSING`] category.
pub fn load_dataset<R: Read>(source: R, schema: &SchemaSpec) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    let mut report = LoadReport::default();

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    // first occurrence wins for duplicated header names
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        position.entry(h).or_insert(i);
    }
    let col = |name: &str| -> Result<usize> {
        position.get(name).copied().ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };

    let covariates: Vec<&String> = schema
        .covariates
        .iter()
        .filter(|c| {
            if **c == schema.sensitive {
                report.warnings.push(format!("sensitive column `{c}` removed from covariates"));
                false
            } else {
                true
            }
        })
        .collect();
    let cov_idx: Vec<usize> = covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let outcome_idx = col(&schema.outcome)?;
    let sensitive_idx = col(&schema.sensitive)?;
    let pred_idx = schema.prediction.as_deref().map(col).transpose()?;
    let rec_idx = schema.recommendation.as_deref().map(col).transpose()?;
    let binned: Vec<Option<&BinDirective>> =
        covariates.iter().map(|c| schema.bins.iter().find(|b| &b.column == *c)).collect();

    struct Raw {
        covariates: Vec<String>,
        protected: bool,
        outcome: bool,
        prediction: Option<f64>,
        recommendation: Option<bool>,
    }
    let mut raws = Vec::new();
    let mut sensitive_seen = false;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        report.rows_read += 1;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let required = [Some(outcome_idx), Some(sensitive_idx), pred_idx, rec_idx];
        if required.iter().flatten().any(|&idx| field(idx).is_empty()) {
            report.rows_dropped_missing += 1;
            continue;
        }
        let outcome = parse_binary(field(outcome_idx), "outcome", row)?;
        let prediction = match pred_idx {
            Some(idx) => {
                let raw = field(idx);
                let p: f64 = raw
                    .parse()
                    .map_err(|_| Error::Parse { row, message: format!("prediction `{raw}` is not numeric") })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Parse { row, message: format!("prediction {p} outside [0, 1]") });
                }
                Some(p)
            }
            None => None,
        };
        let recommendation = rec_idx.map(|idx| parse_binary(field(idx), "recommendation", row)).transpose()?;
        let sensitive = field(sensitive_idx);
        sensitive_seen |= sensitive == schema.protected_value;
        raws.push(Raw {
            covariates: cov_idx
                .iter()
                .map(|&idx| {
                    let v = field(idx);
                    if v.is_empty() { MISSING.to_string() } else { v.to_string() }
                })
                .collect(),
            protected: sensitive == schema.protected_value,
            outcome,
            prediction,
            recommendation,
        });
    }
    if raws.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !sensitive_seen {
        return Err(Error::Schema(format!(
            "protected value `{}` never occurs in column `{}`",
            schema.protected_value, schema.sensitive
        )));
    }

    // discretize numeric covariates in place
    for (j, directive) in binned.iter().enumerate() {
        let Some(d) = directive else { continue };
        let mut present = Vec::new();
        let mut values = Vec::new();
        for (i, r) in raws.iter().enumerate() {
            if r.covariates[j] == MISSING {
                continue;
            }
            let v: f64 = r.covariates[j].parse().map_err(|_| Error::Parse {
                row: i + 1,
                message: format!("`{}` value `{}` is not numeric but the column is binned", d.column, r.covariates[j]),
            })?;
            present.push(i);
            values.push(v);
        }
        if values.is_empty() {
            continue;
        }
        let binning = discretize_column(&values, d.n_bins, d.strategy)?;
        report.warnings.extend(binning.warnings.iter().map(|w| format!("{}: {w}", d.column)));
        let labels = binning.labels();
        for (i, label) in present.into_iter().zip(labels) {
            raws[i].covariates[j] = label;
        }
    }

    let mut attributes: Vec<Attribute> =
        covariates.iter().map(|c| Attribute { name: (*c).clone(), values: Vec::new() }).collect();
    let mut rows = Vec::with_capacity(raws.len());
    let derive_rec = rec_idx.is_none();
    report.recommendation_derived = derive_rec;
    for (id, raw) in raws.into_iter().enumerate() {
        let covariates = raw
            .covariates
            .into_iter()
            .zip(attributes.iter_mut())
            .map(|(v, a)| match a.index_of(&v) {
                Some(k) => k,
                None => {
                    a.values.push(v);
                    a.values.len() - 1
                }
            })
            .collect();
        let recommendation = if derive_rec {
            raw.prediction.map(|p| p >= schema.threshold)
        } else {
            raw.recommendation
        };
        rows.push(Record {
            id,
            covariates,
            protected: raw.protected,
            outcome: raw.outcome,
            prediction: raw.prediction,
            recommendation,
        });
    }
    let ds = Dataset::new(attributes, rows)?;
    Ok((ds, report))
}
