//! Loader for the ProPublica COMPAS two-year recidivism extract
//! (`compas-scores-two-years.csv`).
//!
//! Rows are filtered the usual way (screening within 30 days of arrest, known
//! recidivism status, no ordinary traffic offences, a valid score). Each
//! defendant keeps race, sex, age group, charge degree and prior-offence
//! bucket. The prediction `P` is the observed two-year reoffence rate of all
//! defendants with the same decile score; the recommendation is `decile >= 5`.

use std::io::Read;

use crate::data::{Attribute, Dataset, Record};
use crate::error::{Error, Result};
use crate::synth::CovariateTable;

/// Attribute names, in column order of [`CompasFrame::covariates`].
pub const ATTRIBUTES: [&str; 5] = ["race", "sex", "age", "charge", "priors"];

/// Recommendation cut-off on the 1–10 decile score.
pub const HIGH_RISK_DECILE: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CompasFrame {
    pub attributes: Vec<Attribute>,
    /// value index per attribute in [`ATTRIBUTES`] order
    pub covariates: Vec<Vec<usize>>,
    pub decile: Vec<u8>,
    pub reoffended: Vec<bool>,
}

fn priors_bucket(n: i64) -> &'static str {
    match n {
        0 => "None",
        1..=5 => "1 to 5",
        _ => "Over 5",
    }
}

/// Parse and filter the extract.
pub fn load_compas<R: Read>(source: R) -> Result<CompasFrame> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(source);
    let headers = rdr.headers()?.clone();
    // the file repeats some column names; the first occurrence wins
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema(format!("COMPAS file lacks column `{name}`")))
    };
    let (race, sex, age, charge, priors) = (col("race")?, col("sex")?, col("age")?, col("c_charge_degree")?, col("priors_count")?);
    let (decile, recid2, days, is_recid, text) =
        (col("decile_score")?, col("two_year_recid")?, col("days_b_screening_arrest")?, col("is_recid")?, col("score_text")?);

    let mut vocab: Vec<Vec<String>> = vec![Vec::new(); ATTRIBUTES.len()];
    let mut frame = CompasFrame { attributes: Vec::new(), covariates: Vec::new(), decile: Vec::new(), reoffended: Vec::new() };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let int = |c: usize| -> Result<Option<i64>> {
            let s = rec.get(c).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<i64>()
                .map(Some)
                .map_err(|_| Error::Parse { row, message: format!("`{}` is not an integer in column {}", s, &headers[c]) })
        };
        let Some(d) = int(days)? else { continue };
        if !(-30..=30).contains(&d) || int(is_recid)? == Some(-1) || &rec[charge] == "O" || &rec[text] == "N/A" {
            continue;
        }
        let score = int(decile)?.ok_or_else(|| Error::Parse { row, message: "missing decile_score".into() })?;
        if !(1..=10).contains(&score) {
            return Err(Error::Parse { row, message: format!("decile_score {score} outside 1..=10") });
        }
        let years = int(age)?.ok_or_else(|| Error::Parse { row, message: "missing age".into() })?;
        let n_priors = int(priors)?.ok_or_else(|| Error::Parse { row, message: "missing priors_count".into() })?;
        let y = int(recid2)?.ok_or_else(|| Error::Parse { row, message: "missing two_year_recid".into() })?;
        let values = [
            rec[race].to_string(),
            rec[sex].to_string(),
            if years < 25 { "Under 25" } else { "25+" }.to_string(),
            rec[charge].to_string(),
            priors_bucket(n_priors).to_string(),
        ];
        let cov = values
            .iter()
            .zip(vocab.iter_mut())
            .map(|(v, voc)| match voc.iter().position(|x| x == v) {
                Some(k) => k,
                None => {
                    voc.push(v.clone());
                    voc.len() - 1
                }
            })
            .collect();
        frame.covariates.push(cov);
        frame.decile.push(score as u8);
        frame.reoffended.push(y == 1);
    }
    if frame.covariates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    frame.attributes =
        ATTRIBUTES.iter().zip(vocab).map(|(n, values)| Attribute { name: n.to_string(), values }).collect();
    Ok(frame)
}

impl CompasFrame {
    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// Reoffence rate per decile score (index 0 is decile 1).
    pub fn decile_rates(&self) -> [f64; 10] {
        let mut n = [0usize; 10];
        let mut k = [0usize; 10];
        for (&d, &y) in self.decile.iter().zip(&self.reoffended) {
            n[d as usize - 1] += 1;
            k[d as usize - 1] += usize::from(y);
        }
        std::array::from_fn(|i| if n[i] == 0 { 0.0 } else { k[i] as f64 / n[i] as f64 })
    }

    /// Audit dataset with `A = 1` for rows whose `attribute` equals `value`;
    /// that attribute is dropped from the covariates.
    pub fn dataset(&self, attribute: &str, value: &str) -> Result<Dataset> {
        let a = ATTRIBUTES
            .iter()
            .position(|n| *n == attribute)
            .ok_or_else(|| Error::Config(format!("unknown COMPAS attribute `{attribute}` (expected one of {ATTRIBUTES:?})")))?;
        let v = self.attributes[a]
            .index_of(value)
            .ok_or_else(|| Error::Config(format!("`{value}` is not a value of COMPAS attribute `{attribute}`")))?;
        let rates = self.decile_rates();
        let kept: Vec<usize> = (0..ATTRIBUTES.len()).filter(|&k| k != a).collect();
        let attributes = kept.iter().map(|&k| self.attributes[k].clone()).collect();
        let rows = (0..self.len())
            .map(|i| Record {
                id: i,
                covariates: kept.iter().map(|&k| self.covariates[i][k]).collect(),
                protected: self.covariates[i][a] == v,
                outcome: self.reoffended[i],
                prediction: Some(rates[self.decile[i] as usize - 1]),
                recommendation: Some(self.decile[i] >= HIGH_RISK_DECILE),
            })
            .collect();
        Dataset::new(attributes, rows)
    }

    /// All five attributes, for semi-synthetic experiments.
    pub fn covariate_table(&self) -> Result<CovariateTable> {
        CovariateTable::new(self.attributes.clone(), self.covariates.clone())
    }
}
