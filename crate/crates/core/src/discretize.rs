//! Discretization of continuous covariates into ordered categories.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinStrategy {
    EqualWidth,
    EqualFrequency,
}

impl std::str::FromStr for BinStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-width" | "width" => Ok(BinStrategy::EqualWidth),
            "equal-frequency" | "frequency" | "quantile" => Ok(BinStrategy::EqualFrequency),
            other => Err(Error::Config(format!(
                "unknown binning strategy `{other}` (expected equal-width or equal-frequency)"
            ))),
        }
    }
}

impl std::fmt::Display for BinStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinStrategy::EqualWidth => "equal-width",
            BinStrategy::EqualFrequency => "equal-frequency",
        })
    }
}

/// One output category. Equal-width bins are `[lower, upper)` except the last,
/// which is closed; equal-frequency bins are closed `[lower, upper]` over the
/// observed values they hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binning {
    /// Category index of every input value, aligned with the input.
    pub codes: Vec<usize>,
    pub bins: Vec<Bin>,
    pub warnings: Vec<String>,
}

impl Binning {
    /// Label of every input value, aligned with the input.
    pub fn labels(&self) -> Vec<String> {
        self.codes.iter().map(|&c| self.bins[c].label.clone()).collect()
    }

    /// Interior cut points between consecutive categories.
    ///
    /// For equal-width binning these are the lower edges of bins `1..`; for
    /// equal-frequency binning they are the largest value of bins `..k-1`
    /// (values at or below a cut point fall in the lower bin).
    pub fn boundaries(&self, strategy: BinStrategy) -> Vec<f64> {
        match strategy {
            BinStrategy::EqualWidth => self.bins.iter().skip(1).map(|b| b.lower).collect(),
            BinStrategy::EqualFrequency => {
                let k = self.bins.len();
                self.bins.iter().take(k.saturating_sub(1)).map(|b| b.upper).collect()
            }
        }
    }
}

/// Map real values onto at most `n_bins` ordered categories.
///
/// The mapping is monotone in the input value and depends only on the multiset
/// of values, so permuting the input permutes the output identically.
///
/// ```
/// use cbscan::discretize::{discretize_column, BinStrategy};
///
/// let b = discretize_column(&[1.0, 2.0, 3.0, 4.0], 2, BinStrategy::EqualFrequency).unwrap();
/// assert_eq!(b.codes, vec![0, 0, 1, 1]);
/// ```
pub fn discretize_column(values: &[f64], n_bins: usize, strategy: BinStrategy) -> Result<Binning> {
    if n_bins == 0 {
        return Err(Error::Precondition("n_bins must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Precondition("cannot discretize an empty column".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("non-finite value at position {i}")));
    }

    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if min == max {
        let mut warnings = Vec::new();
        if n_bins > 1 {
            warnings.push(format!(
                "all values equal {min}; producing a single category instead of {n_bins}"
            ));
            log::warn!("{}", warnings[0]);
        }
        return Ok(Binning {
            codes: vec![0; values.len()],
            bins: vec![Bin { lower: min, upper: max, label: format!("[{min}, {max}]") }],
            warnings,
        });
    }

    match strategy {
        BinStrategy::EqualWidth => Ok(equal_width(values, n_bins, min, max)),
        BinStrategy::EqualFrequency => Ok(equal_frequency(values, n_bins)),
    }
}

fn equal_width(values: &[f64], n_bins: usize, min: f64, max: f64) -> Binning {
    let width = (max - min) / n_bins as f64;
    let edge = |k: usize| if k == n_bins { max } else { min + k as f64 * width };
    let raw: Vec<usize> = values
        .iter()
        .map(|&v| {
            // count cut points at or below v
            (1..n_bins).take_while(|&k| v >= edge(k)).count()
        })
        .collect();

    // drop empty bins, keeping order
    let mut used = vec![false; n_bins];
    for &r in &raw {
        used[r] = true;
    }
    let mut remap = vec![usize::MAX; n_bins];
    let mut bins = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..n_bins {
        if used[k] {
            remap[k] = bins.len();
            let (lo, hi) = (edge(k), edge(k + 1));
            let label = if k + 1 == n_bins { format!("[{lo}, {hi}]") } else { format!("[{lo}, {hi})") };
            bins.push(Bin { lower: lo, upper: hi, label });
        }
    }
    if bins.len() < n_bins {
        warnings.push(format!("{} of {} equal-width bins are empty and were dropped", n_bins - bins.len(), n_bins));
    }
    Binning { codes: raw.iter().map(|&r| remap[r]).collect(), bins, warnings }
}

fn equal_frequency(values: &[f64], n_bins: usize) -> Binning {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // distinct values with multiplicities
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let total = values.len() as f64;
    let d = distinct.len();
    let k = n_bins.min(d);

    // Walk distinct values, closing a bin once it reaches its cumulative share.
    // A tied value is never split, so it lands in the lower bin.
    let mut bin_of = Vec::with_capacity(d);
    let mut bin = 0usize;
    let mut cumulative = 0usize;
    for (j, &(_, n)) in distinct.iter().enumerate() {
        bin_of.push(bin);
        cumulative += n;
        if bin + 1 < k {
            let remaining_values = d - j - 1;
            let remaining_bins = k - bin - 1;
            let reached = cumulative as f64 >= (bin + 1) as f64 * total / k as f64;
            if reached || remaining_values == remaining_bins {
                bin += 1;
            }
        }
    }

    let mut bins: Vec<Bin> = Vec::with_capacity(k);
    for (j, &(v, _)) in distinct.iter().enumerate() {
        let b = bin_of[j];
        if b == bins.len() {
            bins.push(Bin { lower: v, upper: v, label: String::new() });
        } else {
            bins[b].upper = v;
        }
    }
    for b in &mut bins {
        b.label = format!("[{}, {}]", b.lower, b.upper);
    }

    let codes = values
        .iter()
        .map(|v| {
            let j = distinct.partition_point(|(x, _)| x < v);
            bin_of[j]
        })
        .collect();
    Binning { codes, bins, warnings: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_frequency_splits_evenly() {
        let b = discretize_column(&[1.0, 2.0, 3.0, 4.0], 2, BinStrategy::EqualFrequency).unwrap();
        assert_eq!(b.codes, vec![0, 0, 1, 1]);
        assert_eq!(b.bins.len(), 2);
    }

    #[test]
    fn single_bin_is_identity() {
        for s in [BinStrategy::EqualWidth, BinStrategy::EqualFrequency] {
            let b = discretize_column(&[3.0, 1.0, 2.0], 1, s).unwrap();
            assert_eq!(b.codes, vec![0, 0, 0]);
            assert!(b.warnings.is_empty());
        }
    }

    #[test]
    fn equal_width_quarters_the_range() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let b = discretize_column(&grid, 4, BinStrategy::EqualWidth).unwrap();
        let cuts = b.boundaries(BinStrategy::EqualWidth);
        // (max - min) / 4 = 0.2475
        let expected = [0.2475, 0.495, 0.7425];
        assert_eq!(cuts.len(), 3);
        for (c, e) in cuts.iter().zip(expected) {
            assert!((c - e).abs() < 1e-12, "{c} vs {e}");
        }
        assert_eq!(b.codes[0], 0);
        assert_eq!(b.codes[99], 3);
        assert_eq!(b.codes[24], 0);
        assert_eq!(b.codes[25], 1);
    }

    #[test]
    fn constant_column_warns() {
        let b = discretize_column(&[2.0; 5], 3, BinStrategy::EqualFrequency).unwrap();
        assert_eq!(b.bins.len(), 1);
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn ties_go_to_the_lower_bin() {
        // median tie at 2: all 2s share one bin
        let v = [1.0, 2.0, 2.0, 2.0, 3.0, 4.0];
        let b = discretize_column(&v, 2, BinStrategy::EqualFrequency).unwrap();
        assert_eq!(b.codes, vec![0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(discretize_column(&[], 2, BinStrategy::EqualWidth).is_err());
        assert!(discretize_column(&[1.0], 0, BinStrategy::EqualWidth).is_err());
        assert!(discretize_column(&[f64::NAN], 2, BinStrategy::EqualWidth).is_err());
    }

    proptest! {
        #[test]
        fn equal_frequency_uses_min_of_bins_and_distinct(
            values in prop::collection::vec(0u8..12, 1..60),
            n_bins in 1usize..8,
        ) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let b = discretize_column(&v, n_bins, BinStrategy::EqualFrequency).unwrap();
            let mut d = values.clone();
            d.sort();
            d.dedup();
            prop_assert_eq!(b.bins.len(), n_bins.min(d.len()));
            let mut seen = vec![false; b.bins.len()];
            for &c in &b.codes { seen[c] = true; }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn mapping_is_monotone_and_permutation_equivariant(
            values in prop::collection::vec(-50.0f64..50.0, 1..40),
            n_bins in 1usize..6,
            rotate in 0usize..40,
            equal_width in any::<bool>(),
        ) {
            let s = if equal_width { BinStrategy::EqualWidth } else { BinStrategy::EqualFrequency };
            let b = discretize_column(&values, n_bins, s).unwrap();
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(b.codes[i] <= b.codes[j]);
                    }
                }
            }
            let r = rotate % values.len();
            let mut shuffled = values.clone();
            shuffled.rotate_left(r);
            let bs = discretize_column(&shuffled, n_bins, s).unwrap();
            let mut expected = b.codes.clone();
            expected.rotate_left(r);
            prop_assert_eq!(bs.codes, expected);
        }
    }
}
