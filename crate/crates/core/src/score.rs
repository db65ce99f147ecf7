//! Log-likelihood-ratio scores for a subset of protected-class rows.
//!
//! Two families are supported. For a binary event the alternative hypothesis
//! multiplies the expected odds of every member by a common factor `q`:
//!
//! ```text
//! F(S | q) = sum_i  I_i log q - log(q Î_i - Î_i + 1)
//! ```
//!
//! For a real-valued event the log-odds residuals `Δ_i` are shifted by a
//! common mean `μ` under a Gaussian model with fixed `σ`:
//!
//! ```text
//! F(S | μ) = (2 μ sum Δ_i - |S| μ²) / (2 σ²)
//! ```
//!
//! Both are additive over disjoint subsets at a fixed parameter value, which
//! is what makes per-attribute subset optimisation linear in the arity.
//!
//! Internally the Bernoulli family is parametrised by `t = ln q`, in which
//! `F` is concave.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{clamp_prob, logit};

/// Search domain for `q` is `[Q_MIN, Q_MAX]`.
pub const Q_MIN: f64 = 1e-6;
pub const Q_MAX: f64 = 1e6;
/// Lower bound on the estimated residual standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

const ROOT_TOL: f64 = 1e-9;
const ROOT_MAX_ITER: usize = 80;

fn t_bound() -> f64 {
    Q_MAX.ln()
}

/// Direction of the deviation being scanned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// observed events exceed expectations (`q > 1`, `μ > 0`)
    Positive,
    /// observed events fall short of expectations (`q < 1`, `μ < 0`)
    Negative,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Direction::Positive),
            "negative" => Ok(Direction::Negative),
            other => Err(Error::Config(format!("unknown direction `{other}` (expected positive or negative)"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        })
    }
}

/// `trials` rows sharing the expectation `expectation`, of which `events` had `I = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernoulliTerm {
    pub events: f64,
    pub trials: f64,
    pub expectation: f64,
}

impl BernoulliTerm {
    pub fn single(event: bool, expectation: f64) -> Self {
        BernoulliTerm { events: f64::from(u8::from(event)), trials: 1.0, expectation }
    }
}

/// Sufficient statistics of a subset under the Gaussian family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GaussianStats {
    pub count: f64,
    pub sum_delta: f64,
}

impl GaussianStats {
    pub fn from_deltas(deltas: &[f64]) -> Self {
        GaussianStats { count: deltas.len() as f64, sum_delta: deltas.iter().sum() }
    }

    pub fn add(&mut self, other: GaussianStats) {
        self.count += other.count;
        self.sum_delta += other.sum_delta;
    }
}

/// Zero crossings and maximiser of a subset's score on the feasible side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaProfile {
    pub theta_min: f64,
    pub theta_mle: f64,
    pub theta_max: f64,
    pub score: f64,
}

// ---------------------------------------------------------------- Bernoulli

/// `F(S | q = e^t)`.
pub fn bernoulli_llr_t(terms: &[BernoulliTerm], t: f64) -> f64 {
    let em1 = t.exp_m1();
    terms.iter().map(|b| b.events * t - b.trials * (b.expectation * em1).ln_1p()).sum()
}

/// `F(S | q)`; exactly zero at `q = 1`.
pub fn bernoulli_llr(terms: &[BernoulliTerm], q: f64) -> f64 {
    bernoulli_llr_t(terms, q.ln())
}

// dF/dt, strictly decreasing in t
fn bernoulli_slope_t(terms: &[BernoulliTerm], t: f64) -> f64 {
    terms
        .iter()
        .map(|b| b.events - b.trials * crate::glm::sigmoid(t + logit(b.expectation)))
        .sum()
}

fn bisect(mut lo: f64, mut hi: f64, positive_at_lo: bool, f: impl Fn(f64) -> f64) -> f64 {
    // f changes sign on [lo, hi]; positive_at_lo tells which side is which
    for _ in 0..ROOT_MAX_ITER {
        if hi - lo <= ROOT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn feasible_t(dir: Direction) -> (f64, f64) {
    match dir {
        Direction::Positive => (0.0, t_bound()),
        Direction::Negative => (-t_bound(), 0.0),
    }
}

/// Unconstrained maximiser of `F` over `t ∈ [ln Q_MIN, ln Q_MAX]`.
fn mle_t_unclamped(terms: &[BernoulliTerm]) -> f64 {
    let (lo, hi) = (-t_bound(), t_bound());
    if bernoulli_slope_t(terms, lo) <= 0.0 {
        return lo;
    }
    if bernoulli_slope_t(terms, hi) >= 0.0 {
        return hi;
    }
    bisect(lo, hi, true, |t| bernoulli_slope_t(terms, t))
}

fn mle_t(terms: &[BernoulliTerm], dir: Direction) -> f64 {
    let (lo, hi) = feasible_t(dir);
    mle_t_unclamped(terms).clamp(lo, hi)
}

/// Maximum-likelihood `q` restricted to the direction's side of 1.
///
/// ```
/// use cbscan::score::{mle_q, BernoulliTerm, Direction};
///
/// let s = [
///     BernoulliTerm::single(true, 0.2),
///     BernoulliTerm::single(false, 0.2),
///     BernoulliTerm::single(true, 0.2),
/// ];
/// assert!((mle_q(&s, Direction::Positive) - 8.0).abs() < 1e-6);
/// ```
pub fn mle_q(terms: &[BernoulliTerm], dir: Direction) -> f64 {
    if terms.is_empty() {
        return 1.0;
    }
    mle_t(terms, dir).exp()
}

/// `(score, q)` maximising `F` on the feasible side. Empty subsets score 0 at `q = 1`.
pub fn bernoulli_score(terms: &[BernoulliTerm], dir: Direction) -> (f64, f64) {
    if terms.is_empty() {
        return (0.0, 1.0);
    }
    let t = mle_t(terms, dir);
    (bernoulli_llr_t(terms, t).max(0.0), t.exp())
}

/// Crossings of `F = level` in `t` on the feasible side, bracketing the maximiser.
/// `None` when the clamped maximum does not exceed `level`.
pub(crate) fn bernoulli_level_crossings_t(terms: &[BernoulliTerm], dir: Direction, level: f64) -> Option<(f64, f64, f64, f64)> {
    if terms.is_empty() {
        return None;
    }
    let (lo, hi) = feasible_t(dir);
    let t_hat = mle_t(terms, dir);
    let peak = bernoulli_llr_t(terms, t_hat);
    if peak <= level {
        return None;
    }
    let g = |t: f64| bernoulli_llr_t(terms, t) - level;
    // F(0) = 0, so with level 0 the crossing on the q = 1 side is exact
    let (inner, outer) = match dir {
        Direction::Positive => (lo, hi),
        Direction::Negative => (hi, lo),
    };
    let near = if level == 0.0 {
        0.0
    } else {
        let (a, b) = if inner < t_hat { (inner, t_hat) } else { (t_hat, inner) };
        bisect(a, b, inner > t_hat, g)
    };
    let far = if g(outer) >= 0.0 {
        outer
    } else {
        let (a, b) = if outer > t_hat { (t_hat, outer) } else { (outer, t_hat) };
        bisect(a, b, outer > t_hat, g)
    };
    let (a, b) = if near < far { (near, far) } else { (far, near) };
    Some((a, t_hat, b, peak))
}

/// The two zero crossings of `F` on the feasible side, in `q`.
///
/// One crossing is always `q = 1`. The other is capped at the domain bound
/// when `F` stays positive. `None` marks a subset that never scores above 0.
pub fn q_zero_crossings(terms: &[BernoulliTerm], dir: Direction) -> Option<(f64, f64)> {
    bernoulli_level_crossings_t(terms, dir, 0.0).map(|(a, _, b, _)| (a.exp(), b.exp()))
}

pub fn bernoulli_profile(terms: &[BernoulliTerm], dir: Direction) -> Option<ThetaProfile> {
    bernoulli_level_crossings_t(terms, dir, 0.0).map(|(a, m, b, s)| ThetaProfile {
        theta_min: a.exp(),
        theta_mle: m.exp(),
        theta_max: b.exp(),
        score: s,
    })
}

// ---------------------------------------------------------------- Gaussian

/// Log-odds residual `logit(I) - logit(Î)` after clamping both.
pub fn delta(event: f64, expectation: f64) -> f64 {
    logit(clamp_prob(event)) - logit(clamp_prob(expectation))
}

/// `F(S | μ)`.
pub fn gaussian_llr(stats: GaussianStats, sigma: f64, mu: f64) -> f64 {
    (2.0 * mu * stats.sum_delta - stats.count * mu * mu) / (2.0 * sigma * sigma)
}

fn direction_matches(sum: f64, dir: Direction) -> bool {
    match dir {
        Direction::Positive => sum > 0.0,
        Direction::Negative => sum < 0.0,
    }
}

/// `(score, μ)`: `(ΣΔ)² / (2σ²|S|)` at `μ = ΣΔ/|S|` when the sign matches the
/// direction, otherwise `(0, 0)`.
///
/// ```
/// use cbscan::score::{gaussian_score, Direction, GaussianStats};
///
/// let s = GaussianStats::from_deltas(&[1.0, 1.0]);
/// assert_eq!(gaussian_score(s, 1.0, Direction::Positive).unwrap(), (1.0, 1.0));
/// ```
pub fn gaussian_score(stats: GaussianStats, sigma: f64, dir: Direction) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::Precondition(format!("sigma must be positive, got {sigma}")));
    }
    if stats.count <= 0.0 || !direction_matches(stats.sum_delta, dir) {
        return Ok((0.0, 0.0));
    }
    let mu = stats.sum_delta / stats.count;
    Ok((stats.sum_delta * stats.sum_delta / (2.0 * sigma * sigma * stats.count), mu))
}

/// Crossings of `F = level` in `μ` on the feasible side (closed form).
pub(crate) fn gaussian_level_crossings(stats: GaussianStats, sigma: f64, dir: Direction, level: f64) -> Option<(f64, f64, f64, f64)> {
    if stats.count <= 0.0 || !direction_matches(stats.sum_delta, dir) {
        return None;
    }
    let (d, n) = (stats.sum_delta, stats.count);
    let peak = d * d / (2.0 * sigma * sigma * n);
    if peak <= level {
        return None;
    }
    let mu = d / n;
    let (a, b) = if level == 0.0 {
        (0.0, 2.0 * d / n)
    } else {
        let disc = (d * d - 2.0 * sigma * sigma * level * n).max(0.0).sqrt();
        ((d - disc) / n, (d + disc) / n)
    };
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    let (a, b) = match dir {
        Direction::Positive => (a.max(0.0), b),
        Direction::Negative => (a, b.min(0.0)),
    };
    Some((a, mu, b, peak))
}

pub fn gaussian_profile(stats: GaussianStats, sigma: f64, dir: Direction) -> Option<ThetaProfile> {
    gaussian_level_crossings(stats, sigma, dir, 0.0).map(|(a, m, b, s)| ThetaProfile {
        theta_min: a,
        theta_mle: m,
        theta_max: b,
        score: s,
    })
}

/// `sqrt(mean Δ²)`, floored at [`SIGMA_FLOOR`].
pub fn estimate_sigma(deltas: &[f64]) -> f64 {
    if deltas.is_empty() {
        return SIGMA_FLOOR;
    }
    let ms = deltas.iter().map(|d| d * d).sum::<f64>() / deltas.len() as f64;
    ms.sqrt().max(SIGMA_FLOOR)
}

// ---------------------------------------------------------------- penalty

/// `λ` times the number of included values, summed over attributes that are
/// not fully included. `masks[a][v]` says whether value `v` of attribute `a`
/// is included.
pub fn subgroup_penalty(masks: &[Vec<bool>], lambda: f64) -> f64 {
    let counted: usize = masks
        .iter()
        .map(|m| {
            let k = m.iter().filter(|&&b| b).count();
            if k == m.len() { 0 } else { k }
        })
        .sum();
    lambda * counted as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn terms(xs: &[(bool, f64)]) -> Vec<BernoulliTerm> {
        xs.iter().map(|&(i, e)| BernoulliTerm::single(i, e)).collect()
    }

    #[test]
    fn matched_subset_scores_zero() {
        let s = terms(&[(true, 0.5), (false, 0.5)]);
        let (score, q) = bernoulli_score(&s, Direction::Positive);
        assert_eq!(q, 1.0);
        assert_eq!(score, 0.0);
        assert!(q_zero_crossings(&s, Direction::Positive).is_none());
    }

    #[test]
    fn three_row_example() {
        let s = terms(&[(true, 0.2), (false, 0.2), (true, 0.2)]);
        let (score, q) = bernoulli_score(&s, Direction::Positive);
        assert_relative_eq!(q, 8.0, max_relative = 1e-8);
        // 2 ln 8 - 3 ln 2.4
        let exact = 2.0 * 8f64.ln() - 3.0 * 2.4f64.ln();
        assert_relative_eq!(score, exact, epsilon = 1e-12);
        assert!((score - 1.5325).abs() < 1e-4);
        let (lo, hi) = q_zero_crossings(&s, Direction::Positive).unwrap();
        assert_eq!(lo, 1.0);
        assert!((2.0 * hi.ln() - 3.0 * (0.2 * hi + 0.8).ln()).abs() < 1e-6);
        assert!((hi - 112.5).abs() < 0.1, "{hi}");
        // negative direction sees nothing
        assert_eq!(bernoulli_score(&s, Direction::Negative), (0.0, 1.0));
    }

    #[test]
    fn boundary_supremum_negative() {
        let s = terms(&[(false, 0.8)]);
        let (score, q) = bernoulli_score(&s, Direction::Negative);
        assert_relative_eq!(q, Q_MIN, max_relative = 1e-9);
        assert_relative_eq!(score, -(0.2 + 0.8 * 1e-6f64).ln(), epsilon = 1e-9);
        assert!((score - 1.6094).abs() < 1e-4);
    }

    #[test]
    fn all_events_hit_the_cap() {
        let s = terms(&[(true, 0.2), (true, 0.2)]);
        assert_relative_eq!(mle_q(&s, Direction::Positive), Q_MAX, max_relative = 1e-9);
        let (lo, hi) = q_zero_crossings(&s, Direction::Positive).unwrap();
        assert_eq!(lo, 1.0);
        assert_relative_eq!(hi, Q_MAX, max_relative = 1e-9);
    }

    #[test]
    fn clamp_to_direction() {
        // unconstrained root: 1 event in 5 trials at 0.5 -> odds ratio 0.25
        let s = vec![BernoulliTerm { events: 1.0, trials: 5.0, expectation: 0.5 }];
        assert_relative_eq!(mle_q(&s, Direction::Negative), 0.25, max_relative = 1e-8);
        assert_eq!(mle_q(&s, Direction::Positive), 1.0);
    }

    #[test]
    fn aggregated_terms_equal_single_rows() {
        let single = terms(&[(true, 0.3), (false, 0.3), (false, 0.3), (true, 0.3)]);
        let agg = vec![BernoulliTerm { events: 2.0, trials: 4.0, expectation: 0.3 }];
        for q in [0.1, 0.5, 1.0, 2.0, 30.0] {
            assert_relative_eq!(bernoulli_llr(&single, q), bernoulli_llr(&agg, q), epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_examples() {
        let p = Direction::Positive;
        assert_eq!(gaussian_score(GaussianStats::from_deltas(&[1.0, 1.0]), 1.0, p).unwrap(), (1.0, 1.0));
        assert_eq!(gaussian_score(GaussianStats::from_deltas(&[1.0, -1.0]), 1.0, p).unwrap().0, 0.0);
        assert_eq!(gaussian_score(GaussianStats::from_deltas(&[-3.0]), 1.0, p).unwrap(), (0.0, 0.0));
        assert!(gaussian_score(GaussianStats::from_deltas(&[1.0]), 0.0, p).is_err());
        let prof = gaussian_profile(GaussianStats::from_deltas(&[1.0, 1.0]), 1.0, p).unwrap();
        assert_eq!((prof.theta_min, prof.theta_mle, prof.theta_max), (0.0, 1.0, 2.0));
        let neg = gaussian_profile(GaussianStats::from_deltas(&[-2.0]), 1.0, Direction::Negative).unwrap();
        assert_eq!((neg.theta_min, neg.theta_max), (-4.0, 0.0));
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(estimate_sigma(&[0.0, 0.0, 0.0]), SIGMA_FLOOR);
        assert_eq!(estimate_sigma(&[3.0, -3.0]), 3.0);
        assert_relative_eq!(estimate_sigma(&[1.0, 2.0, 2.0]), 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn penalty_examples() {
        let masks = vec![vec![true, false], vec![false, true], vec![true, true, true]];
        assert_eq!(subgroup_penalty(&masks, 1.0), 2.0);
        assert_eq!(subgroup_penalty(&masks, 0.0), 0.0);
        let full = vec![vec![true, true], vec![true; 3]];
        assert_eq!(subgroup_penalty(&full, 1.0), 0.0);
    }

    #[test]
    fn level_crossings_bracket_the_level() {
        let s = terms(&[(true, 0.2), (false, 0.2), (true, 0.2), (true, 0.3)]);
        let (a, m, b, peak) = bernoulli_level_crossings_t(&s, Direction::Positive, 0.5).unwrap();
        assert!(a < m && m < b && peak > 0.5);
        assert!((bernoulli_llr_t(&s, a) - 0.5).abs() < 1e-7);
        assert!((bernoulli_llr_t(&s, b) - 0.5).abs() < 1e-7);
        assert!(bernoulli_level_crossings_t(&s, Direction::Positive, peak + 1e-9).is_none());

        let g = GaussianStats { count: 3.0, sum_delta: 3.0 };
        let (a, _, b, _) = gaussian_level_crossings(g, 1.0, Direction::Positive, 1.0).unwrap();
        assert!((gaussian_llr(g, 1.0, a) - 1.0).abs() < 1e-12);
        assert!((gaussian_llr(g, 1.0, b) - 1.0).abs() < 1e-12);
    }

    fn arb_terms() -> impl Strategy<Value = Vec<(bool, f64)>> {
        prop::collection::vec((any::<bool>(), 0.05f64..0.95), 1..20)
    }

    proptest! {
        #[test]
        fn neutral_parameter_scores_zero(xs in arb_terms(), d in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            prop_assert_eq!(bernoulli_llr(&terms(&xs), 1.0), 0.0);
            prop_assert_eq!(gaussian_llr(GaussianStats::from_deltas(&d), 1.3, 0.0), 0.0);
        }

        #[test]
        fn scores_are_additive_over_disjoint_parts(
            xs in arb_terms(),
            split in 0usize..20,
            q in 0.01f64..100.0,
            d in prop::collection::vec(-5.0f64..5.0, 1..20),
            mu in -3.0f64..3.0,
        ) {
            let s = terms(&xs);
            let k = split.min(s.len());
            let whole = bernoulli_llr(&s, q);
            let parts = bernoulli_llr(&s[..k], q) + bernoulli_llr(&s[k..], q);
            prop_assert!((whole - parts).abs() < 1e-9 * (1.0 + whole.abs()));

            let k = split.min(d.len());
            let whole = gaussian_llr(GaussianStats::from_deltas(&d), 0.7, mu);
            let parts = gaussian_llr(GaussianStats::from_deltas(&d[..k]), 0.7, mu)
                + gaussian_llr(GaussianStats::from_deltas(&d[k..]), 0.7, mu);
            prop_assert!((whole - parts).abs() < 1e-9 * (1.0 + whole.abs()));
        }

        #[test]
        fn bisection_matches_log_grid(xs in arb_terms(), positive in any::<bool>()) {
            let dir = if positive { Direction::Positive } else { Direction::Negative };
            let s = terms(&xs);
            let (score, _) = bernoulli_score(&s, dir);
            let (lo, hi) = feasible_t(dir);
            let grid_max = (0..=2000)
                .map(|k| bernoulli_llr_t(&s, lo + (hi - lo) * k as f64 / 2000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(score >= grid_max - 1e-9);
            prop_assert!(score >= 0.0);
        }

        #[test]
        fn gaussian_score_is_the_closed_form(d in prop::collection::vec(-5.0f64..5.0, 1..20), sigma in 0.1f64..3.0) {
            let g = GaussianStats::from_deltas(&d);
            let (score, mu) = gaussian_score(g, sigma, Direction::Positive).unwrap();
            if g.sum_delta > 0.0 {
                prop_assert_eq!(score, g.sum_delta * g.sum_delta / (2.0 * sigma * sigma * g.count));
                prop_assert!((gaussian_llr(g, sigma, mu) - score).abs() < 1e-9 * (1.0 + score));
            } else {
                prop_assert_eq!(score, 0.0);
            }
        }
    }
}
