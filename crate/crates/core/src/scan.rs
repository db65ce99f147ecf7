//! Subgroup search: multi-restart coordinate ascent over attributes, with an
//! exact linear-time value-subset step per attribute.
//!
//! A [`Subgroup`] includes a non-empty set of values for every scanned
//! attribute; a row belongs to it when each of its values is included.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Attribute;
use crate::error::{Error, Result};
use crate::expectation::FamilyKind;
use crate::rng;
use crate::score::{
    bernoulli_level_crossings_t, bernoulli_llr_t, bernoulli_score, delta, estimate_sigma, gaussian_level_crossings,
    gaussian_llr, gaussian_score, subgroup_penalty, BernoulliTerm, Direction, GaussianStats,
};

/// Scores closer than this are treated as equal.
pub const SCORE_TIE: f64 = 1e-12;

/// One protected-class row as seen by the scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub id: usize,
    /// value index per scanned attribute
    pub cell: Vec<usize>,
    /// observed event `I` (0/1 for binary events, a probability otherwise)
    pub event: f64,
    /// expectation `Î`
    pub expectation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ScoreFamily {
    Bernoulli,
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone)]
enum Stat {
    Bernoulli(BernoulliTerm),
    Gaussian(GaussianStats),
}

// rows sharing a cell (and, for Bernoulli, an expectation)
#[derive(Debug, Clone)]
struct Group {
    cell: Vec<usize>,
    stat: Stat,
    rows: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Agg {
    Bernoulli(Vec<BernoulliTerm>),
    Gaussian(GaussianStats),
}

impl Agg {
    fn empty(family: ScoreFamily) -> Agg {
        match family {
            ScoreFamily::Bernoulli => Agg::Bernoulli(Vec::new()),
            ScoreFamily::Gaussian { .. } => Agg::Gaussian(GaussianStats::default()),
        }
    }

    fn push(&mut self, stat: &Stat) {
        match (self, stat) {
            (Agg::Bernoulli(v), Stat::Bernoulli(t)) => v.push(*t),
            (Agg::Gaussian(g), Stat::Gaussian(s)) => g.add(*s),
            _ => unreachable!("mixed score families"),
        }
    }

    fn extend(&mut self, other: &Agg) {
        match (self, other) {
            (Agg::Bernoulli(v), Agg::Bernoulli(o)) => v.extend_from_slice(o),
            (Agg::Gaussian(g), Agg::Gaussian(o)) => g.add(*o),
            _ => unreachable!("mixed score families"),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Agg::Bernoulli(v) => v.is_empty(),
            Agg::Gaussian(g) => g.count == 0.0,
        }
    }
}

/// Protected-class rows compressed for scanning, with their attribute vocabularies.
#[derive(Debug, Clone)]
pub struct ScanData {
    attributes: Vec<Attribute>,
    family: ScoreFamily,
    groups: Vec<Group>,
    n_rows: usize,
}

impl ScanData {
    /// Build scan data. For the Gaussian family `σ` is estimated from the
    /// residuals of all rows.
    pub fn new(attributes: Vec<Attribute>, kind: FamilyKind, rows: &[ScanRow]) -> Result<Self> {
        let sigma = match kind {
            FamilyKind::Bernoulli => None,
            FamilyKind::Gaussian => {
                let d: Vec<f64> = rows.iter().map(|r| delta(r.event, r.expectation)).collect();
                Some(estimate_sigma(&d))
            }
        };
        Self::build(attributes, kind, sigma, rows)
    }

    /// As [`ScanData::new`] with a fixed `σ` for the Gaussian family.
    pub fn with_sigma(attributes: Vec<Attribute>, sigma: f64, rows: &[ScanRow]) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Precondition(format!("sigma must be positive, got {sigma}")));
        }
        Self::build(attributes, FamilyKind::Gaussian, Some(sigma), rows)
    }

    fn build(attributes: Vec<Attribute>, kind: FamilyKind, sigma: Option<f64>, rows: &[ScanRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Precondition("no protected-class rows to scan".into()));
        }
        if attributes.is_empty() {
            return Err(Error::Precondition("no attributes to scan".into()));
        }
        for r in rows {
            if r.cell.len() != attributes.len() {
                return Err(Error::Precondition(format!("row {} has {} attribute values, expected {}", r.id, r.cell.len(), attributes.len())));
            }
            if let Some((a, _)) = r.cell.iter().enumerate().find(|(a, &v)| v >= attributes[*a].arity()) {
                return Err(Error::Precondition(format!("row {} has an out-of-range value for `{}`", r.id, attributes[a].name)));
            }
            if kind == FamilyKind::Bernoulli && r.event != 0.0 && r.event != 1.0 {
                return Err(Error::Precondition(format!("row {} has non-binary event {} for a Bernoulli scan", r.id, r.event)));
            }
            if !(r.event.is_finite() && r.expectation.is_finite()) {
                return Err(Error::Precondition(format!("row {} has a non-finite event or expectation", r.id)));
            }
        }

        let mut groups = Vec::new();
        match kind {
            FamilyKind::Bernoulli => {
                let mut index: BTreeMap<(Vec<usize>, u64), usize> = BTreeMap::new();
                for r in rows {
                    let e = crate::expectation::clamp_prob(r.expectation);
                    let k = *index.entry((r.cell.clone(), e.to_bits())).or_insert_with(|| {
                        groups.push(Group {
                            cell: r.cell.clone(),
                            stat: Stat::Bernoulli(BernoulliTerm { events: 0.0, trials: 0.0, expectation: e }),
                            rows: Vec::new(),
                        });
                        groups.len() - 1
                    });
                    if let Stat::Bernoulli(t) = &mut groups[k].stat {
                        t.events += r.event;
                        t.trials += 1.0;
                    }
                    groups[k].rows.push(r.id);
                }
            }
            FamilyKind::Gaussian => {
                let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
                for r in rows {
                    let k = *index.entry(r.cell.clone()).or_insert_with(|| {
                        groups.push(Group { cell: r.cell.clone(), stat: Stat::Gaussian(GaussianStats::default()), rows: Vec::new() });
                        groups.len() - 1
                    });
                    if let Stat::Gaussian(g) = &mut groups[k].stat {
                        g.add(GaussianStats { count: 1.0, sum_delta: delta(r.event, r.expectation) });
                    }
                    groups[k].rows.push(r.id);
                }
            }
        }
        let family = match sigma {
            Some(sigma) => ScoreFamily::Gaussian { sigma },
            None => ScoreFamily::Bernoulli,
        };
        Ok(ScanData { attributes, family, groups, n_rows: rows.len() })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn family(&self) -> ScoreFamily {
        self.family
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn aggregate(&self, sub: &Subgroup) -> Agg {
        let mut agg = Agg::empty(self.family);
        for g in self.groups.iter().filter(|g| sub.contains_cell(&g.cell)) {
            agg.push(&g.stat);
        }
        agg
    }

    fn best(&self, agg: &Agg, dir: Direction) -> (f64, f64) {
        match (agg, self.family) {
            (Agg::Bernoulli(t), _) => bernoulli_score(t, dir),
            (Agg::Gaussian(g), ScoreFamily::Gaussian { sigma }) => {
                gaussian_score(*g, sigma, dir).expect("sigma validated at construction")
            }
            _ => unreachable!(),
        }
    }

    // F at a line coordinate (t = ln q, or μ)
    fn eval(&self, agg: &Agg, x: f64) -> f64 {
        match (agg, self.family) {
            (Agg::Bernoulli(t), _) => bernoulli_llr_t(t, x),
            (Agg::Gaussian(g), ScoreFamily::Gaussian { sigma }) => gaussian_llr(*g, sigma, x),
            _ => unreachable!(),
        }
    }

    fn crossings(&self, agg: &Agg, dir: Direction, level: f64) -> Option<(f64, f64)> {
        match (agg, self.family) {
            (Agg::Bernoulli(t), _) => bernoulli_level_crossings_t(t, dir, level).map(|(a, _, b, _)| (a, b)),
            (Agg::Gaussian(g), ScoreFamily::Gaussian { sigma }) => {
                gaussian_level_crossings(*g, sigma, dir, level).map(|(a, _, b, _)| (a, b))
            }
            _ => unreachable!(),
        }
    }

    /// Ids of the rows belonging to `sub`, ascending.
    pub fn members(&self, sub: &Subgroup) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .groups
            .iter()
            .filter(|g| sub.contains_cell(&g.cell))
            .flat_map(|g| g.rows.iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Penalised score of `sub` and its maximising parameter (`q` or `μ`).
    pub fn score_subgroup(&self, sub: &Subgroup, dir: Direction, lambda: f64) -> (f64, f64) {
        let agg = self.aggregate(sub);
        let (score, theta) = self.best(&agg, dir);
        (score - subgroup_penalty(&sub.masks, lambda), theta)
    }
}

/// Included values per scanned attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Subgroup {
    pub masks: Vec<Vec<bool>>,
}

impl Subgroup {
    pub fn all(attributes: &[Attribute]) -> Self {
        Subgroup { masks: attributes.iter().map(|a| vec![true; a.arity()]).collect() }
    }

    pub fn contains_cell(&self, cell: &[usize]) -> bool {
        cell.iter().zip(&self.masks).all(|(&v, m)| m[v])
    }

    pub fn included(&self, attr: usize) -> Vec<usize> {
        self.masks[attr].iter().enumerate().filter(|(_, &b)| b).map(|(v, _)| v).collect()
    }

    pub fn total_included(&self) -> usize {
        self.masks.iter().map(|m| m.iter().filter(|&&b| b).count()).sum()
    }

    pub fn is_valid(&self) -> bool {
        self.masks.iter().all(|m| m.iter().any(|&b| b))
    }

    /// `attribute -> included values` for reporting; fully included attributes are omitted.
    pub fn describe(&self, attributes: &[Attribute]) -> BTreeMap<String, Vec<String>> {
        self.masks
            .iter()
            .zip(attributes)
            .filter(|(m, _)| !m.iter().all(|&b| b))
            .map(|(m, a)| {
                let vals = m.iter().zip(&a.values).filter(|(&b, _)| b).map(|(_, v)| v.clone()).collect();
                (a.name.clone(), vals)
            })
            .collect()
    }
}

// ordering key for ties: fewer values, then lexicographic by attribute name and value index
fn tie_key(sub: &Subgroup, name_order: &[usize]) -> (usize, Vec<Vec<usize>>) {
    (sub.total_included(), name_order.iter().map(|&a| sub.included(a)).collect())
}

/// Whether `(a, sa)` should replace the incumbent `(b, sb)`.
fn better(a: f64, sa: &Subgroup, b: f64, sb: &Subgroup, name_order: &[usize]) -> bool {
    if (a - b).abs() > SCORE_TIE {
        return a > b;
    }
    tie_key(sa, name_order) < tie_key(sb, name_order)
}

fn name_order(attributes: &[Attribute]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..attributes.len()).collect();
    idx.sort_by(|&a, &b| attributes[a].name.cmp(&attributes[b].name).then(a.cmp(&b)));
    idx
}

/// Result of one attribute step.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeStep {
    pub mask: Vec<bool>,
    pub score: f64,
    pub theta: f64,
    /// interval aggregates scored (excludes the all-values option)
    pub evaluations: usize,
}

/// Best value subset for attribute `attr` with all other attributes held at
/// `current`. The current mask of `attr` itself is ignored.
pub fn optimize_attribute(data: &ScanData, current: &Subgroup, attr: usize, dir: Direction, lambda: f64) -> AttributeStep {
    let arity = data.attributes[attr].arity();
    let mut per_value: Vec<Agg> = (0..arity).map(|_| Agg::empty(data.family)).collect();
    for g in &data.groups {
        let others_match = g.cell.iter().zip(&current.masks).enumerate().all(|(a, (&v, m))| a == attr || m[v]);
        if others_match {
            per_value[g.cell[attr]].push(&g.stat);
        }
    }

    let mut relaxed = current.clone();
    relaxed.masks[attr] = vec![true; arity];
    let penalty_others = subgroup_penalty(&relaxed.masks, lambda);
    let order = name_order(&data.attributes);

    // the all-values option carries no penalty for this attribute
    let mut all = Agg::empty(data.family);
    for a in &per_value {
        all.extend(a);
    }
    let (s, th) = data.best(&all, dir);
    let mut best = (s - penalty_others, th, relaxed.clone());

    let profiles: Vec<Option<(f64, f64)>> =
        per_value.iter().map(|a| if a.is_empty() { None } else { data.crossings(a, dir, lambda) }).collect();
    let mut points: Vec<f64> = profiles.iter().flatten().flat_map(|&(a, b)| [a, b]).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut evaluations = 0;
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for w in points.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let mask: Vec<bool> = (0..arity)
            .map(|v| profiles[v].is_some() && data.eval(&per_value[v], mid) > lambda)
            .collect();
        let k = mask.iter().filter(|&&b| b).count();
        if k == 0 || k == arity || seen.contains(&mask) {
            continue;
        }
        let mut agg = Agg::empty(data.family);
        for v in (0..arity).filter(|&v| mask[v]) {
            agg.extend(&per_value[v]);
        }
        let (s, th) = data.best(&agg, dir);
        evaluations += 1;
        let mut cand = relaxed.clone();
        cand.masks[attr] = mask.clone();
        let score = s - penalty_others - lambda * k as f64;
        if better(score, &cand, best.0, &best.2, &order) {
            best = (score, th, cand);
        }
        seen.push(mask);
    }

    let (score, theta, sub) = best;
    AttributeStep { mask: sub.masks[attr].clone(), score, theta, evaluations }
}

/// Search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    pub direction: Direction,
    pub penalty: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { direction: Direction::Positive, penalty: 1.0, iterations: 50, seed: 0 }
    }
}

/// Best subgroup found by [`scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanOutcome {
    pub subgroup: Subgroup,
    pub score: f64,
    /// maximising `q` (Bernoulli) or `μ` (Gaussian)
    pub theta: f64,
    /// 1-based restart in which the subgroup was first found
    pub iteration: usize,
    pub members: Vec<usize>,
    pub attribute_steps: usize,
}

fn random_start(attributes: &[Attribute], rng: &mut impl Rng) -> Subgroup {
    let masks = attributes
        .iter()
        .map(|a| loop {
            let m: Vec<bool> = (0..a.arity()).map(|_| rng.random_bool(0.5)).collect();
            if m.iter().any(|&b| b) {
                break m;
            }
        })
        .collect();
    Subgroup { masks }
}

struct Restart {
    subgroup: Subgroup,
    score: f64,
    theta: f64,
    steps: usize,
}

fn run_restart(data: &ScanData, opts: &ScanOptions, index: usize) -> Restart {
    let mut rng = rng::stream(opts.seed, index as u64);
    let mut sub = if index == 0 { Subgroup::all(&data.attributes) } else { random_start(&data.attributes, &mut rng) };
    let (mut score, mut theta) = data.score_subgroup(&sub, opts.direction, opts.penalty);
    let n_attr = data.attributes.len();
    let mut scanned = vec![false; n_attr];
    let mut steps = 0;
    loop {
        let unscanned: Vec<usize> = (0..n_attr).filter(|&a| !scanned[a]).collect();
        let Some(&attr) = unscanned.choose(&mut rng) else { break };
        let step = optimize_attribute(data, &sub, attr, opts.direction, opts.penalty);
        steps += 1;
        if step.score > score + SCORE_TIE {
            sub.masks[attr] = step.mask;
            score = step.score;
            theta = step.theta;
            scanned.iter_mut().for_each(|s| *s = false);
        }
        scanned[attr] = true;
    }
    Restart { subgroup: sub, score, theta, steps }
}

/// Multi-restart coordinate ascent for the highest penalised score.
///
/// Restart 1 starts from the full protected class; later restarts start from
/// random non-empty value subsets. Restarts run in parallel on the current
/// rayon pool and are reduced in index order, so the outcome does not depend
/// on the number of workers.
pub fn scan(data: &ScanData, opts: &ScanOptions) -> Result<ScanOutcome> {
    if opts.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if !(opts.penalty >= 0.0 && opts.penalty.is_finite()) {
        return Err(Error::Config(format!("penalty must be a non-negative number, got {}", opts.penalty)));
    }
    let results: Vec<Restart> = (0..opts.iterations).into_par_iter().map(|i| run_restart(data, opts, i)).collect();
    let order = name_order(&data.attributes);
    let mut best: Option<(usize, &Restart)> = None;
    for (i, r) in results.iter().enumerate() {
        let replace = match best {
            None => true,
            Some((_, b)) => r.subgroup != b.subgroup && better(r.score, &r.subgroup, b.score, &b.subgroup, &order),
        };
        if replace {
            best = Some((i, r));
        }
    }
    let (i, r) = best.expect("at least one restart");
    Ok(ScanOutcome {
        subgroup: r.subgroup.clone(),
        score: r.score,
        theta: r.theta,
        iteration: i + 1,
        members: data.members(&r.subgroup),
        attribute_steps: results.iter().map(|r| r.steps).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn attr(name: &str, k: usize) -> Attribute {
        Attribute { name: name.into(), values: (0..k).map(|v| format!("v{v}")).collect() }
    }

    fn random_rows(arities: &[usize], n: usize, gaussian: bool, rng: &mut ChaCha8Rng) -> Vec<ScanRow> {
        // per-cell shift so some values carry signal
        (0..n)
            .map(|id| {
                let cell: Vec<usize> = arities.iter().map(|&k| rng.random_range(0..k)).collect();
                let e: f64 = rng.random_range(0.05..0.95);
                let shift = if cell[0] % 2 == 0 { 0.25 } else { -0.15 };
                let p = (e + shift).clamp(0.01, 0.99);
                let event = if gaussian { rng.random_range(0.01..0.99) * 0.5 + p * 0.5 } else { f64::from(u8::from(rng.random_bool(p))) };
                ScanRow { id, cell, event, expectation: e }
            })
            .collect()
    }

    fn exhaustive_single(data: &ScanData, dir: Direction, lambda: f64) -> f64 {
        let k = data.attributes()[0].arity();
        (1u32..(1 << k))
            .map(|bits| {
                let sub = Subgroup { masks: vec![(0..k).map(|v| bits >> v & 1 == 1).collect()] };
                data.score_subgroup(&sub, dir, lambda).0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn three_row_subgroup_score() {
        let rows: Vec<ScanRow> = [(0, 1.0), (0, 0.0), (0, 1.0), (1, 0.0)]
            .iter()
            .enumerate()
            .map(|(id, &(v, ev))| ScanRow { id, cell: vec![v], event: ev, expectation: 0.2 })
            .collect();
        let data = ScanData::new(vec![attr("g", 2)], FamilyKind::Bernoulli, &rows).unwrap();
        let sub = Subgroup { masks: vec![vec![true, false]] };
        let (s, q) = data.score_subgroup(&sub, Direction::Positive, 0.5);
        assert!((s - (2.0 * 8f64.ln() - 3.0 * 2.4f64.ln() - 0.5)).abs() < 1e-9);
        assert!((q - 8.0).abs() < 1e-6);
        assert_eq!(data.members(&sub), vec![0, 1, 2]);
    }

    #[test]
    fn perfect_expectations_score_zero() {
        let rows: Vec<ScanRow> = (0..40)
            .map(|id| ScanRow { id, cell: vec![id % 3, id % 2], event: 0.3, expectation: 0.3 })
            .collect();
        let data = ScanData::new(vec![attr("a", 3), attr("b", 2)], FamilyKind::Gaussian, &rows).unwrap();
        let out = scan(&data, &ScanOptions { iterations: 5, ..Default::default() }).unwrap();
        assert_eq!(out.score, 0.0);
        assert_eq!(out.subgroup, Subgroup::all(data.attributes()));
        assert_eq!(out.members.len(), 40);
    }

    #[test]
    fn single_attribute_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in 0..60 {
            let k = rng.random_range(1..=8);
            let gaussian = case % 2 == 0;
            let rows = random_rows(&[k], rng.random_range(5..200), gaussian, &mut rng);
            let kind = if gaussian { FamilyKind::Gaussian } else { FamilyKind::Bernoulli };
            let data = ScanData::new(vec![attr("a", k)], kind, &rows).unwrap();
            for dir in [Direction::Positive, Direction::Negative] {
                for lambda in [0.0, 1.0] {
                    let out = scan(&data, &ScanOptions { direction: dir, penalty: lambda, iterations: 1, seed: 3 }).unwrap();
                    let oracle = exhaustive_single(&data, dir, lambda);
                    assert!((out.score - oracle).abs() < 1e-9, "case {case}: {} vs {oracle}", out.score);
                    let rescored = data.score_subgroup(&out.subgroup, dir, lambda).0;
                    assert!((rescored - out.score).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn evaluation_count_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let k = rng.random_range(1..=8);
            let rows = random_rows(&[k], 150, false, &mut rng);
            let data = ScanData::new(vec![attr("a", k)], FamilyKind::Bernoulli, &rows).unwrap();
            let step = optimize_attribute(&data, &Subgroup::all(data.attributes()), 0, Direction::Positive, 1.0);
            assert!(step.evaluations <= 2 * k - 1);
        }
    }

    #[test]
    fn exchangeable_values_move_together() {
        let mut rows = Vec::new();
        for v in 0..3 {
            for j in 0..20 {
                let ev = if v < 2 { f64::from(u8::from(j % 4 != 0)) } else { f64::from(u8::from(j % 4 == 0)) };
                rows.push(ScanRow { id: rows.len(), cell: vec![v], event: ev, expectation: 0.4 });
            }
        }
        let data = ScanData::new(vec![attr("a", 3)], FamilyKind::Bernoulli, &rows).unwrap();
        let step = optimize_attribute(&data, &Subgroup::all(data.attributes()), 0, Direction::Positive, 0.5);
        assert_eq!(step.mask[0], step.mask[1]);
        assert_eq!(step.mask, vec![true, true, false]);
    }

    #[test]
    fn reported_step_score_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_rows(&[3, 4, 2], 300, false, &mut rng);
        let data = ScanData::new(vec![attr("a", 3), attr("b", 4), attr("c", 2)], FamilyKind::Bernoulli, &rows).unwrap();
        let mut sub = random_start(data.attributes(), &mut rng);
        for attr in 0..3 {
            let step = optimize_attribute(&data, &sub, attr, Direction::Positive, 1.0);
            sub.masks[attr] = step.mask;
            let (s, _) = data.score_subgroup(&sub, Direction::Positive, 1.0);
            assert!((s - step.score).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_rows(&[3, 4, 2, 3], 500, true, &mut rng);
        let attrs = vec![attr("a", 3), attr("b", 4), attr("c", 2), attr("d", 3)];
        let data = ScanData::new(attrs, FamilyKind::Gaussian, &rows).unwrap();
        let opts = ScanOptions { iterations: 20, seed: 9, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| scan(&data, &opts)).unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| scan(&data, &opts)).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScanData::new(vec![attr("a", 2)], FamilyKind::Bernoulli, &[]).is_err());
        let r = ScanRow { id: 0, cell: vec![0], event: 0.5, expectation: 0.5 };
        assert!(ScanData::new(vec![attr("a", 2)], FamilyKind::Bernoulli, &[r.clone()]).is_err());
        let data = ScanData::new(vec![attr("a", 2)], FamilyKind::Gaussian, &[r]).unwrap();
        assert!(scan(&data, &ScanOptions { iterations: 0, ..Default::default() }).is_err());
    }
}
