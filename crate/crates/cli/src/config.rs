//! Run configuration: a TOML file with `[data]`, `[scan]`, `[significance]`
//! and `[simulate]` sections, overridden by command-line flags.
//!
//! Parsing never stops at the first problem. Every unknown key and every
//! value of the wrong type or range is reported, each prefixed with its
//! dotted key path.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use cbscan::compas;
use cbscan::data::{load_dataset, BinDirective, Dataset, LoadReport, SchemaSpec};
use cbscan::discretize::BinStrategy;
use cbscan::expectation::{ExpectationOptions, ScanVariant};
use cbscan::glm::IrlsOptions;
use cbscan::pipeline::AuditConfig;
use cbscan::scan::ScanOptions;
use cbscan::score::Direction;
use cbscan::synth::{Arm, CovariateTable, SweepConfig, SynthSpec};
use toml::{Table, Value};

pub type Errors = Vec<String>;

/// One table of the config file, tracking which keys were consumed.
struct Section<'a> {
    path: String,
    table: &'a Table,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Section { path: path.into(), table, used: BTreeSet::new() }
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.path)
    }

    fn get(&mut self, k: &str) -> Option<&'a Value> {
        self.used.insert(k.to_string());
        self.table.get(k)
    }

    fn string(&mut self, k: &str, errs: &mut Errors) -> Option<String> {
        match self.get(k)? {
            Value::String(s) => Some(s.clone()),
            other => {
                errs.push(format!("{}: expected a string, found {}", self.key(k), other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, k: &str, errs: &mut Errors) -> Option<f64> {
        match self.get(k)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                errs.push(format!("{}: expected a number, found {}", self.key(k), other.type_str()));
                None
            }
        }
    }

    fn uint(&mut self, k: &str, errs: &mut Errors) -> Option<u64> {
        match self.get(k)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            other => {
                errs.push(format!("{}: expected a non-negative integer, found {other}", self.key(k)));
                None
            }
        }
    }

    fn boolean(&mut self, k: &str, errs: &mut Errors) -> Option<bool> {
        match self.get(k)? {
            Value::Boolean(b) => Some(*b),
            other => {
                errs.push(format!("{}: expected true or false, found {}", self.key(k), other.type_str()));
                None
            }
        }
    }

    fn strings(&mut self, k: &str, errs: &mut Errors) -> Option<Vec<String>> {
        let v = self.get(k)?;
        let parsed = v.as_array().and_then(|a| a.iter().map(|x| x.as_str().map(str::to_string)).collect::<Option<Vec<_>>>());
        if parsed.is_none() {
            errs.push(format!("{}: expected an array of strings", self.key(k)));
        }
        parsed
    }

    fn uints(&mut self, k: &str, errs: &mut Errors) -> Option<Vec<usize>> {
        let v = self.get(k)?;
        let parsed = v.as_array().and_then(|a| {
            a.iter().map(|x| x.as_integer().filter(|&i| i >= 0).map(|i| i as usize)).collect::<Option<Vec<_>>>()
        });
        if parsed.is_none() {
            errs.push(format!("{}: expected an array of non-negative integers", self.key(k)));
        }
        parsed
    }

    fn parsed<T: FromStr>(&mut self, k: &str, errs: &mut Errors) -> Option<T>
    where
        T::Err: Display,
    {
        let s = self.string(k, errs)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                errs.push(format!("{}: {e}", self.key(k)));
                None
            }
        }
    }

    fn tables(&mut self, k: &str, errs: &mut Errors) -> Vec<(String, &'a Table)> {
        let key = self.key(k);
        match self.get(k) {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .filter_map(|(i, v)| match v {
                    Value::Table(t) => Some((format!("{key}[{i}]"), t)),
                    _ => {
                        errs.push(format!("{key}[{i}]: expected a table"));
                        None
                    }
                })
                .collect(),
            Some(other) => {
                errs.push(format!("{key}: expected an array of tables, found {}", other.type_str()));
                Vec::new()
            }
        }
    }

    fn finish(self, errs: &mut Errors) {
        for k in self.table.keys() {
            if !self.used.contains(k) {
                errs.push(format!("{}: unknown key", self.key(k)));
            }
        }
    }
}

/// `"0"`, `"1"` or `"none"` (integers and booleans are accepted in files).
pub fn parse_conditional(s: &str) -> Result<Option<bool>, String> {
    match s {
        "0" | "false" => Ok(Some(false)),
        "1" | "true" => Ok(Some(true)),
        "none" => Ok(None),
        other => Err(format!("expected 0, 1 or none, found `{other}`")),
    }
}

fn conditional_from(v: &Value) -> Result<Option<bool>, String> {
    match v {
        Value::Integer(0) | Value::Boolean(false) => Ok(Some(false)),
        Value::Integer(1) | Value::Boolean(true) => Ok(Some(true)),
        Value::String(s) => parse_conditional(s),
        other => Err(format!("expected 0, 1 or none, found {other}")),
    }
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\t" => Ok(b'\t'),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        other => Err(format!("expected a single ASCII character or `tab`, found `{other}`")),
    }
}

fn delimiter_name(d: u8) -> String {
    if d == b'\t' {
        "tab".into()
    } else {
        (d as char).to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// the ProPublica two-year extract, preprocessed by [`compas::load_compas`]
    Compas,
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub path: Option<String>,
    pub delimiter: u8,
    pub covariates: Vec<String>,
    pub outcome: Option<String>,
    pub prediction: Option<String>,
    pub recommendation: Option<String>,
    pub sensitive: Option<String>,
    pub protected_value: Option<String>,
    pub threshold: f64,
    pub bins: Vec<BinDirective>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::File,
            path: None,
            delimiter: b',',
            covariates: Vec::new(),
            outcome: None,
            prediction: None,
            recommendation: None,
            sensitive: None,
            protected_value: None,
            threshold: 0.5,
            bins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub variant: ScanVariant,
    pub conditional_value: Option<bool>,
    pub direction: Direction,
    pub penalty: f64,
    pub iterations: usize,
    pub seed: u64,
    pub scan_attributes: Option<Vec<String>>,
    pub expectation_attributes: Option<Vec<String>>,
    pub propensity_after_filter: bool,
    pub irls: IrlsOptions,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let scan = ScanOptions::default();
        ScanConfig {
            variant: ScanVariant::SEPARATION_RECOMMENDATIONS,
            conditional_value: None,
            direction: scan.direction,
            penalty: scan.penalty,
            iterations: scan.iterations,
            seed: scan.seed,
            scan_attributes: None,
            expectation_attributes: None,
            propensity_after_filter: false,
            irls: IrlsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceConfig {
    pub n_perm: usize,
    pub alpha: f64,
    /// `None` means the scan seed
    pub seed: Option<u64>,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig { n_perm: 100, alpha: 0.05, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateSource {
    Compas,
    Random { arities: Vec<usize>, rows: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub covariates: CovariateSource,
    pub n_datasets: usize,
    pub seed: u64,
    pub iterations: usize,
    pub penalty: f64,
    pub variants: Vec<ScanVariant>,
    pub delimiter: u8,
    pub arms: Vec<Arm>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            covariates: CovariateSource::Random { arities: vec![2, 3, 4, 3], rows: 2000, seed: 0 },
            n_datasets: 20,
            seed: 0,
            iterations: 50,
            penalty: 1.0,
            variants: ScanVariant::ALL.to_vec(),
            delimiter: b',',
            arms: Vec::new(),
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub scan: ScanConfig,
    pub significance: SignificanceConfig,
    pub simulate: SimulateConfig,
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub penalty: Option<f64>,
    pub direction: Option<String>,
    pub variant: Option<String>,
    pub conditional_value: Option<String>,
    pub protected_attr: Option<String>,
    pub protected_value: Option<String>,
    pub n_perm: Option<usize>,
    pub alpha: Option<f64>,
    pub n_datasets: Option<usize>,
}

fn parse_data(sec: &mut Section, errs: &mut Errors) -> DataConfig {
    let mut d = DataConfig::default();
    if let Some(p) = sec.string("preset", errs) {
        match p.as_str() {
            "compas" => d.source = DataSource::Compas,
            other => errs.push(format!("{}: unknown preset `{other}` (expected compas)", sec.key("preset"))),
        }
    }
    d.path = sec.string("path", errs);
    if let Some(s) = sec.string("delimiter", errs) {
        match parse_delimiter(&s) {
            Ok(b) => d.delimiter = b,
            Err(e) => errs.push(format!("{}: {e}", sec.key("delimiter"))),
        }
    }
    d.covariates = sec.strings("covariates", errs).unwrap_or_default();
    d.outcome = sec.string("outcome", errs);
    d.prediction = sec.string("prediction", errs);
    d.recommendation = sec.string("recommendation", errs);
    d.sensitive = sec.string("sensitive", errs);
    d.protected_value = sec.string("protected_value", errs);
    d.threshold = sec.float("threshold", errs).unwrap_or(d.threshold);
    for (path, t) in sec.tables("bins", errs) {
        let mut b = Section::new(path, t);
        let column = b.string("column", errs);
        let n_bins = b.uint("n_bins", errs);
        let strategy = b.parsed::<BinStrategy>("strategy", errs);
        if column.is_none() || n_bins.is_none() || strategy.is_none() {
            errs.push(format!("{}: needs column, n_bins and strategy", b.path));
        }
        if let (Some(column), Some(n_bins), Some(strategy)) = (column, n_bins, strategy) {
            d.bins.push(BinDirective { column, n_bins: n_bins as usize, strategy });
        }
        b.finish(errs);
    }
    if d.source == DataSource::Compas {
        for k in ["covariates", "outcome", "prediction", "recommendation", "bins", "delimiter", "threshold"] {
            if sec.table.contains_key(k) {
                errs.push(format!("{}: not allowed with preset = \"compas\"", sec.key(k)));
            }
        }
    }
    d
}

fn parse_scan(sec: &mut Section, errs: &mut Errors) -> ScanConfig {
    let mut s = ScanConfig::default();
    if let Some(v) = sec.parsed("variant", errs) {
        s.variant = v;
    }
    if let Some(v) = sec.get("conditional_value") {
        match conditional_from(v) {
            Ok(z) => s.conditional_value = z,
            Err(e) => errs.push(format!("{}: {e}", sec.key("conditional_value"))),
        }
    }
    if let Some(v) = sec.parsed("direction", errs) {
        s.direction = v;
    }
    s.penalty = sec.float("penalty", errs).unwrap_or(s.penalty);
    s.iterations = sec.uint("iterations", errs).map(|v| v as usize).unwrap_or(s.iterations);
    s.seed = sec.uint("seed", errs).unwrap_or(s.seed);
    s.scan_attributes = sec.strings("scan_attributes", errs);
    s.expectation_attributes = sec.strings("expectation_attributes", errs);
    s.propensity_after_filter = sec.boolean("propensity_after_filter", errs).unwrap_or(false);
    s.irls.ridge = sec.float("ridge", errs).unwrap_or(s.irls.ridge);
    s.irls.tol = sec.float("tolerance", errs).unwrap_or(s.irls.tol);
    s.irls.max_iter = sec.uint("max_iter", errs).map(|v| v as usize).unwrap_or(s.irls.max_iter);
    s
}

fn parse_significance(sec: &mut Section, errs: &mut Errors) -> SignificanceConfig {
    let mut g = SignificanceConfig::default();
    g.n_perm = sec.uint("n_perm", errs).map(|v| v as usize).unwrap_or(g.n_perm);
    g.alpha = sec.float("alpha", errs).unwrap_or(g.alpha);
    g.seed = sec.uint("seed", errs);
    g
}

fn parse_arm(sec: &mut Section, errs: &mut Errors) -> Option<Arm> {
    let id = sec.string("id", errs);
    let mut spec = SynthSpec::default();
    for (k, slot) in [
        ("sigma_true", &mut spec.sigma_true),
        ("sigma_predict", &mut spec.sigma_predict),
        ("weight_sd", &mut spec.weight_sd),
        ("mu_sep", &mut spec.mu_sep),
        ("mu_suf", &mut spec.mu_suf),
        ("delta", &mut spec.delta),
        ("p_bias", &mut spec.p_bias),
        ("threshold", &mut spec.threshold),
    ] {
        if let Some(v) = sec.float(k, errs) {
            *slot = v;
        }
    }
    if let Some(n) = sec.uint("n_bias", errs) {
        spec.n_bias = n as usize;
    }
    if let Err(e) = spec.validate() {
        errs.push(format!("{}: {e}", sec.path));
    }
    match id {
        Some(id) => Some(Arm { id, spec }),
        None => {
            errs.push(format!("{}: missing id", sec.path));
            None
        }
    }
}

fn parse_simulate(sec: &mut Section, errs: &mut Errors) -> SimulateConfig {
    let mut m = SimulateConfig::default();
    let arities = sec.uints("arities", errs);
    let rows = sec.uint("rows", errs);
    let table_seed = sec.uint("table_seed", errs);
    match sec.string("covariates", errs).as_deref() {
        Some("compas") => {
            m.covariates = CovariateSource::Compas;
            for k in ["arities", "rows", "table_seed"] {
                if sec.table.contains_key(k) {
                    errs.push(format!("{}: only used with covariates = \"random\"", sec.key(k)));
                }
            }
        }
        None | Some("random") => {
            if let CovariateSource::Random { arities: a, rows: r, seed } = &mut m.covariates {
                *a = arities.unwrap_or(a.clone());
                *r = rows.map(|v| v as usize).unwrap_or(*r);
                *seed = table_seed.unwrap_or(*seed);
            }
        }
        Some(other) => errs.push(format!("{}: expected compas or random, found `{other}`", sec.key("covariates"))),
    }
    m.n_datasets = sec.uint("n_datasets", errs).map(|v| v as usize).unwrap_or(m.n_datasets);
    m.seed = sec.uint("seed", errs).unwrap_or(m.seed);
    m.iterations = sec.uint("iterations", errs).map(|v| v as usize).unwrap_or(m.iterations);
    m.penalty = sec.float("penalty", errs).unwrap_or(m.penalty);
    if let Some(vs) = sec.strings("variants", errs) {
        let mut parsed = Vec::new();
        for v in vs {
            match v.parse::<ScanVariant>() {
                Ok(v) => parsed.push(v),
                Err(e) => errs.push(format!("{}: {e}", sec.key("variants"))),
            }
        }
        m.variants = parsed;
    }
    if let Some(s) = sec.string("delimiter", errs) {
        match parse_delimiter(&s) {
            Ok(b) => m.delimiter = b,
            Err(e) => errs.push(format!("{}: {e}", sec.key("delimiter"))),
        }
    }
    for (path, t) in sec.tables("arm", errs) {
        let mut a = Section::new(path, t);
        if let Some(arm) = parse_arm(&mut a, errs) {
            m.arms.push(arm);
        }
        a.finish(errs);
    }
    let mut ids = BTreeSet::new();
    for a in &m.arms {
        if !ids.insert(a.id.as_str()) {
            errs.push(format!("{}: duplicate arm id `{}`", sec.key("arm"), a.id));
        }
    }
    m
}

impl RunConfig {
    /// Parse a config table. All problems are collected.
    pub fn from_table(root: &Table) -> Result<RunConfig, Errors> {
        let mut errs = Errors::new();
        let empty = Table::new();
        let mut cfg = RunConfig::default();
        for (k, v) in root {
            match (k.as_str(), v) {
                ("data" | "scan" | "significance" | "simulate", Value::Table(_)) => {}
                ("data" | "scan" | "significance" | "simulate", other) => {
                    errs.push(format!("{k}: expected a section, found {}", other.type_str()))
                }
                _ => errs.push(format!("{k}: unknown section")),
            }
        }
        let section = |name: &str| root.get(name).and_then(Value::as_table).unwrap_or(&empty);

        let mut s = Section::new("data", section("data"));
        cfg.data = parse_data(&mut s, &mut errs);
        s.finish(&mut errs);
        let mut s = Section::new("scan", section("scan"));
        cfg.scan = parse_scan(&mut s, &mut errs);
        s.finish(&mut errs);
        let mut s = Section::new("significance", section("significance"));
        cfg.significance = parse_significance(&mut s, &mut errs);
        s.finish(&mut errs);
        let mut s = Section::new("simulate", section("simulate"));
        cfg.simulate = parse_simulate(&mut s, &mut errs);
        s.finish(&mut errs);

        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(errs)
        }
    }

    /// Read a TOML config, or the `config` object of a JSON report.
    pub fn from_file(path: &Path) -> Result<RunConfig, Errors> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        let table: Table = if text.trim_start().starts_with('{') {
            let json: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| vec![format!("{}: {e}", path.display())])?;
            let echo = json.get("config").cloned().unwrap_or(json);
            serde_json::from_value(echo).map_err(|e| vec![format!("{}: config echo: {e}", path.display())])?
        } else {
            text.parse().map_err(|e: toml::de::Error| vec![format!("{}: {}", path.display(), e.message())])?
        };
        RunConfig::from_table(&table)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), Errors> {
        let mut errs = Errors::new();
        if let Some(seed) = o.seed {
            self.scan.seed = seed;
            self.simulate.seed = seed;
        }
        if let Some(n) = o.iterations {
            self.scan.iterations = n;
            self.simulate.iterations = n;
        }
        if let Some(p) = o.penalty {
            self.scan.penalty = p;
            self.simulate.penalty = p;
        }
        if let Some(d) = &o.direction {
            match d.parse() {
                Ok(d) => self.scan.direction = d,
                Err(e) => errs.push(format!("--direction: {e}")),
            }
        }
        if let Some(v) = &o.variant {
            match v.parse() {
                Ok(v) => self.scan.variant = v,
                Err(e) => errs.push(format!("--variant: {e}")),
            }
        }
        if let Some(z) = &o.conditional_value {
            match parse_conditional(z) {
                Ok(z) => self.scan.conditional_value = z,
                Err(e) => errs.push(format!("--conditional-value: {e}")),
            }
        }
        if let Some(a) = &o.protected_attr {
            self.data.sensitive = Some(a.clone());
        }
        if let Some(v) = &o.protected_value {
            self.data.protected_value = Some(v.clone());
        }
        if let Some(n) = o.n_perm {
            self.significance.n_perm = n;
        }
        if let Some(a) = o.alpha {
            self.significance.alpha = a;
        }
        if let Some(n) = o.n_datasets {
            self.simulate.n_datasets = n;
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Problems that stop an audit before any data is read.
    pub fn check_audit(&self) -> Errors {
        let mut errs = Errors::new();
        let d = &self.data;
        if d.path.is_none() {
            errs.push("data.path: required".into());
        }
        match d.source {
            DataSource::Compas => {
                if let Some(a) = &d.sensitive {
                    if !compas::ATTRIBUTES.contains(&a.as_str()) {
                        errs.push(format!("data.sensitive: `{a}` is not a COMPAS attribute {:?}", compas::ATTRIBUTES));
                    }
                }
            }
            DataSource::File => {
                for (k, v) in [("outcome", &d.outcome), ("sensitive", &d.sensitive), ("protected_value", &d.protected_value)]
                {
                    if v.is_none() {
                        errs.push(format!("data.{k}: required"));
                    }
                }
                if d.covariates.is_empty() {
                    errs.push("data.covariates: at least one covariate is required".into());
                }
            }
        }
        let s = &self.scan;
        if s.iterations == 0 {
            errs.push("scan.iterations: must be at least 1".into());
        }
        if !(s.penalty >= 0.0 && s.penalty.is_finite()) {
            errs.push(format!("scan.penalty: must be a non-negative number, got {}", s.penalty));
        }
        if s.conditional_value.is_some() && !s.variant.conditional().is_binary() {
            errs.push(format!("scan.conditional_value: variant {} conditions on P, so it must be none", s.variant));
        }
        errs
    }

    pub fn check_significance(&self) -> Errors {
        let mut errs = self.check_audit();
        if self.significance.n_perm == 0 {
            errs.push("significance.n_perm: must be at least 1".into());
        }
        let a = self.significance.alpha;
        if !(a > 0.0 && a < 1.0) {
            errs.push(format!("significance.alpha: must lie in (0, 1), got {a}"));
        }
        errs
    }

    pub fn check_simulate(&self) -> Errors {
        let mut errs = Errors::new();
        let m = &self.simulate;
        if m.arms.is_empty() {
            errs.push("simulate.arm: at least one arm is required".into());
        }
        if m.variants.is_empty() {
            errs.push("simulate.variants: at least one variant is required".into());
        }
        if m.n_datasets == 0 {
            errs.push("simulate.n_datasets: must be at least 1".into());
        }
        if m.iterations == 0 {
            errs.push("simulate.iterations: must be at least 1".into());
        }
        if !(m.penalty >= 0.0 && m.penalty.is_finite()) {
            errs.push(format!("simulate.penalty: must be a non-negative number, got {}", m.penalty));
        }
        match &m.covariates {
            CovariateSource::Compas if self.data.path.is_none() => {
                errs.push("data.path: required for simulate.covariates = \"compas\"".into())
            }
            CovariateSource::Random { arities, rows, .. } => {
                if arities.len() < 2 || arities.iter().any(|&a| a < 2) {
                    errs.push("simulate.arities: need at least two attributes, each with at least two values".into());
                }
                if *rows == 0 {
                    errs.push("simulate.rows: must be at least 1".into());
                }
            }
            _ => {}
        }
        errs
    }

    pub fn significance_seed(&self) -> u64 {
        self.significance.seed.unwrap_or(self.scan.seed)
    }

    pub fn audit_config(&self) -> AuditConfig {
        let s = &self.scan;
        let mut cfg = AuditConfig::new(s.variant, s.direction);
        cfg.conditional_value = s.conditional_value;
        cfg.scan.penalty = s.penalty;
        cfg.scan.iterations = s.iterations;
        cfg.scan.seed = s.seed;
        cfg.scan_attributes = s.scan_attributes.clone();
        cfg.expectation_attributes = s.expectation_attributes.clone();
        cfg.expectation = ExpectationOptions { irls: s.irls, propensity_after_filter: s.propensity_after_filter };
        cfg
    }

    pub fn schema(&self) -> Option<SchemaSpec> {
        let d = &self.data;
        Some(SchemaSpec {
            covariates: d.covariates.clone(),
            outcome: d.outcome.clone()?,
            prediction: d.prediction.clone(),
            recommendation: d.recommendation.clone(),
            sensitive: d.sensitive.clone()?,
            protected_value: d.protected_value.clone()?,
            bins: d.bins.clone(),
            threshold: d.threshold,
            delimiter: d.delimiter,
        })
    }

    /// Load the audit dataset. Call [`RunConfig::check_audit`] first.
    pub fn load(&self) -> cbscan::Result<(Dataset, LoadReport)> {
        let path = self.data.path.as_deref().unwrap_or_default();
        let file = std::fs::File::open(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot open data file `{path}`: {e}")))?;
        match self.data.source {
            DataSource::Compas => {
                let frame = compas::load_compas(std::io::BufReader::new(file))?;
                let report = LoadReport { rows_read: frame.len(), ..Default::default() };
                let ds = frame.dataset(self.compas_attribute(), self.compas_value())?;
                Ok((ds, report))
            }
            DataSource::File => {
                let schema = self.schema().ok_or_else(|| cbscan::Error::Config("incomplete data section".into()))?;
                load_dataset(std::io::BufReader::new(file), &schema)
            }
        }
    }

    fn compas_attribute(&self) -> &str {
        self.data.sensitive.as_deref().unwrap_or("race")
    }

    fn compas_value(&self) -> &str {
        self.data.protected_value.as_deref().unwrap_or("African-American")
    }

    pub fn covariate_table(&self) -> cbscan::Result<CovariateTable> {
        match &self.simulate.covariates {
            CovariateSource::Compas => {
                let path = self.data.path.as_deref().unwrap_or_default();
                let file = std::fs::File::open(path)
                    .map_err(|e| std::io::Error::new(e.kind(), format!("cannot open data file `{path}`: {e}")))?;
                compas::load_compas(std::io::BufReader::new(file))?.covariate_table()
            }
            CovariateSource::Random { arities, rows, seed } => CovariateTable::random(arities, *rows, *seed),
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let m = &self.simulate;
        SweepConfig {
            arms: m.arms.clone(),
            variants: m.variants.clone(),
            n_datasets: m.n_datasets,
            seed: m.seed,
            iterations: m.iterations,
            penalty: m.penalty,
        }
    }

    fn data_table(&self) -> Table {
        let d = &self.data;
        let mut t = Table::new();
        if let Some(p) = &d.path {
            t.insert("path".into(), p.clone().into());
        }
        match d.source {
            DataSource::Compas => {
                t.insert("preset".into(), "compas".into());
                t.insert("sensitive".into(), self.compas_attribute().into());
                t.insert("protected_value".into(), self.compas_value().into());
            }
            DataSource::File => {
                t.insert("delimiter".into(), delimiter_name(d.delimiter).into());
                t.insert("covariates".into(), d.covariates.clone().into());
                for (k, v) in [
                    ("outcome", &d.outcome),
                    ("prediction", &d.prediction),
                    ("recommendation", &d.recommendation),
                    ("sensitive", &d.sensitive),
                    ("protected_value", &d.protected_value),
                ] {
                    if let Some(v) = v {
                        t.insert(k.into(), v.clone().into());
                    }
                }
                t.insert("threshold".into(), d.threshold.into());
                let bins: Vec<Value> = d
                    .bins
                    .iter()
                    .map(|b| {
                        let mut bt = Table::new();
                        bt.insert("column".into(), b.column.clone().into());
                        bt.insert("n_bins".into(), (b.n_bins as i64).into());
                        bt.insert("strategy".into(), b.strategy.to_string().into());
                        Value::Table(bt)
                    })
                    .collect();
                if !bins.is_empty() {
                    t.insert("bins".into(), Value::Array(bins));
                }
            }
        }
        t
    }

    fn scan_table(&self) -> Table {
        let s = &self.scan;
        let mut t = Table::new();
        t.insert("variant".into(), s.variant.to_string().into());
        let z = match s.conditional_value {
            None => "none",
            Some(false) => "0",
            Some(true) => "1",
        };
        t.insert("conditional_value".into(), z.into());
        t.insert("direction".into(), s.direction.to_string().into());
        t.insert("penalty".into(), s.penalty.into());
        t.insert("iterations".into(), (s.iterations as i64).into());
        t.insert("seed".into(), seed_value(s.seed));
        if let Some(a) = &s.scan_attributes {
            t.insert("scan_attributes".into(), a.clone().into());
        }
        if let Some(a) = &s.expectation_attributes {
            t.insert("expectation_attributes".into(), a.clone().into());
        }
        t.insert("propensity_after_filter".into(), s.propensity_after_filter.into());
        t.insert("ridge".into(), s.irls.ridge.into());
        t.insert("tolerance".into(), s.irls.tol.into());
        t.insert("max_iter".into(), (s.irls.max_iter as i64).into());
        t
    }

    fn significance_table(&self) -> Table {
        let g = &self.significance;
        let mut t = Table::new();
        t.insert("n_perm".into(), (g.n_perm as i64).into());
        t.insert("alpha".into(), g.alpha.into());
        t.insert("seed".into(), seed_value(self.significance_seed()));
        t
    }

    fn simulate_table(&self) -> Table {
        let m = &self.simulate;
        let mut t = Table::new();
        match &m.covariates {
            CovariateSource::Compas => {
                t.insert("covariates".into(), "compas".into());
            }
            CovariateSource::Random { arities, rows, seed } => {
                t.insert("covariates".into(), "random".into());
                t.insert("arities".into(), arities.iter().map(|&a| a as i64).collect::<Vec<_>>().into());
                t.insert("rows".into(), (*rows as i64).into());
                t.insert("table_seed".into(), seed_value(*seed));
            }
        }
        t.insert("n_datasets".into(), (m.n_datasets as i64).into());
        t.insert("seed".into(), seed_value(m.seed));
        t.insert("iterations".into(), (m.iterations as i64).into());
        t.insert("penalty".into(), m.penalty.into());
        t.insert("variants".into(), m.variants.iter().map(|v| v.to_string()).collect::<Vec<_>>().into());
        t.insert("delimiter".into(), delimiter_name(m.delimiter).into());
        let arms: Vec<Value> = m
            .arms
            .iter()
            .map(|a| {
                let s = &a.spec;
                let mut at = Table::new();
                at.insert("id".into(), a.id.clone().into());
                for (k, v) in [
                    ("sigma_true", s.sigma_true),
                    ("sigma_predict", s.sigma_predict),
                    ("weight_sd", s.weight_sd),
                    ("mu_sep", s.mu_sep),
                    ("mu_suf", s.mu_suf),
                    ("delta", s.delta),
                    ("p_bias", s.p_bias),
                    ("threshold", s.threshold),
                ] {
                    at.insert(k.into(), v.into());
                }
                at.insert("n_bias".into(), (s.n_bias as i64).into());
                Value::Table(at)
            })
            .collect();
        t.insert("arm".into(), Value::Array(arms));
        t
    }

    /// Echo of the sections a command used, in config-file layout.
    pub fn echo(&self, sections: &[&str]) -> Table {
        let mut t = Table::new();
        for &s in sections {
            let v = match s {
                "data" => self.data_table(),
                "scan" => self.scan_table(),
                "significance" => self.significance_table(),
                "simulate" => self.simulate_table(),
                _ => continue,
            };
            t.insert(s.into(), Value::Table(v));
        }
        t
    }
}

// TOML integers are signed 64-bit
fn seed_value(seed: u64) -> Value {
    Value::Integer(seed as i64)
}
