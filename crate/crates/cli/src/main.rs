mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use cbscan::discretize::{discretize_column, BinStrategy};
use cbscan::inference::audit_with_significance;
use cbscan::pipeline::run_audit;
use cbscan::synth::{run_experiment_sweep, write_sweep_table};
use cbscan::ErrorClass;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Errors, Overrides, RunConfig};

/// Audit classifier outputs for the most significant subgroup bias against a protected class.
#[derive(Parser)]
#[command(name = "cbscan", version)]
struct Cli {
    /// Worker threads (defaults to the number of CPUs). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one audit and write a JSON report.
    Audit(RunArgs),
    /// Audit, then test the detected subgroup with a permutation test.
    Significance {
        #[command(flatten)]
        run: RunArgs,
        /// Number of permutation replicates.
        #[arg(long)]
        n_perm: Option<usize>,
        /// Significance level.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run a semi-synthetic experiment grid and write the results table.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        penalty: Option<f64>,
        /// Datasets per arm.
        #[arg(long)]
        n_datasets: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discretize a numeric column and print the bins as JSON.
    Bin(BinArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    penalty: Option<f64>,
    /// positive or negative
    #[arg(long)]
    direction: Option<String>,
    /// sep-pred, sep-rec, suf-pred or suf-rec
    #[arg(long)]
    variant: Option<String>,
    /// 0, 1 or none
    #[arg(long)]
    conditional_value: Option<String>,
    #[arg(long)]
    protected_attr: Option<String>,
    #[arg(long)]
    protected_value: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            iterations: self.iterations,
            penalty: self.penalty,
            direction: self.direction.clone(),
            variant: self.variant.clone(),
            conditional_value: self.conditional_value.clone(),
            protected_attr: self.protected_attr.clone(),
            protected_value: self.protected_value.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct BinArgs {
    /// Delimited file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    column: String,
    #[arg(long)]
    bins: usize,
    /// equal-width or equal-frequency
    #[arg(long, default_value = "equal-frequency")]
    strategy: String,
    /// single character, or `tab`
    #[arg(long, default_value = ",")]
    delimiter: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(Errors),
    Core { stage: &'static str, error: cbscan::Error },
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Core { error, .. } => match error.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }

    fn report(&self) {
        match self {
            Failure::Config(errs) => {
                eprintln!("configuration error{}:", if errs.len() == 1 { "" } else { "s" });
                for e in errs {
                    eprintln!("  {e}");
                }
            }
            Failure::Core { stage, error } => eprintln!("error during {stage}: {error}"),
        }
    }
}

fn stage(stage: &'static str) -> impl Fn(cbscan::Error) -> Failure {
    move |error| Failure::Core { stage, error }
}

fn checked(errs: Errors) -> Result<(), Failure> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(errs))
    }
}

fn write_out(text: &str, out: Option<&std::path::Path>) -> Result<(), Failure> {
    report::emit(text, out).map_err(|e| Failure::Core { stage: "writing output", error: e.into() })
}

fn load_config(path: &std::path::Path, o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_file(path).map_err(Failure::Config)?;
    cfg.apply(o).map_err(Failure::Config)?;
    Ok(cfg)
}

fn cmd_audit(args: &RunArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load_config(&args.config, &args.overrides())?;
    checked(cfg.check_audit())?;
    let (ds, load) = cfg.load().map_err(stage("loading data"))?;
    let result = run_audit(&ds, &cfg.audit_config()).map_err(stage("audit"))?;
    let body = json!({ "load": load, "result": result });
    let rep = report::build("audit", cfg.scan.seed, &cfg.echo(&["data", "scan"]), body, start.elapsed());
    write_out(&report::to_text(&rep), args.out.as_deref())
}

fn cmd_significance(args: &RunArgs, n_perm: Option<usize>, alpha: Option<f64>) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load_config(&args.config, &Overrides { n_perm, alpha, ..args.overrides() })?;
    checked(cfg.check_significance())?;
    let (ds, load) = cfg.load().map_err(stage("loading data"))?;
    let g = &cfg.significance;
    let (result, perm) = audit_with_significance(&ds, &cfg.audit_config(), g.n_perm, g.alpha, cfg.significance_seed())
        .map_err(stage("significance test"))?;
    let body = json!({ "load": load, "result": result, "significance": perm });
    let echo = cfg.echo(&["data", "scan", "significance"]);
    let rep = report::build("significance", cfg.scan.seed, &echo, body, start.elapsed());
    write_out(&report::to_text(&rep), args.out.as_deref())
}

fn cmd_simulate(config: &std::path::Path, o: Overrides, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let cfg = load_config(config, &o)?;
    checked(cfg.check_simulate())?;
    let table = cfg.covariate_table().map_err(stage("building covariate table"))?;
    let rows = run_experiment_sweep(&table, &cfg.sweep_config()).map_err(stage("simulation sweep"))?;
    for r in &rows {
        for f in &r.failures {
            log::warn!("arm {}: {f}", r.arm);
        }
    }
    let mut buf = Vec::new();
    write_sweep_table(&rows, &mut buf, cfg.simulate.delimiter).map_err(stage("writing results"))?;
    write_out(&String::from_utf8_lossy(&buf), out)
}

fn cmd_bin(args: &BinArgs) -> Result<(), Failure> {
    let strategy: BinStrategy = args.strategy.parse().map_err(|e: cbscan::Error| Failure::Config(vec![format!("--strategy: {e}")]))?;
    let delimiter = match args.delimiter.as_str() {
        "tab" => b'\t',
        d if d.len() == 1 && d.is_ascii() => d.as_bytes()[0],
        d => return Err(Failure::Config(vec![format!("--delimiter: expected one character or `tab`, found `{d}`")])),
    };
    let load = stage("reading column");
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(&args.input)
        .map_err(|e| load(e.into()))?;
    let headers = rdr.headers().map_err(|e| load(e.into()))?.clone();
    let col = headers.iter().position(|h| h == args.column).ok_or_else(|| {
        Failure::Core { stage: "reading column", error: cbscan::Error::Schema(format!("no column named `{}`", args.column)) }
    })?;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| load(e.into()))?;
        let field = rec.get(col).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| {
            load(cbscan::Error::Parse { row: i + 1, message: format!("`{field}` is not a number") })
        })?;
        values.push(v);
    }
    let b = discretize_column(&values, args.bins, strategy).map_err(stage("binning"))?;
    let body = json!({
        "command": "bin",
        "software": report::SOFTWARE,
        "column": args.column,
        "strategy": strategy,
        "requested_bins": args.bins,
        "bins": b.bins,
        "boundaries": b.boundaries(strategy),
        "warnings": b.warnings,
        "codes": b.codes,
    });
    write_out(&report::to_text(&body), args.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            Failure::Config(vec!["--workers: must be at least 1".into()]).report();
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let outcome = match &cli.command {
        Command::Audit(args) => cmd_audit(args),
        Command::Significance { run, n_perm, alpha } => cmd_significance(run, *n_perm, *alpha),
        Command::Simulate { config, seed, iterations, penalty, n_datasets, out } => {
            let o = Overrides { seed: *seed, iterations: *iterations, penalty: *penalty, n_datasets: *n_datasets, ..Default::default() };
            cmd_simulate(config, o, out.as_deref())
        }
        Command::Bin(args) => cmd_bin(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.exit_code())
        }
    }
}
