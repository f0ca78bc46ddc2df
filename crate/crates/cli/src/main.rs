use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldp_recover::domain::{self, ItemDomain, RngSeed};
use ldp_recover::eval::{self, experiment, ExperimentConfig, ZipfSpec};
use ldp_recover::Error;

#[derive(Parser)]
#[command(name = "ldp-recover", version, about = "LDP poisoning and recovery experiments")]
struct Cli {
    /// Print progress to stderr; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset file: one item index per line.
    GenData(GenDataArgs),
    /// Run one experiment and write its results.
    Run(RunArgs),
    /// Run the config's parameter grid and write long-form results.
    Sweep(RunArgs),
    /// Show frequencies and the zeroed set from a run directory.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Zipf spec, e.g. `d=102,n=389894,s=1.1`.
    #[arg(long, conflicts_with = "from", required_unless_present = "from")]
    zipf: Option<ZipfSpec>,
    /// Existing dataset (item per line, or `item,count` CSV) to normalize.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Domain size for `--from`; defaults to the largest item + 1.
    #[arg(long, requires = "from")]
    domain: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML, or JSON by `.json` extension).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long, env = "LDP_RECOVER_OUT", default_value = "results")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(short, long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    /// Output directory of a previous `run`.
    dir: PathBuf,
    /// Rows to show, most frequent items first.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

/// Exit 1 for runtime failures, 2 for bad input.
enum Failure {
    Runtime(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Run(args) => run(args, cli.verbose),
        Command::Sweep(args) => sweep(args, cli.verbose),
        Command::Inspect(args) => inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn gen_data(args: GenDataArgs) -> Result<(), Failure> {
    let data = match (&args.zipf, &args.from) {
        (Some(z), _) => {
            let d = ItemDomain::new(z.d).map_err(usage)?;
            domain::synthesize_zipf(d, z.n, z.s, RngSeed(args.seed)).map_err(usage)?
        }
        (None, Some(path)) => domain::load_dataset(path, args.domain).map_err(usage)?,
        (None, None) => return Err(usage("one of --zipf or --from is required")),
    };
    domain::save_dataset(&args.output, &data)?;
    let hist = data.histogram();
    let n = data.len();
    println!("n = {n}");
    println!("d = {}", data.domain().size());
    let mut order: Vec<usize> = data.domain().items().collect();
    order.sort_by(|&a, &b| hist[b].cmp(&hist[a]).then(a.cmp(&b)));
    println!("top items:");
    for &item in order.iter().take(5) {
        let name = data
            .labels()
            .and_then(|l| l.get(item))
            .map(|l| format!(" ({l})"))
            .unwrap_or_default();
        println!("  {item}{name}: {:.4E}", hist[item] as f64 / n as f64);
    }
    if data.labels().is_some() {
        eprintln!("note: labels are not kept in the output; items are numbered by first appearance");
    }
    Ok(())
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::load(&args.config).map_err(usage)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(config)
}

fn describe(config: &ExperimentConfig) -> String {
    format!(
        "{} eps={} attack={:?} eta={} trials={} seed={}",
        config.protocol,
        config.epsilon,
        config.attack.kind,
        config.recovery.eta,
        config.trials,
        config.seed
    )
}

fn run(args: RunArgs, verbose: u8) -> Result<(), Failure> {
    let config = load_config(&args)?;
    if verbose > 0 {
        eprintln!("running {}", describe(&config));
    }
    let report = eval::with_jobs(args.jobs, || experiment::run_experiment(&config))??;
    if verbose > 0 {
        eprintln!("n = {}, m = {}, d = {}", report.n, report.m, report.d);
    }
    for e in &report.errors {
        eprintln!("warning: {e}");
    }
    eval::write_results(&report, &args.out)?;
    print!("{}", eval::format_table(&report));
    if verbose > 0 {
        eprintln!("wrote {}", args.out.display());
    }
    Ok(())
}

fn sweep(args: RunArgs, verbose: u8) -> Result<(), Failure> {
    let config = load_config(&args)?;
    let grid = match &config.sweep {
        Some(s) => s.grid().map_err(usage)?,
        None => return Err(usage(format!("{}: no [sweep] grid declared", args.config.display()))),
    };
    if verbose > 0 {
        eprintln!("sweeping {} over {:?}: {}", grid.0.name(), grid.1, describe(&config));
    }
    let report = eval::with_jobs(args.jobs, || experiment::run_sweep(&config))??;
    for (value, point) in &report.points {
        for e in &point.errors {
            eprintln!("warning: {}={value}: {e}", report.param.name());
        }
        println!("{} = {value}", report.param.name());
        print!("{}", eval::format_table(point));
        println!();
    }
    eval::write_sweep_results(&report, &args.out)?;
    if verbose > 0 {
        eprintln!("wrote {}", args.out.display());
    }
    Ok(())
}

fn require(dir: &Path, name: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!("missing artifact {}", path.display())))
    }
}

fn inspect(args: InspectArgs) -> Result<(), Failure> {
    if !args.dir.is_dir() {
        return Err(usage(format!("no such directory: {}", args.dir.display())));
    }
    let table_path = require(&args.dir, "frequencies.csv")?;
    let recovery_path = require(&args.dir, "recovery.json")?;
    let mut rows = eval::read_frequency_table(&table_path)?;
    let text = std::fs::read_to_string(&recovery_path).map_err(|e| Error::io(&recovery_path, e))?;
    let recovery: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;

    rows.sort_by(|a, b| b.truth.total_cmp(&a.truth).then(a.item.cmp(&b.item)));
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.2E}")).unwrap_or_else(|| "-".into());
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>12}  label",
        "item", "true", "poisoned", "recovered", "recovered*"
    );
    for row in rows.iter().take(args.top) {
        println!(
            "{:>6} {:>10} {:>10} {:>10} {:>12}  {}",
            row.item,
            fmt(Some(row.truth)),
            fmt(Some(row.poisoned)),
            fmt(row.ldprecover),
            fmt(row.ldprecover_star),
            row.label.as_deref().unwrap_or("")
        );
    }
    if let Some(targets) = recovery["targets"].as_array() {
        println!("targets: {}", join(targets));
    }
    for (key, name) in [("ldprecover", "LDPRecover"), ("ldprecover*", "LDPRecover*")] {
        if let Some(zeroed) = recovery[key]["zeroed"].as_array() {
            println!("zeroed ({name}, {}): {}", zeroed.len(), join(zeroed));
        }
    }
    Ok(())
}

fn join(values: &[serde_json::Value]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
