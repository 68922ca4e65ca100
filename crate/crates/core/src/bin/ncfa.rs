use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ncfa::config::{ExperimentConfig, Format};
use ncfa::report::{write_csv, write_json, SuiteDocument};
use ncfa::suites::{self, SUITES};
use ncfa::Error;

#[derive(Parser)]
#[command(name = "ncfa", version, about = "Operator-valued Hardy/BMO experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and write its report.
    ///
    /// Tolerances are set with `--tol.<name> <value>` (or `--tol.<name>=<value>`).
    Verify(VerifyArgs),
    /// List the suite names.
    Suites,
}

#[derive(Args)]
struct VerifyArgs {
    /// `key=value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "J", allow_hyphen_values = true)]
    j: Option<i32>,
    #[arg(long = "K")]
    k: Option<i32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long = "cone-refine")]
    cone_refine: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

/// A `key`, `value` pair destined for [`ExperimentConfig::set`].
type Setting = (String, String);

/// Pulls `--tol.<name> v` and `--tol.<name>=v` out of the arguments, since
/// their names are open-ended.
fn split_tolerances(args: Vec<String>) -> Result<(Vec<String>, Vec<Setting>), Error> {
    let mut rest = Vec::with_capacity(args.len());
    let mut tols = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(spec) = a.strip_prefix("--tol.") else {
            rest.push(a);
            continue;
        };
        let (name, value) = match spec.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Config(format!("missing value for --tol.{spec}")))?;
                (spec.to_string(), v)
            }
        };
        tols.push((format!("tol.{name}"), value));
    }
    Ok((rest, tols))
}

fn build_config(args: VerifyArgs, tols: Vec<Setting>) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_kv(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.suite {
        cfg.suite = s;
    }
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(j) = args.j {
        cfg.j = j;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.ensemble {
        cfg.ensemble = n;
    }
    if let Some(r) = args.cone_refine {
        cfg.cone_refine = r;
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    if let Some(f) = args.format {
        cfg.format = f.parse()?;
    }
    for (k, v) in tols {
        cfg.set(&k, &v)?;
    }
    if cfg.suite != "all" && !SUITES.contains(&cfg.suite.as_str()) {
        return Err(Error::UnknownSuite(cfg.suite.clone()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, out: &suites::SuiteOutcome) -> Result<(), Error> {
    let sink: Box<dyn Write> = match &cfg.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match cfg.format {
        Format::Csv => write_csv(&mut sink, &out.reports)?,
        Format::Json => {
            let doc = SuiteDocument { suite: &cfg.suite, config: cfg, reports: &out.reports, pass: out.pass() };
            write_json(&mut sink, &doc)?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn verify(args: VerifyArgs, tols: Vec<Setting>) -> ExitCode {
    let cfg = match build_config(args, tols) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match suites::run_suite(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for c in &outcome.checks {
        eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Err(e) = emit(&cfg, &outcome) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if outcome.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let (args, tols) = match split_tolerances(std::env::args().collect()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Verify(a) => verify(a, tols),
        Command::Suites => {
            for s in SUITES.iter().chain(["all"].iter()) {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
    }
}
