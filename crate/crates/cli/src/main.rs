use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retlab::experiment::{self, ExperimentConfig, Report, SCHEMA_VERSION};
use retlab::stats::d_metric;
use retlab::Error;

#[derive(Parser)]
#[command(name = "retlab", version, about = "Return-time statistics on torus maps")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "RETLAB_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the configured target family and write report.json, samples.csv, cdf.csv.
    Simulate(RunArgs),
    /// Run only the configured condition checks.
    CheckConditions(RunArgs),
    /// Simulate and print the KS table per radius.
    Plt(RunArgs),
    /// D distance between the return processes of two reports.
    CompareLaws {
        a: PathBuf,
        b: PathBuf,
        /// Gaps per sample compared.
        #[arg(long, default_value_t = 1)]
        coordinates: usize,
        /// Radius row.
        #[arg(long, default_value_t = 0)]
        row: usize,
    },
    /// Combine reports; samples of the same experiment id are concatenated.
    Merge {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "canned", required_unless_present = "canned")]
    config: Option<PathBuf>,
    /// One of the shipped experiments.
    #[arg(long)]
    canned: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shards: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    /// Output directory; falls back to the config, then to `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), Failure> {
        let mut cfg = match (&self.config, &self.canned) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            (None, Some(name)) => experiment::canned(name)?,
            (None, None) => return Err(Failure::Config("pass --config or --canned".into())),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.shards {
            cfg.shards = s;
        }
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.dir)))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn finish(report: &Report, out: &Path) -> Result<ExitCode, Failure> {
    experiment::write_outputs(report, out)?;
    if report.censoring_overflow() {
        eprintln!("censoring overflow: at least one law has ≥1% censored samples");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn wrap(e: experiment::ExperimentReport) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        experiments: vec![e],
    }
}

fn print_plt(report: &Report) {
    println!("radius\tlaw\tn\tcensor_rate\tks\tdkw_radius\texponential");
    for e in &report.experiments {
        for row in &e.rows {
            for (law, s) in [("return", Some(&row.returning)), ("hitting", row.hitting.as_ref())] {
                let Some(s) = s else { continue };
                match &s.report {
                    Some(r) => println!(
                        "{}\t{law}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
                        row.radius, r.n, r.censor_rate, r.ks, r.dkw_radius, r.exponential
                    ),
                    None => println!("{}\t{law}\t{}\t{:.4}\t-\t-\tno verdict", row.radius, s.n, s.censor_rate),
                }
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, out) = args.load()?;
            finish(&wrap(experiment::run_experiment(&cfg)?), &out)
        }
        Command::CheckConditions(args) => {
            let (cfg, out) = args.load()?;
            let report = wrap(experiment::run_conditions(&cfg)?);
            for c in &report.experiments[0].conditions {
                let r = &c.row;
                println!(
                    "{:?}\t{:.4}\t±{:.4}\t{}\t{}",
                    r.condition, r.estimate, r.uncertainty, if r.verdict { "pass" } else { "fail" }, r.note
                );
            }
            finish(&report, &out)
        }
        Command::Plt(args) => {
            let (cfg, out) = args.load()?;
            let report = wrap(experiment::run_experiment(&cfg)?);
            print_plt(&report);
            finish(&report, &out)
        }
        Command::CompareLaws { a, b, coordinates, row } => {
            let pick = |p: &Path| -> Result<_, Failure> {
                let r = Report::read(p)?;
                let e = r
                    .experiments
                    .first()
                    .ok_or_else(|| Failure::Config(format!("{} has no experiments", p.display())))?;
                let rr = e
                    .rows
                    .get(row)
                    .ok_or_else(|| Failure::Config(format!("{} has no row {row}", p.display())))?;
                Ok(experiment::process_law(rr, coordinates)?)
            };
            let d = d_metric(&pick(&a)?, &pick(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&d).map_err(|e| Failure::Run(e.to_string()))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Merge { reports, out } => {
            let loaded = reports.iter().map(|p| Report::read(p)).collect::<Result<Vec<_>, _>>()?;
            finish(&experiment::merge_reports(&loaded)?, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Config(m)) => {
            eprintln!("invalid config: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
