use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use singlab::birational::{rlct_from_charts, rlct_volume_fit, ChartSet, InvariantEstimate};
use singlab::data::{load_csv, save_csv};
use singlab::estimators::{ErrorReport, REPORT_COLUMNS};
use singlab::harness::{self, Experiment, ExperimentConfig};
use singlab::Dataset;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "singlab", version, about = "Gibbs-posterior regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one dataset and write it as CSV with a JSON sidecar.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
        /// Defaults to data_n<n>_r<seed-index>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the posterior for a dataset; draws go to CSV, diagnostics to stdout.
    Sample {
        #[command(flatten)]
        run: PosteriorArgs,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
    },
    /// Compute T, G, V, G_hat and the D-statistics for a dataset.
    Estimate {
        #[command(flatten)]
        run: PosteriorArgs,
        /// Append the row to this CSV instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (n, beta, replication) of a config into a directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learning coefficient from chart data or from the prior-volume scaling.
    Rlct {
        #[arg(long, conflicts_with_all = ["volume", "config"], required_unless_present = "volume")]
        charts: Option<PathBuf>,
        #[arg(long, requires = "config")]
        volume: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summary table, plot data and checks for a sweep directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Exit with status 3 if any check fails.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to the first beta of the config.
    #[arg(long)]
    beta: Option<f64>,
    /// Replication index feeding the sampler seed.
    #[arg(long, default_value_t = 0)]
    seed_index: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .chain()
                .find_map(|c| c.downcast_ref::<singlab::Error>())
                .is_some_and(singlab::Error::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn experiment(config: &Path) -> Result<Experiment> {
    let cfg = ExperimentConfig::load(config)?;
    Ok(Experiment::new(cfg)?)
}

fn load_dataset(exp: &Experiment, path: &Path) -> Result<Dataset> {
    let (data, meta) = load_csv(path)?;
    if meta.model_id != exp.config.model {
        log::warn!("dataset was generated for {}, config uses {}", meta.model_id, exp.config.model);
    }
    if data.m_in() != exp.spec.m_in() || data.n_out() != exp.spec.n_out() {
        return Err(singlab::Error::invalid(format!(
            "dataset has M={}, N={} but {} needs M={}, N={}",
            data.m_in(),
            data.n_out(),
            exp.config.model,
            exp.spec.m_in(),
            exp.spec.n_out()
        ))
        .into());
    }
    Ok(data)
}

fn posterior_run(args: &PosteriorArgs) -> Result<(Experiment, Dataset, singlab::PosteriorSamples)> {
    let exp = experiment(&args.config)?;
    let data = load_dataset(&exp, &args.dataset)?;
    let beta = args.beta.unwrap_or(exp.config.betas[0]);
    let samples = exp.posterior(&data, data.n(), beta, args.seed_index)?;
    Ok((exp, data, samples))
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate { config, n, seed_index, out } => {
            let exp = experiment(&config)?;
            let data = exp.dataset(n, seed_index)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("data_n{n}_r{seed_index}.csv")));
            save_csv(&data, &out, &exp.config.model, exp.config.sigma)?;
            println!("{}", out.display());
        }
        Command::Sample { run, out } => {
            let (_, _, samples) = posterior_run(&run)?;
            samples.write_csv(&out)?;
            println!("{}", serde_json::to_string_pretty(&samples.diagnostics())?);
            if !samples.converged() {
                log::warn!("sampler did not reach the R-hat limit");
            }
        }
        Command::Estimate { run, out } => {
            let (exp, data, samples) = posterior_run(&run)?;
            let row = ErrorReport::compute(&samples, &data, &exp.truth, &exp.spec, &exp.xq, run.seed_index);
            match out {
                Some(path) => {
                    let mut rows = if path.exists() { harness::read_rows(&path)? } else { Vec::new() };
                    rows.push(row);
                    harness::write_rows(&path, &rows)?;
                }
                None => {
                    println!("{}", REPORT_COLUMNS.join(","));
                    println!("{}", row.to_record().join(","));
                }
            }
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let res = harness::run_sweep(&cfg, &out)?;
            println!(
                "{} cells, {} rows ({} flagged) written to {}",
                res.cells.len(),
                res.total_rows,
                res.flagged_rows,
                out.display()
            );
        }
        Command::Rlct { charts, volume, config } => {
            let estimate: InvariantEstimate = if volume {
                let exp = experiment(config.as_deref().context("--volume needs --config")?)?;
                let profile = exp.volume_profile()?;
                if let Some(w) = &profile.warning {
                    log::warn!("{w}");
                }
                rlct_volume_fit(&profile, exp.spec.d())?
            } else {
                let path = charts.context("--charts or --volume is required")?;
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| singlab::Error::io(&path, e))?;
                let exact = rlct_from_charts(&ChartSet::from_json(&text)?)?;
                println!("lambda = {}, m = {}", exact.lambda, exact.multiplicity);
                InvariantEstimate::from_exact(exact)
            };
            println!("{}", serde_json::to_string_pretty(&estimate)?);
        }
        Command::Report { input, check } => {
            let rep = harness::report(&input)?;
            print!("{}", rep.table);
            for c in &rep.checks {
                println!("{c}");
            }
            if check && !rep.all_passed() {
                return Ok(ExitCode::from(EXIT_CHECK_FAILED));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
