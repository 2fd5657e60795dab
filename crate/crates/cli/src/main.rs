use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use spice_core::io::{self, CalibrationConfig};
use spice_core::sampler::ProgressEvent;
use spice_core::simgen::{generate, SimSpec};
use spice_core::Error;

#[derive(Parser)]
#[command(name = "spice", version, about = "Bayesian calibration of explanatory IRT models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model described by a configuration file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        /// Worker threads.
        #[arg(long, env = "SPICE_THREADS")]
        threads: Option<usize>,
        /// Output directory; overrides `output` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic data set and a matching configuration.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute summaries, WAIC and predictive checks from a run directory.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate { config, seed, chains, threads, out } => {
            calibrate(&config, seed, chains, threads, out.as_deref())
        }
        Command::Simulate { spec, out } => simulate(&spec, &out),
        Command::Diagnose { run } => diagnose(&run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn calibrate(
    path: &Path,
    seed: Option<u64>,
    chains: Option<usize>,
    threads: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = CalibrationConfig::from_toml(&text).map_err(|e| e.context(path.display()))?;
    if let Some(s) = seed {
        config.sampler.seed = s;
    }
    if let Some(c) = chains {
        config.sampler.chains = c;
    }
    if let Some(t) = threads {
        config.sampler.workers = t;
    }
    let out_dir = match out {
        Some(o) => o.to_path_buf(),
        None if config.output.is_absolute() => config.output.clone(),
        None => path.parent().unwrap_or(Path::new("")).join(&config.output),
    };
    io::preflight(&out_dir)?;
    let loaded = io::resolve(config, path)?;
    for w in &loaded.warnings {
        warn!("{w}");
    }
    info!(
        "calibrating {} persons, {} items, {} responses, {} free parameters",
        loaded.problem.persons.len(),
        loaded.problem.items.len(),
        loaded.problem.responses.len(),
        loaded.problem.free_parameter_count()
    );
    let outcome = io::calibrate(&loaded, &out_dir, &progress)?;
    info!(
        "done in {:.1}s; waic={:.3}; max rhat={}; outputs in {}",
        outcome.elapsed.as_secs_f64(),
        outcome.fit.waic,
        outcome
            .summary
            .max_rhat(|_| true)
            .map_or("n/a".to_string(), |r| format!("{r:.3}")),
        out_dir.display()
    );
    Ok(())
}

fn progress(e: &ProgressEvent) {
    eprintln!(
        "progress chain={} phase={} iteration={}/{} unit_acceptance={:.3} regression_acceptance={:.3}",
        e.chain, e.phase, e.iteration, e.phase_length, e.unit_acceptance, e.regression_acceptance
    );
}

fn simulate(spec_path: &Path, out: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: SimSpec = toml::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", spec_path.display())))?;
    let generated = generate(&spec)?;
    io::write_simulation(out, &spec, &generated)?;
    info!(
        "wrote {} responses from {} persons and {} items to {}",
        generated.responses.len(),
        generated.persons.len(),
        generated.items.len(),
        out.display()
    );
    Ok(())
}

fn diagnose(run: &Path) -> Result<(), Error> {
    let outcome = io::diagnose(run)?;
    let flagged = outcome.summary.parameters.iter().filter(|p| p.rhat.is_none()).count();
    info!(
        "diagnostics written to {}; waic={:.3}; {} parameters without rhat",
        run.join(io::DIAGNOSE_DIR).display(),
        outcome.fit.waic,
        flagged
    );
    Ok(())
}
