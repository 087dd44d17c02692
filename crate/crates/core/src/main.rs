use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rbsaddle::constants::ConstantsMode;
use rbsaddle::experiment::{self, Artifact, ExperimentConfig};
use rbsaddle::greedy::Variant;
use rbsaddle::Error;

#[derive(Parser)]
#[command(name = "rbsaddle", version, about = "Certified reduced basis for parametrized Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Surrogate,
}

#[derive(Subcommand)]
enum Command {
    /// Build the truth model, run the greedy algorithms and write an artifact.
    Offline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `<output_dir>/artifact`.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduced solution and error bounds at one parameter.
    Online {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        /// Generation (greedy iteration); defaults to the largest.
        #[arg(long)]
        n: Option<usize>,
        /// Algorithm 1, 2 or 3; defaults to the first stored.
        #[arg(long)]
        alg: Option<u8>,
        #[arg(long, value_enum)]
        constants: Option<Mode>,
    },
    /// Test-set sweep writing the figure and table CSVs.
    Sweep {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the invariant suite against an artifact.
    Verify {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Test-set size; defaults to the configured one.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Write the mesh mapped to a parameter as plain text.
    MeshExport {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        mu: Option<Vec<f64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> rbsaddle::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn check_mu(mu: &[f64]) -> rbsaddle::Result<()> {
    if mu.len() == 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("--mu takes two comma-separated values, got {}", mu.len())))
    }
}

fn variant(alg: Option<u8>) -> rbsaddle::Result<Option<Variant>> {
    alg.map(|a| Variant::try_from(a).map_err(Error::Config)).transpose()
}

fn run(cli: Cli) -> rbsaddle::Result<bool> {
    match cli.command {
        Command::Offline { config, artifact, out } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let dir = artifact.unwrap_or_else(|| cfg.output_dir.join("artifact"));
            let s = experiment::cmd_offline(&cfg, &dir, &mut std::io::stdout())?;
            println!("offline stage finished in {:.1} s", s.seconds);
            Ok(true)
        }
        Command::Online { artifact, mu, n, alg, constants } => {
            check_mu(&mu)?;
            let art = Artifact::load(&artifact)?;
            let mode = constants.map(|m| match m {
                Mode::Exact => ConstantsMode::Exact,
                Mode::Surrogate => ConstantsMode::Surrogate,
            });
            let r = experiment::cmd_online(&art, variant(alg)?, &mu, n, mode)?;
            let rep = &r.report;
            println!("mu = ({}, {}), N = {}, N_Z = {}", rep.mu[0], rep.mu[1], rep.n, rep.n_z);
            println!("residuals: {:.4e} (X'), {:.4e} (Y')", rep.r1, rep.r2);
            println!("velocity bound {:.4e}, pressure bound {:.4e}, combined {:.4e}", rep.delta_u_sym, rep.delta_p_sym, rep.delta_sym);
            println!("relative velocity bound {:.4e}", rep.delta_u_sym / rep.u_n_norm);
            println!("{}", experiment::ONLINE_HEADER);
            println!("{}", r.csv_row());
            Ok(true)
        }
        Command::Sweep { artifact, seed, out } => {
            let art = Artifact::load(&artifact)?;
            let s = experiment::cmd_sweep(&art, seed, &out)?;
            for f in &s.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Verify { artifact, seed, size } => {
            let art = Artifact::load(&artifact)?;
            let report = experiment::cmd_verify(&art, seed, size)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(report.passed())
        }
        Command::MeshExport { config, mu, out } => {
            if let Some(mu) = &mu {
                check_mu(mu)?;
            }
            let cfg = load_config(config.as_ref())?;
            let path = experiment::cmd_mesh_export(&cfg, mu.as_deref(), &out)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

/// Errors caused by the invocation rather than by the computation.
fn is_user_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::OutOfDomain { .. }
            | Error::InvalidDomain(_)
            | Error::InvalidGeometry(_)
            | Error::Artifact(_)
            | Error::EmptyTrainingSet
    )
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if is_user_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
