use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};

use spinlake::config::RunConfig;
use spinlake::workflow::{self, Context};

#[derive(Parser)]
#[command(name = "spinlake", version, about = "Neural quantum state dynamics of Rydberg atoms on the ruby lattice")]
struct Cli {
    /// Run configuration (TOML). `SPINLAKE_SECTION__KEY=value` overrides any key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lattice geometry.
    Lattice {
        #[command(subcommand)]
        action: LatticeAction,
    },
    /// Imaginary-time ground-state search over the configured seedings.
    GroundState,
    /// Real-time ramp.
    Ramp {
        /// Checkpoint to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// One ramp per grid point of the `[sweep]` block.
    Sweep,
    /// Observable manifest on a checkpoint.
    Measure {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Ratio-path entropies over the `path_*.ckpt` files of a directory.
    Entropy {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Exact-diagonalization reference.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
}

#[derive(Subcommand)]
enum LatticeAction {
    /// Atom positions and incidence maps as JSON.
    Dump,
}

#[derive(Subcommand)]
enum OracleAction {
    /// Lowest levels of the configured Hamiltonian.
    Spectrum {
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Exact evolution of the all-ground state along the ramp.
    Evolve {
        /// Snapshot times.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
    },
    /// Infidelity of a checkpoint against exact evolution.
    Infidelity {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Exact Renyi-2 entropy of an atom set.
    RdmEntropy {
        #[arg(long, value_delimiter = ',', required = true)]
        atoms: Vec<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<Context> {
    let path = cli.config.as_deref().context("--config is required")?;
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    Ok(Context::new(cfg)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let ctx = load(&cli)?;
    match &cli.command {
        Command::Lattice { action: LatticeAction::Dump } => {
            let mut dump = ctx.lattice.dump();
            dump["config_hash"] = ctx.hash.clone().into();
            let path = ctx.out_dir()?.join("lattice.json");
            write_json(&path, &dump)?;
            println!("{}", path.display());
        }
        Command::GroundState => {
            let rep = workflow::run_ground_state(&ctx, true)?;
            for r in &rep.rows {
                println!(
                    "{:<8} E = {:>14.8} +- {:.2e}  M_VBS = {:+.4}  M_SS = {:+.4}{}",
                    r.seeding,
                    r.energy,
                    r.stderr,
                    r.m_vbs,
                    r.m_ss,
                    if r.winner { "  *" } else { "" }
                );
            }
        }
        Command::Ramp { resume } => {
            let res = workflow::run_ramp(&ctx, resume.as_deref())?;
            println!("ramp finished at t = {:.4} after {} steps", res.t, res.steps);
            for r in &res.measurements {
                println!("{:<14} {:>3}  {:>+12.6} +- {:.2e}", r.name, r.size, r.mean, r.stderr);
            }
        }
        Command::Sweep => {
            let rows = workflow::run_sweep(&ctx)?;
            for r in &rows {
                println!("{:>8.4}  A_v = {:+.4}  B_p = {:+.4}  gamma = {:+.4} +- {:.4}", r.value, r.a_v, r.b_p, r.gamma, r.gamma_err);
            }
        }
        Command::Measure { checkpoint } => {
            for r in workflow::run_measure(&ctx, checkpoint)? {
                println!("{:<14} {:>3}  {:>+12.6} +- {:.2e}", r.name, r.size, r.mean, r.stderr);
            }
        }
        Command::Entropy { dir } => {
            let (_, gammas) = workflow::run_entropy(&ctx, dir)?;
            for g in gammas {
                println!("t = {:.4}  {}  {:+.5} +- {:.5}", g.t, g.region, g.s, g.stderr);
            }
        }
        Command::Oracle { action } => match action {
            OracleAction::Spectrum { k } => {
                for (i, e) in workflow::oracle_spectrum(&ctx, *k)?.iter().enumerate() {
                    println!("{i} {e:.12}");
                }
            }
            OracleAction::Evolve { times } => {
                let (rows, _) = workflow::oracle_evolve(&ctx, None, times)?;
                let path = ctx.out_dir()?.join("oracle_evolve.csv");
                workflow::write_csv(&path, &ctx.hash, &rows)?;
                for r in &rows {
                    println!("t = {:.4}  E = {:.10}  n = {:.6}", r.t, r.energy, r.density);
                }
            }
            OracleAction::Infidelity { checkpoint } => {
                println!("{:.6e}", workflow::oracle_infidelity(&ctx, checkpoint)?);
            }
            OracleAction::RdmEntropy { atoms, checkpoint } => {
                if atoms.is_empty() {
                    bail!("--atoms must list at least one atom");
                }
                println!("{:.12}", workflow::oracle_rdm_entropy(&ctx, atoms, checkpoint.as_deref())?);
            }
        },
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
