use clap::{Parser, Subcommand};
use hypertrimer::interaction::units;
use hypertrimer::shell::{
    dimer_stage, kick_stage, observe_stage, propagate_stage, rigid_stage, run_pipeline, solve_stationary, sweep_stage, validate_config,
    write_manifest, Model, ObserveKind, RunConfig, ShellError,
};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Laser-kicked trimer dynamics in hyperspherical coordinates.
#[derive(Debug, Parser)]
#[command(name = "hypertrimer", version)]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "hypertrimer.conf")]
    config: PathBuf,
    /// Override the RNG seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HYPERTRIMER_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the config and print the resolved values.
    Validate,
    /// Dimer and trimer bound states.
    SolveStationary,
    /// δ-kick of the trimer ground state.
    Kick,
    /// Real-time propagation, resuming from the last checkpoint.
    Propagate {
        /// Stop at this time (ps) instead of the configured total.
        #[arg(long)]
        until: Option<f64>,
        /// Checkpoint interval (ps); changing it restarts the propagation.
        #[arg(long)]
        checkpoint_every: Option<f64>,
    },
    /// Observables at every stored checkpoint.
    Observe {
        /// ker, align-rho, align-r, pairs or frame; repeatable (default: config).
        #[arg(long = "kind")]
        kinds: Vec<ObserveKind>,
    },
    /// Rigid rotor at the frozen shape of the [rigid] section.
    RigidBody,
    /// Dimer partial waves and the model trimer of the [dimer] section.
    DimerModel,
    /// Ground-state survival over the [sweep] intensities.
    Sweep,
    /// solve-stationary, kick, propagate and observe in sequence.
    FullRun,
}

fn run(cli: Cli) -> Result<(), ShellError> {
    let mut cfg: RunConfig = validate_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::Propagate { checkpoint_every: Some(ps), .. } = &cli.command {
        cfg.propagation.checkpoint_every = units::ps_to_au(*ps);
        let bad = cfg.check();
        if !bad.is_empty() {
            return Err(ShellError::ConstraintViolation(bad));
        }
    }
    let started = Instant::now();
    match cli.command {
        Command::Validate => {
            println!("{cfg:#?}");
            return Ok(());
        }
        Command::SolveStationary => {
            let states = solve_stationary(&cfg, &Model::build(&cfg)?)?;
            for (k, s) in states.iter().enumerate() {
                println!("trimer state {k}: E = {:.6} mK", units::hartree_to_mk(s.energy));
            }
        }
        Command::Kick => {
            let packet = kick_stage(&cfg, &Model::build(&cfg)?)?;
            println!("kicked packet norm² in basis: {:.8}", packet.norm_sq());
        }
        Command::Propagate { until, .. } => {
            let out = propagate_stage(&cfg, &Model::build(&cfg)?, until.map(units::ps_to_au))?;
            println!("t = {:.4} ps, {} checkpoints, norm drift {:.3e}", units::au_to_ps(out.time), out.checkpoints, out.norm_drift);
        }
        Command::Observe { kinds } => {
            let kinds = if kinds.is_empty() { cfg.observe.kinds.clone() } else { kinds };
            let files = observe_stage(&cfg, &Model::build(&cfg)?, &kinds)?;
            println!("wrote {} observation records", files.len());
        }
        Command::RigidBody => {
            let run = rigid_stage(&cfg)?;
            println!("rotor J_max = {}, {} samples", run.j_max, run.times.len());
        }
        Command::DimerModel => dimer_stage(&cfg)?,
        Command::Sweep => {
            let scan = sweep_stage(&cfg, &Model::build(&cfg)?)?;
            for (i, s) in scan.intensities.iter().zip(&scan.survival) {
                println!("{i:.3e} W/cm²  |c_ground|² = {s:.6}");
            }
        }
        Command::FullRun => {
            let m = run_pipeline(&cfg)?;
            println!("{} files in manifest", m.files.len());
            return Ok(());
        }
    }
    write_manifest(&cfg, started)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot set thread count: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
