use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alqst_core::harness::{self, ExperimentConfig, Mode, PreparedTarget, EXIT_ERROR};
use alqst_core::observables::{reconstructed_state, ObservableReport};
use alqst_core::quantum::{BasisConfig, SnapshotPool, StateVector};
use alqst_core::rbm::RbmCheckpoint;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alqst", version, about = "Active-learning quantum state tomography with RBM committees")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or output file for `state`, `sample` and `observables`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seeds run concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured target and write it as a binary state file.
    State,
    /// Sample snapshots from the configured target.
    Sample {
        /// Comma-separated basis configurations, e.g. `zzzzz,xxxxx`.
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<String>,
        /// Snapshots per configuration.
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Active-learning runs for every seed.
    AlRun,
    /// Budget-matched random-configuration runs only.
    BaselineRun,
    /// Active learning and the budget-matched baseline per seed.
    Compare,
    /// Baseline reconstructions over a sample or configuration grid.
    Sweep,
    /// Observables of a state file or an RBM checkpoint.
    Observables {
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        state: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Target state for the fidelity.
        #[arg(long)]
        target: Option<PathBuf>,
    },
}

fn load_config(g: &Global, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let path = g.config.as_ref().context("--config is required for this command")?;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(g: &Global) -> Result<&Path> {
    g.out.as_deref().context("--out is required for this command")
}

fn run_experiment(g: &Global, mode: Mode) -> Result<u8> {
    let cfg = load_config(g, Some(mode))?;
    let report = harness::run(&cfg)?;
    for r in &report.summary.runs {
        let f = r
            .rescaled_fidelity
            .map(|s| format!("{:.4} ± {:.4}", s.mean, s.std))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "seed {} {:?}: reference {} n_tot {} n_config {} queries {} f~ {} stop {}",
            r.seed, r.kind, r.reference, r.n_tot, r.n_config, r.n_queries, f, r.stop_met
        );
    }
    for p in &report.sweep {
        println!("{}: f~ {:.4} ± {:.4} (sem {:.4})", p.value, p.mean, p.std, p.sem);
    }
    println!("results in {}", report.dir.display());
    Ok(report.exit_code() as u8)
}

fn observables(state: Option<&Path>, checkpoint: Option<&Path>, target: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let state = match (state, checkpoint) {
        (Some(p), _) => StateVector::read_file(p)?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let ck = RbmCheckpoint::from_json(&text)?;
            let wf = ck.wavefunction()?;
            reconstructed_state(&wf, wf.log_partition()?, &ck.frame, ck.gate_family)?
        }
        (None, None) => bail!("give --state or --checkpoint"),
    };
    let target = target.map(StateVector::read_file).transpose()?;
    let report = ObservableReport::compute(&state, target.as_ref())?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    match cli.command {
        Command::State => {
            let cfg = load_config(g, None)?;
            let target = PreparedTarget::build(&cfg)?;
            let state = target.state.context("target has no state vector")?;
            state.write_file(require_out(g)?)?;
            if let Some(gs) = target.ground {
                println!("{}", serde_json::to_string(&gs)?);
            }
            Ok(0)
        }
        Command::Sample { configs, n } => {
            let cfg = load_config(g, None)?;
            let target = PreparedTarget::build(&cfg)?;
            let seed = g.seed.unwrap_or(cfg.seeds[0]);
            let mut source = target.source(cfg.gate_family, seed)?;
            let mut pool = SnapshotPool::new(target.num_qubits);
            for c in configs {
                let config: BasisConfig = c.parse()?;
                pool.extend(source.measure(&config, n)?)?;
            }
            pool.write_file(require_out(g)?)?;
            Ok(0)
        }
        Command::AlRun => run_experiment(g, Mode::Al),
        Command::BaselineRun => run_experiment(g, Mode::Baseline),
        Command::Compare => run_experiment(g, Mode::Compare),
        Command::Sweep => run_experiment(g, Mode::Sweep),
        Command::Observables {
            state,
            checkpoint,
            target,
        } => {
            observables(state.as_deref(), checkpoint.as_deref(), target.as_deref(), g.out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors must not collide with exit code 2 (query cap reached).
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
