use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use fbtraj::config::{load_config, ConfigError, FileConfig};
use fbtraj::engine::{self, Execution, Sample, SweepAxis};
use fbtraj::fast;
use fbtraj::output::{self, Metadata};
use fbtraj::SimError;

#[derive(Parser, Debug)]
#[command(name = "fbtraj", version, about = "Quantum trajectories with time-delayed coherent feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// One trajectory (index 0): time series and jump log.
    Trajectory,
    /// Ensemble means and standard errors over `n_traj` trajectories.
    Ensemble,
    /// Window-averaged populations against the loop phase.
    SweepPhase,
    /// Window-averaged populations against the delay.
    SweepTau,
    /// Window-averaged populations against `delta_aL` at fixed `delta_aL - delta_cL`.
    Spectrum,
    /// No-drive single-excitation solver with threshold sampling.
    Fast,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Trajectory => "trajectory",
            Self::Ensemble => "ensemble",
            Self::SweepPhase => "sweep_phase",
            Self::SweepTau => "sweep_tau",
            Self::Spectrum => "spectrum",
            Self::Fast => "fast",
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn config_hash(text: &[u8], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(text);
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    fs::create_dir_all(&cli.out)?;

    let text = fs::read(path)?;
    let meta = Metadata {
        command: cli.command.name().replace('_', "-"),
        seed: cfg.run.seed,
        config_hash: config_hash(&text, cfg.run.seed),
        version: format!("v{}", env!("CARGO_PKG_VERSION")),
        extra: Vec::new(),
    };

    let start = Instant::now();
    let extra = match cli.command {
        Command::Trajectory => trajectory(&cfg, &cli.out)?,
        Command::Ensemble => ensemble(&cfg, &cli.out)?,
        Command::SweepPhase => sweep(&cfg, &cli.out, SweepAxis::Phi, "sweep_phase.csv")?,
        Command::SweepTau => sweep(&cfg, &cli.out, SweepAxis::Tau, "sweep_tau.csv")?,
        Command::Spectrum => sweep(&cfg, &cli.out, SweepAxis::Delta, "spectrum.csv")?,
        Command::Fast => fast_path(&cfg, &cli.out)?,
    };
    let meta = Metadata { extra, ..meta };
    let mut w = create(&cli.out, &format!("{}.meta", cli.command.name()))?;
    output::write_metadata(&mut w, &meta)?;
    w.flush()?;
    eprintln!("{} finished in {:.2?}", meta.command, start.elapsed());
    Ok(())
}

type Extra = Vec<(String, String)>;

fn trajectory(cfg: &FileConfig, out: &Path) -> Result<Extra, Failure> {
    let tr = engine::run_trajectory(&cfg.run, 0)?;
    let times = cfg.run.times()?;
    let mut w = create(out, "trajectory.csv")?;
    output::write_series(&mut w, &times, &tr.samples)?;
    w.flush()?;
    let jumps: Vec<_> = tr.jumps.iter().map(|ev| (0, *ev)).collect();
    let mut w = create(out, "trajectory_jumps.csv")?;
    output::write_jumps(&mut w, &jumps)?;
    w.flush()?;
    if tr.coarse_steps > 0 {
        eprintln!("warning: {} steps with a jump probability above 0.1; reduce dt", tr.coarse_steps);
    }
    Ok(vec![
        ("jumps".into(), tr.jumps.len().to_string()),
        ("degenerate_steps".into(), tr.degenerate_steps.to_string()),
    ])
}

fn ensemble(cfg: &FileConfig, out: &Path) -> Result<Extra, Failure> {
    let res = engine::run_ensemble(&cfg.run)?;
    let mut w = create(out, "ensemble.csv")?;
    output::write_series(&mut w, &res.times, &res.mean)?;
    w.flush()?;
    let mut w = create(out, "ensemble_se.csv")?;
    output::write_series(&mut w, &res.times, &res.se)?;
    w.flush()?;
    let first: Vec<_> = res
        .first_jumps
        .iter()
        .enumerate()
        .filter_map(|(i, ev)| ev.map(|ev| (i, ev)))
        .collect();
    let mut w = create(out, "ensemble_first_jumps.csv")?;
    output::write_jumps(&mut w, &first)?;
    w.flush()?;
    if res.coarse_steps > 0 {
        eprintln!("warning: {} steps with a jump probability above 0.1; reduce dt", res.coarse_steps);
    }
    Ok(vec![
        ("n_traj".into(), res.n_traj().to_string()),
        ("total_jumps".into(), res.total_jumps.to_string()),
        ("degenerate_steps".into(), res.degenerate_steps.to_string()),
    ])
}

fn sweep(cfg: &FileConfig, out: &Path, axis: SweepAxis, file: &str) -> Result<Extra, Failure> {
    let grid = cfg.grid(axis)?;
    // delays have to sit on the step grid as well
    let dt = cfg.run.dt;
    let grid: Vec<f64> = match axis {
        SweepAxis::Tau => grid.iter().map(|t| (t / dt).round() * dt).collect(),
        _ => grid,
    };
    let rows = engine::sweep(&cfg.run, axis, &grid, cfg.window, Execution::Parallel)?;
    let mut w = create(out, file)?;
    output::write_sweep(&mut w, &rows)?;
    w.flush()?;
    Ok(vec![
        ("points".into(), rows.len().to_string()),
        ("window".into(), format!("{},{}", cfg.window.0, cfg.window.1)),
    ])
}

fn fast_path(cfg: &FileConfig, out: &Path) -> Result<Extra, Failure> {
    let run = &cfg.run;
    let s = fast::solve_dde(&run.params, run.variant, run.init, run.dt, run.t_end)?;
    let samples: Vec<Sample> = (0..s.times.len())
        .map(|k| {
            let norm = s.norm[k];
            Sample {
                n_a: s.tls[k].norm_sqr() / norm,
                n_c: s.cavity[k].norm_sqr() / norm,
                n_loop: (norm - s.population(k)) / norm,
                norm,
                n_a_cond: s.n_a_cond[k],
                n_c_cond: s.n_c_cond[k],
                p_eplus: s.p_eplus[k],
            }
        })
        .collect();
    let mut w = create(out, "fast.csv")?;
    output::write_series(&mut w, &s.times, &samples)?;
    w.flush()?;
    let surv = fast::survival_curve(&s.p_eplus, run.n_traj, run.seed);
    let mut w = create(out, "fast_survival.csv")?;
    writeln!(w, "t,survival")?;
    for (t, f) in s.times.iter().zip(&surv) {
        writeln!(w, "{t},{f}")?;
    }
    w.flush()?;
    let trap = fast::trapping_phases(run.params.g, run.params.tau);
    let phases: Vec<String> = trap.phases.iter().map(|p| p.to_string()).collect();
    Ok(vec![
        ("trapping_phases".into(), phases.join(",")),
        ("trapping_unique".into(), trap.unique.to_string()),
        ("survival_end".into(), surv.last().copied().unwrap_or(1.0).to_string()),
    ])
}
