mod commands;
mod config;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde_json::json;

use commands::{Artifacts, CliError, Outcome};
use config::{parse_config, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Eigenvalues and eigenfunctions of the discretized generator.
    Spectrum,
    /// Chain generator, eigenvectors and coupling rates.
    Synth,
    /// Exact conditional-law and marginal checks on a small grid.
    Oracle,
    /// Monte Carlo ensemble of coupled paths.
    Simulate,
    /// All checks with pass/fail status; exit code 3 if any fails.
    Verify,
    /// Tracking and rate tables across the epsilon list.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Synth => "synth",
            Self::Oracle => "oracle",
            Self::Simulate => "simulate",
            Self::Verify => "verify",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eigencoupler", version, about = "Couple a reversible diffusion with a finite Markov chain through its spectrum")]
struct Cli {
    command: Command,
    /// Path to a JSON config, or inline JSON starting with '{'.
    #[arg(long)]
    config: String,
    /// Output directory (overrides outputs.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides simulation.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; takes precedence over the environment variable.
    #[arg(long, env = "EIGENCOUPLER_THREADS")]
    threads: Option<usize>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Vec<String>> {
    let text = match &cli.config {
        s if s.trim_start().starts_with('{') => s.clone(),
        path => std::fs::read_to_string(path).map_err(|e| vec![format!("config: cannot read {path}: {e}")])?,
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.directory = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn dispatch(command: Command, cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    match command {
        Command::Spectrum => commands::spectrum(cfg, art),
        Command::Synth => commands::synth(cfg, art),
        Command::Oracle => commands::oracle(cfg, art),
        Command::Simulate => commands::simulate(cfg, art),
        Command::Verify => commands::verify(cfg, art),
        Command::Sweep => commands::sweep(cfg, art),
    }
}

/// Runs the command once, or once per epsilon in `eps_<value>` subdirectories.
fn run(command: Command, cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(bool, Vec<PathBuf>), CliError> {
    let subs = cfg.sub_configs();
    if command == Command::Sweep || subs.len() == 1 {
        let out = dispatch(command, cfg, art)?;
        return Ok((out.passed, art.files.clone()));
    }
    let mut passed = true;
    let mut files = vec![];
    for sub in &subs {
        let mut sub_art = art.sub(&format!("eps_{}", sub.eps()))?;
        println!("== epsilon = {} ==", sub.eps());
        let out = dispatch(command, sub, &mut sub_art)?;
        passed &= out.passed;
        files.extend(sub_art.files);
    }
    Ok((passed, files))
}

fn relative(files: &[PathBuf], root: &Path) -> Vec<String> {
    files.iter().map(|f| f.strip_prefix(root).unwrap_or(f).to_string_lossy().into_owned()).collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(errors) => {
            for e in &errors {
                eprintln!("error: {e}");
            }
            return ExitCode::from(1);
        }
    };
    let threads = cli.threads.unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let root = PathBuf::from(&cfg.outputs.directory);
    let mut art = match Artifacts::new(&root, &cfg.outputs.formats) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let resolved = serde_json::to_value(&cfg).unwrap_or_default();
    if let Err(e) = art.force_json("resolved_config.json", &resolved) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let result = run(cli.command, &cfg, &mut art);
    let (code, passed, files, error) = match result {
        Ok((true, files)) => (0, true, files, None),
        Ok((false, files)) => (3, false, files, None),
        Err(e) => (e.exit_code(), false, art.files.clone(), Some(e.to_string())),
    };
    let manifest = json!({
        "command": cli.command.name(),
        "config": resolved,
        "versions": { "cli": env!("CARGO_PKG_VERSION"), "library": eigencoupler::VERSION },
        "seed": cfg.simulation.seed,
        "threads": rayon::current_num_threads(),
        "started_unix": started,
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        "outputs": relative(&files, &root),
        "passed": passed,
        "exit_code": code,
        "error": error,
    });
    if let Err(e) = art.force_json("manifest.json", &manifest) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if let Some(e) = error {
        eprintln!("error: {e}");
    } else if code == 3 {
        eprintln!("one or more checks failed");
    }
    ExitCode::from(code as u8)
}
