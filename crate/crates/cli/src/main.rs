//! `meam`: dataset generation, training, fine-tuning, evaluation and the
//! theory checks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use meam_core::config::MeamConfig;
use meam_core::envs::{gen_dataset, make_env, Dataset};
use meam_core::oracle::run_theory_suite;
use meam_core::rlcore::{finetune_online, train_offline, MeamState};
use meam_core::MeamError;

/// File in a run directory that records which dataset the run trained on.
const DATASET_RECORD: &str = "dataset.txt";

#[derive(Parser, Debug)]
#[command(name = "meam", version, about = "Max-entropy adjoint matching for flow policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an offline dataset as CSV.
    GenData {
        #[arg(long)]
        env: String,
        /// Rows for the bandits, episodes for the maze.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline training from a dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Run directory; defaults to `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Online fine-tuning from a checkpoint.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Offline data to mix in; defaults to the one recorded by `train`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with the deterministic sampler.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Run a verification suite and print a CSV table.
    Verify {
        #[arg(long, default_value = "theory")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Bad invocation that clap cannot catch.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Worker count from `MEAM_THREADS`. Everything runs on the calling thread,
/// so any valid value behaves like 1.
fn threads() -> Result<usize> {
    match std::env::var("MEAM_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(usage(format!("MEAM_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<MeamError>() {
        Some(MeamError::Config(_) | MeamError::Usage(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    threads()?;
    match cli.command {
        Command::GenData { env, n, seed, out } => gen_data(&env, n, seed, &out)?,
        Command::Train { config, dataset, out } => train(&config, &dataset, out.as_deref())?,
        Command::Finetune {
            config,
            checkpoint,
            out,
            dataset,
        } => finetune(&config, &checkpoint, out.as_deref(), dataset.as_deref())?,
        Command::Eval { checkpoint, episodes } => eval(&checkpoint, episodes)?,
        Command::Verify { suite, seed } => return verify(&suite, seed),
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_data(env: &str, n: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let data = gen_dataset(env, n, seed)?;
    data.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} rows to {}", data.len(), out.display());
    Ok(())
}

fn load_config(path: &Path) -> Result<MeamConfig> {
    Ok(MeamConfig::load(path)?)
}

fn load_dataset(path: &Path, config: &MeamConfig) -> Result<Dataset> {
    let data = Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if data.d_s != config.d_s || data.d_a != config.d_a {
        return Err(MeamError::Config(format!(
            "dataset {} has d_s={} d_a={}, config expects d_s={} d_a={}",
            path.display(),
            data.d_s,
            data.d_a,
            config.d_s,
            config.d_a
        ))
        .into());
    }
    Ok(data)
}

fn run_dir(out: Option<&Path>, config: &MeamConfig) -> PathBuf {
    out.map_or_else(|| PathBuf::from(&config.out_dir), Path::to_path_buf)
}

fn train(config_path: &Path, dataset: &Path, out: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    let data = load_dataset(dataset, &config)?;
    let env = make_env(&config.env)?;
    let dir = run_dir(out, &config);
    let mut state = MeamState::new(&config)?;
    let rows = train_offline(&mut state, &data, Some(env.as_ref()), config.offline_steps, Some(&dir))?;
    let abs = fs::canonicalize(dataset).unwrap_or_else(|_| dataset.to_path_buf());
    fs::write(dir.join(DATASET_RECORD), format!("{}\n", abs.display()))?;
    match rows.last() {
        Some(r) => println!(
            "trained {} steps; eval success {:.4} (95% CI {:.4} to {:.4}); run in {}",
            r.train.step,
            r.eval_success,
            r.eval_ci_lo,
            r.eval_ci_hi,
            dir.display()
        ),
        None => println!("trained 0 steps; run in {}", dir.display()),
    }
    Ok(())
}

/// Looks for the dataset record next to the checkpoint or in the run
/// directory that holds it.
fn recorded_dataset(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint.ancestors().take(3).find_map(|d| {
        let text = fs::read_to_string(d.join(DATASET_RECORD)).ok()?;
        Some(PathBuf::from(text.trim()))
    })
}

fn finetune(config_path: &Path, checkpoint: &Path, out: Option<&Path>, dataset: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    let mut state = MeamState::load(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    state.reconfigure(&config)?;
    let data_path = match dataset {
        Some(p) => p.to_path_buf(),
        None => recorded_dataset(checkpoint)
            .ok_or_else(|| usage("no --dataset given and the checkpoint's run directory records none"))?,
    };
    let data = load_dataset(&data_path, &config)?;
    let env = make_env(&config.env)?;
    let dir = run_dir(out, &config);
    let run = finetune_online(&mut state, &data, env.as_ref(), config.online_steps, Some(&dir))?;
    println!(
        "fine-tuned {} env steps; success {:.4} -> {:.4}; run in {}",
        run.buffer.len(),
        run.initial.success_rate,
        run.last.success_rate,
        dir.display()
    );
    Ok(())
}

fn eval(checkpoint: &Path, episodes: usize) -> Result<()> {
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let state = MeamState::load(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let env = make_env(&state.config.env)?;
    let stats = state.evaluate(env.as_ref(), episodes)?;
    println!(
        "success {:.4} (95% CI {:.4} to {:.4}) over {} episodes; mean return {:.4} (std {:.4})",
        stats.success_rate, stats.ci_lo, stats.ci_hi, stats.episodes, stats.mean_return, stats.return_std
    );
    Ok(())
}

fn verify(suite: &str, seed: u64) -> Result<ExitCode> {
    if suite != "theory" {
        bail!(UsageError(format!("unknown suite '{suite}' (available: theory)")));
    }
    let results = run_theory_suite(seed)?;
    println!("check,value,condition,passed");
    for r in &results {
        println!("{},{:e},{},{}", r.name, r.value, r.condition, r.passed);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
