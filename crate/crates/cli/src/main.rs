//! `subliminal`: run distillation-leakage experiments from TOML configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use subliminal_cli::config::ExperimentConfig;
use subliminal_cli::emit::emit_figure_data;
use subliminal_cli::runner::{run_experiment, ExperimentOutput, RunMode};
use subliminal_cli::sweep::run_sweep;
use subliminal_cli::CliError;
use subliminal_core::data::{generate_synthetic, save_idx, Split, Task};

#[derive(Parser)]
#[command(
    name = "subliminal",
    version,
    about = "Distillation experiments probing what a public logit channel leaks"
)]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Directory under `configs/` that bare config names resolve against.
#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

impl Profile {
    fn dir(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Config file path, or a bare name resolved under `configs/<profile>/`.
    #[arg(long)]
    config: String,
    /// Override the config's seed list, e.g. `--seed 0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full protocol for every seed; write records and an aggregate.
    Run(RunArgs),
    /// Run teacher stages and the susceptibility diagnostic only.
    Chi(RunArgs),
    /// Run one experiment per axis value and tabulate the headline metrics.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Hyperparameter to vary, e.g. `student.lr` or `model.depth`.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Collect experiment aggregates into one tidy CSV for plotting.
    Emit {
        /// Aggregate files or experiment directories (searched one level).
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Keep only this metric.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Write synthetic IDX image/label fixtures for both tasks.
    GenData {
        /// Dataset root; files go to `<root>/{mnist,fashion}/`.
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 4000)]
        train: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let out = run_experiment(&cfg, RunMode::Full)?;
            print_summary(&out);
            Ok(())
        }
        Command::Chi(args) => {
            let cfg = load_config(&args)?;
            let out = run_experiment(&cfg, RunMode::ChiOnly)?;
            print_summary(&out);
            Ok(())
        }
        Command::Sweep { run, axis, values } => {
            let cfg = load_config(&run)?;
            let out_root = run.out.unwrap_or_else(|| cfg.output_dir.clone());
            let output = run_sweep(&cfg, &axis, &values, &out_root, RunMode::Full)?;
            println!("{}", output.csv_path.display());
            Ok(())
        }
        Command::Emit { inputs, out, metric } => {
            emit_figure_data(&inputs, &out, metric.as_deref())?;
            println!("{}", out.display());
            Ok(())
        }
        Command::GenData { root, train, test, seed } => gen_data(&root, train, test, seed),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let path = resolve_config_path(&args.config, args.profile)?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seeds) = &args.seed {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_config_path(spec: &str, profile: Profile) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(spec);
    if direct.is_file() {
        return Ok(direct);
    }
    let mut name = spec.to_string();
    if !name.ends_with(".toml") {
        name.push_str(".toml");
    }
    let under_profile = PathBuf::from("configs").join(profile.dir()).join(&name);
    if under_profile.is_file() {
        return Ok(under_profile);
    }
    Err(CliError::Config(format!(
        "config `{spec}` not found (also tried `{}`)",
        under_profile.display()
    )))
}

fn print_summary(out: &ExperimentOutput) {
    let agg = &out.aggregate;
    println!(
        "{} [{} {}] seeds={} hash={}",
        agg.name,
        agg.protocol.label(),
        agg.model,
        agg.n_seeds,
        &agg.config_hash[..12]
    );
    for (key, m) in &agg.metrics {
        match m.sem {
            Some(sem) => println!("  {key} = {:.6} ± {:.6} (n={})", m.mean, sem, m.n),
            None => println!("  {key} = {:.6} (n={})", m.mean, m.n),
        }
    }
    println!("  -> {}", out.out_dir.display());
}

fn gen_data(root: &PathBuf, train: usize, test: usize, seed: u64) -> Result<(), CliError> {
    for task in [Task::Mnist, Task::Fashion] {
        let dir = root.join(task.label());
        std::fs::create_dir_all(&dir)?;
        let sets = [
            (Split::Train, train, "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            (Split::Test, test, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        ];
        for (split, count, images, labels) in sets {
            let set = generate_synthetic(task, split, count, seed);
            save_idx(&set, &dir.join(images), &dir.join(labels))?;
        }
        println!("{}", dir.display());
    }
    Ok(())
}
