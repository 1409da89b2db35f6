//! Command-line front end: data generation, training, cross-validation,
//! ablation sweeps and report rendering.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acl::data::{generate_synthetic, group_kfold, FlipMode, SyntheticConfig};
use acl::harness::{
    run_ablation, run_cross_validation, strategy_label, synthetic_config_from_file, train_one_fold,
    AblationAxis, AlphaSetting, DatasetSpec, EvalLabels, ExperimentConfig, Strategy,
};
use acl::metrics::{render_table, FoldReport};
use acl::scheduler::write_trajectory_csv;
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(
    name = "acl",
    version,
    about = "Adaptive curriculum training for noisy binary labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Train and evaluate a single cross-validation fold.
    Train(TrainArgs),
    /// Run group k-fold cross-validation for every configured seed.
    Cv(RunArgs),
    /// Sweep the queue length or the threshold multiplier.
    Ablate(AblateArgs),
    /// Render a metrics CSV (from `cv`, `train` or `ablate`) as a table.
    Report {
        /// Path to metrics.csv or ablation.csv.
        path: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML file with synthetic dataset settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Distance between the two class means.
    #[arg(long)]
    separation: Option<f64>,
    /// Probability of flipping each label.
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Negative-to-positive class size ratio.
    #[arg(long)]
    imbalance_ratio: Option<f64>,
    #[arg(long, value_enum)]
    flip_mode: Option<FlipArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write `clean_label` and `corrupted` columns.
    #[arg(long)]
    annotated: bool,
    /// Output CSV path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlipArg {
    Uniform,
    Boundary,
}

/// Experiment settings shared by `train`, `cv` and `ablate`.
#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cross_entropy, acl or acl_fixed_alpha(<alpha>).
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    queue_length: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    folds: Option<usize>,
    /// Run seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Train on a CSV dataset instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    eval_labels: Option<EvalArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalArg {
    Auto,
    Observed,
    Clean,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Held-out fold index.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Run seed (defaults to the first configured seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for checkpoint, trajectory and metrics.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Output directory; results are only printed when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    QueueLength,
    Alpha,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma separated settings: lengths for queue_length; numbers or
    /// `theta` for alpha. Defaults to 16,32,64 and 0,1,2,theta.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
}

/// Exit status classes.
enum Failure {
    /// Bad arguments or configuration (exit 1).
    Usage(anyhow::Error),
    /// The run itself failed (exit 2).
    Run(anyhow::Error),
}

type Outcome = Result<(), Failure>;

trait UsageContext<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

trait RunContext<T> {
    fn run(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> RunContext<T> for Result<T, E> {
    fn run(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Train(args) => train(args),
        Command::Cv(args) => cv(args),
        Command::Ablate(args) => ablate(args),
        Command::Report { path } => report(&path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn generate(args: GenerateArgs) -> Outcome {
    let mut cfg = match &args.config {
        Some(path) => synthetic_config_from_file(path)
            .with_context(|| format!("reading {}", path.display()))
            .usage()?,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = args.n_samples {
        cfg.n_samples = v;
    }
    if let Some(v) = args.feature_dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = args.separation {
        cfg.separation = v;
    }
    if let Some(v) = args.noise_rate {
        cfg.noise_rate = v;
    }
    if let Some(v) = args.imbalance_ratio {
        cfg.imbalance_ratio = v;
    }
    if let Some(v) = args.flip_mode {
        cfg.flip_mode = match v {
            FlipArg::Uniform => FlipMode::Uniform,
            FlipArg::Boundary => FlipMode::Boundary,
        };
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().usage()?;
    let dataset = generate_synthetic(&cfg).run()?;
    let file = create_file(&args.out)?;
    if args.annotated {
        dataset.write_annotated_csv(file).run()?;
    } else {
        dataset.write_csv(file).run()?;
    }
    let counts = dataset.class_counts(&(0..dataset.len()).collect::<Vec<_>>());
    info!(
        "wrote {} samples ({} negative, {} positive) to {}",
        dataset.len(),
        counts[0],
        counts[1],
        args.out.display()
    );
    Ok(())
}

fn resolve(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading {}", path.display()))
            .usage()?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = args.queue_length {
        cfg.queue_length = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.warmup_epochs {
        cfg.warmup_epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = v.clone();
    }
    if let Some(v) = args.folds {
        cfg.folds = v;
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = &args.data {
        cfg.dataset = DatasetSpec::Csv(v.clone());
    }
    if let Some(v) = args.eval_labels {
        cfg.eval_labels = match v {
            EvalArg::Auto => EvalLabels::Auto,
            EvalArg::Observed => EvalLabels::Observed,
            EvalArg::Clean => EvalLabels::Clean,
        };
    }
    cfg.validate().usage()?;
    Ok(cfg)
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .run()?;
    }
    let file = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .run()?;
    Ok(BufWriter::new(file))
}

fn train(args: TrainArgs) -> Outcome {
    let cfg = resolve(&args.experiment)?;
    if args.fold >= cfg.folds {
        return Err(Failure::Usage(anyhow!(
            "fold {} out of range for {} folds",
            args.fold,
            cfg.folds
        )));
    }
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let dataset = cfg.load_dataset(seed).context("loading dataset").run()?;
    let plan = group_kfold(&dataset, cfg.folds, seed).run()?;
    let outcome = train_one_fold(&cfg, &dataset, &plan, args.fold, seed).run()?;

    fs::create_dir_all(&args.out).run()?;
    fs::write(args.out.join("config.toml"), cfg.to_toml_string().run()?).run()?;
    outcome
        .model
        .write_checkpoint(create_file(&args.out.join("checkpoint.txt"))?)
        .run()?;
    write_trajectory_csv(
        create_file(&args.out.join("trajectory.csv"))?,
        &outcome.trajectory,
    )
    .run()?;
    let report =
        FoldReport::new(strategy_label(&cfg), vec![outcome.metrics.values()], false).run()?;
    FoldReport::write_csv(
        std::slice::from_ref(&report),
        create_file(&args.out.join("metrics.csv"))?,
    )
    .run()?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    if let Some(p) = outcome.discard_precision(cfg.warmup_epochs) {
        println!("corrupted share of discarded samples: {p:.4}");
    }
    Ok(())
}

fn cv(args: RunArgs) -> Outcome {
    let mut cfg = resolve(&args.experiment)?;
    cfg.output_dir = args.out;
    let run = run_cross_validation(&cfg).run()?;
    print!("{}", run.render());
    if run.is_complete() {
        Ok(())
    } else {
        Err(Failure::Run(anyhow!(
            "{} fold run(s) failed",
            run.failures.len()
        )))
    }
}

fn parse_axis(axis: AxisArg, values: Option<&[String]>) -> Result<AblationAxis, Failure> {
    let Some(values) = values else {
        return Ok(match axis {
            AxisArg::QueueLength => AblationAxis::default_queue_lengths(),
            AxisArg::Alpha => AblationAxis::default_alphas(),
        });
    };
    match axis {
        AxisArg::QueueLength => values
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .with_context(|| format!("queue length {v:?}"))
            })
            .collect::<anyhow::Result<Vec<_>>>()
            .map(AblationAxis::QueueLength)
            .usage(),
        AxisArg::Alpha => values
            .iter()
            .map(|v| match v.trim() {
                "theta" => Ok(AlphaSetting::Theta),
                s => s
                    .parse::<f64>()
                    .map(AlphaSetting::Fixed)
                    .with_context(|| format!("alpha {v:?}")),
            })
            .collect::<anyhow::Result<Vec<_>>>()
            .map(AblationAxis::Alpha)
            .usage(),
    }
}

fn ablate(args: AblateArgs) -> Outcome {
    let axis = parse_axis(args.axis, args.values.as_deref())?;
    let mut base = resolve(&args.run.experiment)?;
    base.output_dir = args.run.out;
    for (_, cfg) in axis.settings(&base) {
        cfg.validate().usage()?;
    }
    let table = run_ablation(&base, &axis).run()?;
    print!("{}", table.render());
    Ok(())
}

fn report(path: &Path) -> Outcome {
    let file = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .usage()?;
    let reports = FoldReport::read_csv(file).usage()?;
    print!("{}", render_table(&reports));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values() {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(matches!(
            parse_axis(AxisArg::QueueLength, Some(&v(&["16", " 64"]))),
            Ok(AblationAxis::QueueLength(l)) if l == [16, 64]
        ));
        assert!(matches!(
            parse_axis(AxisArg::Alpha, Some(&v(&["1.5", "theta"]))),
            Ok(AblationAxis::Alpha(a)) if a == [AlphaSetting::Fixed(1.5), AlphaSetting::Theta]
        ));
        assert!(matches!(
            parse_axis(AxisArg::Alpha, Some(&v(&["big"]))),
            Err(Failure::Usage(_))
        ));
        assert!(matches!(
            parse_axis(AxisArg::QueueLength, None),
            Ok(a) if a == AblationAxis::default_queue_lengths()
        ));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
