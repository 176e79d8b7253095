use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vvids::data::SyntheticSpec;
use vvids::error::{Error, Result};
use vvids::optim::OptimizerKind;
use vvids::run::{
    cmd_compare, cmd_curves, cmd_eval, cmd_generate, cmd_lr_grid, cmd_train, Preset, RunConfig, CHECKPOINT_FILE,
    LR_GRID,
};

#[derive(Parser)]
#[command(name = "vvids", version, about = "Moment retrieval and highlight detection on clip features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, metrics log and loss curves.
    Train(TrainArgs),
    /// Score a checkpoint or a predictions file against a dataset.
    Eval(EvalArgs),
    /// Render loss curves from a metrics log.
    Curves(CurvesArgs),
    /// Write a synthetic planted-moment dataset.
    Generate(GenerateArgs),
    /// Train once with Lion and once with AdamW and plot both curves.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training regime: tvsum-like or qvh-like.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// lion or adamw.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop after this many optimizer steps in total.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.apply_preset(p);
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(o) = self.optimizer {
            cfg.optimizer = o;
        }
        set(&mut cfg.lr, self.lr);
        set(&mut cfg.weight_decay, self.weight_decay);
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.epochs, self.epochs);
        set(&mut cfg.model.d_model, self.d_model);
        set(&mut cfg.seed, self.seed);
        if self.max_steps.is_some() {
            cfg.max_steps = self.max_steps;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sweep these learning rates (default 1e-4,5e-4,1e-3) and keep the best
    /// by validation mAP.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    lr_grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file or the run directory holding it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Score this predictions file instead of running a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value = "runs/eval")]
    out: PathBuf,
}

#[derive(Args)]
struct CurvesArgs {
    /// metrics.jsonl written by `train`.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON synthetic spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    moments: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    signal: Option<f64>,
}

impl GenerateArgs {
    fn resolve(&self) -> Result<SyntheticSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = vvids::error::read_text(path)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => SyntheticSpec::default(),
        };
        set(&mut spec.seed, self.seed);
        set(&mut spec.n_videos, self.videos);
        set(&mut spec.clips, self.clips);
        set(&mut spec.moments_per_video, self.moments);
        set(&mut spec.signal_strength, self.signal);
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.run.resolve()?;
            match args.lr_grid {
                Some(grid) => {
                    let grid = if grid.is_empty() { LR_GRID.to_vec() } else { grid };
                    let report = cmd_lr_grid(&cfg, &grid)?;
                    for e in &report.entries {
                        println!("lr={} {}={:.4} dir={}", e.lr, e.metric, e.value, e.run_dir.display());
                    }
                    println!("best_lr={} dir={}", report.best_lr, report.best_run_dir.display());
                }
                None => {
                    let outcome = cmd_train(&cfg)?;
                    if let Some(last) = outcome.logs.last() {
                        println!(
                            "epochs={} steps={} train_loss={:.6} dir={}",
                            last.epoch,
                            last.steps,
                            last.train_loss,
                            cfg.out.display()
                        );
                    }
                }
            }
        }
        Command::Eval(args) => {
            let checkpoint = args.checkpoint.map(|c| if c.is_dir() { c.join(CHECKPOINT_FILE) } else { c });
            let report = cmd_eval(checkpoint.as_deref(), &args.dataset, args.predictions.as_deref(), &args.out)?;
            println!("{}", report.to_canonical_json());
        }
        Command::Curves(args) => {
            let logs = cmd_curves(&args.metrics, &args.out)?;
            println!("epochs={} dir={}", logs.len(), args.out.display());
        }
        Command::Generate(args) => {
            let spec = args.resolve()?;
            let records = cmd_generate(&spec, &args.out)?;
            println!("videos={} path={}", records.len(), args.out.display());
        }
        Command::Compare(args) => {
            let cfg = args.resolve()?;
            let report = cmd_compare(&cfg)?;
            println!(
                "lion_epochs={} adamw_epochs={} dir={}",
                report.lion.len(),
                report.adamw.len(),
                cfg.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error kind=usage code=2 msg={first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} code={code} msg={msg}", e.kind());
            ExitCode::from(code as u8)
        }
    }
}
