use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semcom_core::config::{ExperimentConfig, SweepAxis};
use semcom_core::experiment;
use semcom_core::Error;

/// Bandwidth pricing experiments for semantic-communication AIGC delivery.
#[derive(Parser, Debug)]
#[command(name = "semcom", version)]
struct Cli {
    /// TOML experiment config. Missing keys take the reference values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSVs, checkpoints and images.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the pricing game in closed form and by grid search.
    Equilibrium,
    /// Train the diffusion pricing agent.
    Train(TrainArgs),
    /// Score a checkpoint against the baselines.
    Evaluate {
        /// Defaults to `<out>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and score across one parameter axis.
    Sweep(SweepArgs),
    /// Compare two anymap images.
    Metrics { image_a: PathBuf, image_b: PathBuf },
    /// Downsample an anymap image to a compression rate.
    Extract {
        image: PathBuf,
        #[arg(long)]
        rate: f64,
        /// Defaults to `<out>/<stem>_extract.<ext>`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Also checkpoint every N episodes.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Option<AxisArg>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Episode budget per training run.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum AxisArg {
    UnitCost,
    UserCount,
    DenoisingSteps,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::UnitCost => SweepAxis::UnitCost,
            AxisArg::UserCount => SweepAxis::UserCount,
            AxisArg::DenoisingSteps => SweepAxis::DenoisingSteps,
        }
    }
}

const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_MARKET_COLLAPSE: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::RateTooSmall(..) => EXIT_INVALID_CONFIG,
        Error::MarketCollapse(_) | Error::NoService => EXIT_MARKET_COLLAPSE,
        Error::Io(_) | Error::Image(_) | Error::Checkpoint(_) => EXIT_IO,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> semcom_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Command::Sweep(args) = &cli.command {
        if let Some(axis) = args.axis {
            cfg.sweep.axis = axis.into();
        }
        if let Some(values) = &args.values {
            cfg.sweep.values = values.clone();
        }
        if let Some(seeds) = args.seeds {
            cfg.sweep.seeds = seeds;
        }
        if let Some(e) = args.episodes {
            cfg.sweep.episodes = e;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> semcom_core::Result<()> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::Equilibrium => {
            let r = experiment::run_equilibrium(&cfg, out)?;
            println!("closed-form price      {:.6}", r.closed_form_price);
            println!("printed-formula price  {:.6}", r.printed_formula_price);
            println!(
                "grid oracle            price {:.6}  utility {:.6}  (step {:.2e})",
                r.oracle.price, r.oracle.leader_utility, r.grid_step
            );
            println!(
                "equilibrium            price {:.6}  utility {:.6}  demand {:.6} MHz",
                r.equilibrium.price,
                r.equilibrium.leader_utility,
                r.equilibrium.total_demand()
            );
            for (i, (b, u)) in r.equilibrium.demands.iter().zip(&r.equilibrium.follower_utilities).enumerate() {
                println!("  user {:>2}  demand {:>12.6} MHz  utility {:>12.6}", i + 1, b, u);
            }
            println!(
                "deviation gains        follower {:.3e}  leader {:.3e}",
                r.deviations.follower_gain, r.deviations.leader_gain
            );
        }
        Command::Train(args) => {
            let r = experiment::run_train(&cfg, out, args.resume.as_deref(), args.checkpoint_every)?;
            println!(
                "episodes {}  final-{} mean reward {:.6}  oracle {:.6}  ratio {:.4}",
                r.episodes, cfg.eval.window, r.final_mean_reward, r.oracle_utility, r.ratio
            );
            println!("checkpoint {}", r.checkpoint.display());
        }
        Command::Evaluate { checkpoint } => {
            let path = checkpoint.clone().unwrap_or_else(|| out.join(experiment::CHECKPOINT_FILE));
            for s in experiment::run_evaluate(&cfg, out, &path)? {
                println!(
                    "{:<8} mean {:>10.6}  std {:>9.6}  ratio {:.4}",
                    s.policy, s.mean_reward, s.std_reward, s.ratio
                );
            }
        }
        Command::Sweep(_) => {
            let jobs = cli
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            for r in experiment::run_sweep(&cfg, out, jobs)? {
                println!(
                    "{}={:<6} seed {:<3} oracle {:>10.4}  agent {:>10.4}  greedy {:>10.4}  random {:>10.4}  {:>9.0} ms",
                    cfg.sweep.axis.name(),
                    r.value,
                    r.seed,
                    r.oracle_utility,
                    r.agent_utility,
                    r.greedy_utility,
                    r.random_utility,
                    r.wall_ms
                );
            }
        }
        Command::Metrics { image_a, image_b } => {
            let r = experiment::run_metrics(&cfg, out, image_a, image_b)?;
            println!("mse            {}", r.mse);
            match r.psnr {
                Some(p) => println!("psnr_db        {p}"),
                None => println!("psnr_db        inf (identical images)"),
            }
            println!("ssim           {}", r.ssim);
            println!("ssim_windowed  {}", r.ssim_windowed);
        }
        Command::Extract { image, rate, output } => {
            let r = experiment::run_extract(&cfg, out, image, *rate, output.as_deref())?;
            println!(
                "{}x{} -> {}x{}  {}",
                r.input_dims.0,
                r.input_dims.1,
                r.output_dims.0,
                r.output_dims.1,
                r.output.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
