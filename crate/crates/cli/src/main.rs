use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use sal360_cli::commands;
use sal360_cli::config::{FileConfig, Overrides, RunConfig};
use sal360_core::center_bias::{DEFAULT_ALPHA, DEFAULT_C};

#[derive(Parser)]
#[command(name = "sal360", version, about = "Saliency prediction for 360° video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ground-truth grid as WxH.
    #[arg(long)]
    grid: Option<String>,
    /// Gaussian kernel width in degrees.
    #[arg(long = "sigma-deg")]
    sigma_deg: Option<f64>,
    /// Ground-truth pipeline: angular or cubemap.
    #[arg(long)]
    pipeline: Option<String>,
    /// Output directory (also the default dataset root).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let over = Overrides {
            seed: self.seed,
            grid: self.grid.clone(),
            sigma_deg: self.sigma_deg,
            pipeline: self.pipeline.clone(),
        };
        RunConfig::resolve(file, over, &self.out)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with known center-bias structure.
    Synth(Common),
    /// Build ground-truth and fixation maps from viewing traces.
    GenGt(Common),
    /// Average first-frame ground truth of the training split.
    ComputeCb(Common),
    /// Train the network and the fusion parameters.
    Train {
        #[command(flatten)]
        common: Common,
        /// Print the loss every N steps (0 for silence).
        #[arg(long, default_value_t = 50)]
        log_every: usize,
    },
    /// Predict every test frame.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory of predicted maps (default <out>/pred).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Directory holding gt/ and fix/ (default <out>).
        #[arg(long)]
        gt_root: Option<PathBuf>,
    },
    /// Fusion-component and objective ablations.
    Ablate(Common),
    /// Chart δ(t) and report the frame where it falls to one half.
    PlotDecay {
        /// Decay rate; repeat for several curves.
        #[arg(long = "alpha", default_values_t = [DEFAULT_ALPHA])]
        alphas: Vec<f64>,
        #[arg(long = "c", default_value_t = DEFAULT_C)]
        c_const: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let n = commands::synth(&c.resolve()?, &c.out)?;
            println!("wrote {n} clips to {}", c.out.display());
        }
        Command::GenGt(c) => {
            let n = commands::gen_gt(&c.resolve()?, &c.out)?;
            println!("wrote ground truth for {n} frames");
        }
        Command::ComputeCb(c) => {
            let m = commands::compute_cb(&c.resolve()?, &c.out)?;
            println!(
                "wrote {} ({}x{})",
                c.out.join(commands::CB_FILE).display(),
                m.cb_map.grid().width(),
                m.cb_map.grid().height()
            );
        }
        Command::Train { common, log_every } => {
            let cfg = common.resolve()?;
            let s = commands::train(&cfg, &common.out, |i, r| {
                if log_every > 0 && (i % log_every == 0 || i + 1 == cfg.train.steps) {
                    eprintln!("step {i:>6}  loss {:.4}  used {}", r.loss.total, r.used);
                }
            })?;
            println!(
                "trained {} steps; alpha {:.4} beta {:.4}; {} degenerate samples skipped",
                s.steps.len(),
                s.cb.alpha,
                s.cb.beta,
                s.skipped
            );
        }
        Command::Infer { common, checkpoint } => {
            let n = commands::infer(&common.resolve()?, &common.out, checkpoint.as_deref())?;
            println!("wrote {n} predicted maps");
        }
        Command::Eval { common, pred, gt_root } => {
            let r = commands::eval(&common.resolve()?, &common.out, pred.as_deref(), gt_root.as_deref())?;
            println!(
                "frames {}  cc {:.4}  nss {:.4}  kl {:.4}  auc {:.4}",
                r.frame_count, r.cc, r.nss, r.kl, r.auc_judd
            );
        }
        Command::Ablate(c) => {
            let a = commands::ablate(&c.resolve()?, &c.out)?;
            for row in a.cb_rows.iter().chain(&a.loss_rows) {
                let m = &row.result.report;
                println!("{:<24} cc {:.4}  nss {:.4}  kl {:.4}  auc {:.4}", row.label, m.cc, m.nss, m.kl, m.auc_judd);
            }
        }
        Command::PlotDecay { alphas, c_const, out } => {
            let (curves, path) = commands::plot_decay(&alphas, c_const, &out)?;
            for c in curves {
                println!("alpha {} crosses 0.5 at frame {}", c.alpha, c.crossing);
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
