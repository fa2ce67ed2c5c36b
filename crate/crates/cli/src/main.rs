use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flowcut::graphcut::EigenMode;
use flowcut::netpbm::save_sequence;
use flowcut::pipeline::{
    init_threads_from_env, open_sequence, run_eval, run_flow, run_graphcut, run_pipeline, run_refine,
    PipelineConfig,
};
use flowcut::synth::{generate, SynthSpec};

/// Unsupervised video object segmentation: flow-guided graph cut followed by
/// a temporally consistent segmentation head.
#[derive(Parser)]
#[command(name = "flowcut", version)]
struct Cli {
    /// Print the default pipeline configuration as JSON and exit.
    #[arg(long)]
    help_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Default)]
struct Overrides {
    /// Pipeline configuration JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Eigenproblem: `ncut` or `raw_w`.
    #[arg(long)]
    mode: Option<EigenMode>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.alpha {
            cfg.graphcut.alpha = a;
        }
        if let Some(t) = self.tau {
            cfg.graphcut.tau = t;
        }
        if let Some(m) = self.mode {
            cfg.graphcut.eigen_mode = m;
        }
        if let Some(e) = self.epochs {
            cfg.train.n_epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence from a JSON spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the JSON file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forward and backward Horn–Schunck flow for consecutive frames.
    Flow {
        seq_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Per-frame pseudo masks from the spectral cut.
    Graphcut {
        seq_dir: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the segmentation head on pseudo masks and write its masks.
    Refine {
        seq_dir: PathBuf,
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predicted masks against ground truth; prints the mIoU.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// flow, graphcut, refine and (with ground truth) eval.
    Pipeline {
        /// Defaults to `paths.sequence_dir` from the config.
        seq_dir: Option<PathBuf>,
        /// Defaults to `paths.output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Writes a line to standard output; a closed pipe is not an error.
fn emit(line: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: SynthSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing spec {}", spec_path.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let seq = generate(&spec)?;
    save_sequence(&seq, out)?;
    eprintln!("wrote {} frames to {}", seq.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.help_config {
        emit(&serde_json::to_string_pretty(&PipelineConfig::default())?)?;
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    init_threads_from_env()?;
    match command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed)?,
        Command::Flow { seq_dir, out, overrides } => {
            let cfg = overrides.resolve()?;
            run_flow(&open_sequence(&seq_dir)?, &out, &cfg.flow)?;
        }
        Command::Graphcut {
            seq_dir,
            flow,
            out,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let masks = run_graphcut(&open_sequence(&seq_dir)?, &flow, &out, &cfg.graphcut)?;
            eprintln!("wrote {} pseudo masks to {}", masks.len(), out.display());
        }
        Command::Refine {
            seq_dir,
            pseudo,
            flow,
            out,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let res = run_refine(&open_sequence(&seq_dir)?, &pseudo, &flow, &out, &cfg)?;
            eprintln!(
                "trained {} steps (warp branch {:.3}); masks in {}",
                res.log.steps.len(),
                res.log.warp_fraction(),
                out.join("masks").display()
            );
        }
        Command::Eval { pred_dir, gt_dir, out } => {
            let report = run_eval(&pred_dir, &gt_dir, &out)?;
            emit(&format!("{:.4}", report.sequence_miou))?;
        }
        Command::Pipeline {
            seq_dir,
            out,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let seq_dir = seq_dir
                .or_else(|| cfg.paths.sequence_dir.clone())
                .context("no sequence directory (argument or paths.sequence_dir)")?;
            let out = out
                .or_else(|| cfg.paths.output_dir.clone())
                .context("no output directory (--out or paths.output_dir)")?;
            let outcome = run_pipeline(&seq_dir, &out, &cfg)?;
            match outcome.eval {
                Some(report) => emit(&format!("{:.4}", report.sequence_miou))?,
                None => eprintln!("no ground truth in {}; skipping eval", seq_dir.display()),
            }
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
