//! `idcv`: synthesis, training, restoration and evaluation from the command line.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (weights format 1, run manifest format 1)"
);

#[derive(Parser, Debug)]
#[command(name = "idcv", version = VERSION, about = "Iterative non-blind deconvolution with learned gradient denoisers")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainArg {
    Gradient,
    Intensity,
}

impl From<DomainArg> for idcv_core::Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Gradient => Self::Gradient,
            DomainArg::Intensity => Self::Intensity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuideArg {
    Zero,
    Observed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryArg {
    Circular,
    ReplicateTaper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentArg {
    Domain,
    Loss,
    Iterations,
    All,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name", content = "args")]
pub enum Command {
    /// Procedural clean images for synthesis.
    Scenes(ScenesArgs),
    /// Blurred training set from a directory of clean PGM images.
    Synth(SynthArgs),
    /// One camera-shake kernel.
    KernelGen(KernelGenArgs),
    /// Blur an image and add Gaussian noise.
    Blur(BlurArgs),
    /// Restore a blurred image with trained weights.
    Deblur(DeblurArgs),
    /// Train one stage's denoiser with the earlier stages frozen.
    TrainDenoiser(TrainDenoiserArgs),
    /// Train the deconvolution weights end to end with denoisers frozen.
    TrainHyper(TrainHyperArgs),
    /// PSNR/SSIM over reference/test pairs.
    Eval(EvalArgs),
    /// Desk-scale ablation studies.
    Ablate(AblateArgs),
    /// Finite-difference validation of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Repeat a run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenesArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub clean_dir: PathBuf,
    /// Kernels (and entries) per clean image.
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    #[arg(long, default_value_t = 11)]
    pub kernel_min: usize,
    #[arg(long, default_value_t = 31)]
    pub kernel_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGenArgs {
    #[arg(long, default_value_t = 15)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Circular)]
    pub boundary: BoundaryArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeblurArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run only the first N stages.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Write the initial and every stage's estimate here.
    #[arg(long)]
    pub dump_intermediate: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DomainArg::Gradient)]
    pub domain: DomainArg,
    #[arg(long, value_enum, default_value_t = GuideArg::Zero)]
    pub initial_guide: GuideArg,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainDenoiserArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub stage: usize,
    /// Archive holding stages 1..stage-1; required past stage 1.
    #[arg(long)]
    pub prev_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bias_lr_scale: f64,
    #[arg(long, default_value_t = 0.95)]
    pub momentum: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Train on random square windows of this side.
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long, value_enum, default_value_t = LossArg::L1)]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value_t = DomainArg::Gradient)]
    pub domain: DomainArg,
    /// Initial deconvolution weight for stage 1; grid-searched if absent.
    #[arg(long)]
    pub gamma0: Option<f64>,
    /// This stage's deconvolution weight; grid-searched if absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyperArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 10.0)]
    pub lr_last: f64,
    #[arg(long, default_value_t = 1e4)]
    pub lr_other: f64,
    #[arg(long, default_value_t = 0.95)]
    pub momentum: f64,
    /// Samples per step; the whole set if absent.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Allow increasing weights across stages.
    #[arg(long)]
    pub no_monotone: bool,
    #[arg(long, value_enum, default_value_t = DomainArg::Gradient)]
    pub domain: DomainArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Lines of `name  reference.pgm  test.pgm`, tab-separated.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub experiment: ExperimentArg,
    /// Training manifest; the built-in procedural corpus if absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out manifest; the last entries of `--data` if absent.
    #[arg(long, requires = "data")]
    pub test: Option<PathBuf>,
    /// Entries of `--data` held out when `--test` is absent.
    #[arg(long, default_value_t = 10)]
    pub holdout: usize,
    #[arg(long, default_value_t = 2017)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    /// Denoiser iterations per stage.
    #[arg(long)]
    pub iters: Option<usize>,
    /// End-to-end weight iterations.
    #[arg(long)]
    pub hyper_iters: Option<usize>,
    /// Save every trained model's archive here.
    #[arg(long)]
    pub weights_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Also write the results as TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fail unless every output matches its recorded digest.
    #[arg(long)]
    pub check: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Scenes(_) => "scenes",
            Command::Synth(_) => "synth",
            Command::KernelGen(_) => "kernel-gen",
            Command::Blur(_) => "blur",
            Command::Deblur(_) => "deblur",
            Command::TrainDenoiser(_) => "train-denoiser",
            Command::TrainHyper(_) => "train-hyper",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Gradcheck(_) => "gradcheck",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Command::Scenes(a) => vec![a.seed],
            Command::Synth(a) => vec![a.seed],
            Command::KernelGen(a) => vec![a.seed],
            Command::Blur(a) => vec![a.seed],
            Command::TrainDenoiser(a) => vec![a.seed],
            Command::TrainHyper(a) => vec![a.seed],
            Command::Ablate(a) => vec![a.seed],
            Command::Gradcheck(a) => vec![a.seed],
            Command::Deblur(_) | Command::Eval(_) | Command::Replay(_) => vec![],
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::dispatch(&cli.command, cli.threads) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
