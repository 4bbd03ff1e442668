//! The desk-scale training recipe and the experiments built on it.
//!
//! A procedural corpus is blurred by generated kernels, the denoisers are
//! trained stage by stage with `γ` held fixed, and the `γ` are then trained
//! end to end with the denoisers frozen. Initial `γ` come from a coarse
//! grid search on the training loss.

use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{synthesize_samples, Sample, SynthSpec};
use crate::deconv::{grad_extract, DeconvPlan};
use crate::error::{Error, Result};
use crate::fcnn::train::dataset_loss;
use crate::fcnn::{train_denoiser, DenoiserWeights, LossKind, TrainConfig, TrainingPair};
use crate::field::Image;
use crate::hyper::{plans_for, train_hyper, HyperOutcome, HyperProblem, HyperTrainConfig};
use crate::metrics::MetricReport;
use crate::pipeline::{evaluate, restore_all, Domain, InitialGuide, PipelineConfig};
use crate::rng::derive_seed;
use crate::scene::generate_scene;

#[derive(Clone, Debug, PartialEq)]
pub struct RecipeConfig {
    pub seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    /// Side of the procedural scenes patches are cropped from.
    pub scene_size: usize,
    pub patch: usize,
    pub kernels_per_image: usize,
    pub kernel_sizes: (usize, usize),
    pub sigma: f64,
    pub stages: usize,
    pub denoiser: TrainConfig,
    /// Denoiser settings for the intensity-domain ablation.
    pub intensity_denoiser: TrainConfig,
    pub hyper: HyperTrainConfig,
    /// Training samples used for end-to-end `γ` training (a prefix).
    pub hyper_samples: usize,
    /// Candidate `γ` for the initial grid search.
    pub gamma_grid: Vec<f64>,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            seed: 2017,
            train_images: 20,
            test_images: 10,
            scene_size: 96,
            patch: 64,
            kernels_per_image: 2,
            kernel_sizes: (11, 15),
            sigma: 0.01,
            stages: 3,
            denoiser: TrainConfig {
                learning_rate: 1e-3,
                momentum: 0.95,
                batch_size: 4,
                iterations: 800,
                seed: 0,
                loss: LossKind::L1,
                crop: Some(24),
                bias_lr_scale: 1e-3,
            },
            intensity_denoiser: TrainConfig {
                learning_rate: 3e-5,
                momentum: 0.95,
                batch_size: 4,
                iterations: 800,
                seed: 0,
                loss: LossKind::L1,
                crop: Some(24),
                bias_lr_scale: 1.0,
            },
            hyper: HyperTrainConfig { lr_last: 1.0, lr_other: 100.0, iterations: 8, restarts: 1, ..HyperTrainConfig::default() },
            hyper_samples: 8,
            gamma_grid: log_grid(1.0, 1e5, 31),
        }
    }
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Clean scenes and their observations; held-out images use unrelated
/// scene seeds and kernels.
pub fn build_corpus(cfg: &RecipeConfig) -> Result<Corpus> {
    let scenes = |tag: u64, n: usize| -> Vec<Image> {
        (0..n)
            .into_par_iter()
            .map(|i| generate_scene(derive_seed(cfg.seed, (tag << 32) | i as u64), cfg.scene_size, cfg.scene_size))
            .collect()
    };
    let spec = |tag: u64, per_image: usize| SynthSpec {
        kernels_per_image: per_image,
        sigma: cfg.sigma,
        patch: cfg.patch,
        kernel_sizes: cfg.kernel_sizes,
        seed: derive_seed(cfg.seed, tag),
    };
    let train = synthesize_samples(&scenes(1, cfg.train_images), &spec(11, cfg.kernels_per_image))?;
    let test = synthesize_samples(&scenes(2, cfg.test_images), &spec(12, 1))?;
    Ok(Corpus { train, test })
}

/// Training pairs for a stage whose input is `inputs[i]`.
pub fn stage_pairs(samples: &[Sample], inputs: &[Image], domain: Domain) -> Vec<TrainingPair> {
    samples
        .iter()
        .zip(inputs)
        .map(|(s, x)| match domain {
            Domain::Gradient => TrainingPair::Gradient { input: grad_extract(x), target: grad_extract(&s.clean) },
            Domain::Intensity => TrainingPair::Intensity { input: x.clone(), target: s.clean.clone() },
        })
        .collect()
}

/// `γ` from `grid` minimizing the training loss with all other `γ` fixed.
/// Ties resolve to the earlier grid entry.
pub fn grid_search(
    problem: &HyperProblem<'_>,
    samples: &[Sample],
    plans: &[DeconvPlan],
    fixed: &[f64],
    grid: &[f64],
) -> Result<(f64, f64)> {
    let losses = problem.loss_over_last(samples, plans, fixed, grid)?;
    let mut best = (f64::NAN, f64::INFINITY);
    for (&g, &loss) in grid.iter().zip(&losses) {
        if loss < best.1 {
            best = (g, loss);
        }
    }
    if best.0.is_nan() {
        return Err(Error::Param("empty gamma grid".into()));
    }
    Ok(best)
}

#[derive(Clone, Debug)]
pub struct TrainedPipeline {
    pub config: PipelineConfig,
    /// `γ` before end-to-end training.
    pub grid_gammas: Vec<f64>,
    pub stage_losses: Vec<Vec<f64>>,
    pub hyper: Option<HyperOutcome>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineRecipe {
    pub stages: usize,
    pub domain: Domain,
    pub loss: LossKind,
    pub seed: u64,
    pub train_gammas: bool,
}

/// Trains a pipeline on `train`: grid-searched `γ0`, then per stage a
/// denoiser on the previous stage's outputs followed by a grid search of
/// its `γ` (capped by the previous one), then end-to-end `γ` training.
pub fn train_pipeline(train: &[Sample], cfg: &RecipeConfig, recipe: PipelineRecipe) -> Result<TrainedPipeline> {
    let plans = plans_for(train)?;
    let mut stages: Vec<DenoiserWeights> = Vec::with_capacity(recipe.stages);
    let mut stage_losses = Vec::with_capacity(recipe.stages);
    let problem0 = HyperProblem { stages: &[], domain: recipe.domain, initial_guide: InitialGuide::Zero };
    let (gamma0, _) = grid_search(&problem0, train, &plans, &[], &cfg.gamma_grid)?;
    let mut gammas = vec![gamma0];
    log::info!("grid gamma0 {gamma0:.3}");
    for t in 1..=recipe.stages {
        let started = Instant::now();
        let problem = HyperProblem { stages: &stages, domain: recipe.domain, initial_guide: InitialGuide::Zero };
        let inputs = train
            .par_iter()
            .zip(&plans)
            .map(|(s, p)| problem.restore(&s.blurred, p, &gammas))
            .collect::<Result<Vec<_>>>()?;
        let pairs = stage_pairs(train, &inputs, recipe.domain);
        let base = match recipe.domain {
            Domain::Gradient => &cfg.denoiser,
            Domain::Intensity => &cfg.intensity_denoiser,
        };
        let tc = TrainConfig { seed: recipe.seed, loss: recipe.loss, ..base.clone() };
        let out = train_denoiser(t, &pairs, &tc, None)?;
        stages.push(out.weights);
        stage_losses.push(out.loss_log);
        let problem = HyperProblem { stages: &stages, domain: recipe.domain, initial_guide: InitialGuide::Zero };
        let cap = *gammas.last().expect("gamma0");
        let grid: Vec<f64> = cfg.gamma_grid.iter().copied().filter(|&g| g <= cap).collect();
        let grid = if grid.is_empty() { vec![cap] } else { grid };
        let (g, loss) = grid_search(&problem, train, &plans, &gammas, &grid)?;
        gammas.push(g);
        log::info!(
            "stage {t}: gamma {g:.3}, train loss {loss:.4}, {:.1}s",
            started.elapsed().as_secs_f64()
        );
    }
    let grid_gammas = gammas.clone();
    finish_gammas(train, &plans, cfg, recipe, stages, stage_losses, grid_gammas)
}

/// End-to-end `γ` training of frozen denoisers, starting from `grid_gammas`.
fn finish_gammas(
    train: &[Sample],
    plans: &[DeconvPlan],
    cfg: &RecipeConfig,
    recipe: PipelineRecipe,
    stages: Vec<DenoiserWeights>,
    stage_losses: Vec<Vec<f64>>,
    grid_gammas: Vec<f64>,
) -> Result<TrainedPipeline> {
    let mut gammas = grid_gammas.clone();
    let mut hyper = None;
    if recipe.train_gammas && cfg.hyper.iterations > 0 {
        let problem = HyperProblem { stages: &stages, domain: recipe.domain, initial_guide: InitialGuide::Zero };
        let subset = &train[..cfg.hyper_samples.min(train.len())];
        let hc = HyperTrainConfig { seed: derive_seed(recipe.seed, 0x4850), ..cfg.hyper.clone() };
        let out = train_hyper(&problem, subset, &hc, Some(&gammas))?;
        // Keep the trained values only if they help on the whole training set.
        let trained = problem.loss(train, plans, &out.gammas)?;
        let before = problem.loss(train, plans, &gammas)?;
        log::info!("end-to-end gammas {:?}: train loss {before:.4} -> {trained:.4}", out.gammas);
        if trained <= before {
            gammas = out.gammas.clone();
        }
        hyper = Some(out);
    }
    let mut config = PipelineConfig::new(gammas[0], gammas[1..].to_vec(), stages);
    config.domain = recipe.domain;
    Ok(TrainedPipeline { config, grid_gammas, stage_losses, hyper })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// Gradient-domain against intensity-domain denoisers.
    Domain,
    /// L1 against L2 denoiser training loss.
    Loss,
    /// Initial deconvolution, one stage and the full pipeline.
    Iterations,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Iterations, Experiment::Domain, Experiment::Loss];
}

/// Training losses of two stage-1 denoisers on identical pairs, each
/// measured under both losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossStudy {
    pub l1_net_l1: f64,
    pub l1_net_l2: f64,
    pub l2_net_l1: f64,
    pub l2_net_l2: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RecipeReport {
    pub baseline: MetricReport,
    pub one_stage: Option<MetricReport>,
    pub full: Option<MetricReport>,
    pub intensity: Option<MetricReport>,
    pub loss: Option<LossStudy>,
    pub pipelines: Vec<(String, TrainedPipeline)>,
    pub seconds: f64,
}

impl RecipeReport {
    /// `(model, metric, value)` rows.
    pub fn rows(&self) -> Vec<(String, &'static str, f64)> {
        let mut out = Vec::new();
        let mut metrics = |name: &str, r: &MetricReport| {
            out.push((name.to_string(), "psnr_db", r.mean_psnr()));
            out.push((name.to_string(), "ssim", r.mean_ssim()));
        };
        metrics("initial_deconv", &self.baseline);
        if let Some(r) = &self.one_stage {
            metrics("one_stage", r);
        }
        if let Some(r) = &self.full {
            metrics("gradient_domain", r);
        }
        if let Some(r) = &self.intensity {
            metrics("intensity_domain", r);
        }
        if let Some(l) = &self.loss {
            out.push(("l1_trained".into(), "train_l1", l.l1_net_l1));
            out.push(("l1_trained".into(), "train_l2", l.l1_net_l2));
            out.push(("l2_trained".into(), "train_l1", l.l2_net_l1));
            out.push(("l2_trained".into(), "train_l2", l.l2_net_l2));
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tmetric\tvalue\n");
        for (model, metric, value) in self.rows() {
            out.push_str(&format!("{model}\t{metric}\t{value}\n"));
        }
        out
    }
}

/// The initial deconvolution alone, with the grid-best `γ0`.
pub fn baseline_config(train: &[Sample], cfg: &RecipeConfig) -> Result<PipelineConfig> {
    let plans = plans_for(train)?;
    let problem = HyperProblem { stages: &[], domain: Domain::Gradient, initial_guide: InitialGuide::Zero };
    let (g, _) = grid_search(&problem, train, &plans, &[], &cfg.gamma_grid)?;
    Ok(PipelineConfig::new(g, vec![], vec![]))
}

pub fn evaluate_config(test: &[Sample], cfg: &PipelineConfig) -> Result<MetricReport> {
    evaluate(test, &restore_all(test, cfg)?)
}

fn main_recipe(cfg: &RecipeConfig) -> PipelineRecipe {
    PipelineRecipe {
        stages: cfg.stages,
        domain: Domain::Gradient,
        loss: LossKind::L1,
        seed: derive_seed(cfg.seed, 1),
        train_gammas: true,
    }
}

/// Trains the models `experiments` need on `corpus.train` and evaluates them
/// on `corpus.test`. Models shared between experiments are trained once.
pub fn run_experiments(corpus: &Corpus, cfg: &RecipeConfig, experiments: &[Experiment]) -> Result<RecipeReport> {
    let started = Instant::now();
    let wants = |e: Experiment| experiments.contains(&e);
    let main = main_recipe(cfg);
    let mut report = RecipeReport {
        baseline: evaluate_config(&corpus.test, &baseline_config(&corpus.train, cfg)?)?,
        ..Default::default()
    };
    let full = if wants(Experiment::Iterations) || wants(Experiment::Domain) {
        let p = train_pipeline(&corpus.train, cfg, main)?;
        report.full = Some(evaluate_config(&corpus.test, &p.config)?);
        Some(p)
    } else {
        None
    };
    if wants(Experiment::Iterations) {
        let one = train_pipeline(&corpus.train, cfg, PipelineRecipe { stages: 1, seed: derive_seed(cfg.seed, 2), ..main })?;
        report.one_stage = Some(evaluate_config(&corpus.test, &one.config)?);
        report.pipelines.push(("one_stage".into(), one));
    }
    if wants(Experiment::Domain) {
        let p = train_pipeline(&corpus.train, cfg, PipelineRecipe { domain: Domain::Intensity, ..main })?;
        report.intensity = Some(evaluate_config(&corpus.test, &p.config)?);
        report.pipelines.push(("intensity_domain".into(), p));
    }
    if wants(Experiment::Loss) {
        report.loss = Some(loss_study(&corpus.train, cfg, full.as_ref())?);
    }
    if let Some(p) = full {
        report.pipelines.insert(0, ("gradient_domain".into(), p));
    }
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Stage-1 denoisers trained with L1 and with L2 on the same pairs and seed.
/// The L1 net of an already trained main pipeline is reused.
fn loss_study(train: &[Sample], cfg: &RecipeConfig, main: Option<&TrainedPipeline>) -> Result<LossStudy> {
    let plans = plans_for(train)?;
    let gamma0 = match main {
        Some(p) => p.grid_gammas[0],
        None => {
            let problem = HyperProblem { stages: &[], domain: Domain::Gradient, initial_guide: InitialGuide::Zero };
            grid_search(&problem, train, &plans, &[], &cfg.gamma_grid)?.0
        }
    };
    let x0 = train
        .par_iter()
        .zip(&plans)
        .map(|(s, p)| crate::deconv::initial_deconv(&s.blurred, p, gamma0))
        .collect::<Result<Vec<_>>>()?;
    let pairs = stage_pairs(train, &x0, Domain::Gradient);
    let seed = main_recipe(cfg).seed;
    let l1_net = match main {
        Some(p) => p.config.stages[0].clone(),
        None => train_denoiser(1, &pairs, &TrainConfig { seed, loss: LossKind::L1, ..cfg.denoiser.clone() }, None)?.weights,
    };
    let l2_net = train_denoiser(1, &pairs, &TrainConfig { seed, loss: LossKind::L2, ..cfg.denoiser.clone() }, None)?.weights;
    Ok(LossStudy {
        l1_net_l1: dataset_loss(&l1_net, &pairs, LossKind::L1)?,
        l1_net_l2: dataset_loss(&l1_net, &pairs, LossKind::L2)?,
        l2_net_l1: dataset_loss(&l2_net, &pairs, LossKind::L1)?,
        l2_net_l2: dataset_loss(&l2_net, &pairs, LossKind::L2)?,
    })
}

/// Every experiment of the desk-scale study on the procedural corpus.
pub fn run_recipe(cfg: &RecipeConfig) -> Result<RecipeReport> {
    run_experiments(&build_corpus(cfg)?, cfg, &Experiment::ALL)
}
