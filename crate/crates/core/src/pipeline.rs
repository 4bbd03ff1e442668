//! The full iterative method: an initial deconvolution followed by `T`
//! rounds of gradient extraction, denoising and guided deconvolution.

use rayon::prelude::*;

use crate::blur::BlurKernel;
use crate::dataset::Sample;
use crate::deconv::{check_gamma, grad_extract, DeconvPlan};
use crate::error::{Error, Result};
use crate::fcnn::DenoiserWeights;
use crate::field::{FrequencyField, GradientField, Image};
use crate::io::archive::{StageWeights, WeightArchive};
use crate::metrics::MetricReport;

/// What the denoiser sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Domain {
    /// Horizontal and vertical gradients, one network for both.
    #[default]
    Gradient,
    /// The intensity image; guides are the gradients of its output.
    Intensity,
}

/// Guides used by the first deconvolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialGuide {
    #[default]
    Zero,
    /// The gradients of the observation itself.
    Observed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub gamma0: f64,
    pub gammas: Vec<f64>,
    pub stages: Vec<DenoiserWeights>,
    pub domain: Domain,
    pub initial_guide: InitialGuide,
    /// Require `γ0 ≥ γ1 ≥ … ≥ γT`.
    pub monotone: bool,
    pub dump_intermediates: bool,
}

impl PipelineConfig {
    pub fn new(gamma0: f64, gammas: Vec<f64>, stages: Vec<DenoiserWeights>) -> Self {
        Self {
            gamma0,
            gammas,
            stages,
            domain: Domain::Gradient,
            initial_guide: InitialGuide::Zero,
            monotone: true,
            dump_intermediates: false,
        }
    }

    pub fn from_archive(a: &WeightArchive) -> Self {
        Self::new(a.gamma0, a.gammas(), a.stages.iter().map(|s| s.denoiser.clone()).collect())
    }

    pub fn to_archive(&self) -> WeightArchive {
        WeightArchive {
            gamma0: self.gamma0,
            stages: self
                .stages
                .iter()
                .zip(&self.gammas)
                .map(|(w, &gamma)| StageWeights { denoiser: w.clone(), gamma })
                .collect(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.stages.len()
    }

    /// The first `t` stages.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t > self.iterations() {
            return Err(Error::Param(format!("{t} iterations requested, weights hold {}", self.iterations())));
        }
        let mut c = self.clone();
        c.stages.truncate(t);
        c.gammas.truncate(t);
        Ok(c)
    }

    /// All `γ`, starting with `γ0`.
    pub fn all_gammas(&self) -> Vec<f64> {
        std::iter::once(self.gamma0).chain(self.gammas.iter().copied()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.len() != self.stages.len() {
            return Err(Error::Param(format!(
                "{} gammas for {} stages",
                self.gammas.len(),
                self.stages.len()
            )));
        }
        let all = self.all_gammas();
        for &g in &all {
            check_gamma(g)?;
        }
        if self.monotone {
            if let Some(w) = all.windows(2).find(|w| w[1] > w[0]) {
                return Err(Error::Param(format!("gamma increases from {} to {}", w[0], w[1])));
            }
        }
        for s in &self.stages {
            s.check_architecture()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub image: Image,
    /// `x⁰ … x^T` when requested.
    pub intermediates: Vec<Image>,
}

/// Guides produced by one stage's denoiser from the previous estimate.
pub fn stage_guides(w: &DenoiserWeights, x: &Image, domain: Domain) -> Result<(GradientField, GradientField)> {
    match domain {
        Domain::Gradient => {
            let (gh, gw) = grad_extract(x);
            w.denoise_gradients(&gh, &gw)
        }
        Domain::Intensity => Ok(grad_extract(&w.forward(x)?)),
    }
}

pub(crate) fn initial_guide_spectrum(
    y: &Image,
    plan: &DeconvPlan,
    guide: InitialGuide,
) -> Result<Option<FrequencyField>> {
    match guide {
        InitialGuide::Zero => Ok(None),
        InitialGuide::Observed => {
            let (gh, gw) = grad_extract(y);
            plan.guide_spectrum(&gh, &gw).map(Some)
        }
    }
}

/// Runs the pipeline with a prebuilt plan for `y`'s size.
pub fn run_with_plan(y: &Image, plan: &DeconvPlan, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let d = plan.data_spectrum(y)?;
    let e0 = initial_guide_spectrum(y, plan, cfg.initial_guide)?;
    let mut x = plan.solve(&d, e0.as_ref(), cfg.gamma0)?;
    let mut intermediates = Vec::new();
    for (w, &gamma) in cfg.stages.iter().zip(&cfg.gammas) {
        let (zh, zw) = stage_guides(w, &x, cfg.domain)?;
        let next = plan.solve(&d, Some(&plan.guide_spectrum(&zh, &zw)?), gamma)?;
        if cfg.dump_intermediates {
            intermediates.push(std::mem::replace(&mut x, next));
        } else {
            x = next;
        }
    }
    if cfg.dump_intermediates {
        intermediates.push(x.clone());
    }
    Ok(PipelineOutput { image: x, intermediates })
}

/// Restores `y`, blurred by `k`.
pub fn run_pipeline(y: &Image, k: &BlurKernel, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let plan = DeconvPlan::new(k, y.height(), y.width())?;
    run_with_plan(y, &plan, cfg)
}

/// [`run_pipeline`] for intensity-trained weights.
pub fn run_intensity_variant(y: &Image, k: &BlurKernel, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if cfg.domain != Domain::Intensity {
        return Err(Error::Param("intensity variant needs an intensity-domain config".into()));
    }
    run_pipeline(y, k, cfg)
}

/// Restores every sample's observation, in parallel.
pub fn restore_all(samples: &[Sample], cfg: &PipelineConfig) -> Result<Vec<Image>> {
    samples
        .par_iter()
        .map(|s| Ok(run_pipeline(&s.blurred, &s.kernel, cfg)?.image))
        .collect()
}

/// PSNR/SSIM of restorations against the clean images. Rows are named by
/// sample index.
pub fn evaluate(samples: &[Sample], restored: &[Image]) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for (n, (s, x)) in samples.iter().zip(restored).enumerate() {
        report.push(format!("{n:05}"), &s.clean, x)?;
    }
    Ok(report)
}
