//! Iterative non-blind deconvolution.
//!
//! A blurred, noisy image is restored by alternating two steps: a learned
//! fully-convolutional denoiser cleans the horizontal and vertical
//! gradients of the current estimate, and a closed-form FFT deconvolution
//! reconstructs the image guided by those gradients. The crate also trains
//! both the denoiser weights and the per-stage deconvolution weights `γ`.

pub mod blur;
pub mod dataset;
pub mod deconv;
pub mod error;
pub mod fcnn;
pub mod field;
pub mod gradcheck;
pub mod hyper;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod recipe;
pub mod rng;
pub mod scene;

pub use blur::{blur_synthesize, generate_kernel, BlurKernel, Boundary, SynthesisConfig};
pub use deconv::{deconv_step, grad_extract, initial_deconv, psf2otf, DeconvPlan, GradientOperators};
pub use error::{Error, Result};
pub use fcnn::{ConvLayer, DenoiserWeights};
pub use field::{circular_convolve, fft2, ifft2, FrequencyField, GradientField, Image, RealField};
pub use metrics::{psnr, ssim, MetricReport};
pub use pipeline::{run_pipeline, Domain, PipelineConfig};
