//! Training and evaluation sets: random crops blurred by generated kernels.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use crate::blur::{blur_synthesize, generate_kernel, BlurKernel, SynthesisConfig, GENERATED_SIZE_RANGE};
use crate::error::{Error, Result};
use crate::field::Image;
use crate::io::manifest::{DatasetEntry, DatasetManifest};
use crate::io::{quantize16, read_image, read_kernel, write_image, write_kernel, write_manifest};
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Kernels (and crops) drawn per clean image.
    pub kernels_per_image: usize,
    pub sigma: f64,
    pub patch: usize,
    /// Inclusive odd range of kernel sizes.
    pub kernel_sizes: (usize, usize),
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kernels_per_image: usize, sigma: f64, patch: usize, seed: u64) -> Self {
        Self { kernels_per_image, sigma, patch, kernel_sizes: GENERATED_SIZE_RANGE, seed }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kernel_sizes;
        if lo % 2 == 0 || hi % 2 == 0 || lo > hi || lo < GENERATED_SIZE_RANGE.0 || hi > GENERATED_SIZE_RANGE.1 {
            return Err(Error::Param(format!("kernel size range {lo}..={hi} must be odd within 11..=31")));
        }
        if hi > self.patch {
            return Err(Error::Param(format!("kernels up to {hi} px do not fit {} px patches", self.patch)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Param(format!("noise sigma {} must be non-negative", self.sigma)));
        }
        Ok(())
    }
}

/// One synthesized observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub clean: Image,
    pub kernel: BlurKernel,
    pub blurred: Image,
    pub sigma: f64,
    pub seed: u64,
}

impl Sample {
    /// Blurs `clean` by `kernel` with noise drawn from `seed`.
    pub fn observe(clean: Image, kernel: BlurKernel, sigma: f64, seed: u64) -> Result<Self> {
        let blurred = blur_synthesize(&clean, &kernel, &SynthesisConfig::new(sigma, seed))?;
        Ok(Self { clean, kernel, blurred, sigma, seed })
    }
}

fn make_sample(clean: &[Image], spec: &SynthSpec, index: usize) -> Result<Sample> {
    let img = &clean[index / spec.kernels_per_image];
    let mut rng = substream(spec.seed, index as u64);
    let top = rng.random_range(0..=img.height() - spec.patch);
    let left = rng.random_range(0..=img.width() - spec.patch);
    let (lo, hi) = spec.kernel_sizes;
    let size = lo + 2 * rng.random_range(0..=(hi - lo) / 2);
    let kernel = generate_kernel(rng.random(), size)?;
    let patch = quantize16(&img.crop(top, left, spec.patch, spec.patch)?);
    Sample::observe(patch, kernel, spec.sigma, rng.random())
}

/// Draws `kernels_per_image` crops from every clean image, in memory.
/// Entry `e` depends only on `(seed, e)`.
pub fn synthesize_samples(clean: &[Image], spec: &SynthSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    if let Some(img) = clean.iter().find(|i| i.height() < spec.patch || i.width() < spec.patch) {
        return Err(Error::Shape(format!(
            "{}x{} image is smaller than the {} px patch",
            img.height(),
            img.width(),
            spec.patch
        )));
    }
    (0..clean.len() * spec.kernels_per_image)
        .into_par_iter()
        .map(|e| make_sample(clean, spec, e))
        .collect()
}

/// Synthesizes the set and writes `clean/`, `kernels/`, `blurred/` and
/// `manifest.tsv` under `out_dir`. Manifest paths are relative to `out_dir`.
pub fn synthesize_dataset(clean: &[Image], spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let samples = synthesize_samples(clean, spec)?;
    for sub in ["clean", "kernels", "blurred"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }
    let entries = samples
        .par_iter()
        .enumerate()
        .map(|(e, s)| {
            let entry = DatasetEntry {
                clean: format!("clean/{e:05}.pgm").into(),
                kernel: format!("kernels/{e:05}.txt").into(),
                sigma: s.sigma,
                seed: s.seed,
            };
            write_image(out_dir.join(&entry.clean), &s.clean)?;
            write_kernel(out_dir.join(&entry.kernel), &s.kernel)?;
            write_image(out_dir.join(format!("blurred/{e:05}.pgm")), &s.blurred)?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest { entries };
    write_manifest(out_dir.join("manifest.tsv"), &manifest)?;
    Ok(manifest)
}

/// Loads resolved manifest entries, regenerating each observation.
pub fn load_samples(entries: &[DatasetEntry]) -> Result<Vec<Sample>> {
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries
        .par_iter()
        .map(|e| Sample::observe(read_image(&e.clean)?, read_kernel(&e.kernel)?, e.sigma, e.seed))
        .collect()
}
