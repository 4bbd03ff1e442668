//! Blur kernels and the forward observation model `y = k ⊛ x + n`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{Image, RealField};
use crate::rng;

/// Largest supported kernel side.
pub const MAX_KERNEL_SIZE: usize = 31;

/// Allowed deviation of the tap sum from one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A normalized, non-negative point-spread function with odd dimensions.
///
/// The center tap is `(height / 2, width / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    height: usize,
    width: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    /// Validates the kernel invariants without rescaling.
    pub fn new(height: usize, width: usize, taps: Vec<f64>) -> Result<Self> {
        Self::check_dims(height, width)?;
        if taps.len() != height * width {
            return Err(Error::Length(format!("{} taps for a {height}x{width} kernel", taps.len())));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("kernel taps"));
        }
        if let Some(t) = taps.iter().find(|&&t| t < 0.0) {
            return Err(Error::Kernel(format!("negative tap {t}")));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Kernel(format!("taps sum to {sum}, expected 1")));
        }
        Ok(Self { height, width, taps })
    }

    /// Clips negatives to zero and rescales to unit sum.
    pub fn normalized(height: usize, width: usize, mut taps: Vec<f64>) -> Result<Self> {
        Self::check_dims(height, width)?;
        if taps.len() != height * width {
            return Err(Error::Length(format!("{} taps for a {height}x{width} kernel", taps.len())));
        }
        for t in taps.iter_mut() {
            if !t.is_finite() {
                return Err(Error::NonFinite("kernel taps"));
            }
            *t = t.max(0.0);
        }
        let sum: f64 = taps.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Kernel("kernel has no positive mass".into()));
        }
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Self { height, width, taps })
    }

    fn check_dims(height: usize, width: usize) -> Result<()> {
        for d in [height, width] {
            if d == 0 || d % 2 == 0 || d > MAX_KERNEL_SIZE {
                return Err(Error::Kernel(format!(
                    "dimensions {height}x{width} must be odd and in [1, {MAX_KERNEL_SIZE}]"
                )));
            }
        }
        Ok(())
    }

    pub fn identity() -> Self {
        Self { height: 1, width: 1, taps: vec![1.0] }
    }

    /// Uniform `size × size` box.
    pub fn box_filter(size: usize) -> Result<Self> {
        Self::normalized(size, size, vec![1.0; size * size])
    }

    /// Sampled isotropic Gaussian.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Param(format!("gaussian sigma {sigma} must be positive")));
        }
        let c = (size / 2) as f64;
        let taps = (0..size * size)
            .map(|n| {
                let (i, j) = ((n / size) as f64 - c, (n % size) as f64 - c);
                (-(i * i + j * j) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Self::normalized(size, size, taps)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[i * self.width + j]
    }

    pub fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    pub fn fits_in(&self, height: usize, width: usize) -> bool {
        self.height <= height && self.width <= width
    }

    pub fn to_field(&self) -> RealField {
        RealField::new(self.height, self.width, self.taps.clone()).expect("kernel taps are finite")
    }

    /// Zero-embeds the kernel into an `h × w` field with its center tap at
    /// `[0, 0]`, so that `x ⊛ embedded` is the centered convolution `k * x`.
    pub fn embed_centered(&self, h: usize, w: usize) -> Result<RealField> {
        if !self.fits_in(h, w) {
            return Err(Error::Kernel(format!(
                "{}x{} kernel does not fit in {h}x{w}",
                self.height, self.width
            )));
        }
        let (ci, cj) = self.center();
        let mut out = RealField::zeros(h, w);
        for a in 0..self.height {
            let i = (a + h - ci) % h;
            for b in 0..self.width {
                let j = (b + w - cj) % w;
                out[(i, j)] += self.tap(a, b);
            }
        }
        Ok(out)
    }

    /// Fraction of taps that are strictly positive.
    pub fn support_fraction(&self) -> f64 {
        self.taps.iter().filter(|&&t| t > 0.0).count() as f64 / self.taps.len() as f64
    }
}

/// How the blur treats pixels beyond the image border.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    /// Periodic wrap-around; the FFT solver inverts this model exactly.
    #[default]
    Circular,
    /// Border pixels replicated outward, then the result is blended toward
    /// its circular blur near the edges.
    ReplicateTaper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisConfig {
    /// Standard deviation of additive Gaussian noise, on the `[0, 1]` scale.
    pub noise_sigma: f64,
    pub seed: u64,
    pub boundary: Boundary,
}

impl SynthesisConfig {
    pub fn new(noise_sigma: f64, seed: u64) -> Self {
        Self { noise_sigma, seed, boundary: Boundary::Circular }
    }
}

/// Centered convolution `k * x` under the given boundary rule, evaluated in
/// the spatial domain.
pub fn convolve(x: &Image, k: &BlurKernel, boundary: Boundary) -> Result<Image> {
    let (h, w) = x.dims();
    if !k.fits_in(h, w) {
        return Err(Error::Kernel(format!(
            "{}x{} kernel larger than {h}x{w} image",
            k.height(),
            k.width()
        )));
    }
    let (ci, cj) = k.center();
    let (ih, iw) = (h as isize, w as isize);
    let sample = |i: isize, j: isize| -> f64 {
        match boundary {
            Boundary::Circular => x[(i.rem_euclid(ih) as usize, j.rem_euclid(iw) as usize)],
            Boundary::ReplicateTaper => x[(i.clamp(0, ih - 1) as usize, j.clamp(0, iw - 1) as usize)],
        }
    };
    let mut out = RealField::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for a in 0..k.height() {
                let si = i as isize - (a as isize - ci as isize);
                for b in 0..k.width() {
                    let sj = j as isize - (b as isize - cj as isize);
                    acc += k.tap(a, b) * sample(si, sj);
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Blends `y` toward its circular blur within a kernel half-width of the
/// border, using a raised-cosine ramp.
pub fn edge_taper(y: &Image, k: &BlurKernel) -> Result<Image> {
    let blurred = convolve(y, k, Boundary::Circular)?;
    let (h, w) = y.dims();
    let ramp = |pos: usize, len: usize, half: usize| -> f64 {
        if half == 0 {
            return 1.0;
        }
        let d = pos.min(len - 1 - pos);
        if d >= half {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * (d as f64 + 0.5) / half as f64).cos()
        }
    };
    let (hi, hj) = (k.height() / 2, k.width() / 2);
    Ok(RealField::from_fn(h, w, |i, j| {
        let a = ramp(i, h, hi) * ramp(j, w, hj);
        a * y[(i, j)] + (1.0 - a) * blurred[(i, j)]
    }))
}

/// Synthesizes `y = k ⊛ x + n`, with `n` i.i.d. Gaussian drawn in row-major
/// order from `rng::seeded(cfg.seed)`.
pub fn blur_synthesize(x: &Image, k: &BlurKernel, cfg: &SynthesisConfig) -> Result<Image> {
    if !(cfg.noise_sigma >= 0.0) || !cfg.noise_sigma.is_finite() {
        return Err(Error::Param(format!("noise sigma {} must be non-negative", cfg.noise_sigma)));
    }
    let mut y = match cfg.boundary {
        Boundary::Circular => convolve(x, k, Boundary::Circular)?,
        Boundary::ReplicateTaper => edge_taper(&convolve(x, k, Boundary::ReplicateTaper)?, k)?,
    };
    if cfg.noise_sigma > 0.0 {
        let mut rng = rng::seeded(cfg.seed);
        for v in y.data_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise_sigma * n;
        }
    }
    Ok(y)
}

/// Smallest and largest sizes accepted by [`generate_kernel`].
pub const GENERATED_SIZE_RANGE: (usize, usize) = (11, 31);

/// Simulated camera-shake kernel.
///
/// A random walk with inertia is traced, scaled to a random extent inside the
/// grid, splatted bilinearly, smoothed with a 3×3 Gaussian (σ = 0.5), clipped
/// and normalized.
pub fn generate_kernel(seed: u64, size: usize) -> Result<BlurKernel> {
    let (lo, hi) = GENERATED_SIZE_RANGE;
    if size % 2 == 0 || size < lo || size > hi {
        return Err(Error::Kernel(format!("generated kernel size {size} must be odd and in [{lo}, {hi}]")));
    }
    let mut rng = rng::seeded(seed);
    let steps = 4 * size;
    let inertia = rng.random_range(0.6..0.95);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let mut vel = (angle.cos(), angle.sin());
    let mut pos = (0.0f64, 0.0f64);
    let mut path = vec![pos];
    for _ in 0..steps {
        let ax: f64 = StandardNormal.sample(&mut rng);
        let ay: f64 = StandardNormal.sample(&mut rng);
        vel = (inertia * vel.0 + (1.0 - inertia) * ax, inertia * vel.1 + (1.0 - inertia) * ay);
        let speed = (vel.0 * vel.0 + vel.1 * vel.1).sqrt().max(1e-12);
        // Constant-speed steps keep the exposure time uniform along the path.
        vel = (vel.0 / speed, vel.1 / speed);
        pos = (pos.0 + vel.0, pos.1 + vel.1);
        path.push(pos);
    }

    let (mut min_r, mut max_r, mut min_c, mut max_c) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(r, c) in &path {
        min_r = min_r.min(r);
        max_r = max_r.max(r);
        min_c = min_c.min(c);
        max_c = max_c.max(c);
    }
    let extent = (max_r - min_r).max(max_c - min_c).max(1e-9);
    let usable = (size - 3) as f64;
    let target = usable * rng.random_range(0.35..1.0);
    let scale = target / extent;
    let mid = (size - 1) as f64 / 2.0;
    let (off_r, off_c) = (mid - scale * (min_r + max_r) / 2.0, mid - scale * (min_c + max_c) / 2.0);

    let mut grid = vec![0.0; size * size];
    let mut splat = |r: f64, c: f64| {
        let (r0, c0) = (r.floor(), c.floor());
        let (fr, fc) = (r - r0, c - c0);
        for (dr, wr) in [(0usize, 1.0 - fr), (1, fr)] {
            for (dc, wc) in [(0usize, 1.0 - fc), (1, fc)] {
                let (ri, ci) = (r0 as isize + dr as isize, c0 as isize + dc as isize);
                if ri >= 0 && ci >= 0 && (ri as usize) < size && (ci as usize) < size {
                    grid[ri as usize * size + ci as usize] += wr * wc;
                }
            }
        }
    };
    for seg in path.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (pa, pb) = ((off_r + scale * a.0, off_c + scale * a.1), (off_r + scale * b.0, off_c + scale * b.1));
        let len = ((pb.0 - pa.0).powi(2) + (pb.1 - pa.1).powi(2)).sqrt();
        let pieces = (len / 0.25).ceil().max(1.0) as usize;
        for s in 0..pieces {
            let t = (s as f64 + 0.5) / pieces as f64;
            splat(pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1));
        }
    }

    let g = [(-2.0f64).exp(), 1.0, (-2.0f64).exp()];
    let mut smoothed = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let mut acc = 0.0;
            for (di, wi) in g.iter().enumerate() {
                for (dj, wj) in g.iter().enumerate() {
                    let (si, sj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                    if si >= 0 && sj >= 0 && (si as usize) < size && (sj as usize) < size {
                        acc += wi * wj * grid[si as usize * size + sj as usize];
                    }
                }
            }
            smoothed[i * size + j] = acc;
        }
    }
    BlurKernel::normalized(size, size, smoothed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::circular_convolve;
    use rand::SeedableRng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        RealField::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn identity_kernel_without_noise_is_exact() {
        let x = random_image(7, 9, 1);
        let y = blur_synthesize(&x, &BlurKernel::identity(), &SynthesisConfig::new(0.0, 5)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn constant_image_stays_constant() {
        let x = RealField::filled(12, 12, 0.42);
        let k = generate_kernel(3, 11).unwrap();
        for boundary in [Boundary::Circular, Boundary::ReplicateTaper] {
            let cfg = SynthesisConfig { noise_sigma: 0.0, seed: 0, boundary };
            let y = blur_synthesize(&x, &k, &cfg).unwrap();
            assert!(y.data().iter().all(|v| (v - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn circular_blur_matches_spatial_oracle() {
        let x = random_image(8, 8, 2);
        let k = BlurKernel::normalized(3, 3, vec![0.1, 0.2, 0.0, 0.05, 0.3, 0.1, 0.0, 0.15, 0.1]).unwrap();
        let y = blur_synthesize(&x, &k, &SynthesisConfig::new(0.0, 0)).unwrap();
        let oracle = circular_convolve(&x, &k.embed_centered(8, 8).unwrap()).unwrap();
        assert!(y.max_abs_diff(&oracle) < 1e-14);
    }

    #[test]
    fn kernel_larger_than_image_is_rejected() {
        let k = generate_kernel(1, 15).unwrap();
        assert!(blur_synthesize(&RealField::zeros(10, 20), &k, &SynthesisConfig::new(0.0, 0)).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let x = random_image(6, 6, 3);
        let k = BlurKernel::box_filter(3).unwrap();
        let a = blur_synthesize(&x, &k, &SynthesisConfig::new(0.05, 9)).unwrap();
        let b = blur_synthesize(&x, &k, &SynthesisConfig::new(0.05, 9)).unwrap();
        let c = blur_synthesize(&x, &k, &SynthesisConfig::new(0.05, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_mean_converges_to_blur() {
        let x = random_image(4, 4, 4);
        let k = BlurKernel::box_filter(3).unwrap();
        let clean = convolve(&x, &k, Boundary::Circular).unwrap();
        let draws = 10_000;
        let mut mean = RealField::zeros(4, 4);
        for s in 0..draws {
            let y = blur_synthesize(&x, &k, &SynthesisConfig::new(0.01, s)).unwrap();
            mean = mean.axpby(1.0, &y, 1.0 / draws as f64);
        }
        assert!(mean.max_abs_diff(&clean) < 1e-3);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let x = random_image(4, 4, 4);
        assert!(blur_synthesize(&x, &BlurKernel::identity(), &SynthesisConfig::new(-0.1, 0)).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(BlurKernel::new(2, 3, vec![0.5; 6]).is_err());
        assert!(BlurKernel::new(1, 3, vec![0.5, 0.25, 0.25]).is_ok());
        assert!(BlurKernel::new(1, 3, vec![0.5, 0.75, -0.25]).is_err());
        assert!(BlurKernel::new(1, 1, vec![0.5]).is_err());
        assert!(BlurKernel::new(33, 33, vec![1.0 / 1089.0; 1089]).is_err());
        let b = BlurKernel::box_filter(3).unwrap();
        assert!((b.taps().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generated_kernels_are_valid_and_deterministic() {
        for size in (11..=31).step_by(2) {
            for seed in 0..5 {
                let k = generate_kernel(seed, size).unwrap();
                assert!((k.taps().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(k.taps().iter().all(|&t| t >= 0.0));
                assert_eq!(k, generate_kernel(seed, size).unwrap());
            }
        }
        assert_ne!(generate_kernel(1, 15).unwrap(), generate_kernel(2, 15).unwrap());
    }

    #[test]
    fn generated_kernel_size_is_checked() {
        for size in [0, 9, 12, 33] {
            assert!(generate_kernel(0, size).is_err());
        }
    }

    #[test]
    fn generated_kernel_support_regression() {
        let mean = (0..100).map(|s| generate_kernel(s, 15).unwrap().support_fraction()).sum::<f64>() / 100.0;
        assert!((mean - GENERATED_SUPPORT_15).abs() < 1e-12, "mean support {mean}");
    }

    /// Mean positive-tap fraction of `generate_kernel(0..100, 15)`, frozen
    /// from the generator as first committed.
    const GENERATED_SUPPORT_15: f64 = 0.3333777777777779;

    #[test]
    fn edge_taper_leaves_interior_alone() {
        let y = random_image(20, 20, 8);
        let k = BlurKernel::box_filter(5).unwrap();
        let t = edge_taper(&y, &k).unwrap();
        assert_eq!(t[(10, 10)], y[(10, 10)]);
        assert_ne!(t[(0, 0)], y[(0, 0)]);
    }
}
