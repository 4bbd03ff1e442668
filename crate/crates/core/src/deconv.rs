//! Closed-form FFT deconvolution.
//!
//! For fixed guide gradients `z_h, z_w` the minimizer of
//!
//! ```text
//! γ‖y − k ⊛ x‖² + Σ_l ‖z_l − p_l ⊛ x‖²
//! ```
//!
//! under circular boundaries is
//!
//! ```text
//! x = F⁻¹[(γ·conj(K)·Y + Σ_l conj(P_l)·Z_l) / (γ·|K|² + Σ_l |P_l|² + ε)]
//! ```

use crate::blur::BlurKernel;
use crate::error::{Error, Result};
use crate::field::{fft2, ifft2, FrequencyField, GradientField, Image, RealField};

/// Denominator guard.
pub const EPSILON: f64 = 1e-12;

/// Fixed circular forward differences.
///
/// `gh[i,j] = x[i,(j+1) mod W] − x[i,j]` and `gw[i,j] = x[(i+1) mod H,j] − x[i,j]`.
/// The vertical filter is the transpose of the horizontal one.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradientOperators;

impl GradientOperators {
    /// Taps of the horizontal filter, `[+1, −1]` acting on `(j+1, j)`.
    pub const HORIZONTAL: [f64; 2] = [1.0, -1.0];

    /// The horizontal difference as an `h × w` circular-convolution field.
    pub fn horizontal_field(h: usize, w: usize) -> RealField {
        let mut e = RealField::zeros(h, w);
        e[(0, 0)] -= 1.0;
        e[(0, (w - 1) % w)] += 1.0;
        e
    }

    pub fn vertical_field(h: usize, w: usize) -> RealField {
        Self::horizontal_field(w, h).transpose()
    }

    pub fn apply(x: &Image) -> (GradientField, GradientField) {
        let (h, w) = x.dims();
        let gh = RealField::from_fn(h, w, |i, j| x[(i, (j + 1) % w)] - x[(i, j)]);
        let gw = RealField::from_fn(h, w, |i, j| x[((i + 1) % h, j)] - x[(i, j)]);
        (gh, gw)
    }

    /// Adjoint of [`apply`](Self::apply): `D_hᵀ·uh + D_wᵀ·uw`.
    pub fn adjoint(uh: &GradientField, uw: &GradientField) -> Result<Image> {
        uh.check_dims(uw, "gradient adjoint")?;
        let (h, w) = uh.dims();
        Ok(RealField::from_fn(h, w, |i, j| {
            uh[(i, (j + w - 1) % w)] - uh[(i, j)] + uw[((i + h - 1) % h, j)] - uw[(i, j)]
        }))
    }
}

/// Circular forward-difference gradients of `x`.
pub fn grad_extract(x: &Image) -> (GradientField, GradientField) {
    GradientOperators::apply(x)
}

/// Optical transfer function: the DFT of the kernel zero-embedded at
/// `h × w` with its center tap moved to `[0, 0]`.
pub fn psf2otf(k: &BlurKernel, h: usize, w: usize) -> Result<FrequencyField> {
    fft2(&k.embed_centered(h, w)?)
}

/// Spectra shared by every deconvolution with one kernel at one size.
#[derive(Clone, Debug)]
pub struct DeconvPlan {
    height: usize,
    width: usize,
    kernel_otf: FrequencyField,
    grad_h_otf: FrequencyField,
    grad_w_otf: FrequencyField,
    /// `|F(k)|²`
    kernel_power: Vec<f64>,
    /// `Σ_l |F(p_l)|²`
    grad_power: Vec<f64>,
}

impl DeconvPlan {
    pub fn new(k: &BlurKernel, height: usize, width: usize) -> Result<Self> {
        let kernel_otf = psf2otf(k, height, width)?;
        let grad_h_otf = fft2(&GradientOperators::horizontal_field(height, width))?;
        let grad_w_otf = fft2(&GradientOperators::vertical_field(height, width))?;
        let kernel_power = kernel_otf.data().iter().map(|c| c.norm_sqr()).collect();
        let grad_power = grad_h_otf
            .data()
            .iter()
            .zip(grad_w_otf.data())
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        Ok(Self { height, width, kernel_otf, grad_h_otf, grad_w_otf, kernel_power, grad_power })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn kernel_otf(&self) -> &FrequencyField {
        &self.kernel_otf
    }

    pub fn gradient_otfs(&self) -> (&FrequencyField, &FrequencyField) {
        (&self.grad_h_otf, &self.grad_w_otf)
    }

    /// `G = conj(F(k))·F(k)` per bin.
    pub fn kernel_power(&self) -> &[f64] {
        &self.kernel_power
    }

    /// `H = Σ_l conj(F(p_l))·F(p_l)` per bin.
    pub fn grad_power(&self) -> &[f64] {
        &self.grad_power
    }

    pub(crate) fn check(&self, f: &RealField, what: &str) -> Result<()> {
        if f.dims() == self.dims() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what} is {}x{}, plan is {}x{}",
                f.height(),
                f.width(),
                self.height,
                self.width
            )))
        }
    }

    /// `D = conj(F(k))·F(y)`.
    pub fn data_spectrum(&self, y: &Image) -> Result<FrequencyField> {
        self.check(y, "observation")?;
        fft2(y)?.zip_map(&self.kernel_otf, |fy, fk| fk.conj() * fy)
    }

    /// `E = Σ_l conj(F(p_l))·F(z_l)`.
    pub fn guide_spectrum(&self, zh: &GradientField, zw: &GradientField) -> Result<FrequencyField> {
        self.check(zh, "horizontal guide")?;
        self.check(zw, "vertical guide")?;
        let fh = fft2(zh)?;
        let fw = fft2(zw)?;
        let data = fh
            .data()
            .iter()
            .zip(fw.data())
            .zip(self.grad_h_otf.data().iter().zip(self.grad_w_otf.data()))
            .map(|((&a, &b), (&ph, &pw))| ph.conj() * a + pw.conj() * b)
            .collect();
        FrequencyField::new(self.height, self.width, data)
    }

    /// Solves for `x` from precomputed `D` and `E` spectra.
    pub fn solve(&self, data: &FrequencyField, guide: Option<&FrequencyField>, gamma: f64) -> Result<Image> {
        check_gamma(gamma)?;
        let bins = self.height * self.width;
        let mut out = Vec::with_capacity(bins);
        for n in 0..bins {
            let num = match guide {
                Some(e) => data.data()[n] * gamma + e.data()[n],
                None => data.data()[n] * gamma,
            };
            out.push(num / (gamma * self.kernel_power[n] + self.grad_power[n] + EPSILON));
        }
        ifft2(&FrequencyField::new(self.height, self.width, out)?)
    }

    /// `γ·G + H + ε` per bin.
    pub fn denominator(&self, gamma: f64) -> Vec<f64> {
        self.kernel_power
            .iter()
            .zip(&self.grad_power)
            .map(|(g, h)| gamma * g + h + EPSILON)
            .collect()
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("gamma {gamma} must be positive and finite")))
    }
}

/// One deconvolution module: the exact minimizer for guides `z_h, z_w`.
pub fn deconv_step(
    y: &Image,
    plan: &DeconvPlan,
    zh: &GradientField,
    zw: &GradientField,
    gamma: f64,
) -> Result<Image> {
    check_gamma(gamma)?;
    let d = plan.data_spectrum(y)?;
    let e = plan.guide_spectrum(zh, zw)?;
    plan.solve(&d, Some(&e), gamma)
}

/// The first deconvolution, with zero guides (a Tikhonov gradient prior).
pub fn initial_deconv(y: &Image, plan: &DeconvPlan, gamma0: f64) -> Result<Image> {
    check_gamma(gamma0)?;
    plan.solve(&plan.data_spectrum(y)?, None, gamma0)
}

/// Evaluates `γ‖y − k ⊛ x‖² + Σ_l ‖z_l − p_l ⊛ x‖²` through the plan's OTFs.
pub fn objective(
    x: &Image,
    y: &Image,
    plan: &DeconvPlan,
    zh: &GradientField,
    zw: &GradientField,
    gamma: f64,
) -> Result<f64> {
    let fx = fft2(x)?;
    let kx = ifft2(&fx.mul(plan.kernel_otf())?)?;
    let (gh, gw) = grad_extract(x);
    let data: f64 = kx.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let prior: f64 = gh
        .data()
        .iter()
        .zip(zh.data())
        .chain(gw.data().iter().zip(zw.data()))
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(gamma * data + prior)
}
