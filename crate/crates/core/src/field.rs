//! Dense 2-D real and complex fields and the 2-D DFT.
//!
//! Spectra use the unshifted layout: bin `[0, 0]` is DC and bin `[u, v]`
//! holds frequency `(u, v)` modulo the field size. The forward transform is
//! unnormalized; the inverse carries the `1/(HW)` factor.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Index, IndexMut};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{shape_err, Error, Result};

/// Relative tolerance used by [`ifft2`] when checking conjugate symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// A row-major real field of `height × width` samples.
#[derive(Clone, PartialEq)]
pub struct RealField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// An intensity image, nominally in `[0, 1]`.
pub type Image = RealField;

/// One orientation of a finite-difference gradient.
pub type GradientField = RealField;

impl RealField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err(format!("empty field {height}x{width}"));
        }
        if data.len() != height * width {
            return Err(Error::Length(format!(
                "{} samples for a {height}x{width} field",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field data"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty field");
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "empty field");
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self { height, width, data }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            shape_err(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            ))
        }
    }

    pub fn transpose(&self) -> Self {
        let (h, w) = self.dims();
        let mut data = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                data[j * h + i] = self.data[i * w + j];
            }
        }
        Self { height: w, width: h, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise `f(self, other)`; dimensions must agree.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_dims(other, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { height: self.height, width: self.width, data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert!(self.same_dims(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert!(self.same_dims(other));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert!(self.same_dims(other));
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// Copy of the `rows × cols` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || top + rows > self.height || left + cols > self.width {
            return shape_err(format!(
                "crop {rows}x{cols} at ({top},{left}) outside {}x{}",
                self.height, self.width
            ));
        }
        Ok(Self::from_fn(rows, cols, |i, j| self[(top + i, left + j)]))
    }
}

impl Index<(usize, usize)> for RealField {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.width + j]
    }
}

impl IndexMut<(usize, usize)> for RealField {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.width + j]
    }
}

impl fmt::Debug for RealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealField({}x{})", self.height, self.width)?;
        if self.len() <= 64 {
            for i in 0..self.height {
                write!(f, "\n ")?;
                for j in 0..self.width {
                    write!(f, " {:+.6}", self[(i, j)])?;
                }
            }
        }
        Ok(())
    }
}

/// A complex spectrum of `height × width` bins, DC at `[0, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyField {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl FrequencyField {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err(format!("empty spectrum {height}x{width}"));
        }
        if data.len() != height * width {
            return Err(Error::Length(format!(
                "{} bins for a {height}x{width} spectrum",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("spectrum"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "empty spectrum");
        Self { height, width, data: vec![Complex64::new(0.0, 0.0); height * width] }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Elementwise `f(self, other)`.
    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.dims() != other.dims() {
            return shape_err(format!(
                "spectra {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { height: self.height, width: self.width, data })
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|&c| f(c)).collect() }
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Largest `|F[u,v] − conj(F[−u,−v])|` over all bins.
    pub fn symmetry_defect(&self) -> f64 {
        let (h, w) = self.dims();
        let mut worst = 0.0f64;
        for u in 0..h {
            let mu = (h - u) % h;
            for v in 0..w {
                let mv = (w - v) % w;
                let a = self.data[u * w + v];
                let b = self.data[mu * w + mv].conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.norm()))
    }
}

impl Index<(usize, usize)> for FrequencyField {
    type Output = Complex64;

    #[inline]
    fn index(&self, (u, v): (usize, usize)) -> &Complex64 {
        &self.data[u * self.width + v]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

/// Unnormalized separable 2-D transform, rows first, then columns.
fn transform_2d(h: usize, w: usize, data: &mut [Complex64], dir: Direction) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row_fft, col_fft) = match dir {
            Direction::Forward => (planner.plan_fft_forward(w), planner.plan_fft_forward(h)),
            Direction::Inverse => (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h)),
        };
        // Rows are contiguous, so one batched call covers all of them.
        row_fft.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = data[i * w + j];
            }
            col_fft.process(&mut column);
            for i in 0..h {
                data[i * w + j] = column[i];
            }
        }
    });
}

/// Forward 2-D DFT, `F[u,v] = Σ f[i,j]·exp(−2πi(ui/H + vj/W))`.
pub fn fft2(f: &RealField) -> Result<FrequencyField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("fft2 input"));
    }
    let (h, w) = f.dims();
    let mut data: Vec<Complex64> = f.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(h, w, &mut data, Direction::Forward);
    Ok(FrequencyField { height: h, width: w, data })
}

/// Inverse 2-D DFT of a conjugate-symmetric spectrum.
///
/// The symmetry check is relative to `max(1, max|F|)`; after it passes the
/// imaginary residue of the transform is dropped.
pub fn ifft2(spectrum: &FrequencyField) -> Result<RealField> {
    let scale = spectrum.max_norm().max(1.0);
    if !scale.is_finite() {
        return Err(Error::NonFinite("ifft2 input"));
    }
    let defect = spectrum.symmetry_defect();
    if defect > SYMMETRY_TOLERANCE * scale {
        return Err(Error::Asymmetric(defect));
    }
    Ok(ifft2_real_part(spectrum))
}

/// Inverse transform keeping the real part, with no symmetry check.
pub(crate) fn ifft2_real_part(spectrum: &FrequencyField) -> RealField {
    let (h, w) = spectrum.dims();
    let mut data = spectrum.data.clone();
    transform_2d(h, w, &mut data, Direction::Inverse);
    let norm = 1.0 / (h * w) as f64;
    RealField { height: h, width: w, data: data.iter().map(|c| c.re * norm).collect() }
}

/// Periodic convolution evaluated directly in the spatial domain.
///
/// `(a ⊛ b)[i,j] = Σ_{p,q} a[p,q]·b[(i−p) mod H, (j−q) mod W]`. This is the
/// O((HW)²) reference that the FFT paths are checked against.
pub fn circular_convolve(a: &RealField, b: &RealField) -> Result<RealField> {
    a.check_dims(b, "circular_convolve")?;
    let (h, w) = a.dims();
    let mut out = RealField::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for p in 0..h {
                let bi = (i + h - p) % h;
                for q in 0..w {
                    let bj = (j + w - q) % w;
                    acc += a[(p, q)] * b[(bi, bj)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Circular shift: `out[(i + di) mod H, (j + dj) mod W] = f[i, j]`.
pub fn circshift(f: &RealField, di: isize, dj: isize) -> RealField {
    let (h, w) = f.dims();
    let mut out = RealField::zeros(h, w);
    for i in 0..h {
        let ti = (i as isize + di).rem_euclid(h as isize) as usize;
        for j in 0..w {
            let tj = (j as isize + dj).rem_euclid(w as isize) as usize;
            out[(ti, tj)] = f[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(h: usize, w: usize, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Textbook O(N²) DFT, the oracle for the FFT path.
    fn direct_dft(f: &RealField) -> Vec<Complex64> {
        let (h, w) = f.dims();
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let phase = -2.0 * PI * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                        acc += f[(i, j)] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_field_has_dc_only() {
        let c = 0.37;
        let spec = fft2(&RealField::filled(4, 4, c)).unwrap();
        assert!((spec[(0, 0)] - Complex64::new(16.0 * c, 0.0)).norm() < 1e-12);
        for u in 0..4 {
            for v in 0..4 {
                if (u, v) != (0, 0) {
                    assert!(spec[(u, v)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn round_trip_random_8x8() {
        let x = random_field(8, 8, 11);
        let back = ifft2(&fft2(&x).unwrap()).unwrap();
        assert!(x.max_abs_diff(&back) <= 1e-12);
    }

    #[test]
    fn shifted_delta_is_pure_phase() {
        let mut d = RealField::zeros(6, 5);
        d[(2, 3)] = 1.0;
        let spec = fft2(&d).unwrap();
        for c in spec.data() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(RealField::new(1, 2, vec![0.0, f64::NAN]).is_err());
        let mut x = RealField::zeros(2, 2);
        x.data_mut()[1] = f64::INFINITY;
        assert!(matches!(fft2(&x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let out = ifft2(&FrequencyField::zeros(5, 7)).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let mut spec = fft2(&random_field(8, 8, 3)).unwrap();
        spec.data_mut()[1 * 8 + 2] += Complex64::new(0.0, 0.5);
        assert!(matches!(ifft2(&spec), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn matches_direct_dft_on_small_sizes() {
        for (h, w) in [(1, 1), (1, 7), (3, 5), (6, 6), (7, 4), (11, 13), (16, 9), (15, 16)] {
            let x = random_field(h, w, (h * 31 + w) as u64);
            let fast = fft2(&x).unwrap();
            let slow = direct_dft(&x);
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()), "{h}x{w}");
            }
        }
    }

    #[test]
    fn convolution_with_centered_delta_is_identity() {
        let a = random_field(6, 6, 5);
        let mut delta = RealField::zeros(6, 6);
        delta[(0, 0)] = 1.0;
        assert!(circular_convolve(&a, &delta).unwrap().max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn circular_convolve_matches_fft_product() {
        let a = random_field(6, 6, 21);
        let b = random_field(6, 6, 22);
        let direct = circular_convolve(&a, &b).unwrap();
        let via_fft = ifft2(&fft2(&a).unwrap().mul(&fft2(&b).unwrap()).unwrap()).unwrap();
        assert!(direct.max_abs_diff(&via_fft) <= 1e-10);
    }

    #[test]
    fn circular_convolve_commutes() {
        let a = random_field(5, 7, 1);
        let b = random_field(5, 7, 2);
        let ab = circular_convolve(&a, &b).unwrap();
        let ba = circular_convolve(&b, &a).unwrap();
        assert!(ab.max_abs_diff(&ba) < 1e-13);
    }

    #[test]
    fn circular_convolve_rejects_mismatch() {
        assert!(circular_convolve(&RealField::zeros(3, 3), &RealField::zeros(3, 4)).is_err());
    }

    #[test]
    fn crop_and_transpose() {
        let x = RealField::from_fn(3, 4, |i, j| (i * 10 + j) as f64);
        assert_eq!(x.transpose()[(3, 2)], 23.0);
        assert_eq!(x.crop(1, 2, 2, 2).unwrap().data(), &[12.0, 13.0, 22.0, 23.0]);
        assert!(x.crop(2, 2, 2, 2).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field_strategy() -> impl Strategy<Value = RealField> {
            (1usize..10, 1usize..10).prop_flat_map(|(h, w)| {
                proptest::collection::vec(-10.0f64..10.0, h * w)
                    .prop_map(move |d| RealField::new(h, w, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn parseval(x in field_strategy()) {
                let spec = fft2(&x).unwrap();
                let spatial: f64 = x.data().iter().map(|v| v * v).sum();
                let freq: f64 = spec.data().iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
                prop_assert!((spatial - freq).abs() <= 1e-10 * spatial.max(1e-300));
            }

            #[test]
            fn produced_spectra_are_conjugate_symmetric(x in field_strategy()) {
                let spec = fft2(&x).unwrap();
                prop_assert!(spec.symmetry_defect() <= 1e-12 * (1.0 + x.max_abs() * x.len() as f64));
                let back = ifft2(&spec).unwrap();
                prop_assert!(back.max_abs_diff(&x) <= 1e-12 * (1.0 + x.max_abs()));
            }

            #[test]
            fn linearity(x in field_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
                let y = random_field(x.height(), x.width(), seed);
                let lhs = fft2(&x.axpby(a, &y, b)).unwrap();
                let fx = fft2(&x).unwrap();
                let fy = fft2(&y).unwrap();
                let rhs = fx.zip_map(&fy, |p, q| p * a + q * b).unwrap();
                for (l, r) in lhs.data().iter().zip(rhs.data()) {
                    prop_assert!((l - r).norm() <= 1e-12 * (1.0 + r.norm()));
                }
            }

            #[test]
            fn convolution_theorem(seed in 0u64..10_000, h in 1usize..8, w in 1usize..8) {
                let a = random_field(h, w, seed);
                let b = random_field(h, w, seed ^ 0xdead);
                let lhs = fft2(&circular_convolve(&a, &b).unwrap()).unwrap();
                let rhs = fft2(&a).unwrap().mul(&fft2(&b).unwrap()).unwrap();
                let scale = rhs.data().iter().fold(0.0f64, |m, c| m.max(c.norm())).max(1.0);
                for (l, r) in lhs.data().iter().zip(rhs.data()) {
                    prop_assert!((l - r).norm() <= 1e-9 * scale);
                }
            }
        }
    }
}
