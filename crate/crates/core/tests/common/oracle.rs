//! Slow, direct reference implementations.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use idcv_core::blur::BlurKernel;
use idcv_core::field::RealField;
use idcv_core::rng::Rng;
use rand::Rng as _;

pub fn random_field(r: &mut Rng, h: usize, w: usize, lo: f64, hi: f64) -> RealField {
    RealField::from_fn(h, w, |_, _| r.random_range(lo..hi))
}

/// Random kernel with odd sides up to `max` and positive taps.
pub fn random_kernel(r: &mut Rng, max: usize) -> BlurKernel {
    let side = |r: &mut Rng| 2 * r.random_range(0..=(max - 1) / 2) + 1;
    let (kh, kw) = (side(r), side(r));
    let taps: Vec<f64> = (0..kh * kw).map(|_| r.random_range(0.05..1.0)).collect();
    BlurKernel::normalized(kh, kw, taps).unwrap()
}

fn flat(f: &RealField) -> DVector<f64> {
    DVector::from_row_slice(f.data())
}

/// `(k ⊛ x)[i,j] = Σ k[a,b]·x[i − a + ci, j − b + cj]`, indices mod the size.
pub fn blur_matrix(k: &BlurKernel, h: usize, w: usize) -> DMatrix<f64> {
    let (ci, cj) = k.center();
    let mut m = DMatrix::zeros(h * w, h * w);
    for i in 0..h {
        for j in 0..w {
            for a in 0..k.height() {
                for b in 0..k.width() {
                    let p = (i + ci + h * k.height() - a) % h;
                    let q = (j + cj + w * k.width() - b) % w;
                    m[(i * w + j, p * w + q)] += k.tap(a, b);
                }
            }
        }
    }
    m
}

/// Forward differences `x[i, j+1] − x[i, j]` and `x[i+1, j] − x[i, j]`.
pub fn difference_matrices(h: usize, w: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut dh = DMatrix::zeros(h * w, h * w);
    let mut dw = DMatrix::zeros(h * w, h * w);
    for i in 0..h {
        for j in 0..w {
            let r = i * w + j;
            dh[(r, r)] -= 1.0;
            dh[(r, i * w + (j + 1) % w)] += 1.0;
            dw[(r, r)] -= 1.0;
            dw[(r, ((i + 1) % h) * w + j)] += 1.0;
        }
    }
    (dh, dw)
}

/// Minimizer of `γ‖k⊛x − y‖² + ‖D_h x − z_h‖² + ‖D_w x − z_w‖²` from its
/// normal equations.
pub fn dense_deconv(y: &RealField, k: &BlurKernel, zh: &RealField, zw: &RealField, gamma: f64) -> RealField {
    let (h, w) = y.dims();
    let kmat = blur_matrix(k, h, w);
    let (dh, dw) = difference_matrices(h, w);
    let a = gamma * kmat.transpose() * &kmat + dh.transpose() * &dh + dw.transpose() * &dw;
    let b = gamma * kmat.transpose() * flat(y) + dh.transpose() * flat(zh) + dw.transpose() * flat(zw);
    let x = a.cholesky().expect("normal matrix is positive definite").solve(&b);
    RealField::new(h, w, x.iter().copied().collect()).unwrap()
}

/// `Σ f[p,q]·exp(−2πi(pu/H + qv/W))` as `(re, im)` planes.
pub fn naive_dft(f: &RealField) -> (RealField, RealField) {
    let (h, w) = f.dims();
    let tau = std::f64::consts::TAU;
    let mut re = RealField::zeros(h, w);
    let mut im = RealField::zeros(h, w);
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for p in 0..h {
                for q in 0..w {
                    let ph = -tau * ((p * u) as f64 / h as f64 + (q * v) as f64 / w as f64);
                    sr += f[(p, q)] * ph.cos();
                    si += f[(p, q)] * ph.sin();
                }
            }
            re[(u, v)] = sr;
            im[(u, v)] = si;
        }
    }
    (re, im)
}

/// DFT of the kernel with its center tap placed at the origin, built from
/// the phase of every tap's offset rather than from an embedded field.
pub fn naive_otf(k: &BlurKernel, h: usize, w: usize) -> (RealField, RealField) {
    let (ci, cj) = k.center();
    let tau = std::f64::consts::TAU;
    let mut re = RealField::zeros(h, w);
    let mut im = RealField::zeros(h, w);
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for a in 0..k.height() {
                for b in 0..k.width() {
                    let da = a as f64 - ci as f64;
                    let db = b as f64 - cj as f64;
                    let ph = -tau * (da * u as f64 / h as f64 + db * v as f64 / w as f64);
                    sr += k.tap(a, b) * ph.cos();
                    si += k.tap(a, b) * ph.sin();
                }
            }
            re[(u, v)] = sr;
            im[(u, v)] = si;
        }
    }
    (re, im)
}
