mod common;

use common::oracle::*;
use idcv_core::deconv::{deconv_step, grad_extract, psf2otf, DeconvPlan};
use idcv_core::field::{circular_convolve, fft2, ifft2, RealField};
use idcv_core::hyper::{grad_wrt_gamma, HyperGradientWorkspace};
use idcv_core::rng::seeded;
use idcv_core::BlurKernel;
use rand::Rng as _;

#[test]
fn deconv_matches_dense_normal_equations() {
    let mut r = seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (h, w) = (r.random_range(4..=6), r.random_range(4..=6));
        let k = random_kernel(&mut r, h.min(w).min(5));
        let y = random_field(&mut r, h, w, 0.0, 1.0);
        let zh = random_field(&mut r, h, w, -0.3, 0.3);
        let zw = random_field(&mut r, h, w, -0.3, 0.3);
        let gamma = 10f64.powf(r.random_range(-1.0..3.0));
        let plan = DeconvPlan::new(&k, h, w).unwrap();
        let x = deconv_step(&y, &plan, &zh, &zw, gamma).unwrap();
        worst = worst.max(x.max_abs_diff(&dense_deconv(&y, &k, &zh, &zw, gamma)));
    }
    assert!(worst <= 1e-8, "max error {worst:e}");
}

#[test]
fn convolution_theorem_holds() {
    let mut r = seeded(202);
    for _ in 0..50 {
        let (h, w) = (r.random_range(3..=8), r.random_range(3..=8));
        let a = random_field(&mut r, h, w, -1.0, 1.0);
        let b = random_field(&mut r, h, w, -1.0, 1.0);
        let via_fft = ifft2(&fft2(&a).unwrap().mul(&fft2(&b).unwrap()).unwrap()).unwrap();
        let direct = circular_convolve(&a, &b).unwrap();
        assert!(via_fft.max_abs_diff(&direct) <= 1e-10);
    }
}

#[test]
fn fft_matches_naive_dft() {
    let mut r = seeded(203);
    for _ in 0..50 {
        let (h, w) = (r.random_range(2..=7), r.random_range(2..=7));
        let f = random_field(&mut r, h, w, -1.0, 1.0);
        let (re, im) = naive_dft(&f);
        let s = fft2(&f).unwrap();
        for (n, c) in s.data().iter().enumerate() {
            assert!((c.re - re.data()[n]).abs() <= 1e-10 && (c.im - im.data()[n]).abs() <= 1e-10);
        }
    }
}

#[test]
fn psf2otf_matches_tap_phases() {
    let mut r = seeded(204);
    for _ in 0..50 {
        let (h, w) = (r.random_range(5..=9), r.random_range(5..=9));
        let k = random_kernel(&mut r, h.min(w));
        let (re, im) = naive_otf(&k, h, w);
        let otf = psf2otf(&k, h, w).unwrap();
        for (n, c) in otf.data().iter().enumerate() {
            assert!((c.re - re.data()[n]).abs() <= 1e-10 && (c.im - im.data()[n]).abs() <= 1e-10);
        }
        // Multiplying by the OTF is the same blur as the spatial matrix.
        let x = random_field(&mut r, h, w, 0.0, 1.0);
        let blurred = ifft2(&fft2(&x).unwrap().mul(&otf).unwrap()).unwrap();
        let m = blur_matrix(&k, h, w) * nalgebra::DVector::from_row_slice(x.data());
        let expected = RealField::new(h, w, m.iter().copied().collect()).unwrap();
        assert!(blurred.max_abs_diff(&expected) <= 1e-10);
    }
}

#[test]
fn identity_kernel_with_observed_gradients_is_exact() {
    let mut r = seeded(305);
    let k = BlurKernel::identity();
    for _ in 0..20 {
        let (h, w) = (r.random_range(4..=12), r.random_range(4..=12));
        let y = random_field(&mut r, h, w, 0.0, 1.0);
        let (zh, zw) = grad_extract(&y);
        let plan = DeconvPlan::new(&k, h, w).unwrap();
        let delta = random_field(&mut r, h, w, -1.0, 1.0);
        let d = plan.data_spectrum(&y).unwrap();
        let e = plan.guide_spectrum(&zh, &zw).unwrap();
        let ws = HyperGradientWorkspace::new(&plan, &d, Some(&e), &delta).unwrap();
        for gamma in [1.0, 37.0, 1e4, 1e6] {
            let x = deconv_step(&y, &plan, &zh, &zw, gamma).unwrap();
            assert!(x.max_abs_diff(&y) <= 1e-12, "gamma {gamma}");
            assert!(grad_wrt_gamma(&ws, gamma).abs() <= 1e-12, "gamma {gamma}");
        }
    }
}
