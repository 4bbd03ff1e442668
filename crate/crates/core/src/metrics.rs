//! PSNR and SSIM on `[0, 1]` images.

use std::fmt::Write as _;

use crate::error::{shape_err, Error, Result};
use crate::field::Image;

/// Value reported for (near-)identical images.
pub const PSNR_CAP: f64 = 100.0;

/// MSE below which [`psnr`] returns [`PSNR_CAP`].
pub const PSNR_MSE_FLOOR: f64 = 1e-10;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_dims(b, "mse")?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10·log10(1 / MSE)` for peak value 1, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m < PSNR_MSE_FLOOR {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW * SSIM_WINDOW)
        .map(|n| {
            let (i, j) = ((n / SSIM_WINDOW) as f64 - c, (n % SSIM_WINDOW) as f64 - c);
            (-(i * i + j * j) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean structural similarity over all fully-contained 11×11 Gaussian
/// windows (σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_dims(b, "ssim")?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return shape_err(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - SSIM_WINDOW {
        for j in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut eaa, mut ebb, mut eab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for di in 0..SSIM_WINDOW {
                for dj in 0..SSIM_WINDOW {
                    let g = win[di * SSIM_WINDOW + dj];
                    let (x, y) = (a[(i + di, j + dj)], b[(i + di, j + dj)]);
                    ma += g * x;
                    mb += g * y;
                    eaa += g * x * x;
                    ebb += g * y * y;
                    eab += g * x * y;
                }
            }
            let va = eaa - ma * ma;
            let vb = ebb - mb * mb;
            let cov = eab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-image PSNR/SSIM rows plus their means.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, reference: &Image, test: &Image) -> Result<()> {
        self.rows.push(MetricRow { name: name.into(), psnr: psnr(test, reference)?, ssim: ssim(test, reference)? });
        Ok(())
    }

    pub fn mean_psnr(&self) -> f64 {
        self.rows.iter().map(|r| r.psnr).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.rows.iter().map(|r| r.ssim).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// Tab-separated: a header, one row per image, then a `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tpsnr_db\tssim\n");
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{}", r.name, r.psnr, r.ssim).unwrap();
        }
        writeln!(out, "mean\t{}\t{}", self.mean_psnr(), self.mean_ssim()).unwrap();
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("name\tpsnr_db\tssim") {
            return Err(Error::Format("missing metric report header".into()));
        }
        let mut rows = Vec::new();
        let mut saw_mean = false;
        for line in lines.filter(|l| !l.is_empty()) {
            if saw_mean {
                return Err(Error::Format("rows after the mean row".into()));
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!("expected 3 fields, got {}: {line:?}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
            let (p, s) = (num(fields[1])?, num(fields[2])?);
            if fields[0] == "mean" {
                saw_mean = true;
            } else {
                rows.push(MetricRow { name: fields[0].to_string(), psnr: p, ssim: s });
            }
        }
        if !saw_mean {
            return Err(Error::Format("missing mean row".into()));
        }
        Ok(Self { rows })
    }
}
