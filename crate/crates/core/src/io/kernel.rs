//! Plain-text kernels: `height width` followed by row-major taps, one row
//! per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::blur::BlurKernel;
use crate::error::{Error, Result};

/// Largest tap-sum deviation from one that is silently renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Negative taps down to this value are treated as rounding noise.
pub const NEGATIVE_TOLERANCE: f64 = -1e-12;

pub fn parse_kernel(text: &str) -> Result<BlurKernel> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<i64> {
        tokens
            .next()
            .ok_or_else(|| Error::Format(format!("kernel file missing {what}")))?
            .parse::<i64>()
            .map_err(|e| Error::Format(format!("kernel {what}: {e}")))
    };
    let (h, w) = (dim("height")?, dim("width")?);
    if h <= 0 || w <= 0 {
        return Err(Error::Kernel(format!("non-positive dimensions {h}x{w}")));
    }
    let (h, w) = (h as usize, w as usize);
    let taps: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("kernel tap {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if taps.len() != h * w {
        return Err(Error::Length(format!("{} taps for a {h}x{w} kernel", taps.len())));
    }
    if let Some(t) = taps.iter().find(|&&t| t < NEGATIVE_TOLERANCE) {
        return Err(Error::Kernel(format!("negative tap {t}")));
    }
    let sum: f64 = taps.iter().sum();
    if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
        return Err(Error::Kernel(format!("taps sum to {sum}, expected 1")));
    }
    if (sum - 1.0).abs() <= crate::blur::SUM_TOLERANCE {
        let clipped = taps.iter().map(|t| t.max(0.0)).collect();
        if let Ok(k) = BlurKernel::new(h, w, clipped) {
            return Ok(k);
        }
    }
    BlurKernel::normalized(h, w, taps)
}

/// Shortest round-trip decimal form of every tap.
pub fn format_kernel(k: &BlurKernel) -> String {
    let mut out = format!("{} {}\n", k.height(), k.width());
    for i in 0..k.height() {
        let row: Vec<String> = (0..k.width()).map(|j| format!("{}", k.tap(i, j))).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<BlurKernel> {
    parse_kernel(&fs::read_to_string(path)?)
}

pub fn write_kernel(path: impl AsRef<Path>, k: &BlurKernel) -> Result<()> {
    fs::write(path, format_kernel(k))?;
    Ok(())
}
