//! Binary archive of per-stage denoiser weights and deconvolution weights.
//!
//! All integers are `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! "IDCV"                      magic, 4 bytes
//! version                     u32, currently 1
//! stages T                    u32
//! gamma0                      f64, initial deconvolution
//! T times:
//!   layer count L             u32 (6)
//!   L times:                  layer header
//!     name length, name       u32, ASCII bytes
//!     out, in, kh, kw         u32 × 4
//!     stride, pad             u32 × 2
//!   L times: weights          f64 × out·in·kh·kw, order [out][in][kh][kw]
//!   L times: biases           f64 × out
//!   gamma                     f64, this stage's deconvolution
//! ```
//!
//! Trailing bytes are an error.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fcnn::{ConvLayer, DenoiserWeights, ARCHITECTURE};

pub const MAGIC: &[u8; 4] = b"IDCV";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct StageWeights {
    pub denoiser: DenoiserWeights,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightArchive {
    pub gamma0: f64,
    pub stages: Vec<StageWeights>,
}

impl WeightArchive {
    pub fn validate(&self) -> Result<()> {
        let gammas = std::iter::once(self.gamma0).chain(self.stages.iter().map(|s| s.gamma));
        for g in gammas {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Param(format!("archive gamma {g} must be positive")));
            }
        }
        for s in &self.stages {
            s.denoiser.check_architecture()?;
        }
        Ok(())
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.gamma).collect()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_archive(archive: &WeightArchive) -> Result<Vec<u8>> {
    archive.validate()?;
    let params: usize = archive.stages.iter().map(|s| s.denoiser.parameter_count()).sum();
    let mut out = Vec::with_capacity(16 + 8 * (params + archive.stages.len()) + 256 * archive.stages.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, archive.stages.len() as u32);
    put_f64(&mut out, archive.gamma0);
    for stage in &archive.stages {
        let layers = stage.denoiser.layers();
        put_u32(&mut out, layers.len() as u32);
        for l in layers {
            put_u32(&mut out, l.name.len() as u32);
            out.extend_from_slice(l.name.as_bytes());
            for v in [l.out_channels, l.in_channels, l.kernel_h, l.kernel_w, 1, l.pad] {
                put_u32(&mut out, v as u32);
            }
        }
        for l in layers {
            l.weights.iter().for_each(|&w| put_f64(&mut out, w));
        }
        for l in layers {
            l.bias.iter().for_each(|&b| put_f64(&mut out, b));
        }
        put_f64(&mut out, stage.gamma);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Length(format!(
                "archive truncated at byte {} (needed {n} more, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Length("layer size overflows".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<WeightArchive> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("file too short for archive magic".into()))? != MAGIC {
        return Err(Error::Format("not a weight archive (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let stages = r.u32()? as usize;
    let gamma0 = r.f64()?;
    let mut out = Vec::new();
    for t in 0..stages {
        let count = r.u32()? as usize;
        if count != ARCHITECTURE.len() {
            return Err(Error::Architecture(format!("stage {t}: {count} layers, expected {}", ARCHITECTURE.len())));
        }
        let mut layers = Vec::with_capacity(count);
        for spec in &ARCHITECTURE {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("layer name is not UTF-8".into()))?;
            let mut dims = [0usize; 6];
            for d in dims.iter_mut() {
                *d = r.u32()? as usize;
            }
            let [out_ch, in_ch, kh, kw, stride, pad] = dims;
            if name != spec.name
                || out_ch != spec.out_channels
                || in_ch != spec.in_channels
                || kh != spec.kernel
                || kw != spec.kernel
                || stride != 1
                || pad != spec.pad
            {
                return Err(Error::Architecture(format!(
                    "stage {t} layer {name}: {kh}x{kw}x{in_ch}x{out_ch} stride {stride} pad {pad}, expected {} {}x{}x{}x{} stride 1 pad {}",
                    spec.name, spec.kernel, spec.kernel, spec.in_channels, spec.out_channels, spec.pad
                )));
            }
            layers.push(ConvLayer {
                name,
                out_channels: out_ch,
                in_channels: in_ch,
                kernel_h: kh,
                kernel_w: kw,
                pad,
                weights: Vec::new(),
                bias: Vec::new(),
            });
        }
        for l in layers.iter_mut() {
            l.weights = r.f64s(l.out_channels * l.taps())?;
        }
        for l in layers.iter_mut() {
            l.bias = r.f64s(l.out_channels)?;
        }
        let gamma = r.f64()?;
        out.push(StageWeights { denoiser: DenoiserWeights::from_layers(layers)?, gamma });
    }
    if r.pos != bytes.len() {
        return Err(Error::Length(format!("{} trailing bytes after archive", bytes.len() - r.pos)));
    }
    let archive = WeightArchive { gamma0, stages: out };
    archive.validate()?;
    Ok(archive)
}

pub fn save_weights(path: impl AsRef<Path>, archive: &WeightArchive) -> Result<()> {
    fs::write(path, encode_archive(archive)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightArchive> {
    decode_archive(&fs::read(path)?)
}
