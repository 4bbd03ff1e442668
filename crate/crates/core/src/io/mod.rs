//! File formats: PGM images, text kernels, weight archives, manifests.

pub mod archive;
pub mod kernel;
pub mod manifest;
pub mod pgm;

pub use archive::{decode_archive, encode_archive, load_weights, save_weights, StageWeights, WeightArchive};
pub use kernel::{format_kernel, parse_kernel, read_kernel, write_kernel};
pub use manifest::{parse_manifest, read_manifest, write_manifest, DatasetEntry, DatasetManifest};
pub use pgm::{decode_pgm, encode_pgm, quantize16, read_image, write_image, BitDepth};
