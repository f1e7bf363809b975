//! File formats: PGM previews with a scaling sidecar, raw f64 images with a
//! JSON header, and a triplet text format for sparse matrices.

mod pgm;
mod raw;
mod triplet;

pub use pgm::{parse_pgm, parse_scaling, read_pgm_image, write_pgm, PgmImage, Scaling};
pub use raw::{parse_raw, write_raw, RawHeader};
pub use triplet::{parse_triplets, write_triplets};
