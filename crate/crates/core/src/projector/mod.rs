//! Forward model: candidate geometries, ray tracing and projection matrices.

mod geometry;
mod ray;
mod space;

pub use geometry::{
    assemble_cone, assemble_parallel, spherical_direction, Aperture, ConeBeam, Design, ParallelBeam,
    ProjectionMatrix,
};
pub use ray::{trace_ray, trace_segment};
pub use space::{assemble_all, DesignSpaceConfig};
