//! Projection geometries: 2D parallel beams and 3D cone beams.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ray::{trace_ray, trace_segment};
use crate::error::{invalid, Result};
use crate::grid::{Grid, Point};
use crate::linalg::CsrMatrix;

/// Sparse ray-by-cell matrix of intersection lengths for one geometry (or a
/// stack of them).
pub type ProjectionMatrix = CsrMatrix;

const OFFSET_SLACK: f64 = 1e-12;

/// A 2D parallel-beam source/receiver pair.
///
/// `angle` orients the detector line, which runs along `(cos angle, sin angle)`;
/// the rays travel perpendicular to it. `offset` is the signed distance from
/// the center of the domain to the median ray, measured along the detector
/// line, and `width` is the lateral extent of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelBeam {
    pub angle: f64,
    pub offset: f64,
    pub width: f64,
}

impl ParallelBeam {
    pub fn new(angle: f64, offset: f64, width: f64) -> Result<Self> {
        let p = Self { angle, offset, width };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width <= 1.0) {
            return invalid(format!("beam width must lie in (0, 1], got {}", self.width));
        }
        if !self.angle.is_finite() {
            return invalid("beam angle must be finite");
        }
        let bound = 0.5 * (1.0 - self.width);
        if !(self.offset.abs() <= bound + OFFSET_SLACK) {
            return invalid(format!(
                "offset {} outside the admissible interval [{}, {}]",
                self.offset, -bound, bound
            ));
        }
        Ok(())
    }

    /// Rays for a beam of this width when a full-width pair has
    /// `detectors_full` detectors: `round(w (detectors_full - 1)) + 1`, ties
    /// to even (51 detectors give 13 rays at w = 1/4 and 26 at w = 1/2).
    pub fn ray_count(&self, detectors_full: usize) -> usize {
        (self.width * (detectors_full as f64 - 1.0)).round_ties_even() as usize + 1
    }

    /// Lines `(point, direction)` of the individual rays, ordered along the
    /// detector line. Each ray passes through the midpoint of its detector cell.
    pub fn rays(&self, detectors_full: usize) -> Vec<(Point, Point)> {
        let m = self.ray_count(detectors_full);
        let (s, c) = self.angle.sin_cos();
        let lateral = [c, s, 0.0];
        let dir = [-s, c, 0.0];
        let step = self.width / m as f64;
        (0..m)
            .map(|i| {
                let t = self.offset - 0.5 * self.width + (i as f64 + 0.5) * step;
                ([0.5 + t * lateral[0], 0.5 + t * lateral[1], 0.0], dir)
            })
            .collect()
    }
}

pub fn assemble_parallel(grid: &Grid, p: &ParallelBeam, detectors_full: usize) -> Result<ProjectionMatrix> {
    if grid.dim() != 2 {
        return invalid("parallel-beam geometries need a 2D grid");
    }
    if detectors_full < 2 {
        return invalid("a full-width pair needs at least two detectors");
    }
    p.validate()?;
    let mut m = CsrMatrix::empty(grid.len());
    for (origin, dir) in p.rays(detectors_full) {
        m.push_row(trace_ray(grid, &origin, &dir)?)?;
    }
    Ok(m)
}

/// Which part of the cone-beam detector is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aperture {
    Full,
    /// Quadrant `q`: bit 0 picks the upper polar half, bit 1 the upper
    /// azimuthal half.
    Quadrant(u8),
}

/// A 3D cone-beam geometry.
///
/// The detector spans the polar/azimuthal box `[θ-δ, θ+δ] × [φ-δ, φ+δ]` seen
/// from the source, gridded into `detectors × detectors` cells. Polar angle 0
/// is parallel to the xy-plane. The source sits at distance `distance` from
/// the cube center, on the opposite side of the detector, so the central
/// direction passes through `(0.5, 0.5, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeBeam {
    pub theta: f64,
    pub phi: f64,
    pub aperture: Aperture,
    pub delta: f64,
    pub distance: f64,
    pub detectors: usize,
}

pub fn spherical_direction(theta: f64, phi: f64) -> Point {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [ct * cp, ct * sp, st]
}

impl ConeBeam {
    pub fn source(&self) -> Point {
        let w = spherical_direction(self.theta, self.phi);
        [0.5 - self.distance * w[0], 0.5 - self.distance * w[1], 0.5 - self.distance * w[2]]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < PI / 2.0) {
            return invalid(format!("opening half-angle must lie in (0, π/2), got {}", self.delta));
        }
        if self.detectors == 0 {
            return invalid("detector needs at least one cell per edge");
        }
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return invalid("cone angles must be finite");
        }
        if let Aperture::Quadrant(q) = self.aperture {
            if q > 3 {
                return invalid(format!("quadrant index {q} out of range"));
            }
            if self.detectors % 2 != 0 {
                return invalid("quadrant apertures need an even detector count");
            }
        }
        let s = self.source();
        if s.iter().all(|c| (0.0..=1.0).contains(c)) {
            return invalid("the source must lie outside the unit cube");
        }
        Ok(())
    }

    pub fn ray_count(&self) -> usize {
        match self.aperture {
            Aperture::Full => self.detectors * self.detectors,
            Aperture::Quadrant(_) => (self.detectors / 2) * (self.detectors / 2),
        }
    }

    /// Unit directions from the source, polar index outermost.
    pub fn directions(&self) -> Vec<Point> {
        let m = self.detectors;
        let (pr, ar) = match self.aperture {
            Aperture::Full => (0..m, 0..m),
            Aperture::Quadrant(q) => {
                let half = m / 2;
                let p0 = if q & 1 == 1 { half } else { 0 };
                let a0 = if q & 2 == 2 { half } else { 0 };
                (p0..p0 + half, a0..a0 + half)
            }
        };
        let step = 2.0 * self.delta / m as f64;
        let mut out = Vec::with_capacity(self.ray_count());
        for i in pr {
            let theta = self.theta - self.delta + (i as f64 + 0.5) * step;
            for j in ar.clone() {
                let phi = self.phi - self.delta + (j as f64 + 0.5) * step;
                out.push(spherical_direction(theta, phi));
            }
        }
        out
    }
}

pub fn assemble_cone(grid: &Grid, p: &ConeBeam) -> Result<ProjectionMatrix> {
    if grid.dim() != 3 {
        return invalid("cone-beam geometries need a 3D grid");
    }
    p.validate()?;
    let s = p.source();
    let mut m = CsrMatrix::empty(grid.len());
    for dir in p.directions() {
        m.push_row(trace_segment(grid, &s, &dir, 0.0, f64::INFINITY)?)?;
    }
    Ok(m)
}

/// One candidate projection geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Parallel(ParallelBeam),
    Cone(ConeBeam),
}

impl Design {
    /// Short human-readable description used in CSV output.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        match self {
            Design::Parallel(p) => vec![
                ("angle", format!("{}", p.angle)),
                ("offset", format!("{}", p.offset)),
                ("width", format!("{}", p.width)),
            ],
            Design::Cone(c) => vec![
                ("theta", format!("{}", c.theta)),
                ("phi", format!("{}", c.phi)),
                (
                    "aperture",
                    match c.aperture {
                        Aperture::Full => "full".to_string(),
                        Aperture::Quadrant(q) => format!("q{q}"),
                    },
                ),
            ],
        }
    }
}
