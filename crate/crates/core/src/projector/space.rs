//! Candidate sets for the exhaustive design search.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::geometry::{assemble_cone, assemble_parallel, Aperture, ConeBeam, Design, ParallelBeam, ProjectionMatrix};
use crate::error::{invalid, Result};
use crate::grid::Grid;

fn default_polar() -> Vec<f64> {
    vec![-PI / 4.0, 0.0, PI / 4.0]
}

/// Describes a design space. The 2D variant is a Cartesian grid of angles in
/// `[0, π)` and admissible offsets; the 3D variant is azimuths in `[0, 2π)`
/// times polar angles times apertures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignSpaceConfig {
    Parallel {
        width: f64,
        angles: usize,
        offsets: usize,
        detectors_full: usize,
    },
    Cone {
        delta: f64,
        distance: f64,
        detectors: usize,
        azimuths: usize,
        #[serde(default = "default_polar")]
        polar: Vec<f64>,
        /// `true`: four quarter-aperture geometries per direction.
        quadrants: bool,
    },
}

impl DesignSpaceConfig {
    pub fn parallel_default() -> Self {
        DesignSpaceConfig::Parallel { width: 0.25, angles: 60, offsets: 41, detectors_full: 51 }
    }

    pub fn cone_default() -> Self {
        DesignSpaceConfig::Cone {
            delta: 0.24,
            distance: 2.5,
            detectors: 20,
            azimuths: 60,
            polar: default_polar(),
            quadrants: true,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignSpaceConfig::Parallel { .. } => 2,
            DesignSpaceConfig::Cone { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DesignSpaceConfig::Parallel { width, angles, offsets, detectors_full } => {
                if *angles == 0 || *offsets == 0 {
                    return invalid("design space needs at least one angle and one offset");
                }
                if *detectors_full < 2 {
                    return invalid("a full-width pair needs at least two detectors");
                }
                ParallelBeam::new(0.0, 0.0, *width).map(|_| ())
            }
            DesignSpaceConfig::Cone { delta, distance, detectors, azimuths, polar, quadrants } => {
                if *azimuths == 0 || polar.is_empty() {
                    return invalid("design space needs at least one direction");
                }
                let aperture = if *quadrants { Aperture::Quadrant(0) } else { Aperture::Full };
                for &theta in polar {
                    ConeBeam {
                        theta,
                        phi: 0.0,
                        aperture,
                        delta: *delta,
                        distance: *distance,
                        detectors: *detectors,
                    }
                    .validate()?;
                }
                Ok(())
            }
        }
    }

    /// Ordered candidate list. 2D: angle-major, offsets inner. 3D: azimuth
    /// outermost, then polar angle, then quadrant.
    pub fn enumerate(&self) -> Vec<Design> {
        match self {
            DesignSpaceConfig::Parallel { width, angles, offsets, .. } => {
                let bound = 0.5 * (1.0 - width);
                let offs: Vec<f64> = if bound <= 0.0 || *offsets == 1 {
                    vec![0.0]
                } else {
                    (0..*offsets).map(|k| -bound + 2.0 * bound * k as f64 / (*offsets - 1) as f64).collect()
                };
                let mut out = Vec::with_capacity(angles * offs.len());
                for a in 0..*angles {
                    let angle = PI * a as f64 / *angles as f64;
                    for &offset in &offs {
                        out.push(Design::Parallel(ParallelBeam { angle, offset, width: *width }));
                    }
                }
                out
            }
            DesignSpaceConfig::Cone { delta, distance, detectors, azimuths, polar, quadrants } => {
                let apertures: Vec<Aperture> = if *quadrants {
                    (0..4).map(Aperture::Quadrant).collect()
                } else {
                    vec![Aperture::Full]
                };
                let mut out = Vec::new();
                for i in 0..*azimuths {
                    let phi = 2.0 * PI * i as f64 / *azimuths as f64;
                    for &theta in polar {
                        for &aperture in &apertures {
                            out.push(Design::Cone(ConeBeam {
                                theta,
                                phi,
                                aperture,
                                delta: *delta,
                                distance: *distance,
                                detectors: *detectors,
                            }));
                        }
                    }
                }
                out
            }
        }
    }

    /// Detector count of a full-width 2D pair, if this is a 2D space.
    pub fn detectors_full(&self) -> Option<usize> {
        match self {
            DesignSpaceConfig::Parallel { detectors_full, .. } => Some(*detectors_full),
            DesignSpaceConfig::Cone { .. } => None,
        }
    }

    /// Full-aperture (3D) or full-width (2D) version of this space's hardware,
    /// used for the non-adaptive reference runs.
    pub fn reference_geometry(&self, angle: f64, polar: f64) -> Design {
        match self {
            DesignSpaceConfig::Parallel { .. } => {
                Design::Parallel(ParallelBeam { angle, offset: 0.0, width: 1.0 })
            }
            DesignSpaceConfig::Cone { delta, distance, detectors, .. } => Design::Cone(ConeBeam {
                theta: polar,
                phi: angle,
                aperture: Aperture::Full,
                delta: *delta,
                distance: *distance,
                detectors: *detectors,
            }),
        }
    }

    pub fn assemble(&self, grid: &Grid, design: &Design) -> Result<ProjectionMatrix> {
        match (self, design) {
            (DesignSpaceConfig::Parallel { detectors_full, .. }, Design::Parallel(p)) => {
                assemble_parallel(grid, p, *detectors_full)
            }
            (DesignSpaceConfig::Cone { .. }, Design::Cone(c)) => assemble_cone(grid, c),
            _ => invalid("design kind does not match the design space"),
        }
    }
}

/// Assembles every candidate on `grid`.
pub fn assemble_all(space: &DesignSpaceConfig, grid: &Grid, designs: &[Design]) -> Result<Vec<ProjectionMatrix>> {
    use rayon::prelude::*;
    designs.par_iter().map(|d| space.assemble(grid, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_default_has_720_candidates() {
        assert_eq!(DesignSpaceConfig::cone_default().enumerate().len(), 720);
    }

    #[test]
    fn parallel_cartesian_product() {
        let s = DesignSpaceConfig::Parallel { width: 0.25, angles: 7, offsets: 5, detectors_full: 51 };
        assert_eq!(s.enumerate().len(), 35);
        let s = DesignSpaceConfig::Parallel { width: 1.0, angles: 7, offsets: 5, detectors_full: 51 };
        let c = s.enumerate();
        assert_eq!(c.len(), 7);
        assert!(c.iter().all(|d| matches!(d, Design::Parallel(p) if p.offset == 0.0)));
    }

    #[test]
    fn offsets_span_admissible_interval() {
        let s = DesignSpaceConfig::parallel_default();
        let c = s.enumerate();
        assert_eq!(c.len(), 60 * 41);
        let offs: Vec<f64> = c[..41].iter().map(|d| match d {
            Design::Parallel(p) => p.offset,
            _ => unreachable!(),
        }).collect();
        assert!((offs[0] + 0.375).abs() < 1e-15);
        assert!((offs[40] - 0.375).abs() < 1e-15);
        for d in &c {
            if let Design::Parallel(p) = d {
                assert!(p.validate().is_ok());
            }
        }
    }

    #[test]
    fn mismatched_design_rejected() {
        let s = DesignSpaceConfig::parallel_default();
        let cone = DesignSpaceConfig::cone_default().enumerate()[0];
        assert!(s.assemble(&Grid::new(2, 4).unwrap(), &cone).is_err());
    }
}
