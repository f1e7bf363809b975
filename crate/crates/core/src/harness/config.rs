use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::Weight;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::inference::{DEFAULT_DENSE_CAP, DEFAULT_MAX_ITERATIONS};
use crate::prior::TvParams;
use crate::projector::DesignSpaceConfig;
use crate::sim::{PhantomKind, PhantomSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sequential A-optimal design.
    Optimized,
    /// `j` full-width projections at angles `iπ/j` for dose level `j`.
    ReferenceEquiangular,
    /// The first `j` entries of a fixed list of full-aperture directions.
    ReferenceList,
    /// Sequential design precomputed from a Gaussian prior.
    ReferenceGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub eta: f64,
    pub ell: f64,
}

/// Full-aperture reference directions as (polar, azimuth) pairs.
pub fn default_reference_directions() -> Vec<[f64; 2]> {
    vec![
        [0.0, 0.0],
        [0.0, 2.0 * PI / 3.0],
        [0.0, 4.0 * PI / 3.0],
        [PI / 4.0, PI],
        [PI / 4.0, 0.0],
        [-PI / 4.0, PI / 2.0],
        [-PI / 4.0, 3.0 * PI / 2.0],
        [0.0, PI / 6.0],
        [0.0, 3.0 * PI / 2.0],
        [0.0, 5.0 * PI / 6.0],
    ]
}

fn default_tau() -> f64 {
    1e-4
}
fn default_cap() -> usize {
    DEFAULT_DENSE_CAP
}
fn default_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phantom: PhantomSpec,
    /// Cells per edge of the reconstruction grid.
    #[serde(rename = "N")]
    pub n: usize,
    /// Cells per edge of the design grid.
    #[serde(rename = "N_design")]
    pub n_design: usize,
    #[serde(default)]
    pub prior: TvParams,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub rounds: usize,
    pub sigma: f64,
    pub space: DesignSpaceConfig,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianPrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_directions: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub weight: Weight,
    #[serde(default)]
    pub seed: u64,
    /// Simulate data on a grid twice as fine as the reconstruction grid.
    #[serde(default)]
    pub fine_truth: bool,
    #[serde(default = "default_cap")]
    pub dense_cap: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

impl ExperimentConfig {
    /// Three-shape 2D target, quarter-width beams.
    pub fn test1() -> Self {
        Self {
            phantom: PhantomSpec { kind: PhantomKind::Shapes2d, seed: 0 },
            n: 100,
            n_design: 31,
            prior: TvParams::default(),
            tau: 1e-4,
            rounds: 16,
            sigma: 1e-3,
            space: DesignSpaceConfig::parallel_default(),
            mode: Mode::Optimized,
            gaussian: None,
            reference_directions: None,
            weight: Weight::Identity,
            seed: 0,
            fine_truth: false,
            dense_cap: DEFAULT_DENSE_CAP,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    /// Ball and cuboid 3D target with quarter-aperture cone beams.
    pub fn cone3d() -> Self {
        Self {
            phantom: PhantomSpec { kind: PhantomKind::BallsCuboid3d, seed: 0 },
            n: 25,
            n_design: 12,
            rounds: 40,
            sigma: 2e-3,
            space: DesignSpaceConfig::cone_default(),
            ..Self::test1()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn fine_grid(&self) -> Result<Grid> {
        Grid::new(self.dim(), self.n)
    }

    pub fn design_grid(&self) -> Result<Grid> {
        Grid::new(self.dim(), self.n_design)
    }

    pub fn reference_list(&self) -> Vec<[f64; 2]> {
        self.reference_directions.clone().unwrap_or_else(default_reference_directions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return invalid("rounds must be at least 1");
        }
        if self.n == 0 || self.n_design == 0 {
            return invalid("grid sizes must be positive");
        }
        if self.n_design > self.n {
            return invalid("the design grid must not be finer than the reconstruction grid");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return invalid(format!("tau must be positive, got {}", self.tau));
        }
        if self.max_iterations == 0 {
            return invalid("max_iterations must be positive");
        }
        self.prior.validate()?;
        self.space.validate()?;
        if self.phantom.dim() != self.dim() {
            return invalid(format!(
                "phantom is {}D but the design space is {}D",
                self.phantom.dim(),
                self.dim()
            ));
        }
        if let Weight::Diagonal(a) = &self.weight {
            let expected = self.n_design.pow(self.dim() as u32);
            if a.len() != expected {
                return invalid(format!("weight has {} entries, the design grid has {expected}", a.len()));
            }
        }
        match self.mode {
            Mode::Optimized => {}
            Mode::ReferenceEquiangular => {
                if self.dim() != 2 {
                    return invalid("equiangular references are defined for 2D parallel beams");
                }
            }
            Mode::ReferenceList => {
                if self.dim() != 3 {
                    return invalid("reference direction lists are defined for 3D cone beams");
                }
                if self.rounds > self.reference_list().len() {
                    return invalid("rounds exceed the number of reference directions");
                }
            }
            Mode::ReferenceGaussian => match self.gaussian {
                Some(g) if g.eta > 0.0 && g.ell > 0.0 => {}
                Some(_) => return invalid("gaussian eta and ell must be positive"),
                None => return invalid("mode reference_gaussian needs a gaussian block"),
            },
        }
        Ok(())
    }
}
