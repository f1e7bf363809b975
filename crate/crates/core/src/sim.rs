//! Phantoms and noisy data.
//!
//! Random draws come from ChaCha20 keyed by the experiment seed; the stream id
//! packs a tag (phantom vs. measurement noise) with the round index, so every
//! round gets an independent, platform-stable substream.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, Image, Point};
use crate::projector::ProjectionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Phantom = 1,
    Noise = 2,
}

pub fn stream_rng(seed: u64, tag: StreamTag, round: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 56) ^ round);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Shapes2d,
    RandomEllipses,
    SheppLogan,
    #[serde(rename = "balls_cuboid_3d")]
    BallsCuboid3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn dim(&self) -> usize {
        match self.kind {
            PhantomKind::BallsCuboid3d => 3,
            _ => 2,
        }
    }

    pub fn render(&self, grid: &Grid) -> Result<Image> {
        match self.kind {
            PhantomKind::Shapes2d => shapes2d(grid),
            PhantomKind::RandomEllipses => random_ellipses(self.seed, grid),
            PhantomKind::SheppLogan => shepp_logan(grid),
            PhantomKind::BallsCuboid3d => balls_cuboid_3d(grid),
        }
    }
}

/// Filled ellipse in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Counterclockwise rotation of the first axis, radians.
    pub angle: f64,
    pub level: f64,
}

impl Ellipse {
    pub fn contains(&self, p: &Point) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let a = (dx * c + dy * s) / self.semi_axes[0];
        let b = (-dx * s + dy * c) / self.semi_axes[1];
        a * a + b * b <= 1.0
    }
}

fn require_dim(grid: &Grid, dim: usize, what: &str) -> Result<()> {
    if grid.dim() != dim {
        return invalid(format!("{what} needs a {dim}D grid"));
    }
    Ok(())
}

/// Sum of ellipse levels at each cell center.
pub fn rasterize_ellipses(grid: &Grid, ellipses: &[Ellipse]) -> Result<Image> {
    require_dim(grid, 2, "ellipse rasterization")?;
    Ok(Image::from_fn(*grid, |p| ellipses.iter().filter(|e| e.contains(&p)).map(|e| e.level).sum()))
}

// Placement of the three Test-1 shapes: rectangle upper left, circle right of
// center, rotated ellipse lower center. None of them overlap.
const RECT: ([f64; 2], [f64; 2], f64) = ([0.15, 0.60], [0.40, 0.85], 1.0);
const CIRCLE: ([f64; 2], f64, f64) = ([0.72, 0.55], 0.12, 0.5);
const ELLIPSE: Ellipse = Ellipse { center: [0.45, 0.22], semi_axes: [0.16, 0.08], angle: 20.0 * PI / 180.0, level: 0.8 };

pub fn shapes2d(grid: &Grid) -> Result<Image> {
    require_dim(grid, 2, "shapes2d")?;
    Ok(Image::from_fn(*grid, |p| {
        let (lo, hi, level) = RECT;
        if (lo[0]..=hi[0]).contains(&p[0]) && (lo[1]..=hi[1]).contains(&p[1]) {
            return level;
        }
        let (c, r, level) = CIRCLE;
        if (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= r * r {
            return level;
        }
        if ELLIPSE.contains(&p) {
            return ELLIPSE.level;
        }
        0.0
    }))
}

/// Draws the random ellipse family of one ensemble member.
pub fn sample_ellipses(seed: u64) -> Vec<Ellipse> {
    let mut rng = stream_rng(seed, StreamTag::Phantom, 0);
    let count = rng.random_range(2..=5usize);
    (0..count)
        .map(|_| {
            let level = rng.random_range(0.5..=1.5);
            let radius = 0.5 * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            let a = rng.random_range(0.05..=0.2);
            let b = rng.random_range(0.05..=0.2);
            let angle = PI * rng.random::<f64>();
            Ellipse {
                center: [0.5 + radius * theta.cos(), 0.5 + radius * theta.sin()],
                semi_axes: [a, b],
                angle,
                level,
            }
        })
        .collect()
}

pub fn random_ellipses(seed: u64, grid: &Grid) -> Result<Image> {
    rasterize_ellipses(grid, &sample_ellipses(seed))
}

// High-contrast Shepp-Logan on [-1,1]^2: (level, a, b, x0, y0, angle in degrees).
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    SHEPP_LOGAN
        .iter()
        .map(|&(level, a, b, x0, y0, deg)| Ellipse {
            center: [0.5 * (x0 + 1.0), 0.5 * (y0 + 1.0)],
            semi_axes: [0.5 * a, 0.5 * b],
            angle: deg.to_radians(),
            level,
        })
        .collect()
}

/// Skull level 1, brain 0.2, ventricles 0.
pub fn shepp_logan(grid: &Grid) -> Result<Image> {
    let mut img = rasterize_ellipses(grid, &shepp_logan_ellipses())?;
    // overlapping negative levels can round to -1e-17
    for v in img.values_mut() {
        *v = v.max(0.0);
    }
    Ok(img)
}

const BALLS: [([f64; 3], f64); 2] = [([0.2, 0.2, 0.2], 0.2), ([0.3, 0.6, 0.6], 0.2)];
const CUBOID: ([f64; 3], [f64; 3]) = ([0.6, 0.5, 0.5], [0.8, 0.9, 0.9]);

pub fn balls_cuboid_3d(grid: &Grid) -> Result<Image> {
    require_dim(grid, 3, "balls_cuboid_3d")?;
    Ok(Image::from_fn(*grid, |p| {
        let (lo, hi) = CUBOID;
        if (0..3).all(|i| (lo[i]..=hi[i]).contains(&p[i])) {
            return 2.0;
        }
        let in_ball = BALLS.iter().any(|(c, r)| (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>() <= r * r);
        if in_ball {
            1.0
        } else {
            0.0
        }
    }))
}

/// Balls then cuboid, as (center, radius) and (lower, upper) corners.
pub fn inclusions_3d() -> (Vec<([f64; 3], f64)>, ([f64; 3], [f64; 3])) {
    (BALLS.to_vec(), CUBOID)
}

/// `y = R u + σ ξ` with ξ drawn from `rng`.
pub fn simulate_with(r: &ProjectionMatrix, truth: &Image, sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if r.ncols() != truth.values().len() {
        return invalid(format!(
            "projection has {} columns, image has {} cells",
            r.ncols(),
            truth.values().len()
        ));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return invalid(format!("noise level must be nonnegative, got {sigma}"));
    }
    let mut y = r.matvec(truth.values());
    if sigma > 0.0 {
        for v in &mut y {
            let xi: f64 = rng.sample(StandardNormal);
            *v += sigma * xi;
        }
    }
    Ok(y)
}

/// Noisy data for measurement round `round` of the experiment keyed by `seed`.
pub fn simulate_data(r: &ProjectionMatrix, truth: &Image, sigma: f64, seed: u64, round: u64) -> Result<Vec<f64>> {
    simulate_with(r, truth, sigma, &mut stream_rng(seed, StreamTag::Noise, round))
}
