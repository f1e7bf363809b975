//! Exact line/grid intersection lengths (Siddon's parametric traversal).

use crate::error::{invalid, Result};
use crate::grid::{Grid, Point};

/// Intersection lengths of the infinite line `origin + t * direction` with
/// the interior cells of `grid`, in traversal order.
pub fn trace_ray(grid: &Grid, origin: &Point, direction: &Point) -> Result<Vec<(usize, f64)>> {
    trace_segment(grid, origin, direction, f64::NEG_INFINITY, f64::INFINITY)
}

/// Like [`trace_ray`] but only for parameters `t` in `[t_lo, t_hi]`.
pub fn trace_segment(
    grid: &Grid,
    origin: &Point,
    direction: &Point,
    t_lo: f64,
    t_hi: f64,
) -> Result<Vec<(usize, f64)>> {
    let dim = grid.dim();
    let speed = direction[..dim].iter().map(|d| d * d).sum::<f64>().sqrt();
    if !(speed > 0.0) || !speed.is_finite() {
        return invalid("ray direction must be a nonzero finite vector");
    }
    if origin[..dim].iter().any(|o| !o.is_finite()) {
        return invalid("ray origin must be finite");
    }

    let (mut tmin, mut tmax) = (t_lo, t_hi);
    for a in 0..dim {
        let (o, d) = (origin[a], direction[a]);
        if d == 0.0 {
            if !(0.0..=1.0).contains(&o) {
                return Ok(Vec::new());
            }
        } else {
            let t0 = -o / d;
            let t1 = (1.0 - o) / d;
            tmin = tmin.max(t0.min(t1));
            tmax = tmax.min(t0.max(t1));
        }
    }
    if !(tmax > tmin) {
        return Ok(Vec::new());
    }

    let n = grid.cells_per_edge();
    let h = grid.h();
    let mut ts = Vec::with_capacity(dim * n + 2);
    ts.push(tmin);
    for a in 0..dim {
        let (o, d) = (origin[a], direction[a]);
        if d == 0.0 {
            continue;
        }
        let xa = o + tmin * d;
        let xb = o + tmax * d;
        let (lo, hi) = if xa < xb { (xa, xb) } else { (xb, xa) };
        let k_lo = ((lo / h).floor() as i64 + 1).max(1);
        let k_hi = ((hi / h).ceil() as i64 - 1).min(n as i64 - 1);
        for k in k_lo..=k_hi {
            let t = (k as f64 * h - o) / d;
            if t > tmin && t < tmax {
                ts.push(t);
            }
        }
    }
    ts.push(tmax);
    ts.sort_by(f64::total_cmp);

    let mut out: Vec<(usize, f64)> = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        let dt = w[1] - w[0];
        if dt <= 0.0 {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let mut l = [0usize; 3];
        for a in 0..dim {
            let x = origin[a] + tm * direction[a];
            l[a] = ((x / h).floor().max(0.0) as usize).min(n - 1);
        }
        let cell = grid.index(l);
        let len = dt * speed;
        match out.last_mut() {
            Some((c, acc)) if *c == cell => *acc += len,
            _ => out.push((cell, len)),
        }
    }
    Ok(out)
}
