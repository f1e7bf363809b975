use std::f64::consts::PI;

use tvdesign::linalg::CsrMatrix;
use tvdesign::sim::{balls_cuboid_3d, sample_ellipses, shepp_logan, simulate_data, shepp_logan_ellipses};
use tvdesign::{Grid, Image};

#[test]
fn ellipse_count_averages_three_and_a_half() {
    let mean = (0..1000u64).map(|s| sample_ellipses(s).len() as f64).sum::<f64>() / 1000.0;
    assert!((mean - 3.5).abs() < 0.15, "mean count {mean}");
}

#[test]
fn ellipse_parameters_follow_their_ranges() {
    for seed in 0..200 {
        for e in sample_ellipses(seed) {
            assert!((0.5..=1.5).contains(&e.level));
            assert!(e.semi_axes.iter().all(|a| (0.05..=0.2).contains(a)));
            assert!((0.0..PI).contains(&e.angle));
            let r = ((e.center[0] - 0.5).powi(2) + (e.center[1] - 0.5).powi(2)).sqrt();
            assert!(r <= 0.5);
        }
    }
}

#[test]
fn noise_has_the_requested_spread() {
    let g = Grid::new(2, 1).unwrap();
    let truth = Image::constant(g, 2.0);
    let sigma = 1e-3;
    let ones = vec![(0usize, 0usize, 1.0); 1];
    let count = 100_000;
    // one ray, many rounds
    let triplets: Vec<_> = (0..count).map(|i| (i, 0, 1.0)).collect();
    let r = CsrMatrix::from_triplets(count, 1, &triplets).unwrap();
    let y = simulate_data(&r, &truth, sigma, 42, 1).unwrap();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.01, "sd {sd}");
    assert!((mean - 2.0).abs() < 5.0 * sigma / n.sqrt());
    let single = CsrMatrix::from_triplets(1, 1, &ones).unwrap();
    let draws: Vec<f64> = (0..2000).map(|k| simulate_data(&single, &truth, sigma, 42, k).unwrap()[0] - 2.0).collect();
    let m = draws.iter().sum::<f64>() / 2000.0;
    let s = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 1999.0).sqrt();
    assert!((s / sigma - 1.0).abs() < 0.05);
}

#[test]
fn shepp_logan_spread_and_asymmetry() {
    let g = Grid::new(2, 128).unwrap();
    let img = shepp_logan(&g).unwrap();
    let v = img.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((sd - 0.2).abs() <= 0.1, "pixelwise sd {sd}");

    // the three small bottom ellipses: mirroring swaps the outer two only
    // approximately, so the mirrored image differs from the original
    let mirrored: Vec<f64> = (0..g.len())
        .map(|i| {
            let [x, y, _] = g.lattice(i);
            v[g.index([127 - x, y, 0])]
        })
        .collect();
    assert_ne!(mirrored, v);
    let e = shepp_logan_ellipses();
    assert!(((e[7].center[0] - 0.5) + (e[9].center[0] - 0.5)).abs() < 0.011);
}

#[test]
fn three_d_mass_matches_volumes() {
    let expected = 2.0 * (4.0 * PI / 3.0) * 0.2f64.powi(3) + 0.2 * 0.4 * 0.4 * 2.0;
    for n in [20, 40] {
        let g = Grid::new(3, n).unwrap();
        let img = balls_cuboid_3d(&g).unwrap();
        let h = g.h();
        let mass = img.values().iter().sum::<f64>() * h * h * h;
        assert!((mass - expected).abs() < h * expected, "n={n}: {mass} vs {expected}");
    }
}
