mod common;

use common::{chord_length, random_line, sampled_lengths};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvdesign::projector::{
    assemble_cone, assemble_parallel, trace_ray, trace_segment, Aperture, ConeBeam, DesignSpaceConfig, ParallelBeam,
};
use tvdesign::Grid;

#[test]
fn random_lines_match_chords_and_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (dim, n, count) in [(2, 10, 100), (2, 17, 100), (3, 10, 10)] {
        let g = Grid::new(dim, n).unwrap();
        for _ in 0..count {
            let (o, d) = random_line(&mut rng, dim);
            let row = trace_ray(&g, &o, &d).unwrap();
            let total: f64 = row.iter().map(|(_, l)| l).sum();
            assert!((total - chord_length(o, d, dim, false)).abs() < 1e-10);
            let sampled = sampled_lengths(&g, o, d, 1e-5, false);
            let mut dense = vec![0.0; g.len()];
            for (i, l) in row {
                dense[i] += l;
            }
            for (a, b) in dense.iter().zip(&sampled) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn half_lines_only_count_forward_part() {
    let g = Grid::new(3, 7).unwrap();
    let o = [0.5, 0.5, 0.5];
    let d = [0.3, -0.2, 0.9];
    let row = trace_segment(&g, &o, &d, 0.0, f64::INFINITY).unwrap();
    let total: f64 = row.iter().map(|(_, l)| l).sum();
    assert!((total - chord_length(o, d, 3, true)).abs() < 1e-12);
}

#[test]
fn mirrored_image_mirrors_the_angle() {
    // reflecting x -> 1 - x maps the beam at angle θ onto the one at π - θ
    // with the same offset and ray order
    let g = Grid::new(2, 12).unwrap();
    let n = 12;
    let u: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
    let mirrored: Vec<f64> = (0..g.len())
        .map(|i| {
            let [x, y, _] = g.lattice(i);
            u[g.index([n - 1 - x, y, 0])]
        })
        .collect();
    for (theta, offset) in [(0.3, 0.1), (1.1, -0.2), (2.0, 0.0)] {
        let a = assemble_parallel(&g, &ParallelBeam::new(theta, offset, 0.5).unwrap(), 51).unwrap();
        let b = assemble_parallel(&g, &ParallelBeam::new(std::f64::consts::PI - theta, offset, 0.5).unwrap(), 51).unwrap();
        for (p, q) in a.matvec(&u).iter().zip(b.matvec(&mirrored)) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn full_width_rays_cover_the_square_evenly() {
    // each of the m rays of a full-width axis-aligned beam crosses the square
    let g = Grid::new(2, 20).unwrap();
    let r = assemble_parallel(&g, &ParallelBeam::new(0.0, 0.0, 1.0).unwrap(), 51).unwrap();
    assert_eq!(r.nrows(), 51);
    for s in r.row_sums() {
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cone_beam_rows_match_chords() {
    let g = Grid::new(3, 10).unwrap();
    let cone = ConeBeam { theta: 0.3, phi: 1.2, aperture: Aperture::Full, delta: 0.24, distance: 2.5, detectors: 8 };
    let r = assemble_cone(&g, &cone).unwrap();
    let src = cone.source();
    for (row, d) in cone.directions().iter().enumerate() {
        let expected = chord_length(src, *d, 3, true);
        let (_, vals) = r.row(row);
        assert!((vals.iter().sum::<f64>() - expected).abs() < 1e-10);
    }
}

#[test]
fn every_default_candidate_hits_the_object() {
    let g = Grid::new(3, 6).unwrap();
    let space = DesignSpaceConfig::cone_default();
    for d in space.enumerate().iter().step_by(37) {
        let r = space.assemble(&g, d).unwrap();
        assert_eq!(r.nrows(), 100);
        assert!(r.row_sums().iter().sum::<f64>() > 0.0);
    }
}
