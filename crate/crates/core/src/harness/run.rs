use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Mode};
use crate::design::{coarse_state, select_design, update_covariance, CandidateSet, DesignScore};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Image};
use crate::inference::{lagged_diffusivity_with, LaggedOptions, StackedSystem};
use crate::prior::gaussian_cov;
use crate::projector::{Design, ProjectionMatrix};
use crate::sim::simulate_data;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round (sequential modes) or dose level (reference modes).
    pub round: usize,
    /// Geometries measured in this round; reference levels list all of them.
    pub designs: Vec<Design>,
    /// A-optimality score of the chosen design on the design grid.
    pub score: Option<f64>,
    /// Rays behind this record's reconstruction.
    pub dose_rays: usize,
    pub rel_l2: f64,
    /// Lagged-diffusivity iterations.
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: Mode,
    pub records: Vec<RoundRecord>,
    pub final_image: Image,
    pub truth: Image,
    /// Per-round reconstructions, when requested.
    pub images: Vec<Image>,
    /// Per-round candidate scores, when requested.
    pub scores: Vec<Vec<DesignScore>>,
    /// Design-grid covariance after the last round (optimized mode).
    pub final_covariance: Option<DMatrix<f64>>,
}

/// A run that stopped early; `partial` holds the rounds completed before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunReport,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed rounds)", self.error, self.partial.records.len())
    }
}

impl std::error::Error for RunFailure {}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, partial: RunReport::empty(Mode::Optimized) }
    }
}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

impl RunReport {
    fn empty(mode: Mode) -> Self {
        let g = Grid::new(2, 1).expect("1-cell grid");
        RunReport {
            mode,
            records: Vec::new(),
            final_image: Image::zeros(g),
            truth: Image::zeros(g),
            images: Vec::new(),
            scores: Vec::new(),
            final_covariance: None,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rel_l2).collect()
    }

    pub fn design_list(&self) -> Vec<Design> {
        self.records.iter().flat_map(|r| r.designs.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_images: bool,
    pub keep_scores: bool,
}

/// `‖u - truth‖ / ‖truth‖` over the cell values.
pub fn rel_l2_error(u: &Image, truth: &Image) -> Result<f64> {
    if u.grid() != truth.grid() {
        return invalid("images live on different grids");
    }
    let norm = truth.norm();
    if norm == 0.0 {
        return invalid("relative error against a zero image");
    }
    let diff: f64 = u.values().iter().zip(truth.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(diff.sqrt() / norm)
}

/// Ground truth and the forward model used to simulate data.
struct Simulator<'a> {
    cfg: &'a ExperimentConfig,
    truth: Image,
    sim_truth: Option<Image>,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a ExperimentConfig, fine: &Grid) -> Result<Self> {
        let truth = cfg.phantom.render(fine)?;
        let sim_truth = if cfg.fine_truth {
            Some(cfg.phantom.render(&Grid::new(cfg.dim(), 2 * cfg.n)?)?)
        } else {
            None
        };
        Ok(Self { cfg, truth, sim_truth })
    }

    /// Data for `design`; `r_fine` is its matrix on the reconstruction grid.
    fn measure(&self, design: &Design, r_fine: &ProjectionMatrix, stream: u64) -> Result<Vec<f64>> {
        match &self.sim_truth {
            None => simulate_data(r_fine, &self.truth, self.cfg.sigma, self.cfg.seed, stream),
            Some(t) => {
                let r = self.cfg.space.assemble(t.grid(), design)?;
                simulate_data(&r, t, self.cfg.sigma, self.cfg.seed, stream)
            }
        }
    }
}

fn lagged_opts(cfg: &ExperimentConfig) -> LaggedOptions {
    LaggedOptions { max_iterations: cfg.max_iterations }
}

/// Keeps a partially filled report attached to whatever error ends the run.
struct Recorder {
    report: RunReport,
}

impl Recorder {
    fn fail(self, error: Error) -> RunFailure {
        let mut partial = self.report;
        if let Error::ConvergenceFailure { last, .. } = &error {
            partial.final_image = (**last).clone();
        }
        RunFailure { error, partial }
    }
}

/// Runs the mode named in `cfg`.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<RunReport, RunFailure> {
    match cfg.mode {
        Mode::Optimized => run_sequential(cfg, opts),
        _ => run_reference(cfg, opts),
    }
}

/// Sequential optimal design: each round picks the A-optimal geometry on the
/// design grid, measures it and updates the reconstruction by lagged
/// diffusivity warm-started from the previous round.
pub fn run_sequential(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<RunReport, RunFailure> {
    if cfg.mode != Mode::Optimized {
        return Err(Error::InvalidArgument("run_sequential needs mode optimized".into()).into());
    }
    cfg.validate()?;
    let fine = cfg.fine_grid()?;
    let coarse = cfg.design_grid()?;
    let sim = Simulator::new(cfg, &fine)?;
    let candidates = CandidateSet::build(&cfg.space, &coarse)?;
    let mut rec = Recorder { report: RunReport::empty(cfg.mode) };
    rec.report.truth = sim.truth.clone();
    rec.report.final_image = Image::constant(fine, 1.0);

    let mut u = Image::constant(fine, 1.0);
    let mut fine_sys = StackedSystem::new(fine.len());
    let mut coarse_sys = StackedSystem::new(coarse.len());
    let mut dose = 0;
    for k in 1..=cfg.rounds {
        let start = Instant::now();
        let step = (|| -> Result<_> {
            let cov = coarse_state(&u, &coarse, &coarse_sys, &cfg.prior, cfg.dense_cap)?;
            let scores = crate::design::score_all(&cov, &candidates, cfg.sigma, &cfg.weight)?;
            let best = crate::design::argmin(&scores)?;
            let design = candidates.designs[best.index];
            let r = cfg.space.assemble(&fine, &design)?;
            let y = sim.measure(&design, &r, k as u64)?;
            fine_sys.push(&r, &y, cfg.sigma)?;
            coarse_sys.push(&candidates.matrices[best.index], &y, cfg.sigma)?;
            let out = lagged_diffusivity_with(&u, &fine_sys, &cfg.prior, cfg.tau, &lagged_opts(cfg))?;
            Ok((design, best.trace, r.nrows(), out, scores))
        })();
        let (design, score, rays, out, scores) = match step {
            Ok(s) => s,
            Err(e) => return Err(rec.fail(e)),
        };
        u = out.mean;
        dose += rays;
        let rel_l2 = match rel_l2_error(&u, &sim.truth) {
            Ok(v) => v,
            Err(e) => return Err(rec.fail(e)),
        };
        let seconds = start.elapsed().as_secs_f64();
        info!("round {k}: rel_l2={rel_l2:.5} J={} score={score:e} ({seconds:.2}s)", out.iterations);
        rec.report.records.push(RoundRecord {
            round: k,
            designs: vec![design],
            score: Some(score),
            dose_rays: dose,
            rel_l2,
            iterations: out.iterations,
            seconds,
        });
        if opts.keep_images {
            rec.report.images.push(u.clone());
        }
        if opts.keep_scores {
            rec.report.scores.push(scores);
        }
        rec.report.final_image = u.clone();
    }
    match coarse_state(&u, &coarse, &coarse_sys, &cfg.prior, cfg.dense_cap) {
        Ok(cov) => rec.report.final_covariance = Some(cov),
        Err(e) => return Err(rec.fail(e)),
    }
    Ok(rec.report)
}

/// Designs chosen sequentially under a fixed Gaussian prior. Nothing here
/// depends on data, so the list is fixed before any measurement.
pub fn gaussian_design_list(cfg: &ExperimentConfig) -> Result<(Vec<Design>, Vec<f64>)> {
    let g = cfg
        .gaussian
        .ok_or_else(|| Error::InvalidArgument("gaussian prior parameters missing".into()))?;
    let coarse = cfg.design_grid()?;
    let candidates = CandidateSet::build(&cfg.space, &coarse)?;
    let mut cov = gaussian_cov(&coarse, g.eta, g.ell)?;
    let mut designs = Vec::with_capacity(cfg.rounds);
    let mut scores = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let sel = select_design(&cov, &candidates, cfg.sigma, &cfg.weight)?;
        cov = update_covariance(&cov, &candidates.matrices[sel.index], cfg.sigma)?;
        designs.push(sel.design);
        scores.push(sel.score);
    }
    Ok((designs, scores))
}

/// Projection sets of the non-adaptive references, one per dose level.
fn reference_levels(cfg: &ExperimentConfig) -> Vec<Vec<Design>> {
    match cfg.mode {
        Mode::ReferenceEquiangular => (1..=cfg.rounds)
            .map(|j| {
                (0..j)
                    .map(|i| cfg.space.reference_geometry(std::f64::consts::PI * i as f64 / j as f64, 0.0))
                    .collect()
            })
            .collect(),
        Mode::ReferenceList => {
            let list = cfg.reference_list();
            (1..=cfg.rounds)
                .map(|j| list[..j].iter().map(|&[polar, azimuth]| cfg.space.reference_geometry(azimuth, polar)).collect())
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Reference runs. Equiangular and list modes reconstruct every dose level
/// from scratch with all of its projections; the Gaussian mode measures a
/// precomputed design list round by round.
pub fn run_reference(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<RunReport, RunFailure> {
    cfg.validate()?;
    match cfg.mode {
        Mode::ReferenceEquiangular | Mode::ReferenceList => run_levels(cfg, opts),
        Mode::ReferenceGaussian => run_fixed_sequence(cfg, opts),
        Mode::Optimized => Err(Error::InvalidArgument("run_reference needs a reference mode".into()).into()),
    }
}

fn run_levels(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<RunReport, RunFailure> {
    let fine = cfg.fine_grid()?;
    let sim = Simulator::new(cfg, &fine)?;
    let mut rec = Recorder { report: RunReport::empty(cfg.mode) };
    rec.report.truth = sim.truth.clone();
    rec.report.final_image = Image::constant(fine, 1.0);
    // noise substreams continue across levels: level 1 uses stream 1, just
    // like the first round of a sequential run
    let mut stream = 0u64;
    for (level, designs) in reference_levels(cfg).into_iter().enumerate() {
        let start = Instant::now();
        let step = (|| -> Result<_> {
            let mut sys = StackedSystem::new(fine.len());
            for d in &designs {
                stream += 1;
                let r = cfg.space.assemble(&fine, d)?;
                let y = sim.measure(d, &r, stream)?;
                sys.push(&r, &y, cfg.sigma)?;
            }
            let out = lagged_diffusivity_with(&Image::constant(fine, 1.0), &sys, &cfg.prior, cfg.tau, &lagged_opts(cfg))?;
            let err = rel_l2_error(&out.mean, &sim.truth)?;
            Ok((sys.rows(), out, err))
        })();
        let (rays, out, rel_l2) = match step {
            Ok(s) => s,
            Err(e) => return Err(rec.fail(e)),
        };
        let seconds = start.elapsed().as_secs_f64();
        info!("level {}: rel_l2={rel_l2:.5} J={} ({seconds:.2}s)", level + 1, out.iterations);
        rec.report.records.push(RoundRecord {
            round: level + 1,
            designs,
            score: None,
            dose_rays: rays,
            rel_l2,
            iterations: out.iterations,
            seconds,
        });
        if opts.keep_images {
            rec.report.images.push(out.mean.clone());
        }
        rec.report.final_image = out.mean;
    }
    Ok(rec.report)
}

fn run_fixed_sequence(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<RunReport, RunFailure> {
    let fine = cfg.fine_grid()?;
    let sim = Simulator::new(cfg, &fine)?;
    let (designs, scores) = gaussian_design_list(cfg)?;
    let mut rec = Recorder { report: RunReport::empty(cfg.mode) };
    rec.report.truth = sim.truth.clone();
    rec.report.final_image = Image::constant(fine, 1.0);
    let mut u = Image::constant(fine, 1.0);
    let mut sys = StackedSystem::new(fine.len());
    let mut dose = 0;
    for (k, (design, score)) in designs.into_iter().zip(scores).enumerate() {
        let round = k + 1;
        let start = Instant::now();
        let step = (|| -> Result<_> {
            let r = cfg.space.assemble(&fine, &design)?;
            let y = sim.measure(&design, &r, round as u64)?;
            sys.push(&r, &y, cfg.sigma)?;
            let out = lagged_diffusivity_with(&u, &sys, &cfg.prior, cfg.tau, &lagged_opts(cfg))?;
            let err = rel_l2_error(&out.mean, &sim.truth)?;
            Ok((r.nrows(), out, err))
        })();
        let (rays, out, rel_l2) = match step {
            Ok(s) => s,
            Err(e) => return Err(rec.fail(e)),
        };
        u = out.mean;
        dose += rays;
        let seconds = start.elapsed().as_secs_f64();
        info!("round {round}: rel_l2={rel_l2:.5} J={} ({seconds:.2}s)", out.iterations);
        rec.report.records.push(RoundRecord {
            round,
            designs: vec![design],
            score: Some(score),
            dose_rays: dose,
            rel_l2,
            iterations: out.iterations,
            seconds,
        });
        if opts.keep_images {
            rec.report.images.push(u.clone());
        }
        rec.report.final_image = u.clone();
    }
    Ok(rec.report)
}

/// Per-round mean and sample standard deviation over ensemble members.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub round: usize,
    pub dose_rays: usize,
    pub mean: f64,
    pub sd: f64,
    pub members: usize,
}

#[derive(Debug)]
pub struct EnsembleReport {
    pub rows: Vec<EnsembleRow>,
    /// Per-member final-round errors, `None` for failed members.
    pub member_errors: Vec<Option<Vec<f64>>>,
    pub failures: Vec<(usize, String)>,
}

/// Seed used by ensemble member `i`.
pub fn member_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// Runs `count` members in parallel. Member `i` uses seed `base + i` for its
/// noise and, for random phantoms, for the phantom as well.
pub fn ensemble(cfg: &ExperimentConfig, count: usize) -> Result<EnsembleReport> {
    ensemble_with_seeds(cfg, &(0..count).map(|i| member_seed(cfg.seed, i)).collect::<Vec<_>>())
}

pub fn ensemble_with_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<EnsembleReport> {
    if seeds.len() < 2 {
        return invalid("an ensemble needs at least two members");
    }
    cfg.validate()?;
    let results: Vec<std::result::Result<RunReport, RunFailure>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut member = cfg.clone();
            member.seed = seed;
            member.phantom.seed = seed;
            run(&member, &RunOptions::default())
        })
        .collect();

    let mut failures = Vec::new();
    let mut member_errors = Vec::new();
    let mut ok: Vec<&RunReport> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(rep) => {
                member_errors.push(Some(rep.errors()));
                ok.push(rep);
            }
            Err(f) => {
                log::warn!("ensemble member {i} failed: {f}");
                member_errors.push(None);
                failures.push((i, f.error.to_string()));
            }
        }
    }
    let mut rows = Vec::new();
    if let Some(first) = ok.first() {
        for (k, rec) in first.records.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|rep| rep.records[k].rel_l2).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(EnsembleRow { round: rec.round, dose_rays: rec.dose_rays, mean, sd, members: vals.len() });
        }
    }
    Ok(EnsembleReport { rows, member_errors, failures })
}

/// Candidate list for a one-off design step.
pub fn design_step(
    cfg: &ExperimentConfig,
    mean: &Image,
    history: &[Design],
) -> Result<(CandidateSet, Vec<DesignScore>)> {
    cfg.validate()?;
    let coarse = cfg.design_grid()?;
    if mean.grid() != &cfg.fine_grid()? {
        return invalid("current reconstruction does not match the configured grid");
    }
    let candidates = CandidateSet::build(&cfg.space, &coarse)?;
    // the covariance ignores data values, zeros stand in for them
    let mut sys = StackedSystem::new(coarse.len());
    for d in history {
        let r = cfg.space.assemble(&coarse, d)?;
        sys.push(&r, &vec![0.0; r.nrows()], cfg.sigma)?;
    }
    let cov = coarse_state(mean, &coarse, &sys, &cfg.prior, cfg.dense_cap)?;
    let scores = crate::design::score_all(&cov, &candidates, cfg.sigma, &cfg.weight)?;
    Ok((candidates, scores))
}

/// Full-width (or full-aperture) designs of a reference mode, flattened.
pub fn reference_designs(cfg: &ExperimentConfig) -> Vec<Design> {
    reference_levels(cfg).pop().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::DesignSpaceConfig;
    use crate::sim::{PhantomKind, PhantomSpec};

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            n: 12,
            n_design: 6,
            rounds: 3,
            space: DesignSpaceConfig::Parallel { width: 0.5, angles: 6, offsets: 3, detectors_full: 13 },
            ..ExperimentConfig::test1()
        }
    }

    #[test]
    fn rel_l2_basics() {
        let g = Grid::new(2, 4).unwrap();
        let t = Image::from_fn(g, |p| p[0] + 0.3);
        assert_eq!(rel_l2_error(&t, &t).unwrap(), 0.0);
        assert!((rel_l2_error(&Image::zeros(g), &t).unwrap() - 1.0).abs() < 1e-15);
        let twice = Image::new(g, t.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!((rel_l2_error(&twice, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(rel_l2_error(&t, &Image::zeros(g)).is_err());
    }

    #[test]
    fn sequential_run_records_every_round() {
        let cfg = tiny();
        let rep = run_sequential(&cfg, &RunOptions { keep_images: true, keep_scores: true }).unwrap();
        assert_eq!(rep.records.len(), 3);
        assert_eq!(rep.images.len(), 3);
        assert_eq!(rep.scores[0].len(), 18);
        assert_eq!(rep.records[2].dose_rays, 3 * 7);
        assert!(rep.records.iter().all(|r| r.rel_l2.is_finite()));
        assert_eq!(rep.final_covariance.as_ref().unwrap().nrows(), 36);
    }

    #[test]
    fn single_candidate_equals_reference() {
        let mut seq = tiny();
        seq.rounds = 1;
        seq.space = DesignSpaceConfig::Parallel { width: 1.0, angles: 1, offsets: 1, detectors_full: 13 };
        let mut reference = seq.clone();
        reference.mode = Mode::ReferenceEquiangular;
        let a = run_sequential(&seq, &RunOptions::default()).unwrap();
        let b = run_reference(&reference, &RunOptions::default()).unwrap();
        assert_eq!(a.records[0].rel_l2, b.records[0].rel_l2);
        assert_eq!(a.final_image.values(), b.final_image.values());
    }

    #[test]
    fn equiangular_levels() {
        let mut cfg = tiny();
        cfg.mode = Mode::ReferenceEquiangular;
        let levels = reference_levels(&cfg);
        assert_eq!(levels.len(), 3);
        assert_eq!(levels[2].len(), 3);
        match levels[2][1] {
            Design::Parallel(p) => {
                assert!((p.angle - std::f64::consts::PI / 3.0).abs() < 1e-15);
                assert_eq!(p.width, 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn gaussian_designs_ignore_seed() {
        let mut cfg = tiny();
        cfg.mode = Mode::ReferenceGaussian;
        cfg.gaussian = Some(crate::harness::GaussianPrior { eta: 0.2, ell: 0.1 });
        cfg.phantom = PhantomSpec { kind: PhantomKind::SheppLogan, seed: 0 };
        let a = run_reference(&cfg, &RunOptions::default()).unwrap();
        cfg.seed = 99;
        let b = run_reference(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(a.design_list(), b.design_list());
        assert_ne!(a.errors(), b.errors());
    }

    #[test]
    fn ensemble_with_identical_seeds_has_zero_spread() {
        let mut cfg = tiny();
        cfg.rounds = 2;
        let rep = ensemble_with_seeds(&cfg, &[5, 5]).unwrap();
        assert!(rep.rows.iter().all(|r| r.sd == 0.0 && r.members == 2));
        assert!(ensemble(&cfg, 1).is_err());
    }

    #[test]
    fn iteration_cap_returns_partial_report() {
        let mut cfg = tiny();
        cfg.max_iterations = 1;
        cfg.tau = 1e-300;
        let f = run_sequential(&cfg, &RunOptions::default()).unwrap_err();
        assert!(matches!(f.error, Error::ConvergenceFailure { .. }));
        assert!(f.partial.records.is_empty());
        assert!(f.partial.final_image.values().iter().all(|v| v.is_finite()));
    }
}
