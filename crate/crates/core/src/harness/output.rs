use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::ExperimentConfig;
use super::run::{EnsembleReport, RunReport};
use crate::design::DesignScore;
use crate::error::Result;
use crate::grid::Image;
use crate::io::{write_pgm, write_raw};
use crate::projector::Design;

/// `round,dose_rays,rel_l2,J,seconds`
pub fn write_errors_csv(report: &RunReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "round,dose_rays,rel_l2,J,seconds")?;
    for r in &report.records {
        writeln!(out, "{},{},{:.17e},{},{:.3}", r.round, r.dose_rays, r.rel_l2, r.iterations, r.seconds)?;
    }
    Ok(())
}

/// One row per measured geometry: `round,kind,<parameters>,score`.
pub fn write_designs_csv(report: &RunReport, mut out: impl Write) -> Result<()> {
    let Some(first) = report.records.iter().flat_map(|r| r.designs.first()).next() else {
        writeln!(out, "round,score")?;
        return Ok(());
    };
    let names: Vec<&str> = first.fields().iter().map(|(k, _)| *k).collect();
    writeln!(out, "round,{},score", names.join(","))?;
    for r in &report.records {
        let score = r.score.map(|s| format!("{s:.17e}")).unwrap_or_default();
        for d in &r.designs {
            let values: Vec<String> = d.fields().into_iter().map(|(_, v)| v).collect();
            writeln!(out, "{},{},{}", r.round, values.join(","), score)?;
        }
    }
    Ok(())
}

/// `round,candidate,<parameters>,score` for every candidate of every round.
pub fn write_scores_csv(designs: &[Design], rounds: &[(usize, Vec<DesignScore>)], mut out: impl Write) -> Result<()> {
    let names: Vec<&str> = designs.first().map(|d| d.fields().iter().map(|(k, _)| *k).collect()).unwrap_or_default();
    writeln!(out, "round,candidate,{},score", names.join(","))?;
    for (round, scores) in rounds {
        for s in scores {
            let values: Vec<String> = designs[s.index].fields().into_iter().map(|(_, v)| v).collect();
            writeln!(out, "{round},{},{},{:.17e}", s.index, values.join(","), s.trace)?;
        }
    }
    Ok(())
}

/// `round,dose_rays,mean_rel_l2,sd_rel_l2,members`
pub fn write_ensemble_csv(report: &EnsembleReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "round,dose_rays,mean_rel_l2,sd_rel_l2,members")?;
    for r in &report.rows {
        writeln!(out, "{},{},{:.17e},{:.17e},{}", r.round, r.dose_rays, r.mean, r.sd, r.members)?;
    }
    Ok(())
}

fn write_image(img: &Image, dir: &Path, stem: &str) -> Result<()> {
    write_raw(img, BufWriter::new(File::create(dir.join(format!("{stem}.raw")))?))?;
    if img.grid().dim() == 2 {
        let scaling = write_pgm(img, BufWriter::new(File::create(dir.join(format!("{stem}.pgm")))?))?;
        fs::write(dir.join(format!("{stem}.pgm.txt")), scaling.to_text())?;
    }
    Ok(())
}

/// Writes `config.json`, `errors.csv`, `designs.csv`, the final image and,
/// when present, per-round images and candidate scores.
pub fn write_run_outputs(dir: &Path, cfg: &ExperimentConfig, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    write_errors_csv(report, BufWriter::new(File::create(dir.join("errors.csv"))?))?;
    write_designs_csv(report, BufWriter::new(File::create(dir.join("designs.csv"))?))?;
    write_image(&report.final_image, dir, "final")?;
    write_image(&report.truth, dir, "truth")?;
    for (k, img) in report.images.iter().enumerate() {
        write_image(img, dir, &format!("round_{:03}", k + 1))?;
    }
    if !report.scores.is_empty() {
        let rounds: Vec<(usize, Vec<DesignScore>)> =
            report.scores.iter().enumerate().map(|(k, s)| (k + 1, s.clone())).collect();
        write_scores_csv(&cfg.space.enumerate(), &rounds, BufWriter::new(File::create(dir.join("scores.csv"))?))?;
    }
    Ok(())
}

/// Blanks the wall-time column of an errors.csv text so two runs can be
/// compared byte for byte.
pub fn mask_seconds(csv: &str) -> String {
    csv.lines()
        .map(|l| match l.rfind(',') {
            Some(i) => format!("{},*", &l[..i]),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
