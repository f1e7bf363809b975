//! End-to-end experiments: the sequential design loop, non-adaptive
//! references, ensembles and their file outputs.

mod config;
mod output;
mod run;

pub use config::{default_reference_directions, ExperimentConfig, GaussianPrior, Mode};
pub use output::{
    mask_seconds, write_designs_csv, write_ensemble_csv, write_errors_csv, write_run_outputs, write_scores_csv,
};
pub use run::{
    design_step, ensemble, ensemble_with_seeds, gaussian_design_list, member_seed, reference_designs, rel_l2_error,
    run, run_reference, run_sequential, EnsembleReport, EnsembleRow, RoundRecord, RunFailure, RunOptions, RunReport,
};
