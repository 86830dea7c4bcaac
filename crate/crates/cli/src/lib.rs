//! Experiment runner for the marginal-likelihood and cross-validation studies.

pub mod coherence;
pub mod config;
pub mod error;
pub mod identities;
pub mod output;
pub mod probit_study;
pub mod regression;
pub mod score;

use std::path::PathBuf;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;

use output::OutputDir;

/// Files written by a run and its verdict, for experiments that have one.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
    pub verdict: Option<bool>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Some(false) => 1,
            _ => 0,
        }
    }
}

/// Runs the configured experiment and writes its outputs under `out_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let mut out = OutputDir::create(&config.out_dir)?;
    let verdict = match config.experiment {
        Experiment::Table1 => {
            regression::run_table1(config, &mut out)?;
            None
        }
        Experiment::FigurePrep => {
            regression::run_figure_prep(config, &mut out)?;
            None
        }
        Experiment::IdentitySuite => Some(identities::run_identity_suite(config, &mut out)?.pass),
        Experiment::CoherenceSuite => Some(coherence::run_coherence_suite(config, &mut out)?.pass),
        Experiment::Probit => {
            probit_study::run_probit(config, &mut out)?;
            None
        }
        Experiment::Score => {
            score::run_score(config, &mut out)?;
            None
        }
    };
    Ok(RunOutcome { written: out.into_written(), verdict })
}
