//! Scenario files, the trial pipeline and result persistence.

mod config;
mod output;
mod runner;

use std::fmt;

pub use config::{
    category_spec, load_config, parse_config, CategoryConfig, DynamicsSection, ExtraFeature, IcmSection,
    InteractionConfig, LocalOp, ObserverBias, ObserverFeatureConfig, ObserverSection, ObserverStateConfig,
    OperatorRef, RunSection, Sampling, ScenarioConfig, SensorySection, SensoryState, StrategySection,
    SweepParameter, SweepSection, TemplateMode, VectorSpec, Violation, MAX_COMPOSITE_DIM, MAX_EVOLVED_DIM,
};
pub use output::{config_hash, read_records, read_summary, round_sig, write_results, RECORDS_FILE, SUMMARY_FILE};
pub use runner::{
    dims_report, run_monte_carlo, Branch, DimsReport, Provenance, RunOutput, RunSummary, Scenario, Stats,
    TrialRecord, GENERATOR,
};

/// Pipeline step a runtime failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Encode,
    Duration,
    Evolve,
    Oracle,
    Strategy,
    Templates,
    Align,
    Icm,
    Born,
    Kraus,
    Extract,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Encode => "encode",
            Stage::Duration => "duration",
            Stage::Evolve => "evolve",
            Stage::Oracle => "oracle-check",
            Stage::Strategy => "strategy",
            Stage::Templates => "templates",
            Stage::Align => "align",
            Stage::Icm => "icm",
            Stage::Born => "born",
            Stage::Kraus => "kraus",
            Stage::Extract => "extract",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("I/O error: {0}")]
    Io(String),

    #[error("cannot parse config: {0}")]
    Parse(String),

    #[error("invalid config:\n{}", list(.0))]
    Invalid(Vec<Violation>),

    #[error("stage {stage}{}: {source}", trial.map(|t| format!(" (trial {t})")).unwrap_or_default())]
    Stage {
        stage: Stage,
        trial: Option<usize>,
        #[source]
        source: crate::Error,
    },
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    /// 1 for config problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse(_) | ScenarioError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, ScenarioError>;
}

impl<T> StageExt<T> for crate::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, ScenarioError> {
        self.map_err(|source| ScenarioError::Stage { stage, trial: None, source })
    }
}
