use lddc_core::hardy::AnalysisError;
use lddc_core::io::IoError;
use lddc_core::lddc::IdentError;
use lddc_core::models::ModelError;
use lddc_core::plants::PlantError;
use lddc_core::refmodel::RefError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("reference model not achievable: {0}")]
    Reference(#[from] RefError),
    #[error("identification failed: {0}")]
    Ident(#[from] IdentError),
    #[error("identified controller does not stabilize the loop (closed-loop pole {0})")]
    Unstable(String),
    #[error("closed-loop analysis failed, the loop realization is too ill-conditioned: {0}")]
    LoopAnalysis(IdentError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(_) => 2,
            CliError::Reference(_) => 3,
            CliError::Ident(_) | CliError::Unstable(_) | CliError::LoopAnalysis(_) => 4,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
