use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl HarnessError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Divergence(_) => 4,
            HarnessError::Stage { .. } => 1,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        HarnessError::Data(e.to_string())
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        HarnessError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

impl From<specvit_vit::VitError> for HarnessError {
    fn from(e: specvit_vit::VitError) -> Self {
        use specvit_vit::VitError as V;
        match e {
            V::NonFiniteLoss { .. } => HarnessError::Divergence(e.to_string()),
            V::Config(_) => HarnessError::Config(e.to_string()),
            V::EmptyDataset | V::Imaging(_) => HarnessError::Data(e.to_string()),
            other => HarnessError::stage("model", other),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
