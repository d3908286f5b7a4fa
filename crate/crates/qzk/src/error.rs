use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

macro_rules! module_error {
    ($($ty:path => $name:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Module { module: $name, message: e.to_string() }
            }
        })*
    };
}

module_error! {
    qzk_core::qsim::QsimError => "qsim",
    qzk_core::haar::HaarError => "haar",
    qzk_core::qsat::QsatError => "qsat",
    qzk_core::clockham::ClockError => "clockham",
    qzk_core::steane::SteaneError => "steane",
    qzk_core::encver::EncverError => "encver",
    qzk_core::merkle::MerkleError => "merkle",
    qzk_core::zkproto::ZkError => "zkproto",
    qzk_core::linalg::LinalgError => "linalg",
}
