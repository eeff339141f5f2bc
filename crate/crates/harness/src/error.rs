use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Core(#[from] lsdhm_core::Error),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    /// Process exit code: 1 config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        use lsdhm_core::Error as E;
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(_) | HarnessError::Io(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Core(e) => match e {
                E::Config(_) => 1,
                E::NonFinite(_) => 3,
                _ => 2,
            },
            HarnessError::Stage { source, .. } => source.exit_code(),
        }
    }
}

/// Tags an error with the pipeline stage it came from.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<HarnessError>> StageContext<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| HarnessError::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 1);
        assert_eq!(HarnessError::Data("x".into()).exit_code(), 2);
        assert_eq!(HarnessError::Numeric("x".into()).exit_code(), 3);
        let e: Result<()> = Err(lsdhm_core::Error::NonFinite("loss".into())).stage("train-net");
        let e = e.unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("train-net"));
    }
}
