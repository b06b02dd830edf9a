use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] nehari4_core::Error),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("acceptance failure: {0}")]
    Acceptance(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 config, 3 convergence, 4 acceptance, 5 resource cap, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use nehari4_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Acceptance(_) => 4,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::ResourceCap { .. } => 5,
                E::InvalidGrid(_) | E::InvalidParameter(_) | E::NotCoercive { .. } | E::GridMismatch | E::Snapshot(_) => 2,
                E::RayMissesNehari { .. }
                | E::Diverged(_)
                | E::NoInteriorBarrier
                | E::Quadrature { .. }
                | E::RankDeficient
                | E::NonFinite { .. } => 3,
                E::Io(_) => 1,
            },
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            CliError::Config(String::new()).exit_code(),
            CliError::Convergence(String::new()).exit_code(),
            CliError::Acceptance(String::new()).exit_code(),
            CliError::Core(nehari4_core::Error::ResourceCap { nodes: 2, cap: 1 }).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5]);
        assert_eq!(CliError::Core(nehari4_core::Error::NoInteriorBarrier).exit_code(), 3);
    }
}
