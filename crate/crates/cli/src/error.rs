use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nlhj::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for a failed assertion or assumption, 2 for anything the user has to fix first.
    pub fn exit_code(&self) -> u8 {
        use nlhj::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::NoConvergence { .. }
                | E::CflViolation { .. }
                | E::CertificationFailed(_)
                | E::OrderingViolation { .. }
                | E::JumpOutOfBounds { .. }
                | E::QuadratureDivergence { .. }
                | E::TailDivergence { .. }
                | E::GridTooCoarse { .. }
                | E::NotAdmissible => 1,
                _ => 2,
            },
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Core(nlhj::Error::NoConvergence { iterations: 1, residual: 1.0 }).exit_code(), 1);
        assert_eq!(CliError::Core(nlhj::Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }
}
