use bridgeblock_core::Error as CoreError;

/// Front-end failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        CliError::Core { context: context.into(), source }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    /// 0 success, 1 i/o, 2 configuration, 3 proposal budget, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core { source, .. } => match source.root() {
                CoreError::InvalidArgs(_) | CoreError::Unsupported { .. } | CoreError::DegenerateInterval { .. } => 2,
                CoreError::BudgetExceeded { .. } => 3,
                CoreError::Io(_) => 1,
                _ => 4,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let budget = CoreError::InBlock {
            t_a: 0.0,
            t_b: 1.0,
            sweep: 3,
            source: Box::new(CoreError::BudgetExceeded { max_proposals: 10 }),
        };
        assert_eq!(CliError::core("sample", budget).exit_code(), 3);
        assert_eq!(CliError::core("rates", CoreError::RateNotLessThanOne(1.0)).exit_code(), 4);
        assert_eq!(CliError::core("rates", CoreError::Unsupported { op: "x", model: "sine" }).exit_code(), 2);
        assert_eq!(CliError::Config("t: empty".into()).exit_code(), 2);
        assert_eq!(CliError::io(std::path::Path::new("/x"), "denied").exit_code(), 1);
    }
}
