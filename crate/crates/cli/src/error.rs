use tss_core::TssError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] TssError),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    /// The name printed on stderr when a command fails.
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.name(),
            CliError::Schema(_) => "SchemaError",
            CliError::Usage(_) => "UsageError",
            CliError::Context { source, .. } => source.name(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
