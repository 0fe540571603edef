use dwml_core::Error as CoreError;

/// Failure category; each maps to a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Numeric,
    Capacity,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Io => 1,
            Category::Config => 2,
            Category::Numeric => 3,
            Category::Capacity => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub category: Category,
    message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }
}

fn categorize(e: &CoreError) -> Category {
    match e {
        CoreError::InvalidDimension { .. } | CoreError::InvalidParameter { .. } | CoreError::ShapeMismatch { .. } => {
            Category::Config
        }
        CoreError::Capacity(_)
        | CoreError::EmptySupport { .. }
        | CoreError::KOutOfRange { .. }
        | CoreError::SizeLimit { .. } => Category::Capacity,
        CoreError::DegenerateOutput { .. } | CoreError::NonFinite { .. } => Category::Numeric,
        CoreError::InBatch { source, .. } => categorize(source),
        CoreError::Checkpoint(_) | CoreError::Io(_) | CoreError::Json(_) => Category::Io,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self::new(categorize(&e), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Category::Io, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(Category::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(Category::Io, e.to_string())
    }
}
