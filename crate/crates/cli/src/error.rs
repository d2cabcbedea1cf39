use std::fmt;
use std::process::ExitCode;

/// Failure class, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    /// Invalid configuration or flag values.
    Config,
    /// Missing or malformed input files.
    Input,
    /// Training, evaluation or output failures.
    Runtime,
    /// Chat-completion endpoint problems.
    Endpoint,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 3,
            Category::Input => 4,
            Category::Runtime => 5,
            Category::Endpoint => 6,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Category::Config => "config error",
            Category::Input => "input error",
            Category::Runtime => "runtime error",
            Category::Endpoint => "endpoint error",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Category::Input, message)
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::new(Category::Runtime, message)
    }

    pub fn endpoint(message: impl Into<String>) -> Self {
        Self::new(Category::Endpoint, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.category.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category.label(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<music_intent::corpus::CorpusError> for CliError {
    fn from(e: music_intent::corpus::CorpusError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<music_intent::features::FeatureError> for CliError {
    fn from(e: music_intent::features::FeatureError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<music_intent::eval::EvalError> for CliError {
    fn from(e: music_intent::eval::EvalError) -> Self {
        use music_intent::eval::EvalError;
        match e {
            EvalError::NoReports | EvalError::Malformed(_) => CliError::input(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl From<music_intent::pipeline::PipelineError> for CliError {
    fn from(e: music_intent::pipeline::PipelineError) -> Self {
        use music_intent::pipeline::PipelineError;
        match e {
            PipelineError::Corpus(_) | PipelineError::Features(_) | PipelineError::EmptyPart(_) => {
                CliError::input(e.to_string())
            }
            PipelineError::MissingResource(..) => CliError::config(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl From<music_intent_llm::LlmError> for CliError {
    fn from(e: music_intent_llm::LlmError) -> Self {
        use music_intent_llm::LlmError;
        match e {
            LlmError::Transcript { .. } => CliError::input(e.to_string()),
            LlmError::Eval(_) | LlmError::Io(_) => CliError::runtime(e.to_string()),
            _ => CliError::endpoint(e.to_string()),
        }
    }
}
