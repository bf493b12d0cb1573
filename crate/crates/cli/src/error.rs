//! CLI error classification onto exit codes.

/// Exit classes: usage 1, data 2, numerical 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl From<btmf_core::Error> for CliError {
    fn from(e: btmf_core::Error) -> Self {
        let class = if e.is_numerical() {
            ErrorClass::Numerical
        } else {
            ErrorClass::Data
        };
        CliError {
            class,
            message: e.to_string(),
        }
    }
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            class: ErrorClass::Data,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            class: ErrorClass::Usage,
            message: message.into(),
        }
    }

    /// The single machine-parseable line emitted on stderr.
    pub fn render(&self) -> String {
        format!(
            "error[{}]: {}",
            self.class.label(),
            self.message.replace('\n', " ")
        )
    }
}
