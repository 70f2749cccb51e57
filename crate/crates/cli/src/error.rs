use std::fmt;

use serde_json::json;
use sirmix_core::{Error, ErrorCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Config,
    Data,
    Numeric,
    Truncation,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::Config => 3,
            Category::Data => 4,
            Category::Numeric => 5,
            Category::Truncation => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Data => "data",
            Category::Numeric => "numeric",
            Category::Truncation => "truncation",
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

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new(Category::Usage, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new(Category::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::new(Category::Data, message)
    }

    /// One JSON line for stderr.
    pub fn report(&self) -> String {
        json!({
            "error": {
                "category": self.category.as_str(),
                "exit_code": self.category.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.category.as_str(), self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let category = match e.category() {
            ErrorCategory::Config => Category::Config,
            ErrorCategory::Data => Category::Data,
            ErrorCategory::Numeric => Category::Numeric,
            ErrorCategory::Truncation => Category::Truncation,
        };
        CliError::new(category, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_keep_their_category() {
        let e: CliError = Error::DataInconsistency {
            interval: 4,
            n_si: -1,
            n_ir: 2,
        }
        .into();
        assert_eq!(e.category.exit_code(), 4);
        assert!(e.message.contains("interval 4"));
        let t: CliError = Error::Truncation {
            what: "sir-exact",
            achieved: 1e-3,
            tolerance: 1e-10,
            hint: "raise max_states".into(),
        }
        .into();
        assert_eq!(t.category.exit_code(), 6);
        let v: serde_json::Value = serde_json::from_str(&t.report()).unwrap();
        assert_eq!(v["error"]["category"], "truncation");
    }
}
