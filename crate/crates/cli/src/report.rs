//! Failure-to-exit-code mapping and JSON emission.

use std::path::Path;

use serde::Serialize;

/// A terminal failure with its process exit code: 2 input, 3 config,
/// 4 numerical.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<varsig::Error> for Failure {
    fn from(e: varsig::Error) -> Self {
        let code = match e {
            varsig::Error::InvalidInput(_) => 2,
            varsig::Error::InvalidConfig(_) => 3,
            _ => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Serializes pretty JSON with a trailing newline, to the path or stdout.
///
/// Field order follows the struct declarations and map keys are sorted,
/// so equal values give equal bytes.
pub fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::config(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
