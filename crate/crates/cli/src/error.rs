use std::fmt;

use mrp_core::MrpError;
use serde::Serialize;
use serde_json::Value;

/// Process exit codes. Stable contract for scripts.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
    pub const DATA: i32 = 5;
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Value>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, "usage", message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(exit::DATA, "data", message)
    }

    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
            nu_min: None,
            diagnostics: None,
        }
    }

    pub fn not_converged(message: impl Into<String>, diagnostics: Value) -> Self {
        Self {
            diagnostics: Some(diagnostics),
            ..Self::new(exit::NOT_CONVERGED, "not_converged", message)
        }
    }

    /// The machine-readable error document.
    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({ "error": self });
        serde_json::to_string_pretty(&doc).expect("error document serializes") + "\n"
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<MrpError> for CliError {
    fn from(e: MrpError) -> Self {
        let message = e.to_string();
        match e {
            MrpError::Infeasible { nu_min, .. } => Self {
                nu_min: Some(nu_min),
                ..Self::new(exit::INFEASIBLE, "infeasible", message)
            },
            MrpError::Invalid(_) => Self::usage(message),
            MrpError::HardCase(_)
            | MrpError::Numerical(_)
            | MrpError::Subproblem { .. }
            | MrpError::ZeroObjective => Self::new(exit::NOT_CONVERGED, "numerical", message),
            MrpError::Io { .. }
            | MrpError::Parse { .. }
            | MrpError::Dimension(_)
            | MrpError::Degenerate(_)
            | MrpError::NotPositiveDefinite(_)
            | MrpError::ZeroVariance
            | MrpError::SharpeUndefined
            | MrpError::InsufficientLength { .. } => Self::data(message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_kind() {
        let infeasible: CliError = MrpError::Infeasible {
            nu: 0.1,
            nu_min: 0.5,
        }
        .into();
        assert_eq!((infeasible.code, infeasible.nu_min), (4, Some(0.5)));
        assert_eq!(CliError::from(MrpError::Invalid("x".into())).code, 2);
        assert_eq!(CliError::from(MrpError::ZeroVariance).code, 5);
        assert_eq!(CliError::from(MrpError::Numerical("x".into())).code, 3);
    }

    #[test]
    fn error_document_shape() {
        let e: CliError = MrpError::Infeasible {
            nu: 0.1,
            nu_min: 0.5,
        }
        .into();
        let v: Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["code"], 4);
        assert_eq!(v["error"]["kind"], "infeasible");
        assert_eq!(v["error"]["nu_min"], 0.5);
        assert!(v["error"].get("diagnostics").is_none());
    }
}
