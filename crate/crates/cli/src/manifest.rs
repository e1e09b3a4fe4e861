use covert_core::{QCalibration, TruncationConfig};
use serde::Serialize;
use serde_json::Value;

/// Provenance record written next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub timestamp: String,
    pub command: String,
    /// Fully resolved inputs, defaults included.
    pub parameters: Value,
    /// Inputs that were not given and took their default.
    pub defaults_applied: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<QCalibration>,
    pub truncation: TruncationConfig,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Value, defaults_applied: Vec<String>, calibration: Option<QCalibration>, truncation: TruncationConfig) -> Self {
        Self {
            tool: "covert",
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: command.to_string(),
            parameters,
            defaults_applied,
            calibration,
            truncation,
        }
    }
}

/// 17 significant digits, scientific, locale independent; round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}
