//! Experiment configs: a JSON object with common fields plus
//! command-specific ones. Unknown fields are rejected.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use skellam_core::asymptotics::{CltSplit, Normalizer};
use skellam_core::decomposition::{AssignmentRow, KernelRow};
use skellam_core::{FracLaw, JumpLaw, NhppMethod};

use crate::artifact::Format;
use crate::CliError;

const COMMON_KEYS: [&str; 5] = ["seed", "paths", "horizon", "output-path", "format"];

/// Fields shared by every command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Common {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// A parsed config: the common block and the command-specific remainder.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub common: Common,
    pub rest: Map<String, Value>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let Value::Object(mut rest) = value else {
            return Err(CliError::Validation("config must be a JSON object".into()));
        };
        let mut common = Map::new();
        for key in COMMON_KEYS {
            if let Some(v) = rest.remove(key) {
                common.insert(key.to_string(), v);
            }
        }
        let common = serde_json::from_value(Value::Object(common))
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        Ok(Self { common, rest })
    }

    /// Deserializes the command-specific fields.
    pub fn command<C: DeserializeOwned>(&self) -> Result<C, CliError> {
        serde_json::from_value(Value::Object(self.rest.clone())).map_err(|e| CliError::Validation(format!("config: {e}")))
    }
}

/// SHA-256 of the canonical (sorted-key) JSON of the effective config. The
/// output location is excluded so moving artifacts keeps the hash.
pub fn config_hash(command: &str, common: &Common, rest: &Map<String, Value>) -> String {
    let mut common = common.clone();
    common.output_path = None;
    let doc = serde_json::json!({ "command": command, "common": common, "config": rest });
    let digest = Sha256::digest(doc.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    #[default]
    Superposition,
    CompoundPoisson,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateConfig {
    pub law: JumpLaw<f64>,
    #[serde(default)]
    pub method: NhppMethod,
    #[serde(default)]
    pub representation: Representation,
    /// Times at which path values are also tabulated.
    #[serde(default)]
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub law: JumpLaw<f64>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub pmf: bool,
    /// `(s, t)` pairs for the covariance table.
    #[serde(default)]
    pub covariance: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitConfig {
    /// Every jump goes to the first component with probability `p`.
    Bernoulli { p: f64 },
    /// Per-size routing probabilities over any number of components.
    Assignment { rows: Vec<AssignmentRow<f64>> },
    /// Each jump is split in two parts by the kernel `q(j; i)`.
    Kernel { rows: Vec<KernelRow<f64>> },
    /// Binomial kernel with parameter `p`.
    Binomial { p: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DecomposeConfig {
    pub law: JumpLaw<f64>,
    pub split: SplitConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FptConfig {
    pub law: JumpLaw<f64>,
    /// Levels `1..=levels`.
    pub levels: u64,
    pub times: Vec<f64>,
    /// Order `r` of the moment table, if wanted.
    #[serde(default)]
    pub moment_order: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FracIntConfig {
    pub law: JumpLaw<f64>,
    pub alpha: f64,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FracSimConfig {
    pub law: FracLaw<f64>,
    #[serde(default)]
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FracAnalyzeConfig {
    pub law: FracLaw<f64>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default = "default_truncation")]
    pub truncation: u64,
    /// Inverse-stable clock exponent for the Caputo pgf table.
    #[serde(default)]
    pub caputo_alpha: Option<f64>,
}

fn default_truncation() -> u64 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Lln,
    Clt,
    Kac,
    Corr,
}

/// Limit-suite settings; omitted fields take the registered defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LimitConfig {
    pub suite: Option<Suite>,
    pub law: Option<JumpLaw<f64>>,
    pub normalizer: Option<Normalizer>,
    /// `(size, μ_i)` limits for the LLN suite.
    pub limits: Option<Vec<(f64, f64)>>,
    /// Declared CLT split.
    pub split: Option<Vec<CltSplit>>,
    pub grid: Option<Vec<f64>>,
    /// Observation time for the CLT suite.
    pub t: Option<f64>,
    /// Intensity scale for the Kac suite.
    pub alpha: Option<f64>,
    /// Reference time for the correlation suite.
    pub s: Option<f64>,
}
