//! Experiment configuration: schema, defaults, overrides and resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qelab::dictionary::DictionarySpec;
use qelab::ensembles::Ensemble;
use qelab::equilibrium::EnvelopeOptions;
use qelab::{BuiltinModel, GridSpec, MeasureSpec, WeightSpec};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable naming the default output root.
pub const OUT_ROOT_VAR: &str = "QELAB_OUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_degrees")]
    pub degrees: Vec<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub envelope: EnvelopeOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub onb: OnbConfig,
    #[serde(default)]
    pub szego: SzegoConfig,
    #[serde(default)]
    pub orbit: OrbitConfig,
    #[serde(default)]
    pub qe: QeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Either a built-in model or an explicit weight and measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub limit: LimitSource,
}

/// Measure against which normalized traces are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitSource {
    /// `κ Δφ_eq` from the envelope solved on the grid.
    #[default]
    Envelope,
    /// The support measure itself; valid only when it is the equilibrium measure.
    Support,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { builtin: Some(BuiltinModel::FlatCircle), label: None, weight: None, measure: None, limit: LimitSource::Envelope }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub kind: Ensemble,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { kind: Ensemble::Spherical, n_samples: 100, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Coincidence-set tolerance; `None` uses `1e-6·max(1, osc φ)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coincidence: Option<f64>,
    /// Standard errors beyond which an expected-mass row is flagged.
    pub mass_sigma: f64,
    /// Extra slack in the Poincaré–Lelong comparison.
    pub cluster: f64,
    /// Allowed relative increase in an error sequence still called decreasing.
    pub decrease_jitter: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            coincidence: None,
            mass_sigma: 4.0,
            cluster: 2e-2,
            decrease_jitter: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnbConfig {
    /// Dictionary element used as the symbol.
    pub symbol: String,
    pub draws: usize,
    pub eps: f64,
}

impl Default for OnbConfig {
    fn default() -> Self {
        Self { symbol: "re(z^1)*cutoff".into(), draws: 500, eps: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SzegoConfig {
    /// Dictionary elements used as symbols; empty picks model defaults.
    pub symbols: Vec<String>,
}

fn default_szego_symbols(model: Option<BuiltinModel>) -> Vec<String> {
    let names: [&str; 2] = match model {
        Some(BuiltinModel::FlatCircle) => ["bump(+1.00,+0.00;0.5)", "bump(+0.00,+0.50;0.5)"],
        _ => ["bump(+0.50,+0.00;0.5)", "hat(0.5;0.5)"],
    };
    names.iter().map(|n| n.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub spectrum: Vec<f64>,
    pub draws: usize,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self { spectrum: vec![2.0, 0.0, -1.0], draws: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QeConfig {
    /// Points per side of the grid on which the L¹ error is averaged.
    pub l1_points: usize,
}

impl Default for QeConfig {
    fn default() -> Self {
        Self { l1_points: 101 }
    }
}

fn default_degrees() -> Vec<usize> {
    vec![8, 16, 32]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelConfig::default(),
            degrees: default_degrees(),
            grid: GridSpec::default(),
            ensemble: EnsembleConfig::default(),
            dictionary: DictionarySpec::default(),
            envelope: EnvelopeOptions::default(),
            tolerances: Tolerances::default(),
            onb: OnbConfig::default(),
            szego: SzegoConfig::default(),
            orbit: OrbitConfig::default(),
            qe: QeConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Read and validate a TOML file. A missing or unreadable path is a
    /// path error; anything the schema rejects is a schema error.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigPath(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        Self::from_value(value)
    }

    fn from_value(value: toml::Value) -> Result<Self, CliError> {
        match value.get("schema_version") {
            Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(CliError::Schema(format!("unsupported schema_version {v}; expected {SCHEMA_VERSION}")))
            }
            None => return Err(CliError::Schema("missing schema_version".into())),
        }
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `KEY=VAL` overrides addressed by dotted paths, e.g.
    /// `envelope.tol=1e-8` or `tolerances.cluster=0.05`.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut value = toml::Value::try_from(&self).map_err(|e| CliError::Schema(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{item}` is not KEY=VAL")))?;
            let parsed = parse_scalar(raw.trim());
            let parts: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = parts.split_last().expect("split yields at least one part");
            let mut table = value.as_table_mut().expect("config serializes to a table");
            for part in parents {
                table = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
                    .as_table_mut()
                    .ok_or_else(|| CliError::Schema(format!("override `{key}`: `{part}` is not a table")))?;
            }
            table.insert(last.to_string(), parsed);
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Schema(m));
        if self.degrees.is_empty() {
            return bad("degrees must not be empty".into());
        }
        if self.ensemble.n_samples == 0 {
            return bad("ensemble.n_samples must be positive".into());
        }
        let m = &self.model;
        match (&m.builtin, &m.weight, &m.measure) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            _ => return bad("model needs either `builtin` or both `weight` and `measure`".into()),
        }
        self.grid.validate().map_err(|e| CliError::Schema(e.to_string()))?;
        if self.orbit.spectrum.is_empty() {
            return bad("orbit.spectrum must not be empty".into());
        }
        if self.qe.l1_points < 3 {
            return bad("qe.l1_points must be at least 3".into());
        }
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        *self.degrees.iter().max().expect("validated non-empty")
    }

    /// Replace a built-in model by its explicit weight and measure.
    pub fn resolved(mut self) -> Self {
        if self.szego.symbols.is_empty() {
            self.szego.symbols = default_szego_symbols(self.model.builtin);
        }
        if let Some(b) = self.model.builtin {
            let max_degree = self.max_degree();
            self.model = ModelConfig {
                builtin: None,
                label: Some(self.model.label.unwrap_or_else(|| b.name().to_string())),
                weight: Some(b.weight_spec()),
                measure: Some(b.measure_spec(max_degree)),
                limit: match b {
                    BuiltinModel::FlatCircle => LimitSource::Support,
                    BuiltinModel::GaussianDisk => LimitSource::Envelope,
                },
            };
        } else if self.model.label.is_none() {
            self.model.label = self.model.weight.as_ref().map(|w| w.kind.clone());
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
