//! Run configuration: structured text files (TOML or JSON by extension)
//! with dotted-key command-line overrides, plus the effective-config echo
//! that makes any run reproducible from its own output directory.

use crate::cmos::CmosStModel;
use crate::error::{Error, Result};
use crate::model::StModel;
use crate::waveform::{Segment, Waveform};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Model selection, discriminated by `model.kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Opamp {
        gain_a: f64,
        feedback_k: f64,
        saturation_m: f64,
        #[serde(default)]
        ref_v: f64,
        tau0: f64,
    },
    Cmos(CmosStModel),
}

impl ModelConfig {
    pub fn opamp(&self) -> Result<StModel> {
        match self {
            ModelConfig::Opamp {
                gain_a,
                feedback_k,
                saturation_m,
                ref_v,
                tau0,
            } => StModel::new(*gain_a, *feedback_k, *saturation_m, *ref_v, *tau0),
            ModelConfig::Cmos(_) => Err(Error::InvalidInput(
                "this subcommand needs model.kind = \"opamp\"".into(),
            )),
        }
    }

    pub fn cmos(&self) -> Result<CmosStModel> {
        match self {
            ModelConfig::Cmos(m) => {
                m.validate()?;
                Ok(*m)
            }
            ModelConfig::Opamp { .. } => Err(Error::InvalidInput(
                "this subcommand needs model.kind = \"cmos\"".into(),
            )),
        }
    }
}

/// Input waveform selection for `simulate` and CMOS scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Constant {
        level: f64,
    },
    Step {
        before: f64,
        after: f64,
        t_step: f64,
    },
    RampHold {
        v0: f64,
        slope: f64,
        v_stop: f64,
    },
    Sine {
        offset: f64,
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    LatchResolution {
        v_meta: f64,
        v_rail: f64,
        tau_c: f64,
        t_onset: f64,
    },
    Csv {
        path: PathBuf,
    },
    /// Raw segment list for full control.
    Segments {
        segments: Vec<Segment>,
    },
}

impl ScenarioConfig {
    pub fn build(&self, base_dir: &Path) -> Result<Waveform> {
        match self {
            ScenarioConfig::Constant { level } => Ok(Waveform::constant(*level)),
            ScenarioConfig::Step {
                before,
                after,
                t_step,
            } => Ok(Waveform::step_to(*before, *after, *t_step)),
            ScenarioConfig::RampHold { v0, slope, v_stop } => {
                Waveform::ramp_and_hold(*v0, *slope, *v_stop)
            }
            ScenarioConfig::Sine {
                offset,
                amplitude,
                frequency_hz,
                phase,
            } => Waveform::new(vec![Segment {
                t_start: 0.0,
                kind: crate::waveform::SegmentKind::Sine {
                    offset: *offset,
                    amplitude: *amplitude,
                    frequency_hz: *frequency_hz,
                    phase: *phase,
                },
            }]),
            ScenarioConfig::LatchResolution {
                v_meta,
                v_rail,
                tau_c,
                t_onset,
            } => Waveform::latch_resolution_input(*v_meta, *v_rail, *tau_c, *t_onset),
            ScenarioConfig::Csv { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let file = std::fs::File::open(&full)
                    .map_err(|e| Error::Io(format!("{}: {e}", full.display())))?;
                Waveform::from_csv_reader(file)
            }
            ScenarioConfig::Segments { segments } => Waveform::new(segments.clone()),
        }
    }
}

fn default_tol() -> f64 {
    1e-9
}
fn default_cadence() -> usize {
    1000
}

/// Time span, tolerance and output cadence of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default)]
    pub high_precision: bool,
    /// Initial output voltage; defaults to γ₁ (opamp) or vdd (cmos).
    #[serde(default)]
    pub v_out0: Option<f64>,
    /// Output levels whose crossings are annotated.
    #[serde(default)]
    pub watch_levels: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_start: 0.0,
            t_end: 1e-8,
            tol: default_tol(),
            cadence: default_cadence(),
            high_precision: false,
            v_out0: None,
            watch_levels: Vec::new(),
        }
    }
}

/// Output directory and formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["csv".into()]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

fn default_sigma() -> f64 {
    0.5
}

/// Parameters of the `delay-sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Explicit overdrive list (volts); wins over the generator fields.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Log-spaced generator: bounds as fractions of the band width 2M/A.
    #[serde(default = "default_eps_min")]
    pub epsilon_min_factor: f64,
    #[serde(default = "default_eps_max")]
    pub epsilon_max_factor: f64,
    #[serde(default = "default_eps_count")]
    pub count: usize,
}

fn default_eps_min() -> f64 {
    1e-7
}
fn default_eps_max() -> f64 {
    1e-1
}
fn default_eps_count() -> usize {
    25
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sigma: default_sigma(),
            epsilons: Vec::new(),
            epsilon_min_factor: default_eps_min(),
            epsilon_max_factor: default_eps_max(),
            count: default_eps_count(),
        }
    }
}

impl SweepSection {
    pub fn epsilons_for(&self, model: &StModel) -> Result<Vec<f64>> {
        if !self.epsilons.is_empty() {
            return Ok(self.epsilons.clone());
        }
        if !(self.epsilon_min_factor > 0.0
            && self.epsilon_max_factor > self.epsilon_min_factor
            && self.count >= 2)
        {
            return Err(Error::InvalidInput("bad sweep generator parameters".into()));
        }
        let band = 2.0 * model.saturation_m / model.gain_a;
        let lo = (band * self.epsilon_min_factor).ln();
        let hi = (band * self.epsilon_max_factor).ln();
        Ok((0..self.count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.count - 1) as f64).exp())
            .collect())
    }
}

/// Parameters of the `control` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSection {
    pub desired: ScenarioConfig,
    #[serde(default)]
    pub vin_rate_cap: Option<f64>,
}

/// Parameters of the `pin` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinSection {
    pub level: f64,
    pub hold: f64,
    #[serde(default = "default_release_delta")]
    pub release_delta: f64,
}

fn default_release_delta() -> f64 {
    1e-7
}

/// Parameters of the `fit-tau` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    #[serde(default = "default_delta_count")]
    pub count: usize,
}

fn default_delta_min() -> f64 {
    1e-12
}
fn default_delta_max() -> f64 {
    1e-6
}
fn default_delta_count() -> usize {
    13
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            delta_min: default_delta_min(),
            delta_max: default_delta_max(),
            count: default_delta_count(),
        }
    }
}

impl FitSection {
    pub fn deltas(&self) -> Result<Vec<f64>> {
        if !(self.delta_min > 0.0 && self.delta_max > self.delta_min && self.count >= 3) {
            return Err(Error::InvalidInput("bad fit delta parameters".into()));
        }
        let lo = self.delta_min.ln();
        let hi = self.delta_max.ln();
        Ok((0..self.count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.count - 1) as f64).exp())
            .collect())
    }
}

/// Parameters of the `phase-map` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMapSection {
    #[serde(default = "default_grid_n")]
    pub n_in: usize,
    #[serde(default = "default_grid_n")]
    pub n_out: usize,
    /// Optional explicit window (opamp only; cmos uses the rails).
    #[serde(default)]
    pub v_in_min: Option<f64>,
    #[serde(default)]
    pub v_in_max: Option<f64>,
    #[serde(default)]
    pub v_out_min: Option<f64>,
    #[serde(default)]
    pub v_out_max: Option<f64>,
}

fn default_grid_n() -> usize {
    50
}

impl Default for PhaseMapSection {
    fn default() -> Self {
        PhaseMapSection {
            n_in: default_grid_n(),
            n_out: default_grid_n(),
            v_in_min: None,
            v_in_max: None,
            v_out_min: None,
            v_out_max: None,
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub control: Option<ControlSection>,
    #[serde(default)]
    pub pin: Option<PinSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub phase_map: Option<PhaseMapSection>,
}

impl RunConfig {
    /// Load from a TOML (default) or JSON (by extension) file and apply
    /// dotted-key overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false);
        let mut value: toml::Value = if is_json {
            let json: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            json_to_toml(json)?
        } else {
            text.parse()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        value
            .try_into()
            .map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Write the effective configuration as re-loadable JSON.
    pub fn write_effective(&self, path: &Path) -> Result<()> {
        crate::export::write_json(self, path)
    }
}

fn json_to_toml(v: serde_json::Value) -> Result<toml::Value> {
    use serde_json::Value as J;
    use toml::Value as T;
    Ok(match v {
        J::Null => return Err(Error::Parse("null has no TOML equivalent".into())),
        J::Bool(b) => T::Boolean(b),
        J::Number(n) => {
            if let Some(i) = n.as_i64() {
                T::Integer(i)
            } else {
                T::Float(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        J::String(s) => T::String(s),
        J::Array(a) => T::Array(a.into_iter().map(json_to_toml).collect::<Result<_>>()?),
        J::Object(o) => {
            let mut t = toml::map::Map::new();
            for (k, val) in o {
                // `Option::None` fields serialize as null; skip them
                if val.is_null() {
                    continue;
                }
                t.insert(k, json_to_toml(val)?);
            }
            T::Table(t)
        }
    })
}

/// Apply one `key.path=value` override onto the raw config tree. The value
/// is parsed as TOML when possible and falls back to a bare string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw_value) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidInput(format!("override '{assignment}' must be KEY=VALUE"))
    })?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::InvalidInput("empty override key".into()));
    }
    // parse the value through a one-entry document so bare scalars, arrays
    // and quoted strings all work; fall back to a plain string
    let parsed: toml::Value = match format!("v = {}", raw_value.trim()).parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("synthetic key"),
        _ => toml::Value::String(raw_value.trim().to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::InvalidInput(format!("override '{key}': '{part}' is not a table"))
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    unreachable!()
}
