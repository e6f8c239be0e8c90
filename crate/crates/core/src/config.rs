//! Run configuration: flat TOML sections with scalar values.
//!
//! ```toml
//! format_version = 1
//!
//! [grid]
//! n_points = 4096
//! length = 1600.0
//! origin = -800.0
//!
//! [scenario]
//! kind = "two_pulse"      # or "single_pulse"
//! pulse_gap = 400.0
//! t_final = 125.0
//! dt = 0.005
//!
//! [packet]
//! center = -60.0
//! width = 5.0
//! momentum = 4.0
//!
//! [detector]
//! center = 0.0
//! half_width = 20.0
//!
//! [calibration]
//! enabled = true
//! ```
//!
//! See `docs/config.md` for every key and its default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::propagator::{DetectorSpec, ACCURACY_GUARD};
use crate::reduction::{ReductionRule, DEFAULT_ONSET_EPSILON, DEFAULT_TAU_ENV};
use crate::scenario::{ScenarioKind, ScenarioSpec};
use crate::state::{Grid1D, PacketSpec, PARTICLE_MASS};

pub const FORMAT_VERSION: u32 = 1;

fn format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_points: usize,
    pub length: f64,
    pub origin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub pulse_gap: f64,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub center: f64,
    pub half_width: f64,
    /// Absorption strength Γ. Required unless calibration is enabled, in
    /// which case it is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub enabled: bool,
    pub target: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            enabled: false,
            target: 0.999,
            tolerance: 5e-4,
            max_iter: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RulesSection {
    pub penrose_env: bool,
    pub penrose_spread: bool,
    pub current_jump: bool,
    pub tau_env: f64,
    pub onset_epsilon: f64,
}

impl Default for RulesSection {
    fn default() -> Self {
        Self {
            penrose_env: true,
            penrose_spread: true,
            current_jump: true,
            tau_env: DEFAULT_TAU_ENV,
            onset_epsilon: DEFAULT_ONSET_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialsSection {
    pub n_trials: usize,
    pub base_seed: u64,
}

impl Default for TrialsSection {
    fn default() -> Self {
        Self {
            n_trials: 10_000,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Keep |ψ|² every this many samples; 0 disables snapshots.
    pub snapshot_stride: usize,
    /// Comma-separated subset of `csv`, `json`, `svg`.
    pub formats: String,
    pub histogram_bins: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            snapshot_stride: 0,
            formats: "csv,json,svg".into(),
            histogram_bins: crate::analysis::DEFAULT_HISTOGRAM_BINS,
        }
    }
}

impl OutputSection {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.split(',').any(|f| f.trim() == format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted key, e.g. `scenario.pulse_gap`.
    pub key: String,
    /// Comma-separated values.
    pub values: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub grid: GridSection,
    pub scenario: ScenarioSection,
    pub packet: PacketSection,
    pub detector: DetectorSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub rules: RulesSection,
    #[serde(default)]
    pub trials: TrialsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Parse and fully validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        let message = e.message().to_string();
        match message
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
        {
            Some(key) => Error::UnknownKey {
                key: key.to_string(),
                line,
                column,
            },
            None => Error::Syntax {
                line,
                column,
                message,
            },
        }
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.n_points, self.grid.length, self.grid.origin)
    }

    pub fn packet(&self) -> PacketSpec {
        PacketSpec::new(self.packet.center, self.packet.width, self.packet.momentum)
    }

    /// Scenario with the given detector strength (or the configured one).
    pub fn scenario(&self, strength: Option<f64>) -> ScenarioSpec {
        let strength = strength.or(self.detector.strength).unwrap_or(0.0);
        ScenarioSpec {
            kind: self.scenario.kind,
            packet: self.packet(),
            pulse_gap: self.scenario.pulse_gap,
            detector: DetectorSpec::new(self.detector.center, self.detector.half_width, strength),
            t_final: self.scenario.t_final,
            dt: self.scenario.dt,
            sample_every: self.scenario.sample_every,
        }
    }

    pub fn rules(&self) -> Vec<ReductionRule> {
        let r = &self.rules;
        let eps = r.onset_epsilon;
        let mut out = Vec::new();
        if r.penrose_env {
            out.push(ReductionRule::penrose_env(r.tau_env).with_onset_epsilon(eps));
        }
        if r.penrose_spread {
            out.push(ReductionRule::penrose_spread().with_onset_epsilon(eps));
        }
        if r.current_jump {
            out.push(ReductionRule::current_jump().with_onset_epsilon(eps));
        }
        out
    }

    /// Check every field against the downstream invariants, collecting all
    /// violations.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut push = |field: &str, msg: String| errors.push(FieldError::new(field, msg));

        if self.format_version != FORMAT_VERSION {
            push(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", self.format_version),
            );
        }
        let g = &self.grid;
        if g.n_points < 2 || !g.n_points.is_power_of_two() {
            push("grid.n_points", format!("{} is not a power of two", g.n_points));
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            push("grid.length", format!("{} must be positive", g.length));
        }
        if !g.origin.is_finite() {
            push("grid.origin", "must be finite".into());
        }
        if !self.calibration.enabled && self.detector.strength.is_none() {
            push(
                "detector.strength",
                "required unless calibration.enabled = true".into(),
            );
        }
        if let Some(s) = self.detector.strength {
            if !(s >= 0.0 && s.is_finite()) {
                push("detector.strength", format!("{s} must be non-negative"));
            }
        }
        let c = &self.calibration;
        if c.enabled {
            if !(0.0..1.0).contains(&c.target) {
                push("calibration.target", format!("{} must lie in [0, 1)", c.target));
            }
            if !(c.tolerance > 0.0) {
                push("calibration.tolerance", "must be positive".into());
            }
            if c.max_iter == 0 {
                push("calibration.max_iter", "must be positive".into());
            }
        }
        let r = &self.rules;
        if !(r.penrose_env || r.penrose_spread || r.current_jump) {
            push("rules", "at least one rule must be enabled".into());
        }
        if !(r.tau_env > 0.0 && r.tau_env.is_finite()) {
            push("rules.tau_env", format!("{} must be positive", r.tau_env));
        }
        if !(r.onset_epsilon > 0.0 && r.onset_epsilon < 1.0) {
            push("rules.onset_epsilon", format!("{} must lie in (0, 1)", r.onset_epsilon));
        }
        if self.trials.n_trials == 0 {
            push("trials.n_trials", "must be positive".into());
        }
        // TOML integers are signed 64-bit
        if self.trials.base_seed > i64::MAX as u64 {
            push("trials.base_seed", format!("{} exceeds {}", self.trials.base_seed, i64::MAX));
        }
        if self.output.histogram_bins == 0 {
            push("output.histogram_bins", "must be positive".into());
        }
        for f in self.output.formats.split(',').map(str::trim) {
            if !matches!(f, "csv" | "json" | "svg") {
                push("output.formats", format!("unknown format '{f}'"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.split(',').all(|v| v.trim().is_empty()) {
                push("sweep.values", "no values given".into());
            }
        }

        // geometry only makes sense on a valid grid
        if let Ok(grid) = self.grid() {
            let spec = self.scenario(Some(self.detector.strength.unwrap_or(0.0)));
            if let Err(e) = spec.validate(&grid) {
                errors.extend(e);
            }
            let product = spec.dt * grid.max_kinetic_energy(PARTICLE_MASS);
            if product >= ACCURACY_GUARD {
                errors.push(FieldError::new(
                    "scenario.dt",
                    format!(
                        "dt * max kinetic energy = {product:.4} violates the accuracy guard (< {ACCURACY_GUARD})"
                    ),
                ));
            }
        }

        // the detector check repeats some field-level checks
        let mut seen = std::collections::BTreeSet::new();
        errors.retain(|e| seen.insert(e.field.clone()));
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errors))
        }
    }

    /// Copy with one dotted key replaced, re-validated.
    pub fn with_override(&self, key: &str, value: &str) -> Result<RunConfig> {
        let mut table: toml::Table = toml::from_str(&self.to_config_string()).expect("own output parses");
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (Some(s), f),
            None => (None, key),
        };
        let mut parsed = parse_scalar(value);
        let target = match section {
            Some(s) => table
                .entry(s.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| Error::invalid(key, "not a section"))?,
            None => &mut table,
        };
        if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (target.get(field), &parsed) {
            parsed = toml::Value::Float(*i as f64);
        }
        target.insert(field.to_string(), parsed);
        let text = toml::to_string(&table).expect("table serialises");
        parse_config(&text)
    }
}

fn parse_scalar(value: &str) -> toml::Value {
    let v = value.trim();
    if let Ok(i) = v.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = v.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = v.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(v.to_string())
    }
}
