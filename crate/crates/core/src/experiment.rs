//! Orchestration: calibrate → evolve → reduce → analyse → emit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    current_peaks, detect_zero_current_window, high_current_interval, summarize_batch, BatchSummary,
    WindowReport,
};
use crate::config::{RunConfig, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, snapshots_csv, trials_csv, weights_csv};
use crate::plot::{histogram_chart, line_chart, Series};
use crate::propagator::{run_evolution_with_snapshots, ComponentWeights, EvolutionResult};
use crate::reduction::{ReductionRule, RuleKind, TrialInputs, TrialRecord, ZERO_CURRENT_RATIO};
use crate::scenario::{build_initial_state, calibrate_strength, CalibrationResult, ScenarioKind, ScenarioSpec};
use crate::state::{energy_moments, gaussian_packet, EnergyMoments, PARTICLE_MASS};

/// Capture probability standing in for "probability 1.0" when no
/// calibration target is configured.
pub const CAPTURE_TARGET: f64 = 0.999;
/// KS threshold for the jump model at the default batch size.
pub const KS_LIMIT: f64 = 0.02;
/// Largest tolerated fraction of jump-model collapses between the pulses.
pub const BETWEEN_PULSES_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub calibration: f64,
    pub evolution: f64,
    pub trials: f64,
    pub analysis: f64,
    pub output: f64,
}

#[derive(Debug, Clone)]
pub struct RuleBatch {
    pub rule: ReductionRule,
    pub records: Vec<TrialRecord>,
    pub summary: BatchSummary,
}

/// Everything computed for one configuration, before anything is written.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub config: RunConfig,
    pub scenario: ScenarioSpec,
    pub calibration: Option<CalibrationResult>,
    pub evolution: EvolutionResult,
    /// Free-packet energy moments of the initial state.
    pub moments: EnergyMoments,
    /// Energy moments of a single pulse of the scenario.
    pub pulse_moments: EnergyMoments,
    pub window: WindowReport,
    pub batches: Vec<RuleBatch>,
    pub claims: ClaimReport,
    pub times: PhaseTimes,
}

impl PipelineResult {
    pub fn weights(&self) -> &ComponentWeights {
        &self.evolution.weights
    }

    pub fn batch(&self, kind: RuleKind) -> Option<&RuleBatch> {
        self.batches.iter().find(|b| b.rule.kind == kind)
    }

    /// Times of the two largest current peaks, in order.
    pub fn peak_times(&self) -> Option<(f64, f64)> {
        let peaks = current_peaks(self.weights());
        if peaks.len() < 2 {
            return None;
        }
        let t = &self.weights().times;
        let (a, b) = (t[peaks[0]], t[peaks[1]]);
        Some((a.min(b), a.max(b)))
    }
}

pub fn calibrate(config: &RunConfig) -> Result<Option<CalibrationResult>> {
    if !config.calibration.enabled {
        return Ok(None);
    }
    let grid = config.grid()?;
    let c = &config.calibration;
    calibrate_strength(&config.scenario(Some(0.0)), &grid, c.target, c.tolerance, c.max_iter).map(Some)
}

/// Evolution and reduction trials for a validated configuration.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineResult> {
    config.validate()?;
    let grid = config.grid()?;
    let mut times = PhaseTimes::default();

    let clock = Instant::now();
    let calibration = calibrate(config)?;
    times.calibration = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let scenario = config.scenario(calibration.map(|c| c.strength));
    let initial = build_initial_state(&scenario, &grid)?;
    let evolution = run_evolution_with_snapshots(
        &initial,
        &scenario.detector,
        scenario.t_final,
        scenario.dt,
        scenario.sample_every,
        config.output.snapshot_stride,
    )?;
    let moments = energy_moments(&initial, PARTICLE_MASS)?;
    let pulse_moments = energy_moments(&gaussian_packet(&grid, &scenario.packet.with_weight(1.0))?, PARTICLE_MASS)?;
    times.evolution = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let window = detect_zero_current_window(&evolution.weights, ZERO_CURRENT_RATIO);
    let mut raw = Vec::new();
    for rule in config.rules() {
        let inputs = TrialInputs {
            weights: &evolution.weights,
            rule: &rule,
            moments: Some(&moments),
            window: Some(&window),
        };
        raw.push((rule, inputs.run_batch(config.trials.base_seed, config.trials.n_trials)?));
    }
    times.trials = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut batches = Vec::new();
    for (rule, records) in raw {
        let summary = summarize_batch(&records, &evolution.weights, &window, config.output.histogram_bins)?;
        batches.push(RuleBatch { rule, records, summary });
    }
    let mut result = PipelineResult {
        config: config.clone(),
        scenario,
        calibration,
        evolution,
        moments,
        pulse_moments,
        window,
        batches,
        claims: ClaimReport::default(),
        times,
    };
    result.claims = evaluate_claims(&result);
    result.times.analysis = clock.elapsed().as_secs_f64();
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub statement: String,
    /// Whether the statement is expected to hold in this scenario.
    pub expected: bool,
    pub holds: bool,
    pub status: String,
    pub measured: BTreeMap<String, f64>,
}

impl Claim {
    fn new(id: &str, statement: &str, expected: bool, holds: bool, measured: &[(&str, f64)]) -> Self {
        let status = match (holds, expected) {
            (true, true) => "PASS",
            (false, false) => "FAIL-as-expected",
            (false, true) => "FAIL",
            (true, false) => "PASS-unexpected",
        };
        Self {
            id: id.into(),
            statement: statement.into(),
            expected,
            holds,
            status: status.into(),
            measured: measured.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn as_expected(&self) -> bool {
        self.holds == self.expected
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub format_version: u32,
    pub claims: Vec<Claim>,
}

impl ClaimReport {
    pub fn get(&self, id: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.id == id)
    }

    /// One line per claim.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.claims {
            let measured: Vec<String> = c.measured.iter().map(|(k, v)| format!("{k}={v}")).collect();
            s.push_str(&format!("{:<17} {:<32} {} [{}]\n", c.status, c.id, c.statement, measured.join(" ")));
        }
        s
    }
}

fn evaluate_claims(r: &PipelineResult) -> ClaimReport {
    let w = r.weights();
    let mut claims = Vec::new();
    let target = r.calibration.map_or(CAPTURE_TARGET, |_| r.config.calibration.target);

    let p1_first = w.p_capture[0];
    let monotone = w.p_capture.windows(2).all(|p| p[1] >= p[0] - 1e-8);
    claims.push(Claim::new(
        "capture_starts_at_zero",
        "the capture component is zero at t0 and grows in time",
        true,
        p1_first < 1e-9 && monotone,
        &[("p_capture_first", p1_first), ("monotone", monotone as u8 as f64)],
    ));
    claims.push(Claim::new(
        "capture_probability_one",
        "the particle is captured with probability 1 (at least the target)",
        true,
        w.final_capture() >= target,
        &[("final_capture", w.final_capture()), ("target", target)],
    ));

    let two_pulse = r.scenario.kind == ScenarioKind::TwoPulse;
    if two_pulse {
        claims.push(Claim::new(
            "zero_current_window",
            "there is an interval between the pulses with no capture current",
            true,
            r.window.exists,
            &[
                ("window_start", r.window.window_start),
                ("window_end", r.window.window_end),
                ("window_max_over_peak", r.window.window_max_current / r.window.peak_current),
            ],
        ));
    }

    if let Some(b) = r.batch(RuleKind::PenroseEnv) {
        let f = b.summary.flag_fraction("zero_weight_collapse");
        let t = b.records.first().and_then(|x| x.collapse_time).unwrap_or(f64::NAN);
        claims.push(Claim::new(
            "penrose_env_zero_weight",
            "penrose_env reduces while the capture component is still zero",
            true,
            f == 1.0,
            &[
                ("zero_weight_fraction", f),
                ("collapse_time", t),
                ("p_capture_at_collapse", w.p_capture_at(t)),
            ],
        ));
    }

    if let Some(b) = r.batch(RuleKind::PenroseSpread) {
        let t = b.records.first().and_then(|x| x.collapse_time).unwrap_or(f64::NAN);
        let onset = w.onset_time(b.rule.onset_epsilon).unwrap_or(f64::NAN);
        let ratio = w.current_at(t) / w.peak_current();
        let measured = [
            ("between_pulses_fraction", b.summary.flag_fraction("between_pulses")),
            ("zero_current_fraction", b.summary.flag_fraction("zero_current_collapse")),
            ("onset_time", onset),
            ("inverse_energy_spread", 1.0 / r.moments.energy_spread),
            ("collapse_time", t),
            ("current_over_peak_at_collapse", ratio),
            ("p_capture_at_collapse", w.p_capture_at(t)),
            ("window_start", r.window.window_start),
            ("window_end", r.window.window_end),
        ];
        if two_pulse {
            claims.push(Claim::new(
                "penrose_spread_between_pulses",
                "penrose_spread collapses between pulses",
                true,
                b.summary.flag_fraction("between_pulses") == 1.0,
                &measured,
            ));
        } else {
            let (lo, hi) = high_current_interval(w, ZERO_CURRENT_RATIO);
            let unflagged = b.records.iter().all(|x| x.flags.is_empty());
            claims.push(Claim::new(
                "penrose_spread_concordant",
                "penrose_spread collapses while current flows, with no flags",
                true,
                unflagged && t >= lo && t <= hi,
                &[measured.as_slice(), &[("high_current_start", lo), ("high_current_end", hi)]].concat(),
            ));
        }
    }

    if let Some(b) = r.batch(RuleKind::CurrentJump) {
        let n = b.summary.n_trials as f64;
        let p = w.final_capture();
        let sigma = (p * (1.0 - p) / n).sqrt();
        let ks = b.summary.ks_distance.unwrap_or(f64::NAN);
        let dev = (b.summary.capture_fraction - p).abs();
        claims.push(Claim::new(
            "current_jump_born_statistics",
            "current_jump reproduces the capture-time distribution and capture probability",
            true,
            ks < KS_LIMIT && dev <= 3.0 * sigma.max(0.5 / n),
            &[("ks_distance", ks), ("capture_fraction", b.summary.capture_fraction), ("final_capture", p)],
        ));
        if two_pulse {
            let f = b.summary.flag_fraction("between_pulses");
            claims.push(Claim::new(
                "current_jump_between_pulses",
                "current_jump collapses between pulses",
                false,
                f >= BETWEEN_PULSES_LIMIT,
                &[("between_pulses_fraction", f)],
            ));
        }
    }

    ClaimReport {
        format_version: FORMAT_VERSION,
        claims,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub scenario: ScenarioSpec,
    pub calibration: Option<CalibrationResult>,
    pub energy_moments: EnergyMoments,
    pub pulse_energy_moments: EnergyMoments,
    pub final_capture: f64,
    pub peak_current: f64,
    pub peak_times: Option<(f64, f64)>,
    pub window: WindowReport,
    pub batches: Vec<BatchSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub calibration: Option<CalibrationResult>,
    pub wall_times: PhaseTimes,
    pub files: Vec<FileEntry>,
}

/// Which artefacts to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emit {
    Everything,
    ClaimsOnly,
}

pub fn summary_of(r: &PipelineResult) -> RunSummary {
    RunSummary {
        format_version: FORMAT_VERSION,
        scenario: r.scenario,
        calibration: r.calibration,
        energy_moments: r.moments,
        pulse_energy_moments: r.pulse_moments,
        final_capture: r.weights().final_capture(),
        peak_current: r.weights().peak_current(),
        peak_times: r.peak_times(),
        window: r.window,
        batches: r.batches.iter().map(|b| b.summary.clone()).collect(),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

fn artefacts(r: &PipelineResult, emit: Emit) -> Vec<(String, String)> {
    let out = &r.config.output;
    let mut files = Vec::new();
    if out.wants("json") {
        files.push(("claims.json".into(), json(&r.claims)));
    }
    files.push(("claims.txt".into(), r.claims.to_text()));
    if emit == Emit::ClaimsOnly {
        return files;
    }
    if out.wants("csv") {
        files.push(("weights.csv".into(), weights_csv(r.weights())));
        if !r.evolution.snapshots.is_empty() {
            files.push((
                "snapshots.csv".into(),
                snapshots_csv(r.evolution.final_state.grid(), &r.evolution.snapshots),
            ));
        }
        for b in &r.batches {
            files.push((format!("trials_{}.csv", b.rule.kind), trials_csv(&b.records)));
        }
    }
    if out.wants("json") {
        files.push(("summary.json".into(), json(&summary_of(r))));
    }
    if out.wants("svg") {
        let w = r.weights();
        let peak = w.peak_current().max(f64::MIN_POSITIVE);
        let scaled: Vec<f64> = w.current.iter().map(|j| j / peak).collect();
        files.push((
            "weights.svg".into(),
            line_chart(
                "component weights and capture current",
                "time",
                &w.times,
                &[
                    Series { label: "P0 (no capture)", ys: &w.p_no_capture },
                    Series { label: "P1 (capture)", ys: &w.p_capture },
                    Series { label: "J / peak J", ys: &scaled },
                ],
            ),
        ));
        for b in &r.batches {
            files.push((
                format!("histogram_{}.svg", b.rule.kind),
                histogram_chart(
                    &format!("{} collapse times", b.rule.kind),
                    "time",
                    &b.summary.collapse_time_histogram,
                ),
            ));
        }
    }
    files
}

/// Write `files` into `dir`. On any failure, files already written are
/// removed.
fn write_all(dir: &Path, files: &[(String, String)]) -> Result<Vec<FileEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut entries = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(path, e));
        }
        written.push(path);
        entries.push(FileEntry {
            name: name.clone(),
            bytes: body.len(),
            sha256: sha256_hex(body.as_bytes()),
        });
    }
    Ok(entries)
}

/// Write the artefacts of a computed pipeline, manifest last.
pub fn emit(r: &PipelineResult, dir: &Path, emit: Emit) -> Result<RunManifest> {
    let clock = Instant::now();
    let files = artefacts(r, emit);
    let entries = write_all(dir, &files)?;
    let mut times = r.times.clone();
    times.output = clock.elapsed().as_secs_f64();
    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        config: r.config.clone(),
        calibration: r.calibration,
        wall_times: times,
        files: entries,
    };
    let path = dir.join("manifest.json");
    if let Err(e) = fs::write(&path, json(&manifest)) {
        for f in &manifest.files {
            let _ = fs::remove_file(dir.join(&f.name));
        }
        return Err(Error::io(path, e));
    }
    Ok(manifest)
}

pub fn run_experiment(config: &RunConfig, dir: &Path) -> Result<RunManifest> {
    let result = run_pipeline(config)?;
    emit(&result, dir, Emit::Everything)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub strength: f64,
    pub final_capture: f64,
    pub energy_spread: f64,
    pub peak_separation: Option<f64>,
    pub window_exists: bool,
    pub window_start: f64,
    pub window_end: f64,
    pub between_pulses: BTreeMap<String, f64>,
}

fn sweep_csv(key: &str, rows: &[SweepRow]) -> String {
    let rules: Vec<String> = RuleKind::ALL.iter().map(|k| k.to_string()).collect();
    let mut s = format!("# format_version={}\n", crate::io::CSV_FORMAT_VERSION);
    s.push_str(&format!(
        "{key},strength,final_capture,energy_spread,peak_separation,window_exists,window_start,window_end"
    ));
    for r in &rules {
        s.push_str(&format!(",{r}_between_pulses"));
    }
    s.push('\n');
    for row in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            row.value,
            row.strength,
            row.final_capture,
            row.energy_spread,
            row.peak_separation.map(|v| v.to_string()).unwrap_or_default(),
            row.window_exists,
            row.window_start,
            row.window_end
        ));
        for r in &rules {
            s.push(',');
            if let Some(v) = row.between_pulses.get(r) {
                s.push_str(&v.to_string());
            }
        }
        s.push('\n');
    }
    s
}

/// Run the pipeline once per value of `key`, each into its own
/// subdirectory, and tabulate the results in `sweep.csv`.
pub fn run_sweep(config: &RunConfig, key: &str, values: &[String], dir: &Path) -> Result<Vec<SweepRow>> {
    // validate every variant before computing anything
    let variants = values
        .iter()
        .map(|v| config.with_override(key, v).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (value, variant) in variants {
        let result = run_pipeline(&variant)?;
        emit(&result, &dir.join(format!("{key}={value}")), Emit::Everything)?;
        rows.push(SweepRow {
            value,
            strength: result.scenario.detector.strength,
            final_capture: result.weights().final_capture(),
            energy_spread: result.moments.energy_spread,
            peak_separation: result.peak_times().map(|(a, b)| b - a),
            window_exists: result.window.exists,
            window_start: result.window.window_start,
            window_end: result.window.window_end,
            between_pulses: result
                .batches
                .iter()
                .map(|b| (b.rule.kind.to_string(), b.summary.flag_fraction("between_pulses")))
                .collect(),
        });
    }
    write_all(dir, &[("sweep.csv".into(), sweep_csv(key, &rows))])?;
    Ok(rows)
}

/// Reduction trials on an existing weights record.
pub fn run_mc(
    weights: &ComponentWeights,
    rule: &ReductionRule,
    moments: Option<&EnergyMoments>,
    base_seed: u64,
    n_trials: usize,
    bins: usize,
) -> Result<(Vec<TrialRecord>, WindowReport, BatchSummary)> {
    if n_trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    let window = detect_zero_current_window(weights, ZERO_CURRENT_RATIO);
    let inputs = TrialInputs {
        weights,
        rule,
        moments,
        window: Some(&window),
    };
    let records = inputs.run_batch(base_seed, n_trials)?;
    let summary = summarize_batch(&records, weights, &window, bins)?;
    Ok((records, window, summary))
}

pub fn write_mc(dir: &Path, records: &[TrialRecord], window: &WindowReport, summary: &BatchSummary) -> Result<()> {
    #[derive(Serialize)]
    struct McSummary<'a> {
        format_version: u32,
        window: &'a WindowReport,
        batch: &'a BatchSummary,
    }
    let files = vec![
        (format!("trials_{}.csv", summary.rule), trials_csv(records)),
        (
            format!("summary_{}.json", summary.rule),
            json(&McSummary {
                format_version: FORMAT_VERSION,
                window,
                batch: summary,
            }),
        ),
    ];
    write_all(dir, &files).map(|_| ())
}
