//! Aggregation over trial batches: current peaks and the zero-current window,
//! KS distance against the recorded capture curve, flag tallies and
//! histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::ComponentWeights;
use crate::reduction::{Component, Flags, RuleKind, TrialRecord};

/// Peaks below this fraction of the global maximum are ripple.
pub const PEAK_FLOOR: f64 = 0.1;
/// Minimum distance between accepted peaks, in samples.
pub const PEAK_SEPARATION: usize = 10;
pub const DEFAULT_HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_start: f64,
    pub window_end: f64,
    pub peak_current: f64,
    pub window_max_current: f64,
    pub exists: bool,
}

impl WindowReport {
    fn absent(peak_current: f64) -> Self {
        Self {
            window_start: 0.0,
            window_end: 0.0,
            peak_current,
            window_max_current: 0.0,
            exists: false,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.exists && t >= self.window_start && t <= self.window_end
    }

    pub fn length(&self) -> f64 {
        if self.exists {
            self.window_end - self.window_start
        } else {
            0.0
        }
    }
}

/// Indices of current peaks, largest first: local maxima above
/// `PEAK_FLOOR` of the global maximum, greedily thinned so that accepted
/// peaks are at least `PEAK_SEPARATION` samples apart.
pub fn current_peaks(weights: &ComponentWeights) -> Vec<usize> {
    let j = &weights.current;
    let peak = weights.peak_current();
    if !(peak > 0.0) {
        return Vec::new();
    }
    let n = j.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || j[i] >= j[i - 1];
            let right = i + 1 == n || j[i] > j[i + 1];
            left && right && j[i] >= PEAK_FLOOR * peak
        })
        .collect();
    candidates.sort_by(|&a, &b| j[b].total_cmp(&j[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= PEAK_SEPARATION) {
            accepted.push(c);
        }
    }
    accepted
}

/// Longest run of samples strictly between the two largest current peaks
/// where J < `threshold_ratio` · peak J.
pub fn detect_zero_current_window(weights: &ComponentWeights, threshold_ratio: f64) -> WindowReport {
    let peak = weights.peak_current();
    let peaks = current_peaks(weights);
    if peaks.len() < 2 {
        return WindowReport::absent(peak);
    }
    let (a, b) = (peaks[0].min(peaks[1]), peaks[0].max(peaks[1]));
    let threshold = threshold_ratio * peak;
    let j = &weights.current;

    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for i in (a + 1)..b {
        if j[i] < threshold {
            let s = *run_start.get_or_insert(i);
            if best.is_none_or(|(bs, be)| i - s > be - bs) {
                best = Some((s, i));
            }
        } else {
            run_start = None;
        }
    }
    let Some((s, e)) = best else {
        return WindowReport::absent(peak);
    };
    let window_max = j[s..=e].iter().copied().fold(0.0, f64::max);
    let (start, end) = (weights.times[s], weights.times[e]);
    WindowReport {
        window_start: start,
        window_end: end,
        peak_current: peak,
        window_max_current: window_max,
        exists: window_max < threshold && end > start,
    }
}

/// Contiguous interval around the global current peak where
/// J ≥ `threshold_ratio` · peak J.
pub fn high_current_interval(weights: &ComponentWeights, threshold_ratio: f64) -> (f64, f64) {
    let j = &weights.current;
    let p = weights.peak_index();
    let threshold = threshold_ratio * j[p];
    let mut lo = p;
    while lo > 0 && j[lo - 1] >= threshold {
        lo -= 1;
    }
    let mut hi = p;
    while hi + 1 < j.len() && j[hi + 1] >= threshold {
        hi += 1;
    }
    (weights.times[lo], weights.times[hi])
}

/// P₁(t) / P₁(t_final), linearly interpolated.
pub fn capture_time_cdf(weights: &ComponentWeights, t: f64) -> f64 {
    weights.p_capture_at(t) / weights.final_capture()
}

/// Sup distance between the empirical CDF of `samples` and the normalised
/// capture curve.
pub fn ks_distance(samples: &[f64], cdf: &ComponentWeights) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(cdf.final_capture() > 0.0) {
        return Err(Error::NoCapture);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = capture_time_cdf(cdf, x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub rule: RuleKind,
    pub n_trials: usize,
    pub n_collapsed: usize,
    pub capture_fraction: f64,
    pub ks_distance: Option<f64>,
    pub flag_counts: BTreeMap<String, usize>,
    /// (bin_start, bin_end, count)
    pub collapse_time_histogram: Vec<(f64, f64, usize)>,
}

impl BatchSummary {
    pub fn flag_fraction(&self, flag: &str) -> f64 {
        if self.n_trials == 0 {
            return 0.0;
        }
        *self.flag_counts.get(flag).unwrap_or(&0) as f64 / self.n_trials as f64
    }
}

/// Tally one rule's batch. `between_pulses` is recomputed against `window`.
pub fn summarize_batch(
    records: &[TrialRecord],
    weights: &ComponentWeights,
    window: &WindowReport,
    bins: usize,
) -> Result<BatchSummary> {
    let first = records.first().ok_or(Error::EmptySamples)?;
    if let Some(other) = records.iter().find(|r| r.rule != first.rule) {
        return Err(Error::MixedRules(first.rule.to_string(), other.rule.to_string()));
    }
    let rule = first.rule;

    let mut flag_counts: BTreeMap<String, usize> =
        Flags::NAMES.iter().map(|n| (n.to_string(), 0)).collect();
    let mut captured_times = Vec::new();
    let mut collapse_times = Vec::new();
    let mut captured = 0;
    for r in records {
        let mut flags = r.flags;
        flags.between_pulses = r.collapse_time.is_some_and(|t| window.contains(t));
        for name in flags.names() {
            *flag_counts.get_mut(name).expect("known flag") += 1;
        }
        if r.chosen == Component::Capture {
            captured += 1;
            if let Some(t) = r.collapse_time {
                captured_times.push(t);
            }
        }
        if let Some(t) = r.collapse_time {
            collapse_times.push(t);
        }
    }

    let ks = if rule == RuleKind::CurrentJump && !captured_times.is_empty() {
        Some(ks_distance(&captured_times, weights)?)
    } else {
        None
    };

    Ok(BatchSummary {
        rule,
        n_trials: records.len(),
        n_collapsed: collapse_times.len(),
        capture_fraction: captured as f64 / records.len() as f64,
        ks_distance: ks,
        flag_counts,
        collapse_time_histogram: histogram(&collapse_times, weights.t_start(), weights.t_end(), bins),
    })
}

/// Uniform bins over [lo, hi]; the last bin is closed. Empty input gives an
/// empty histogram.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 || !(hi > lo) {
        return Vec::new();
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}
