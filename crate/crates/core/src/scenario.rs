//! The single-pulse and two-pulse setups, and calibration of the detector
//! strength so that a single pulse is captured with a given probability.
//!
//! The beam splitter is not simulated. Its output, two equal-weight pulses
//! travelling in line toward the detector with a controllable delay, is
//! built directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::propagator::{run_evolution, DetectorSpec};
use crate::state::{gaussian_packet, superpose, Grid1D, PacketSpec, WaveFunction};

/// Minimum initial distance, in packet widths, between a pulse centre and
/// the nearest detector edge.
pub const DETECTOR_CLEARANCE: f64 = 6.0;

/// Minimum pulse separation, in packet widths.
pub const MIN_PULSE_SEPARATION: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SinglePulse,
    TwoPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Shape of each pulse. For two pulses this is the leading one; the
    /// trailing pulse sits `pulse_gap` further upstream.
    pub packet: PacketSpec,
    pub pulse_gap: f64,
    pub detector: DetectorSpec,
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
}

impl ScenarioSpec {
    /// Pulse shapes with their weights as they enter the initial state.
    pub fn pulses(&self) -> Vec<PacketSpec> {
        match self.kind {
            ScenarioKind::SinglePulse => vec![self.packet.with_weight(1.0)],
            ScenarioKind::TwoPulse => {
                let upstream = -self.packet.momentum.signum();
                let lead = self.packet.with_weight(0.5);
                let mut trail = lead;
                trail.center += upstream * self.pulse_gap;
                vec![lead, trail]
            }
        }
    }

    /// Arrival-time gap between the two pulses, pulse_gap / (p₀/m).
    pub fn arrival_gap(&self) -> f64 {
        match self.kind {
            ScenarioKind::SinglePulse => 0.0,
            ScenarioKind::TwoPulse => self.pulse_gap / self.packet.group_velocity().abs(),
        }
    }

    /// The single-pulse version of this scenario, run long enough for the
    /// leading pulse to transit the detector.
    pub fn single_pulse_probe(&self) -> ScenarioSpec {
        ScenarioSpec {
            kind: ScenarioKind::SinglePulse,
            pulse_gap: 0.0,
            t_final: self.t_final - self.arrival_gap(),
            ..*self
        }
    }

    pub fn validate(&self, grid: &Grid1D) -> std::result::Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if let Err(e) = self.packet.validate(grid) {
            errors.extend(e);
        }
        if let Err(e) = self.detector.validate(grid) {
            errors.extend(e);
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            errors.push(FieldError::new("scenario.dt", "must be positive"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            errors.push(FieldError::new("scenario.t_final", "must be positive"));
        }
        if self.sample_every == 0 {
            errors.push(FieldError::new("scenario.sample_every", "must be positive"));
        }
        if self.packet.momentum == 0.0 {
            errors.push(FieldError::new(
                "packet.momentum",
                "must be nonzero and directed toward the detector",
            ));
        }
        if self.kind == ScenarioKind::TwoPulse
            && !(self.pulse_gap >= MIN_PULSE_SEPARATION * self.packet.width)
        {
            errors.push(FieldError::new(
                "scenario.pulse_gap",
                format!(
                    "{} lets the pulses overlap (needs >= {} * width = {})",
                    self.pulse_gap,
                    MIN_PULSE_SEPARATION,
                    MIN_PULSE_SEPARATION * self.packet.width
                ),
            ));
        }
        let clearance = DETECTOR_CLEARANCE * self.packet.width;
        for (i, p) in self.pulses().iter().enumerate() {
            let toward = (self.detector.center - p.center) * self.packet.momentum > 0.0;
            let distance = (p.center - self.detector.center).abs() - self.detector.half_width;
            if !toward || distance < clearance {
                errors.push(FieldError::new(
                    format!("scenario.pulse[{i}]"),
                    format!(
                        "pulse at {} must start upstream of the detector with its centre at least {} from the detector edge",
                        p.center, clearance
                    ),
                ));
            }
            if p.center <= grid.origin() || p.center >= grid.end() {
                errors.push(FieldError::new(
                    format!("scenario.pulse[{i}]"),
                    format!("pulse at {} lies outside the domain", p.center),
                ));
            }
        }
        if self.kind == ScenarioKind::TwoPulse && !(self.t_final > self.arrival_gap()) {
            errors.push(FieldError::new(
                "scenario.t_final",
                "must exceed the arrival gap between the pulses",
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

pub fn build_initial_state(spec: &ScenarioSpec, grid: &Grid1D) -> Result<WaveFunction> {
    spec.validate(grid).map_err(Error::Invalid)?;
    let mut state = WaveFunction::zeros(*grid, 0.0);
    for pulse in spec.pulses() {
        state = superpose(&state, &gaussian_packet(grid, &pulse)?)?;
    }
    // the two halves have a cross-term of order exp(-gap²/8σ²); fold it out
    state.normalized_to(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub strength: f64,
    pub achieved_capture: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// Final single-pulse capture probability at detector strength `strength`.
pub fn probe_capture(spec: &ScenarioSpec, grid: &Grid1D, strength: f64) -> Result<f64> {
    let probe = ScenarioSpec {
        detector: spec.detector.with_strength(strength),
        ..spec.single_pulse_probe()
    };
    let psi = build_initial_state(&probe, grid)?;
    let run = run_evolution(&psi, &probe.detector, probe.t_final, probe.dt, probe.sample_every)?;
    Ok(run.weights.final_capture())
}

/// Geometric bracketing followed by bisection on the detector strength so
/// that the single-pulse capture reaches `target`. Capture falls again for
/// very strong absorbers (reflection), so only the rising branch is searched.
pub fn calibrate_strength(
    spec: &ScenarioSpec,
    grid: &Grid1D,
    target: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<CalibrationResult> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::invalid("calibration.target", format!("{target} must lie in [0, 1)")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::invalid("calibration.tolerance", "must be positive"));
    }
    if target == 0.0 {
        return Ok(CalibrationResult {
            strength: 0.0,
            achieved_capture: 0.0,
            iterations: 0,
            bracket: (0.0, 0.0),
        });
    }

    // 2Γh/v = 1 removes ~63% of a slow packet; a natural first guess
    let speed = spec.packet.group_velocity().abs();
    let mut lo = 0.0;
    let mut hi = speed / (2.0 * spec.detector.half_width);
    let mut cap_hi = probe_capture(spec, grid, hi)?;
    let mut iterations = 1;
    while cap_hi < target {
        if iterations >= max_iter {
            return Err(Error::TargetUnreachable {
                target,
                best: cap_hi,
                strength: hi,
            });
        }
        let next = 2.0 * hi;
        let cap_next = probe_capture(spec, grid, next)?;
        iterations += 1;
        if cap_next <= cap_hi {
            // past the maximum of the capture curve
            return Err(Error::TargetUnreachable {
                target,
                best: cap_hi,
                strength: hi,
            });
        }
        lo = hi;
        hi = next;
        cap_hi = cap_next;
    }

    while cap_hi - target > tolerance && iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        let cap_mid = probe_capture(spec, grid, mid)?;
        iterations += 1;
        if cap_mid >= target {
            hi = mid;
            cap_hi = cap_mid;
        } else {
            lo = mid;
        }
    }

    Ok(CalibrationResult {
        strength: hi,
        achieved_capture: cap_hi,
        iterations,
        bracket: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::build_grid;

    fn small() -> (Grid1D, ScenarioSpec) {
        let grid = build_grid(2048, 800.0, -400.0).unwrap();
        let spec = ScenarioSpec {
            kind: ScenarioKind::TwoPulse,
            packet: PacketSpec::new(-50.0, 4.0, 3.0),
            pulse_gap: 80.0 * 4.0,
            detector: DetectorSpec::new(0.0, 15.0, 0.5),
            t_final: 150.0,
            dt: 0.01,
            sample_every: 4,
        };
        (grid, spec)
    }

    #[test]
    fn single_pulse_state_is_normalised() {
        let (grid, spec) = small();
        let single = ScenarioSpec {
            kind: ScenarioKind::SinglePulse,
            ..spec
        };
        let psi = build_initial_state(&single, &grid).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_pulse_halves_are_disjoint() {
        let (grid, spec) = small();
        let psi = build_initial_state(&spec, &grid).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        let pulses = spec.pulses();
        assert_eq!(pulses[1].center, -50.0 - 320.0);
        let a = gaussian_packet(&grid, &pulses[0]).unwrap();
        let b = gaussian_packet(&grid, &pulses[1]).unwrap();
        assert!((a.norm_sqr() - 0.5).abs() < 1e-6);
        assert!((b.norm_sqr() - 0.5).abs() < 1e-6);
        assert!(a.inner(&b).unwrap().norm() < 1e-10);
    }

    #[test]
    fn rejects_pulse_on_detector() {
        let (grid, mut spec) = small();
        spec.packet.center = -10.0;
        let err = build_initial_state(&spec, &grid).unwrap_err();
        assert!(err.to_string().contains("scenario.pulse[0]"));
    }

    #[test]
    fn rejects_overlapping_pulses() {
        let (grid, mut spec) = small();
        spec.pulse_gap = 10.0;
        let err = build_initial_state(&spec, &grid).unwrap_err();
        assert!(err.to_string().contains("scenario.pulse_gap"));
    }

    #[test]
    fn rejects_pulse_moving_away() {
        let (grid, mut spec) = small();
        spec.packet.momentum = -3.0;
        assert!(build_initial_state(&spec, &grid).is_err());
    }

    #[test]
    fn zero_target_turns_detector_off() {
        let (grid, spec) = small();
        let cal = calibrate_strength(&spec, &grid, 0.0, 1e-3, 10).unwrap();
        assert_eq!(cal.strength, 0.0);
        assert_eq!(cal.achieved_capture, 0.0);
    }

    #[test]
    fn calibration_hits_target_on_rising_branch() {
        let (grid, spec) = small();
        let cal = calibrate_strength(&spec, &grid, 0.99, 2e-3, 40).unwrap();
        assert!(cal.achieved_capture >= 0.99);
        assert!(cal.achieved_capture <= 0.99 + 2e-3);
        assert!(cal.bracket.0 <= cal.strength && cal.strength == cal.bracket.1);
        let half = probe_capture(&spec, &grid, cal.strength / 2.0).unwrap();
        assert!(half < cal.achieved_capture);
    }

    #[test]
    fn unreachable_target_reports_best() {
        let (grid, spec) = small();
        match calibrate_strength(&spec, &grid, 0.99, 1e-3, 2) {
            Err(Error::TargetUnreachable { best, .. }) => assert!(best < 0.99),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }
}
