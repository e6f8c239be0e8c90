//! State-reduction timing rules and per-trial collapse outcomes.
//!
//! * `penrose_env`: deadline τ_env after the start of the record, with τ_env
//!   an externally supplied stand-in for ℏ/ΔE of the environments.
//! * `penrose_spread`: deadline 1/ΔE after the first instant a capture
//!   branch exists, ΔE being the energy spread of the free packet.
//! * `current_jump`: collapse into the capture branch as a point process
//!   driven by the capture current, sampled by inverting P₁(t).
//!
//! The two deadline rules collapse once at a fixed time and draw the outcome
//! from the Born weights at that instant. The jump rule is random in time.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::WindowReport;
use crate::error::{Error, Result};
use crate::propagator::ComponentWeights;
use crate::state::EnergyMoments;

pub const DEFAULT_TAU_ENV: f64 = 1e-6;
pub const DEFAULT_ONSET_EPSILON: f64 = 1e-9;
/// J below this fraction of the peak current counts as no current.
pub const ZERO_CURRENT_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    PenroseEnv,
    PenroseSpread,
    CurrentJump,
}

impl RuleKind {
    pub const ALL: [RuleKind; 3] = [RuleKind::PenroseEnv, RuleKind::PenroseSpread, RuleKind::CurrentJump];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleKind::PenroseEnv => "penrose_env",
            RuleKind::PenroseSpread => "penrose_spread",
            RuleKind::CurrentJump => "current_jump",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "rule",
                    format!("unknown rule '{s}' (expected penrose_env, penrose_spread or current_jump)"),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionRule {
    pub kind: RuleKind,
    pub tau_env: Option<f64>,
    pub onset_epsilon: f64,
}

impl ReductionRule {
    pub fn penrose_env(tau_env: f64) -> Self {
        Self {
            kind: RuleKind::PenroseEnv,
            tau_env: Some(tau_env),
            onset_epsilon: DEFAULT_ONSET_EPSILON,
        }
    }

    pub fn penrose_spread() -> Self {
        Self {
            kind: RuleKind::PenroseSpread,
            tau_env: None,
            onset_epsilon: DEFAULT_ONSET_EPSILON,
        }
    }

    pub fn current_jump() -> Self {
        Self {
            kind: RuleKind::CurrentJump,
            tau_env: None,
            onset_epsilon: DEFAULT_ONSET_EPSILON,
        }
    }

    pub fn with_onset_epsilon(mut self, epsilon: f64) -> Self {
        self.onset_epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.tau_env) {
            (RuleKind::PenroseEnv, Some(t)) if t > 0.0 && t.is_finite() => {}
            (RuleKind::PenroseEnv, _) => {
                return Err(Error::invalid("rules.tau_env", "penrose_env needs a positive tau_env"))
            }
            (_, Some(_)) => {
                return Err(Error::invalid("rules.tau_env", "only penrose_env takes tau_env"))
            }
            _ => {}
        }
        if !(self.onset_epsilon > 0.0 && self.onset_epsilon < 1.0) {
            return Err(Error::invalid("rules.onset_epsilon", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    NoCapture,
    Capture,
    /// A deadline rule whose deadline fell beyond the end of the record.
    Unresolved,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::NoCapture => "no_capture",
            Component::Capture => "capture",
            Component::Unresolved => "unresolved",
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_capture" => Ok(Component::NoCapture),
            "capture" => Ok(Component::Capture),
            "unresolved" => Ok(Component::Unresolved),
            _ => Err(Error::invalid("chosen", format!("unknown component '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub zero_weight_collapse: bool,
    pub zero_current_collapse: bool,
    pub between_pulses: bool,
}

impl Flags {
    pub const NAMES: [&'static str; 3] = ["zero_weight_collapse", "zero_current_collapse", "between_pulses"];

    pub fn names(&self) -> Vec<&'static str> {
        let set = [self.zero_weight_collapse, self.zero_current_collapse, self.between_pulses];
        Self::NAMES
            .iter()
            .zip(set)
            .filter_map(|(n, on)| on.then_some(*n))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.names().is_empty()
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join("|"))
    }
}

impl FromStr for Flags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut flags = Flags::default();
        for name in s.split('|').filter(|n| !n.is_empty()) {
            match name {
                "zero_weight_collapse" => flags.zero_weight_collapse = true,
                "zero_current_collapse" => flags.zero_current_collapse = true,
                "between_pulses" => flags.between_pulses = true,
                _ => return Err(Error::invalid("flags", format!("unknown flag '{name}'"))),
            }
        }
        Ok(flags)
    }
}

/// One stochastic reduction outcome. When no collapse happens inside the
/// record, `p_capture_at_collapse` and `current_at_collapse` hold the values
/// at the end of the record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub rule: RuleKind,
    pub collapse_time: Option<f64>,
    pub chosen: Component,
    pub p_capture_at_collapse: f64,
    pub current_at_collapse: f64,
    pub flags: Flags,
    pub seed: u64,
}

fn uniform(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).sample(Open01)
}

pub(crate) fn collapse_flags(
    time: f64,
    p_capture: f64,
    current: f64,
    chosen: Component,
    weights: &ComponentWeights,
    rule: &ReductionRule,
    window: Option<&WindowReport>,
) -> Flags {
    Flags {
        zero_weight_collapse: p_capture < rule.onset_epsilon,
        zero_current_collapse: chosen == Component::Capture
            && current < ZERO_CURRENT_RATIO * weights.peak_current(),
        between_pulses: window.is_some_and(|w| w.contains(time)),
    }
}

fn expect_kind(rule: &ReductionRule, kind: RuleKind) -> Result<()> {
    if rule.kind != kind {
        return Err(Error::invalid(
            "rule",
            format!("expected a {kind} rule, got {}", rule.kind),
        ));
    }
    Ok(())
}

/// Deadline of the environmental reading: τ_env after the start of the
/// record, clamped to the first sample when τ_env is below the sample
/// interval. `None` when the deadline lies beyond the record.
pub fn collapse_time_env(weights: &ComponentWeights, rule: &ReductionRule) -> Result<Option<f64>> {
    expect_kind(rule, RuleKind::PenroseEnv)?;
    rule.validate()?;
    let tau = rule.tau_env.expect("validated");
    let t0 = weights.t_start();
    if tau < weights.sample_interval() {
        return Ok(Some(t0));
    }
    let t = t0 + tau;
    Ok((t <= weights.t_end()).then_some(t))
}

/// Deadline of the energy-spread reading: t_onset + 1/ΔE, where t_onset is
/// the first sample with P₁ above the rule's onset threshold.
pub fn collapse_time_spread(
    weights: &ComponentWeights,
    moments: &EnergyMoments,
    rule: &ReductionRule,
) -> Result<Option<f64>> {
    expect_kind(rule, RuleKind::PenroseSpread)?;
    rule.validate()?;
    if !(moments.energy_spread > 0.0) {
        return Ok(None);
    }
    let Some(onset) = weights.onset_time(rule.onset_epsilon) else {
        return Ok(None);
    };
    let t = onset + 1.0 / moments.energy_spread;
    Ok((t <= weights.t_end()).then_some(t))
}

/// Inverse-CDF draw of the capture time: the first t with P₁(t) ≥ u.
pub fn sample_jump_collapse(
    weights: &ComponentWeights,
    rule: &ReductionRule,
    window: Option<&WindowReport>,
    seed: u64,
) -> TrialRecord {
    let u = uniform(seed);
    let crossing = if u > weights.final_capture() {
        None
    } else {
        weights.first_crossing(u)
    };
    match crossing {
        None => TrialRecord {
            rule: rule.kind,
            collapse_time: None,
            chosen: Component::NoCapture,
            p_capture_at_collapse: weights.final_capture(),
            current_at_collapse: *weights.current.last().expect("non-empty record"),
            flags: Flags::default(),
            seed,
        },
        Some(t) => {
            let p = weights.p_capture_at(t);
            let j = weights.current_at(t);
            TrialRecord {
                rule: rule.kind,
                collapse_time: Some(t),
                chosen: Component::Capture,
                p_capture_at_collapse: p,
                current_at_collapse: j,
                flags: collapse_flags(t, p, j, Component::Capture, weights, rule, window),
                seed,
            }
        }
    }
}

/// Pick a branch with the Born weights at `collapse_time`.
pub fn resolve_outcome(
    collapse_time: Option<f64>,
    weights: &ComponentWeights,
    rule: &ReductionRule,
    window: Option<&WindowReport>,
    seed: u64,
) -> TrialRecord {
    let Some(t) = collapse_time else {
        return TrialRecord {
            rule: rule.kind,
            collapse_time: None,
            chosen: Component::Unresolved,
            p_capture_at_collapse: weights.final_capture(),
            current_at_collapse: *weights.current.last().expect("non-empty record"),
            flags: Flags::default(),
            seed,
        };
    };
    let p = weights.p_capture_at(t);
    let j = weights.current_at(t);
    let chosen = if uniform(seed) < p {
        Component::Capture
    } else {
        Component::NoCapture
    };
    TrialRecord {
        rule: rule.kind,
        collapse_time: Some(t),
        chosen,
        p_capture_at_collapse: p,
        current_at_collapse: j,
        flags: collapse_flags(t, p, j, chosen, weights, rule, window),
        seed,
    }
}

/// Everything a batch of trials needs besides the seeds.
#[derive(Debug, Clone, Copy)]
pub struct TrialInputs<'a> {
    pub weights: &'a ComponentWeights,
    pub rule: &'a ReductionRule,
    /// Free-packet moments; required by `penrose_spread`.
    pub moments: Option<&'a EnergyMoments>,
    pub window: Option<&'a WindowReport>,
}

impl TrialInputs<'_> {
    /// Deterministic collapse time of the deadline rules, `None` for the
    /// jump rule.
    fn deadline(&self) -> Result<Option<f64>> {
        match self.rule.kind {
            RuleKind::PenroseEnv => collapse_time_env(self.weights, self.rule),
            RuleKind::PenroseSpread => {
                let moments = self.moments.ok_or_else(|| {
                    Error::invalid("rules.penrose_spread", "energy moments of the free packet are required")
                })?;
                collapse_time_spread(self.weights, moments, self.rule)
            }
            RuleKind::CurrentJump => Ok(None),
        }
    }

    pub fn run_trial(&self, seed: u64) -> Result<TrialRecord> {
        let deadline = self.deadline()?;
        Ok(self.trial_with_deadline(deadline, seed))
    }

    fn trial_with_deadline(&self, deadline: Option<f64>, seed: u64) -> TrialRecord {
        match self.rule.kind {
            RuleKind::CurrentJump => sample_jump_collapse(self.weights, self.rule, self.window, seed),
            _ => resolve_outcome(deadline, self.weights, self.rule, self.window, seed),
        }
    }

    /// Trials seeded `base_seed + i`. Output order and content do not depend
    /// on how rayon splits the work.
    pub fn run_batch(&self, base_seed: u64, n_trials: usize) -> Result<Vec<TrialRecord>> {
        self.rule.validate()?;
        let deadline = self.deadline()?;
        Ok((0..n_trials as u64)
            .into_par_iter()
            .map(|i| self.trial_with_deadline(deadline, base_seed.wrapping_add(i)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// P₁ rising linearly from 0 to `total` over [1, 2] on a [0, 4] record.
    fn ramp(total: f64) -> ComponentWeights {
        let n = 401;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let p1: Vec<f64> = times.iter().map(|&t| total * (t - 1.0).clamp(0.0, 1.0)).collect();
        let j: Vec<f64> = times
            .iter()
            .map(|&t| if (1.0..=2.0).contains(&t) { total } else { 0.0 })
            .collect();
        ComponentWeights::new(times, p1.iter().map(|p| 1.0 - p).collect(), p1, j).unwrap()
    }

    fn flat(p: f64) -> ComponentWeights {
        let times: Vec<f64> = (0..11).map(|i| i as f64).collect();
        ComponentWeights::new(times, vec![1.0 - p; 11], vec![p; 11], vec![0.1; 11]).unwrap()
    }

    #[test]
    fn env_deadline_clamps_to_first_sample() {
        let w = ramp(1.0);
        let t = collapse_time_env(&w, &ReductionRule::penrose_env(1e-6)).unwrap();
        assert_eq!(t, Some(0.0));
    }

    #[test]
    fn env_deadline_adds_tau() {
        let w = ramp(1.0);
        let t = collapse_time_env(&w, &ReductionRule::penrose_env(2.0)).unwrap();
        assert_eq!(t, Some(2.0));
        assert_eq!(collapse_time_env(&w, &ReductionRule::penrose_env(5.0)).unwrap(), None);
    }

    #[test]
    fn env_collapse_at_zero_weight_is_flagged() {
        let w = ramp(1.0);
        let rule = ReductionRule::penrose_env(1e-6);
        let t = collapse_time_env(&w, &rule).unwrap();
        let rec = resolve_outcome(t, &w, &rule, None, 3);
        assert_eq!(rec.chosen, Component::NoCapture);
        assert!(rec.flags.zero_weight_collapse);
    }

    #[test]
    fn spread_deadline_is_onset_plus_inverse_spread() {
        let times: Vec<f64> = (0..2001).map(|i| i as f64 * 0.01).collect();
        let p1: Vec<f64> = times.iter().map(|&t| if t >= 10.0 { 0.1 } else { 0.0 }).collect();
        let w = ComponentWeights::new(
            times.clone(),
            p1.iter().map(|p| 1.0 - p).collect(),
            p1,
            vec![0.0; times.len()],
        )
        .unwrap();
        let m = EnergyMoments {
            mean_energy: 1.0,
            energy_spread: 2.0,
        };
        let t = collapse_time_spread(&w, &m, &ReductionRule::penrose_spread()).unwrap().unwrap();
        assert!((t - 10.5).abs() < 1e-12);
        let zero = EnergyMoments {
            mean_energy: 1.0,
            energy_spread: 0.0,
        };
        assert_eq!(collapse_time_spread(&w, &zero, &ReductionRule::penrose_spread()).unwrap(), None);
    }

    #[test]
    fn wrong_rule_kind_is_rejected() {
        let w = ramp(1.0);
        assert!(collapse_time_env(&w, &ReductionRule::current_jump()).is_err());
    }

    #[test]
    fn jump_without_capture_never_collapses() {
        let w = flat(0.0);
        for seed in 0..100 {
            let rec = sample_jump_collapse(&w, &ReductionRule::current_jump(), None, seed);
            assert_eq!(rec.chosen, Component::NoCapture);
            assert_eq!(rec.collapse_time, None);
        }
    }

    #[test]
    fn jump_time_inverts_the_ramp() {
        let w = ramp(1.0);
        for seed in 0..50 {
            let u = uniform(seed);
            let rec = sample_jump_collapse(&w, &ReductionRule::current_jump(), None, seed);
            assert!((rec.collapse_time.unwrap() - (1.0 + u)).abs() < 1e-9);
            assert!((rec.p_capture_at_collapse - u).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_weights_decide_outcome() {
        let rule = ReductionRule::penrose_spread();
        for seed in 0..200 {
            let none = resolve_outcome(Some(5.0), &flat(0.0), &rule, None, seed);
            assert_eq!(none.chosen, Component::NoCapture);
            assert!(none.flags.zero_weight_collapse);
            let all = resolve_outcome(Some(5.0), &flat(1.0), &rule, None, seed);
            assert_eq!(all.chosen, Component::Capture);
        }
    }

    #[test]
    fn even_weights_split_evenly() {
        // 3σ binomial band for N = 10⁴ at p = 0.5 is 0.015
        let rule = ReductionRule::penrose_spread();
        let w = flat(0.5);
        let n = 10_000;
        let captured = (0..n)
            .filter(|&s| resolve_outcome(Some(5.0), &w, &rule, None, s).chosen == Component::Capture)
            .count();
        assert!((captured as f64 / n as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn missing_deadline_is_unresolved() {
        let rec = resolve_outcome(None, &flat(0.3), &ReductionRule::penrose_spread(), None, 1);
        assert_eq!(rec.chosen, Component::Unresolved);
        assert!(rec.flags.is_empty());
    }

    #[test]
    fn batch_is_deterministic_and_order_independent() {
        let w = ramp(0.8);
        let rule = ReductionRule::current_jump();
        let inputs = TrialInputs {
            weights: &w,
            rule: &rule,
            moments: None,
            window: None,
        };
        let a = inputs.run_batch(7, 500).unwrap();
        let b = inputs.run_batch(7, 500).unwrap();
        assert_eq!(a, b);
        for (i, rec) in a.iter().enumerate() {
            assert_eq!(rec.seed, 7 + i as u64);
            assert_eq!(*rec, inputs.run_trial(rec.seed).unwrap());
        }
    }

    #[test]
    fn spread_batch_needs_moments() {
        let w = ramp(0.8);
        let rule = ReductionRule::penrose_spread();
        let inputs = TrialInputs {
            weights: &w,
            rule: &rule,
            moments: None,
            window: None,
        };
        assert!(inputs.run_batch(0, 1).is_err());
    }

    #[test]
    fn flag_strings_round_trip() {
        let f = Flags {
            zero_weight_collapse: true,
            zero_current_collapse: false,
            between_pulses: true,
        };
        assert_eq!(f.to_string(), "zero_weight_collapse|between_pulses");
        assert_eq!(f.to_string().parse::<Flags>().unwrap(), f);
        assert_eq!("".parse::<Flags>().unwrap(), Flags::default());
        assert!("bogus".parse::<Flags>().is_err());
    }

    #[test]
    fn rule_validation() {
        assert!(ReductionRule::penrose_env(0.0).validate().is_err());
        let mut r = ReductionRule::current_jump();
        r.tau_env = Some(1.0);
        assert!(r.validate().is_err());
        assert!(ReductionRule::penrose_spread().with_onset_epsilon(0.0).validate().is_err());
        assert_eq!("current_jump".parse::<RuleKind>().unwrap(), RuleKind::CurrentJump);
        assert!("gravity".parse::<RuleKind>().is_err());
    }
}
