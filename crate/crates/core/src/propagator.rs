//! Split-step evolution under H = p²/2m − iΓ·w(x), where w is the detector
//! window. Norm lost to the absorber is the capture weight.

use std::sync::Arc;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::state::{Grid1D, WaveFunction, NORM_EPSILON, PARTICLE_MASS};

/// Largest allowed dimensionless amplitude |ψ|·√dx at either domain edge.
pub const WRAP_AROUND_LIMIT: f64 = 1e-8;

/// Upper bound on dt · E_max.
pub const ACCURACY_GUARD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowProfile {
    /// cos²(π(x − c) / 2h) on |x − c| < h, zero outside. Integrates to h.
    #[default]
    CosineSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub center: f64,
    pub half_width: f64,
    pub strength: f64,
    #[serde(default)]
    pub window: WindowProfile,
}

impl DetectorSpec {
    pub fn new(center: f64, half_width: f64, strength: f64) -> Self {
        Self {
            center,
            half_width,
            strength,
            window: WindowProfile::CosineSquared,
        }
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = strength;
        self
    }

    pub fn left_edge(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn right_edge(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn window_at(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.half_width;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        match self.window {
            WindowProfile::CosineSquared => {
                let c = (0.5 * std::f64::consts::PI * u).cos();
                c * c
            }
        }
    }

    pub fn window_on(&self, grid: &Grid1D) -> Vec<f64> {
        grid.coordinates().map(|x| self.window_at(x)).collect()
    }

    pub fn validate(&self, grid: &Grid1D) -> std::result::Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if !(self.half_width >= 4.0 * grid.spacing()) {
            errors.push(FieldError::new(
                "detector.half_width",
                format!(
                    "{} is below 4 * spacing = {}",
                    self.half_width,
                    4.0 * grid.spacing()
                ),
            ));
        }
        let margin = 0.1 * grid.length();
        if !(self.left_edge() >= grid.origin() + margin && self.right_edge() <= grid.end() - margin)
        {
            errors.push(FieldError::new(
                "detector.center",
                format!(
                    "support [{}, {}] must stay {} away from the domain edges [{}, {}]",
                    self.left_edge(),
                    self.right_edge(),
                    margin,
                    grid.origin(),
                    grid.end()
                ),
            ));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            errors.push(FieldError::new(
                "detector.strength",
                format!("{} must be finite and >= 0", self.strength),
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Time series of the two component weights and the flow between them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentWeights {
    pub times: Vec<f64>,
    pub p_no_capture: Vec<f64>,
    pub p_capture: Vec<f64>,
    pub current: Vec<f64>,
}

impl ComponentWeights {
    pub fn new(
        times: Vec<f64>,
        p_no_capture: Vec<f64>,
        p_capture: Vec<f64>,
        current: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 || p_no_capture.len() != n || p_capture.len() != n || current.len() != n {
            return Err(Error::invalid(
                "weights",
                "columns must be non-empty and share one length",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("weights.time", "times must strictly increase"));
        }
        Ok(Self {
            times,
            p_no_capture,
            p_capture,
            current,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty record")
    }

    pub fn final_capture(&self) -> f64 {
        *self.p_capture.last().expect("non-empty record")
    }

    pub fn peak_current(&self) -> f64 {
        self.current.iter().copied().fold(0.0, f64::max)
    }

    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, &j) in self.current.iter().enumerate() {
            if j > self.current[best] {
                best = i;
            }
        }
        best
    }

    /// Sample spacing of the record (first interval).
    pub fn sample_interval(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn p_capture_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.p_capture, t)
    }

    pub fn current_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.current, t)
    }

    /// First sample time with P₁ strictly above `epsilon`.
    pub fn onset_time(&self, epsilon: f64) -> Option<f64> {
        self.p_capture
            .iter()
            .position(|&p| p > epsilon)
            .map(|i| self.times[i])
    }

    /// Earliest time at which the linearly interpolated P₁ reaches `level`.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        let i = self.p_capture.iter().position(|&p| p >= level)?;
        if i == 0 {
            return Some(self.times[0]);
        }
        let (p_lo, p_hi) = (self.p_capture[i - 1], self.p_capture[i]);
        let (t_lo, t_hi) = (self.times[i - 1], self.times[i]);
        let frac = if p_hi > p_lo {
            (level - p_lo) / (p_hi - p_lo)
        } else {
            1.0
        };
        Some(t_lo + frac.clamp(0.0, 1.0) * (t_hi - t_lo))
    }

    /// Trapezoid integral of the recorded current up to each sample.
    pub fn integrated_current(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        out.push(0.0);
        for i in 1..self.len() {
            acc += 0.5 * (self.current[i] + self.current[i - 1]) * (self.times[i] - self.times[i - 1]);
            out.push(acc);
        }
        out
    }
}

/// Piecewise-linear interpolation, clamped at both ends. NaN in, NaN out.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub weights: ComponentWeights,
    pub final_state: WaveFunction,
    /// (time, |ψ|² on the grid)
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub step_size: f64,
    pub wall_time: f64,
}

/// Reusable split-step stepper for one grid, detector and step size.
pub struct Propagator {
    grid: Grid1D,
    detector: DetectorSpec,
    dt: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kinetic: Vec<Complex64>,
    window: Vec<f64>,
    half_absorber: Vec<f64>,
    support: std::ops::Range<usize>,
    scratch: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: Grid1D, detector: DetectorSpec, dt: f64) -> Result<Self> {
        detector.validate(&grid).map_err(Error::Invalid)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("{dt} must be positive")));
        }
        let product = dt * grid.max_kinetic_energy(PARTICLE_MASS);
        if product >= ACCURACY_GUARD {
            return Err(Error::AccuracyGuard { product });
        }

        let n = grid.n_points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scale = 1.0 / n as f64;
        let kinetic = grid
            .wavenumbers()
            .into_iter()
            .map(|k| Complex64::from_polar(scale, -k * k / (2.0 * PARTICLE_MASS) * dt))
            .collect();
        let window = detector.window_on(&grid);
        let half_absorber = window
            .iter()
            .map(|w| (-detector.strength * w * dt / 2.0).exp())
            .collect();
        let lo = window.iter().position(|&w| w > 0.0).unwrap_or(0);
        let hi = window.iter().rposition(|&w| w > 0.0).map_or(0, |i| i + 1);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());

        Ok(Self {
            grid,
            detector,
            dt,
            forward,
            inverse,
            kinetic,
            window,
            half_absorber,
            support: lo..hi,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn detector(&self) -> &DetectorSpec {
        &self.detector
    }

    fn absorb_half(&self, amps: &mut [Complex64]) {
        if self.detector.strength == 0.0 {
            return;
        }
        for i in self.support.clone() {
            amps[i] *= self.half_absorber[i];
        }
    }

    /// One Strang step: half absorber, full kinetic, half absorber.
    pub fn step(&mut self, psi: &mut WaveFunction) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch("propagator built for another grid".into()));
        }
        let t = psi.time() + self.dt;
        let amps = psi.amplitudes_mut();
        self.absorb_half(amps);
        self.forward.process_with_scratch(amps, &mut self.scratch);
        for (a, k) in amps.iter_mut().zip(&self.kinetic) {
            *a *= k;
        }
        self.inverse.process_with_scratch(amps, &mut self.scratch);
        self.absorb_half(amps);
        psi.set_time(t);
        Ok(())
    }

    /// 2Γ ∫ w |ψ|² dx
    pub fn capture_current(&self, psi: &WaveFunction) -> f64 {
        if self.detector.strength == 0.0 {
            return 0.0;
        }
        let amps = psi.amplitudes();
        let s: f64 = self
            .support
            .clone()
            .map(|i| self.window[i] * amps[i].norm_sqr())
            .sum();
        2.0 * self.detector.strength * s * self.grid.spacing()
    }
}

/// |ψ|·√dx at the two domain edges, whichever is larger.
pub fn boundary_amplitude(psi: &WaveFunction) -> f64 {
    let a = psi.amplitudes();
    let edge = a[0].norm().max(a[a.len() - 1].norm());
    edge * psi.grid().spacing().sqrt()
}

pub fn evolve_step(psi: &WaveFunction, detector: &DetectorSpec, dt: f64) -> Result<WaveFunction> {
    let mut prop = Propagator::new(*psi.grid(), *detector, dt)?;
    let mut out = psi.clone();
    prop.step(&mut out)?;
    Ok(out)
}

pub fn capture_current(psi: &WaveFunction, detector: &DetectorSpec) -> f64 {
    if detector.strength == 0.0 {
        return 0.0;
    }
    let s: f64 = psi
        .grid()
        .coordinates()
        .zip(psi.amplitudes())
        .map(|(x, a)| detector.window_at(x) * a.norm_sqr())
        .sum();
    2.0 * detector.strength * s * psi.grid().spacing()
}

pub fn run_evolution(
    initial: &WaveFunction,
    detector: &DetectorSpec,
    t_final: f64,
    dt: f64,
    sample_every: usize,
) -> Result<EvolutionResult> {
    run_evolution_with_snapshots(initial, detector, t_final, dt, sample_every, 0)
}

/// As [`run_evolution`], additionally keeping |ψ|² every `snapshot_stride`
/// samples (0 disables snapshots).
pub fn run_evolution_with_snapshots(
    initial: &WaveFunction,
    detector: &DetectorSpec,
    t_final: f64,
    dt: f64,
    sample_every: usize,
    snapshot_stride: usize,
) -> Result<EvolutionResult> {
    let started = Instant::now();
    if sample_every == 0 {
        return Err(Error::invalid("sample_every", "must be positive"));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::invalid("t_final", format!("{t_final} must be positive")));
    }
    let norm0 = initial.norm_sqr();
    if (norm0 - 1.0).abs() > NORM_EPSILON {
        return Err(Error::NotNormalized(norm0));
    }

    let mut prop = Propagator::new(*initial.grid(), *detector, dt)?;
    let n_steps = ((t_final / dt).round() as usize).max(1);
    let t0 = initial.time();
    let mut psi = initial.clone();
    let mut weights = ComponentWeights::default();
    let mut snapshots = Vec::new();

    let mut record = |psi: &WaveFunction, step: usize, weights: &mut ComponentWeights, prop: &Propagator| -> Result<()> {
        let edge = boundary_amplitude(psi);
        let t = t0 + step as f64 * dt;
        if edge > WRAP_AROUND_LIMIT {
            return Err(Error::WrapAround { amplitude: edge, time: t });
        }
        let p0 = psi.norm_sqr();
        let sample = weights.times.len();
        weights.times.push(t);
        weights.p_no_capture.push(p0);
        weights.p_capture.push(1.0 - p0);
        weights.current.push(prop.capture_current(psi));
        if snapshot_stride > 0 && sample % snapshot_stride == 0 {
            snapshots.push((t, psi.density()));
        }
        Ok(())
    };

    record(&psi, 0, &mut weights, &prop)?;
    for step in 1..=n_steps {
        prop.step(&mut psi)?;
        if step % sample_every == 0 || step == n_steps {
            record(&psi, step, &mut weights, &prop)?;
        }
    }
    // keep the clock exact rather than accumulated
    psi.set_time(t0 + n_steps as f64 * dt);

    Ok(EvolutionResult {
        weights,
        final_state: psi,
        snapshots,
        step_size: dt,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{build_grid, gaussian_packet, PacketSpec};

    fn setup() -> (Grid1D, DetectorSpec) {
        let grid = build_grid(512, 200.0, -100.0).unwrap();
        (grid, DetectorSpec::new(0.0, 10.0, 0.5))
    }

    #[test]
    fn free_step_is_unitary() {
        let (grid, det) = setup();
        let psi = gaussian_packet(&grid, &PacketSpec::new(-30.0, 4.0, 2.0)).unwrap();
        let next = evolve_step(&psi, &det.with_strength(0.0), 0.01).unwrap();
        assert!((next.norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
        assert!((next.time() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn distant_packet_is_untouched_by_absorber() {
        let (grid, det) = setup();
        let psi = gaussian_packet(&grid, &PacketSpec::new(-60.0, 2.0, 1.0)).unwrap();
        assert!(capture_current(&psi, &det) < 1e-14);
        let next = evolve_step(&psi, &det, 0.01).unwrap();
        assert!((next.norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn absorbed_norm_matches_current_per_step() {
        let (grid, det) = setup();
        let psi = gaussian_packet(&grid, &PacketSpec::new(0.0, 4.0, 1.0)).unwrap();
        let rate = capture_current(&psi, &det);
        let loss = |dt: f64| psi.norm_sqr() - evolve_step(&psi, &det, dt).unwrap().norm_sqr();
        let dt = 0.01;
        let (coarse, fine) = (loss(dt), loss(dt / 2.0));
        assert!(coarse > 0.0);
        // Richardson oracle: loss/dt = J + O(dt), so two step sizes cancel the linear term
        let extrapolated_rate = 2.0 * fine / (dt / 2.0) - coarse / dt;
        assert!((extrapolated_rate - rate).abs() / rate < 1e-4);
        assert!((coarse - rate * dt).abs() < 10.0 * dt * dt * rate);
    }

    #[test]
    fn accuracy_guard_trips() {
        let (grid, det) = setup();
        let psi = WaveFunction::zeros(grid, 0.0);
        // E_max = (π/dx)² / 2 ≈ 32.3
        assert!(evolve_step(&psi, &det, 0.015).is_ok());
        assert!(matches!(
            evolve_step(&psi, &det, 0.016),
            Err(Error::AccuracyGuard { .. })
        ));
    }

    #[test]
    fn detector_must_stay_inside_domain() {
        let (grid, _) = setup();
        let psi = WaveFunction::zeros(grid, 0.0);
        let bad = DetectorSpec::new(85.0, 10.0, 1.0);
        assert!(matches!(evolve_step(&psi, &bad, 0.01), Err(Error::Invalid(_))));
        let thin = DetectorSpec::new(0.0, 0.1, 1.0);
        assert!(matches!(evolve_step(&psi, &thin, 0.01), Err(Error::Invalid(_))));
    }

    #[test]
    fn current_of_uniform_density_is_closed_form() {
        // dx = 0.05 puts both window edges on grid points, where the
        // discrete window sum equals h exactly
        let grid = build_grid(4096, 204.8, -102.4).unwrap();
        let det = DetectorSpec::new(5.0, 12.0, 0.7);
        let c: f64 = 0.003;
        let amps = vec![Complex64::new(c.sqrt(), 0.0); grid.n_points()];
        let psi = WaveFunction::new(grid, amps, 0.0).unwrap();
        let expected = 2.0 * 0.7 * c * 12.0;
        assert!((capture_current(&psi, &det) - expected).abs() / expected < 1e-10);
        let prop = Propagator::new(grid, det, 0.0002).unwrap();
        assert!((prop.capture_current(&psi) - expected).abs() / expected < 1e-10);
        assert_eq!(capture_current(&psi, &det.with_strength(0.0)), 0.0);
    }

    #[test]
    fn detector_off_run_has_no_capture() {
        let (grid, det) = setup();
        let psi = gaussian_packet(&grid, &PacketSpec::new(-30.0, 4.0, 1.0)).unwrap();
        let res = run_evolution(&psi, &det.with_strength(0.0), 10.0, 0.01, 5).unwrap();
        assert!(res.weights.final_capture().abs() < 1e-10);
        assert!(res.weights.current.iter().all(|j| j.abs() < 1e-12));
        assert_eq!(res.weights.len(), 201);
    }

    #[test]
    fn integrated_current_tracks_capture() {
        let (grid, det) = setup();
        let psi = gaussian_packet(&grid, &PacketSpec::new(-30.0, 4.0, 2.0)).unwrap();
        let res = run_evolution(&psi, &det, 30.0, 0.005, 2).unwrap();
        let w = &res.weights;
        assert!(w.final_capture() > 0.5);
        for (acc, p1) in w.integrated_current().iter().zip(&w.p_capture) {
            assert!((acc - p1).abs() < 1e-5);
        }
        for (p0, p1) in w.p_no_capture.iter().zip(&w.p_capture) {
            assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }
        assert!(w.p_capture.windows(2).all(|p| p[1] >= p[0] - 1e-8));
    }

    #[test]
    fn wrap_around_guard_trips() {
        let (grid, det) = setup();
        // fast packet heading for the right edge
        let psi = gaussian_packet(&grid, &PacketSpec::new(60.0, 3.0, 5.0)).unwrap();
        assert!(matches!(
            run_evolution(&psi, &det.with_strength(0.0), 20.0, 0.005, 10),
            Err(Error::WrapAround { .. })
        ));
    }

    #[test]
    fn unnormalised_start_is_rejected() {
        let (grid, det) = setup();
        let psi = gaussian_packet(&grid, &PacketSpec::new(-30.0, 4.0, 1.0).with_weight(0.5)).unwrap();
        assert!(matches!(
            run_evolution(&psi, &det, 1.0, 0.01, 1),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn interpolation_clamps_and_blends() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 30.0];
        assert_eq!(interpolate(&xs, &ys, -1.0), 0.0);
        assert_eq!(interpolate(&xs, &ys, 0.5), 5.0);
        assert_eq!(interpolate(&xs, &ys, 1.5), 20.0);
        assert_eq!(interpolate(&xs, &ys, 9.0), 30.0);
        assert!(interpolate(&xs, &ys, f64::NAN).is_nan());
    }
}
