//! Spatial grid, wavefunction storage and the free-particle observables.
//!
//! Natural units throughout: ℏ = 1 and the particle mass is [`PARTICLE_MASS`].

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};

/// Mass used by the propagator. Everything is in natural units.
pub const PARTICLE_MASS: f64 = 1.0;

/// Tolerance on norm invariants.
pub const NORM_EPSILON: f64 = 1e-6;

/// Uniform periodic grid on `[origin, origin + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n_points: usize,
    length: f64,
    origin: f64,
}

impl Grid1D {
    pub fn new(n_points: usize, length: f64, origin: f64) -> Result<Self> {
        let mut errors = Vec::new();
        if n_points < 2 || !n_points.is_power_of_two() {
            errors.push(FieldError::new(
                "n_points",
                format!("{n_points} is not a power of two"),
            ));
        }
        if !(length > 0.0) || !length.is_finite() {
            errors.push(FieldError::new("length", format!("{length} must be positive")));
        }
        if !origin.is_finite() {
            errors.push(FieldError::new("origin", "must be finite"));
        }
        if !errors.is_empty() {
            return Err(Error::Invalid(errors));
        }
        Ok(Self {
            n_points,
            length,
            origin,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_points as f64
    }

    pub fn end(&self) -> f64 {
        self.origin + self.length
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.origin + self.spacing() * i as f64
    }

    pub fn coordinates(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.coordinate(i))
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * std::f64::consts::PI / self.length;
        (0..n)
            .map(|j| {
                let signed = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                signed * dk
            })
            .collect()
    }

    /// Largest representable wavenumber, π / spacing.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Largest kinetic eigenvalue on this grid.
    pub fn max_kinetic_energy(&self, mass: f64) -> f64 {
        let k = self.nyquist();
        k * k / (2.0 * mass)
    }
}

pub fn build_grid(n_points: usize, length: f64, origin: f64) -> Result<Grid1D> {
    Grid1D::new(n_points, length, origin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid1D,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid1D, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a {}-point grid",
                amplitudes.len(),
                grid.n_points()
            )));
        }
        Ok(Self {
            grid,
            amplitudes,
            time,
        })
    }

    pub fn zeros(grid: Grid1D, time: f64) -> Self {
        Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); grid.n_points()],
            time,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    /// Σ |ψᵢ|² · dx
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    /// ⟨self, other⟩ = Σ conj(selfᵢ) · otherᵢ · dx
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        self.check_compatible(other)?;
        let sum: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(sum * self.grid.spacing())
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Mean position of |ψ|², normalised by the current weight.
    pub fn mean_position(&self) -> Result<f64> {
        let (m0, m1, _) = self.position_moments()?;
        Ok(m1 / m0)
    }

    /// Standard deviation of |ψ|² in position.
    pub fn position_spread(&self) -> Result<f64> {
        let (m0, m1, m2) = self.position_moments()?;
        let mean = m1 / m0;
        Ok((m2 / m0 - mean * mean).max(0.0).sqrt())
    }

    fn position_moments(&self) -> Result<(f64, f64, f64)> {
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (x, a) in self.grid.coordinates().zip(&self.amplitudes) {
            let d = a.norm_sqr();
            m0 += d;
            m1 += d * x;
            m2 += d * x * x;
        }
        if m0 == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok((m0, m1, m2))
    }

    pub fn scaled(&self, factor: f64) -> WaveFunction {
        WaveFunction {
            grid: self.grid,
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            time: self.time,
        }
    }

    /// Rescale so the squared norm equals `weight`.
    pub fn normalized_to(&self, weight: f64) -> Result<WaveFunction> {
        let norm = self.norm_sqr();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled((weight / norm).sqrt()))
    }

    fn check_compatible(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("wavefunctions live on different grids".into()));
        }
        if self.time != other.time {
            return Err(Error::GridMismatch(format!(
                "wavefunction times differ ({} vs {})",
                self.time, other.time
            )));
        }
        Ok(())
    }
}

/// Gaussian packet parameters. `width` is the position-space standard
/// deviation of |ψ|².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
    pub amplitude_weight: f64,
}

impl PacketSpec {
    pub fn new(center: f64, width: f64, momentum: f64) -> Self {
        Self {
            center,
            width,
            momentum,
            amplitude_weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.amplitude_weight = weight;
        self
    }

    /// Momentum-space standard deviation, 1 / (2 σ_x).
    pub fn momentum_spread(&self) -> f64 {
        0.5 / self.width
    }

    pub fn group_velocity(&self) -> f64 {
        self.momentum / PARTICLE_MASS
    }

    pub fn validate(&self, grid: &Grid1D) -> std::result::Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if !self.center.is_finite() {
            errors.push(FieldError::new("packet.center", "must be finite"));
        }
        if !(self.width >= 4.0 * grid.spacing()) {
            errors.push(FieldError::new(
                "packet.width",
                format!(
                    "{} is not resolvable (needs >= 4 * spacing = {})",
                    self.width,
                    4.0 * grid.spacing()
                ),
            ));
        }
        if !(self.momentum.abs() < grid.nyquist()) {
            errors.push(FieldError::new(
                "packet.momentum",
                format!(
                    "{} is aliased (Nyquist limit {})",
                    self.momentum,
                    grid.nyquist()
                ),
            ));
        }
        if !(self.amplitude_weight > 0.0 && self.amplitude_weight <= 1.0) {
            errors.push(FieldError::new(
                "packet.amplitude_weight",
                format!("{} must lie in (0, 1]", self.amplitude_weight),
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

pub fn gaussian_packet(grid: &Grid1D, spec: &PacketSpec) -> Result<WaveFunction> {
    spec.validate(grid).map_err(Error::Invalid)?;
    let denom = 4.0 * spec.width * spec.width;
    let amplitudes = grid
        .coordinates()
        .map(|x| {
            let dx = x - spec.center;
            Complex64::from_polar((-dx * dx / denom).exp(), spec.momentum * x)
        })
        .collect();
    WaveFunction::new(*grid, amplitudes, 0.0)?.normalized_to(spec.amplitude_weight)
}

/// Pointwise sum. Weights are the caller's business.
pub fn superpose(a: &WaveFunction, b: &WaveFunction) -> Result<WaveFunction> {
    a.check_compatible(b)?;
    let amplitudes = a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x + y)
        .collect();
    WaveFunction::new(a.grid, amplitudes, a.time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMoments {
    pub mean_energy: f64,
    pub energy_spread: f64,
}

/// ⟨H⟩ and ΔE of the free Hamiltonian p²/2m, from the momentum-space density
/// of a normalised copy of `psi`.
pub fn energy_moments(psi: &WaveFunction, mass: f64) -> Result<EnergyMoments> {
    let grid = psi.grid();
    let mut spectrum = psi.amplitudes().to_vec();
    let fft = FftPlanner::new().plan_fft_forward(spectrum.len());
    fft.process(&mut spectrum);

    let (mut w, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for (amp, k) in spectrum.iter().zip(grid.wavenumbers()) {
        let d = amp.norm_sqr();
        let e = k * k / (2.0 * mass);
        w += d;
        e1 += d * e;
        e2 += d * e * e;
    }
    if w == 0.0 || !w.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let mean = e1 / w;
    let var = (e2 / w - mean * mean).max(0.0);
    Ok(EnergyMoments {
        mean_energy: mean,
        energy_spread: var.sqrt(),
    })
}
