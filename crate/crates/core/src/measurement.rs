//! Readout of a motional marginal through a displacement probe.
//!
//! A probe of strength `k` applies `U = exp(−ik q̂ σx / 2)` to a freshly
//! prepared qubit, where `q̂` is the probed coordinate. Starting from `|+⟩z`
//! the excited population gives `⟨cos kq̂⟩ = 2P_z − 1`; starting from `|+⟩y` it
//! gives `⟨sin kq̂⟩ = 2P_y − 1`. Together they sample the characteristic
//! function `⟨e^{ikq̂}⟩`, whose Fourier transform is the marginal density.
//!
//! Both probe axes share one code path. Lengths are in units of `Δ` and `k` in
//! units of `1/Δ`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ionfock::{self, FockConfig, FockError, FockLayout, FockState, Modes, MotionalMode, LEAKAGE_LIMIT};
use crate::wavepacket::{self, Axis, Marginal, PacketError, Representation, SpinorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("windowing error: only {mass:.4} of the reconstructed mass lies in the central window")]
    Windowing { mass: f64 },
    #[error("probe paths disagree by {deviation:.3e} at k = {k}")]
    Inconsistent { k: f64, deviation: f64 },
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Largest tolerated disagreement between the two probe paths in exact mode.
pub const CONSISTENCY_TOL: f64 = 1e-10;
/// Bandwidth bound `k_max · width`.
pub const BANDWIDTH_BOUND: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shots {
    Exact,
    Count(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSchedule {
    pub axis: Axis,
    pub k_samples: Vec<f64>,
    pub shots: Shots,
}

impl ProbeSchedule {
    /// `k = 0, dk, 2dk, …` up to and including `k_max` (rounded to a whole number of steps).
    pub fn uniform(axis: Axis, dk: f64, k_max: f64, shots: Shots) -> Result<Self, MeasurementError> {
        if !(dk.is_finite() && dk > 0.0 && k_max.is_finite() && k_max >= dk) {
            return Err(MeasurementError::Domain(format!(
                "need 0 < dk <= k_max, got dk = {dk}, k_max = {k_max}"
            )));
        }
        let steps = (k_max / dk).round() as usize;
        let s = Self {
            axis,
            k_samples: (0..=steps).map(|j| j as f64 * dk).collect(),
            shots,
        };
        s.validate()?;
        Ok(s)
    }

    /// `dk = 0.05/width`, `k_max = 10/width`, exact populations.
    pub fn default_for(axis: Axis, width: f64) -> Result<Self, MeasurementError> {
        Self::uniform(axis, 0.05 / width, 10.0 / width, Shots::Exact)
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        match self.k_samples.first() {
            Some(&k0) if k0 == 0.0 => {}
            _ => return Err(MeasurementError::Protocol("k samples must start at 0".into())),
        }
        if self.k_samples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeasurementError::Protocol("k samples must be strictly increasing".into()));
        }
        if self.k_samples.iter().any(|k| !k.is_finite()) {
            return Err(MeasurementError::Domain("k samples must be finite".into()));
        }
        if let Shots::Count(0) = self.shots {
            return Err(MeasurementError::Domain("shots must be at least 1".into()));
        }
        Ok(())
    }

    pub fn k_max(&self) -> f64 {
        *self.k_samples.last().unwrap_or(&0.0)
    }

    pub fn covers_bandwidth(&self, width: f64) -> bool {
        self.k_max() * width >= BANDWIDTH_BOUND
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub k: f64,
    pub p_z: f64,
    pub p_y: f64,
}

impl ProbeSample {
    pub fn cos(&self) -> f64 {
        2.0 * self.p_z - 1.0
    }

    pub fn sin(&self) -> f64 {
        2.0 * self.p_y - 1.0
    }

    pub fn characteristic(&self) -> Complex64 {
        Complex64::new(self.cos(), self.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub axis: Axis,
    pub samples: Vec<ProbeSample>,
    pub shots: Shots,
}

impl MeasurementRecord {
    pub fn new(axis: Axis, samples: Vec<ProbeSample>, shots: Shots) -> Result<Self, MeasurementError> {
        for s in &samples {
            for p in [s.p_z, s.p_y] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(MeasurementError::Domain(format!("probability {p} at k = {} outside [0, 1]", s.k)));
                }
            }
        }
        Ok(Self { axis, samples, shots })
    }

    pub fn k_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.k).collect()
    }

    pub fn k_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.k)
    }

    /// Common spacing of the k samples, or a protocol error if they are not
    /// uniform from 0.
    pub fn uniform_spacing(&self) -> Result<f64, MeasurementError> {
        if self.samples.len() < 2 || self.samples[0].k != 0.0 {
            return Err(MeasurementError::Protocol("record must start at k = 0 with at least two samples".into()));
        }
        let dk = self.samples[1].k;
        for (j, s) in self.samples.iter().enumerate() {
            if (s.k - j as f64 * dk).abs() > 1e-9 * dk.max(s.k) {
                return Err(MeasurementError::Protocol(format!(
                    "non-uniform k spacing at sample {j}: k = {}, expected {}",
                    s.k,
                    j as f64 * dk
                )));
            }
        }
        Ok(dk)
    }

    /// CSV `k,P_z,P_y,cos_k,sin_k`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,P_z,P_y,cos_k,sin_k")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{}", s.k, s.p_z, s.p_y, s.cos(), s.sin())?;
        }
        Ok(())
    }
}

/// Initial qubit states for the two probe branches, as `(|0⟩, |1⟩)` amplitudes.
/// `|+⟩z = |1⟩` and `|+⟩y = (|0⟩ − i|1⟩)/√2` for `σy = −i(σ⁺ − σ⁻)`.
fn branch_states() -> [[Complex64; 2]; 2] {
    [
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, -FRAC_1_SQRT_2)],
    ]
}

/// Excited population after `exp(−iθσx/2)` acting on `q`.
fn excited_after_rotation(q: [Complex64; 2], theta: f64) -> f64 {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let minus_is = Complex64::new(0.0, -s);
    (minus_is * q[0] + c * q[1]).norm_sqr()
}

/// A state reduced to what the probe sees, ready to be evaluated at many `k`.
#[derive(Debug, Clone)]
pub enum PreparedProbe {
    /// Weighted points on the probe axis: the node-level weights feed the
    /// population path, the marginal feeds the direct path.
    Grid {
        node_coords: Vec<f64>,
        node_weights: Vec<f64>,
        marginal: Marginal,
    },
    /// Motional components on the probed mode, one per (qubit, other-mode) label.
    Fock {
        components: Vec<DVector<Complex64>>,
        /// Eigen-decomposition of the truncated `q̂ = a + a†`.
        position_eigen: (DVector<f64>, DMatrix<Complex64>),
        /// Eigen-decomposition of `q̂ σx` on qubit ⊗ probed mode.
        probe_eigen: (DVector<f64>, DMatrix<Complex64>),
        layout: FockLayout,
    },
}

pub trait ProbeTarget {
    fn prepare(&self, axis: Axis) -> Result<PreparedProbe, MeasurementError>;
}

impl ProbeTarget for Marginal {
    fn prepare(&self, _axis: Axis) -> Result<PreparedProbe, MeasurementError> {
        Ok(PreparedProbe::Grid {
            node_coords: self.coords.clone(),
            node_weights: self.values.iter().map(|v| v * self.spacing).collect(),
            marginal: self.clone(),
        })
    }
}

impl ProbeTarget for SpinorField {
    fn prepare(&self, axis: Axis) -> Result<PreparedProbe, MeasurementError> {
        let field = match self.representation {
            Representation::Position => self.clone(),
            Representation::Momentum => wavepacket::to_position(self)?,
        };
        let marginal = wavepacket::marginal(&field, axis)?;
        let coords = field.coordinates();
        let area = field.cell_area();
        let mut node_coords = Vec::with_capacity(field.upper.len());
        let mut node_weights = Vec::with_capacity(field.upper.len());
        for ((ix, iy), a) in field.upper.indexed_iter() {
            let b = field.lower[[ix, iy]];
            node_coords.push(match axis {
                Axis::X => coords[ix],
                Axis::Y => coords[iy],
            });
            node_weights.push((a.norm_sqr() + b.norm_sqr()) * area);
        }
        Ok(PreparedProbe::Grid {
            node_coords,
            node_weights,
            marginal,
        })
    }
}

impl ProbeTarget for FockState {
    fn prepare(&self, axis: Axis) -> Result<PreparedProbe, MeasurementError> {
        let mode = match axis {
            Axis::X => MotionalMode::X,
            Axis::Y => MotionalMode::Y,
        };
        let layout = self.layout;
        if !layout.has(mode) {
            return Err(MeasurementError::Domain(format!("probe axis {axis:?} is not a mode of {:?}", layout.modes)));
        }
        let n = layout.levels;
        let other = if layout.modes == Modes::Xy { n } else { 1 };
        let mut components = Vec::with_capacity(2 * other);
        for qubit in 0..2 {
            for j in 0..other {
                let phi = DVector::from_iterator(
                    n,
                    (0..n).map(|m| {
                        let (nx, ny) = match (layout.modes, mode) {
                            (Modes::Xy, MotionalMode::X) => (m, j),
                            (Modes::Xy, MotionalMode::Y) => (j, m),
                            (_, MotionalMode::X) => (m, 0),
                            (_, MotionalMode::Y) => (0, m),
                        };
                        self.amplitudes[layout.index(ionfock::BasisState { qubit, nx, ny })]
                    }),
                );
                if phi.norm() > 0.0 {
                    components.push(phi);
                }
            }
        }
        let q = ionfock::reference::position(n);
        let eig = q.symmetric_eigen();
        let probe_cfg = FockConfig::new(n, Modes::X, 1.0, 1.0)?;
        let h = ionfock::build_displacement(MotionalMode::X, &probe_cfg)?.to_dense();
        let peig = h.symmetric_eigen();
        Ok(PreparedProbe::Fock {
            components,
            position_eigen: (eig.eigenvalues, eig.eigenvectors),
            probe_eigen: (peig.eigenvalues, peig.eigenvectors),
            layout: probe_cfg.layout(),
        })
    }
}

/// One probe evaluation along both computation paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOutcome {
    pub k: f64,
    pub p_z: f64,
    pub p_y: f64,
    /// `⟨cos kq̂⟩, ⟨sin kq̂⟩` from the direct integral.
    pub direct: (f64, f64),
    /// Largest disagreement between the two paths.
    pub deviation: f64,
}

impl ProbeOutcome {
    pub fn cos(&self) -> f64 {
        2.0 * self.p_z - 1.0
    }

    pub fn sin(&self) -> f64 {
        2.0 * self.p_y - 1.0
    }
}

impl PreparedProbe {
    /// `⟨e^{ikq̂}⟩` from the density.
    pub fn characteristic(&self, k: f64) -> Complex64 {
        match self {
            PreparedProbe::Grid { marginal, .. } => {
                marginal
                    .coords
                    .iter()
                    .zip(&marginal.values)
                    .map(|(q, v)| Complex64::from_polar(*v, k * q))
                    .sum::<Complex64>()
                    * marginal.spacing
            }
            PreparedProbe::Fock {
                components,
                position_eigen: (lambda, v),
                ..
            } => {
                let mut total = Complex64::new(0.0, 0.0);
                let mut norm = 0.0;
                for phi in components {
                    let c = v.adjoint() * phi;
                    for (j, cj) in c.iter().enumerate() {
                        total += Complex64::from_polar(cj.norm_sqr(), k * lambda[j]);
                    }
                    norm += phi.norm_squared();
                }
                total / norm
            }
        }
    }

    /// Excited populations `(P_z, P_y)` after the probe unitary, with the
    /// worst truncation leakage it caused.
    pub fn populations(&self, k: f64) -> ([f64; 2], f64) {
        let branches = branch_states();
        match self {
            PreparedProbe::Grid {
                node_coords,
                node_weights,
                ..
            } => {
                let mut p = [0.0; 2];
                let mut norm = 0.0;
                for (q, w) in node_coords.iter().zip(node_weights) {
                    for (b, q0) in branches.iter().enumerate() {
                        p[b] += w * excited_after_rotation(*q0, k * q);
                    }
                    norm += w;
                }
                ([p[0] / norm, p[1] / norm], 0.0)
            }
            PreparedProbe::Fock {
                components,
                probe_eigen,
                layout,
                ..
            } => {
                let (lambda, v) = probe_eigen;
                let u = propagator_from_eigen(lambda, v, k / 2.0);
                let n = layout.levels;
                let mut p = [0.0; 2];
                let mut leak: f64 = 0.0;
                let mut norm = 0.0;
                for phi in components {
                    let w = phi.norm_squared();
                    norm += w;
                    for (b, q0) in branches.iter().enumerate() {
                        let mut psi = DVector::zeros(2 * n);
                        for m in 0..n {
                            psi[m] = q0[0] * phi[m];
                            psi[n + m] = q0[1] * phi[m];
                        }
                        let out = &u * psi;
                        p[b] += (n..2 * n).map(|i| out[i].norm_sqr()).sum::<f64>();
                        let state = FockState { layout: *layout, amplitudes: out };
                        leak = leak.max(state.leakage() / w);
                    }
                }
                ([p[0] / norm, p[1] / norm], leak)
            }
        }
    }

    pub fn evaluate(&self, k: f64) -> Result<ProbeOutcome, MeasurementError> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(MeasurementError::Domain(format!("probe strength k = {k} must be >= 0")));
        }
        let ([p_z, p_y], leak) = self.populations(k);
        if let PreparedProbe::Fock { layout, .. } = self {
            if leak > LEAKAGE_LIMIT {
                return Err(FockError::TruncationExceeded {
                    leakage: leak,
                    limit: LEAKAGE_LIMIT,
                    advice: format!("probe k = {k} needs more than {} Fock levels", layout.levels),
                }
                .into());
            }
        }
        let c = self.characteristic(k);
        let deviation = (2.0 * p_z - 1.0 - c.re).abs().max((2.0 * p_y - 1.0 - c.im).abs());
        Ok(ProbeOutcome {
            k,
            p_z: p_z.clamp(0.0, 1.0),
            p_y: p_y.clamp(0.0, 1.0),
            direct: (c.re, c.im),
            deviation,
        })
    }
}

fn propagator_from_eigen(lambda: &DVector<f64>, v: &DMatrix<Complex64>, duration: f64) -> DMatrix<Complex64> {
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::from_polar(1.0, -lambda[j] * duration);
    }
    scaled * v.adjoint()
}

/// `(⟨cos kq̂⟩, ⟨sin kq̂⟩)` for a single probe strength, checked across both paths.
pub fn probe_expectations<T: ProbeTarget>(state: &T, k: f64, axis: Axis) -> Result<(f64, f64), MeasurementError> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(MeasurementError::Domain(format!("probe strength k = {k} must be >= 0")));
    }
    let out = state.prepare(axis)?.evaluate(k)?;
    if out.deviation > CONSISTENCY_TOL {
        return Err(MeasurementError::Inconsistent { k, deviation: out.deviation });
    }
    Ok((out.cos(), out.sin()))
}

/// Runs the schedule. Shot noise is applied when the schedule asks for a finite
/// number of shots.
pub fn measure<T: ProbeTarget>(state: &T, schedule: &ProbeSchedule, seed: u64) -> Result<MeasurementRecord, MeasurementError> {
    schedule.validate()?;
    let prepared = state.prepare(schedule.axis)?;
    let outcomes: Vec<ProbeOutcome> = schedule
        .k_samples
        .par_iter()
        .map(|&k| prepared.evaluate(k))
        .collect::<Result<_, _>>()?;
    if let Some(bad) = outcomes.iter().find(|o| o.deviation > CONSISTENCY_TOL) {
        return Err(MeasurementError::Inconsistent {
            k: bad.k,
            deviation: bad.deviation,
        });
    }
    let samples = outcomes
        .iter()
        .map(|o| ProbeSample { k: o.k, p_z: o.p_z, p_y: o.p_y })
        .collect();
    let exact = MeasurementRecord::new(schedule.axis, samples, Shots::Exact)?;
    match schedule.shots {
        Shots::Exact => Ok(exact),
        Shots::Count(n) => shot_noise(&exact, n, seed),
    }
}

/// Replaces every probability with the mean of `shots` Bernoulli trials.
pub fn shot_noise(record: &MeasurementRecord, shots: u64, seed: u64) -> Result<MeasurementRecord, MeasurementError> {
    if shots == 0 {
        return Err(MeasurementError::Domain("shots must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |p: f64| -> Result<f64, MeasurementError> {
        let b = Binomial::new(shots, p).map_err(|e| MeasurementError::Domain(e.to_string()))?;
        Ok(b.sample(&mut rng) as f64 / shots as f64)
    };
    let mut samples = Vec::with_capacity(record.samples.len());
    for s in &record.samples {
        let p_z = draw(s.p_z)?;
        let p_y = draw(s.p_y)?;
        samples.push(ProbeSample { k: s.k, p_z, p_y });
    }
    MeasurementRecord::new(record.axis, samples, Shots::Count(shots))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Window {
    Rectangular,
    Hann,
    /// Flat up to `(1 − alpha)·k_max`, cosine taper to zero at `k_max`.
    Tukey { alpha: f64 },
}

impl Default for Window {
    fn default() -> Self {
        Window::Tukey { alpha: 0.5 }
    }
}

impl Window {
    /// Weight at `|k|/k_max = u ∈ [0, 1]`.
    pub fn weight(&self, u: f64) -> f64 {
        match *self {
            Window::Rectangular => 1.0,
            Window::Hann => (0.5 * PI * u).cos().powi(2),
            Window::Tukey { alpha } => {
                let flat = 1.0 - alpha;
                if u <= flat || alpha <= 0.0 {
                    1.0
                } else {
                    (0.5 * PI * (u - flat) / alpha).cos().powi(2)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub window: Window,
    /// Transform length as a multiple of the `2M + 1` extended samples, rounded up to a power of two.
    pub padding: usize,
    /// Packet width used for the bandwidth check.
    pub width: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            window: Window::default(),
            padding: 4,
            width: 1.0,
        }
    }
}

/// A reconstructed one-dimensional density on the conjugate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub axis: Axis,
    pub coords: Vec<f64>,
    pub spacing: f64,
    pub values: Vec<f64>,
    /// `2π / k_max`.
    pub resolution: f64,
    /// `2π / Δk`, the period of the reconstruction.
    pub extent: f64,
    pub bandwidth_warning: bool,
}

impl Reconstruction {
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Strict local maxima at or above `fraction` of the global maximum.
    pub fn local_maxima(&self, fraction: f64) -> Vec<(f64, f64)> {
        let peak = self.values.iter().cloned().fold(f64::MIN, f64::max);
        let v = &self.values;
        (1..v.len() - 1)
            .filter(|&i| v[i] >= fraction * peak && v[i] > v[i - 1] && v[i] >= v[i + 1])
            .map(|i| (self.coords[i], v[i]))
            .collect()
    }

    /// Linear interpolation at `q`, zero outside the grid.
    pub fn at(&self, q: f64) -> f64 {
        let u = (q - self.coords[0]) / self.spacing;
        if u < 0.0 || u > (self.coords.len() - 1) as f64 {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.coords.len() - 2);
        let f = u - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// `∫|ρ_rec − ρ|` against a reference density on the reconstruction grid.
    pub fn l1_distance<F: Fn(f64) -> f64>(&self, reference: F) -> f64 {
        self.coords
            .iter()
            .zip(&self.values)
            .map(|(q, v)| (v - reference(*q)).abs())
            .sum::<f64>()
            * self.spacing
    }

    /// First moment over the central half period, normalized by the mass there.
    pub fn mean(&self) -> Result<f64, MeasurementError> {
        let half = self.extent / 4.0;
        let (mut mass, mut moment) = (0.0, 0.0);
        for (q, v) in self.coords.iter().zip(&self.values) {
            if q.abs() <= half {
                mass += v * self.spacing;
                moment += q * v * self.spacing;
            }
        }
        if mass < 0.9 {
            return Err(MeasurementError::Windowing { mass });
        }
        Ok(moment / mass)
    }

    /// CSV `<axis>,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let label = match self.axis {
            Axis::X => "x",
            Axis::Y => "y",
        };
        writeln!(out, "{label},density")?;
        for (q, v) in self.coords.iter().zip(&self.values) {
            writeln!(out, "{q},{v}")?;
        }
        Ok(())
    }
}

/// Inverts the characteristic-function samples: conjugate extension to
/// negative `k`, windowing, zero padding and one FFT.
pub fn reconstruct_density(record: &MeasurementRecord, cfg: &ReconstructionConfig) -> Result<Reconstruction, MeasurementError> {
    let dk = record.uniform_spacing()?;
    if cfg.padding == 0 || !(cfg.width > 0.0) {
        return Err(MeasurementError::Domain("padding must be >= 1 and width > 0".into()));
    }
    let m = record.samples.len() - 1;
    let k_max = record.k_max();
    let len = ((2 * m + 1) * cfg.padding).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (j, s) in record.samples.iter().enumerate() {
        let c = s.characteristic() * cfg.window.weight(s.k / k_max);
        buf[j] += c;
        if j > 0 {
            buf[len - j] += c.conj();
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let spacing = 2.0 * PI / (len as f64 * dk);
    let scale = dk / (2.0 * PI);
    let half = len / 2;
    // FFT bin n holds q = n·spacing; reorder to q from −half to half − 1
    let coords = (0..len).map(|i| (i as f64 - half as f64) * spacing).collect();
    let values = (0..len).map(|i| buf[(i + half) % len].re * scale).collect();
    Ok(Reconstruction {
        axis: record.axis,
        coords,
        spacing,
        values,
        resolution: 2.0 * PI / k_max,
        extent: 2.0 * PI / dk,
        bandwidth_warning: k_max * cfg.width < BANDWIDTH_BOUND,
    })
}

/// Mean position from the reconstructed density.
pub fn reconstruct_mean(record: &MeasurementRecord, cfg: &ReconstructionConfig) -> Result<f64, MeasurementError> {
    reconstruct_density(record, cfg)?.mean()
}

/// Probe samples from an exact characteristic function, for forward-model checks.
pub fn record_from_characteristic<F>(axis: Axis, k_samples: &[f64], chi: F) -> Result<MeasurementRecord, MeasurementError>
where
    F: Fn(f64) -> Complex64,
{
    let samples = k_samples
        .iter()
        .map(|&k| {
            let c = chi(k);
            ProbeSample {
                k,
                p_z: ((1.0 + c.re) / 2.0).clamp(0.0, 1.0),
                p_y: ((1.0 + c.im) / 2.0).clamp(0.0, 1.0),
            }
        })
        .collect();
    MeasurementRecord::new(axis, samples, Shots::Exact)
}

/// Characteristic function `e^{ikq₀ − k²σ²/2}` of a Gaussian.
pub fn gaussian_characteristic(mean: f64, variance: f64) -> impl Fn(f64) -> Complex64 {
    move |k| Complex64::from_polar((-0.5 * k * k * variance).exp(), k * mean)
}

pub fn gaussian_density(mean: f64, variance: f64) -> impl Fn(f64) -> f64 {
    move |q| (-(q - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}
