//! Mean position of the packet as a function of time, computed two independent
//! ways, and the diagnostics built on it.
//!
//! [`mean_position_quadrature`] integrates the closed-form momentum-space
//! expectation of the Heisenberg position operator:
//!
//! ```text
//! ⟨x(t)⟩ = (w²/π) ∫∫ −1/|p|² (2 px² t + py² sin(2|p|t)/|p|) G(p) d²p
//! ⟨y(t)⟩ = (w²/π) ∫∫ −1/|p|² (2 px py t − px py sin(2|p|t)/|p|) G(p) d²p
//! G(p)   = exp(−2w²|p − p̄|²)
//! ```
//!
//! [`mean_position_spectral`] evolves the packet on a grid and takes first
//! moments of the position density. Each is the other's oracle.

pub mod quadrature;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavepacket::{
    self, decompose, evolve, make_initial, position_density, to_position, MomentumGrid, PacketError,
    WavePacketSpec, SIGMA_X_PLUS,
};

pub use quadrature::{QuadratureConfig, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error("time must be finite and non-negative, got {0}")]
    NegativeTime(f64),
    #[error("quadrature did not converge: error estimate {estimate:.3e} exceeds tolerance {tolerance:.1e}")]
    QuadratureFailure { estimate: f64, tolerance: f64 },
    #[error("the closed-form mean-position integrals assume the (1,1)/√2 internal state")]
    UnsupportedInternalState,
    #[error("packet reaches the edge of the position grid: mass {edge_mass:.3e} in the outer band")]
    PositionTruncation { edge_mass: f64 },
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("degenerate fit: {0}")]
    Fit(String),
}

/// Largest tolerated probability in the outer 10% band of the position grid.
pub const EDGE_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanPosition {
    pub x: f64,
    pub y: f64,
    /// Error estimates for `x` and `y`.
    pub error: (f64, f64),
    /// Set when a fixed rule's error estimate exceeds the requested tolerance.
    pub warning: bool,
}

fn check_time(t: f64) -> Result<(), ObservableError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(ObservableError::NegativeTime(t));
    }
    Ok(())
}

/// Evaluates the mean-position integrals for a packet of the given width
/// centred at momentum `centre`. `centre` may have either sign here.
pub fn mean_position_quadrature_centred(
    centre: (f64, f64),
    width: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<MeanPosition, ObservableError> {
    check_time(t)?;
    let w2 = width * width;
    let half = cfg.box_half_width.unwrap_or(4.5) / width;
    let bounds = (centre.0 - half, centre.0 + half, centre.1 - half, centre.1 + half);
    let prefactor = w2 / std::f64::consts::PI;
    let integrand = |px: f64, py: f64| {
        let e2 = px * px + py * py;
        let e = e2.sqrt();
        let g = (-2.0 * w2 * ((px - centre.0).powi(2) + (py - centre.1).powi(2))).exp();
        let zbw = (2.0 * e * t).sin() / e;
        let scale = -prefactor * g / e2;
        [
            scale * (2.0 * px * px * t + py * py * zbw),
            scale * (2.0 * px * py * t - px * py * zbw),
        ]
    };
    let r = quadrature::integrate(&integrand, bounds, (0.0, 0.0), cfg);
    let estimate = r.error[0].max(r.error[1]);
    if !r.converged {
        if let QuadratureRule::Adaptive { .. } = cfg.rule {
            return Err(ObservableError::QuadratureFailure {
                estimate,
                tolerance: cfg.tolerance,
            });
        }
    }
    Ok(MeanPosition {
        x: r.value[0],
        y: r.value[1],
        error: (r.error[0], r.error[1]),
        warning: !r.converged,
    })
}

pub fn mean_position_quadrature(
    spec: &WavePacketSpec,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<MeanPosition, ObservableError> {
    spec.validate()?;
    if spec.internal != SIGMA_X_PLUS {
        return Err(ObservableError::UnsupportedInternalState);
    }
    mean_position_quadrature_centred(spec.mean_momentum(), spec.width, t, cfg)
}

/// Mean position from the evolved position density.
pub fn mean_position_spectral(
    spec: &WavePacketSpec,
    t: f64,
    grid: &MomentumGrid,
) -> Result<MeanPosition, ObservableError> {
    check_time(t)?;
    let initial = make_initial(spec, grid)?;
    spectral_moments(&initial, t)
}

fn spectral_moments(initial: &wavepacket::SpinorField, t: f64) -> Result<MeanPosition, ObservableError> {
    let map = position_density(&to_position(&evolve(initial, t)?)?)?;
    let edge = 0.9 * map.coords.last().copied().unwrap_or(0.0);
    let area = map.spacing * map.spacing;
    let edge_mass: f64 = map
        .values
        .indexed_iter()
        .filter(|((ix, iy), _)| map.coords[*ix].abs() > edge || map.coords[*iy].abs() > edge)
        .map(|(_, v)| v * area)
        .sum();
    if edge_mass > EDGE_LIMIT {
        return Err(ObservableError::PositionTruncation { edge_mass });
    }
    let (x, y) = map.first_moments();
    // moments of mass leaking past the edge could be off by up to the grid extent
    let err = edge_mass * map.coords.last().copied().unwrap_or(0.0);
    Ok(MeanPosition {
        x,
        y,
        error: (err, err),
        warning: false,
    })
}

/// `∫|Ψ₊|² / ∫|Ψ₋|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRatio {
    pub ratio: f64,
    pub plus: f64,
    pub minus: f64,
    /// The negative-energy weight underflowed; `ratio` is `f64::INFINITY`.
    pub saturated: bool,
}

pub fn weight_ratio(spec: &WavePacketSpec, grid: &MomentumGrid) -> Result<WeightRatio, ObservableError> {
    let parts = decompose(&make_initial(spec, grid)?)?;
    let (plus, minus) = parts.weights();
    if minus < 1e-300 {
        return Ok(WeightRatio {
            ratio: f64::INFINITY,
            plus,
            minus,
            saturated: true,
        });
    }
    Ok(WeightRatio {
        ratio: plus / minus,
        plus,
        minus,
        saturated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quadrature,
    Spectral,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::Spectral => "spectral",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub method: Method,
}

impl TrajectoryRecord {
    pub fn new(times: Vec<f64>, mean_x: Vec<f64>, mean_y: Vec<f64>, method: Method) -> Result<Self, ObservableError> {
        if times.len() != mean_x.len() || times.len() != mean_y.len() {
            return Err(ObservableError::Trajectory("column lengths differ".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ObservableError::Trajectory("times must be strictly increasing".into()));
        }
        Ok(Self {
            times,
            mean_x,
            mean_y,
            method,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Finite-difference speed between each pair of adjacent samples.
    pub fn speeds(&self) -> Vec<f64> {
        (1..self.len())
            .map(|k| {
                let dx = self.mean_x[k] - self.mean_x[k - 1];
                let dy = self.mean_y[k] - self.mean_y[k - 1];
                dx.hypot(dy) / (self.times[k] - self.times[k - 1])
            })
            .collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds().into_iter().fold(0.0, f64::max)
    }

    /// Path length travelled between the samples in `[t0, t1]`, over elapsed time.
    pub fn mean_speed(&self, t0: f64, t1: f64) -> Result<f64, ObservableError> {
        let eps = 1e-9;
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.times[k] >= t0 - eps && self.times[k] <= t1 + eps)
            .collect();
        if idx.len() < 2 {
            return Err(ObservableError::Trajectory(format!("fewer than two samples in [{t0}, {t1}]")));
        }
        let mut path = 0.0;
        for w in idx.windows(2) {
            let (a, b) = (w[0], w[1]);
            path += (self.mean_x[b] - self.mean_x[a]).hypot(self.mean_y[b] - self.mean_y[a]);
        }
        let (first, last) = (idx[0], idx[idx.len() - 1]);
        Ok(path / (self.times[last] - self.times[first]))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,mean_x,mean_y,method")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.times[k],
                self.mean_x[k],
                self.mean_y[k],
                self.method.as_str()
            )?;
        }
        Ok(())
    }
}

/// `samples` uniform times over `[0, t_max]`.
pub fn uniform_times(t_max: f64, samples: usize) -> Vec<f64> {
    if samples < 2 {
        return vec![0.0];
    }
    (0..samples)
        .map(|k| t_max * k as f64 / (samples - 1) as f64)
        .collect()
}

pub fn trajectory(
    spec: &WavePacketSpec,
    times: &[f64],
    method: Method,
    quad: &QuadratureConfig,
    grid: &MomentumGrid,
) -> Result<TrajectoryRecord, ObservableError> {
    let points: Vec<MeanPosition> = match method {
        Method::Quadrature => times
            .par_iter()
            .map(|&t| mean_position_quadrature(spec, t, quad))
            .collect::<Result<_, _>>()?,
        Method::Spectral => {
            let initial = make_initial(spec, grid)?;
            times
                .par_iter()
                .map(|&t| {
                    check_time(t)?;
                    spectral_moments(&initial, t)
                })
                .collect::<Result<_, _>>()?
        }
    };
    TrajectoryRecord::new(
        times.to_vec(),
        points.iter().map(|p| p.x).collect(),
        points.iter().map(|p| p.y).collect(),
        method,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub window: f64,
    pub step: f64,
}

impl Default for EnvelopeConfig {
    /// Windows of two time units with 50% overlap.
    fn default() -> Self {
        Self { window: 2.0, step: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeWindow {
    pub start: f64,
    pub end: f64,
    /// Peak-to-peak of the detrended residual along x and y.
    pub amplitude_x: f64,
    pub amplitude_y: f64,
}

impl EnvelopeWindow {
    pub fn amplitude(&self) -> f64 {
        self.amplitude_x.hypot(self.amplitude_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZbwEnvelope {
    /// Least-squares drift velocity over the whole record.
    pub drift_slope: (f64, f64),
    pub windows: Vec<EnvelopeWindow>,
}

impl ZbwEnvelope {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.amplitude()).collect()
    }
}

/// Straight-line least squares `v ≈ a + b t`; returns `(a, b)`.
fn line_fit(t: &[f64], v: &[f64]) -> Result<(f64, f64), ObservableError> {
    let n = t.len() as f64;
    let st: f64 = t.iter().sum();
    let stt: f64 = t.iter().map(|x| x * x).sum();
    let sv: f64 = v.iter().sum();
    let stv: f64 = t.iter().zip(v).map(|(a, b)| a * b).sum();
    let det = n * stt - st * st;
    if !(det.abs() > 1e-12 * n * stt.max(1.0)) {
        return Err(ObservableError::Fit(format!("singular normal equations over {} samples", t.len())));
    }
    let b = (n * stv - st * sv) / det;
    Ok(((sv - b * st) / n, b))
}

fn peak_to_peak(t: &[f64], v: &[f64]) -> Result<f64, ObservableError> {
    let (a, b) = line_fit(t, v)?;
    let (lo, hi) = t
        .iter()
        .zip(v)
        .map(|(t, v)| v - a - b * t)
        .fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(hi - lo)
}

/// Windowed Zitterbewegung amplitude: within each window the best straight line
/// is removed and the peak-to-peak residual is reported.
pub fn zbw_envelope(traj: &TrajectoryRecord, cfg: &EnvelopeConfig) -> Result<ZbwEnvelope, ObservableError> {
    if traj.len() < 3 {
        return Err(ObservableError::Fit("need at least three samples".into()));
    }
    if !(cfg.window > 0.0 && cfg.step > 0.0) {
        return Err(ObservableError::Fit("window and step must be positive".into()));
    }
    let t0 = traj.times[0];
    let t_end = traj.times[traj.len() - 1];
    if t_end - t0 < cfg.window - 1e-9 {
        return Err(ObservableError::Fit(format!(
            "record spans {} time units, shorter than one window of {}",
            t_end - t0,
            cfg.window
        )));
    }
    let (_, vx) = line_fit(&traj.times, &traj.mean_x)?;
    let (_, vy) = line_fit(&traj.times, &traj.mean_y)?;

    let eps = 1e-9;
    let mut windows = Vec::new();
    let mut k = 0usize;
    loop {
        let start = t0 + k as f64 * cfg.step;
        let end = start + cfg.window;
        if end > t_end + eps {
            break;
        }
        let idx: Vec<usize> = (0..traj.len())
            .filter(|&i| traj.times[i] >= start - eps && traj.times[i] <= end + eps)
            .collect();
        if idx.len() < 3 {
            return Err(ObservableError::Fit(format!("window [{start}, {end}] holds fewer than three samples")));
        }
        let t: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
        let x: Vec<f64> = idx.iter().map(|&i| traj.mean_x[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| traj.mean_y[i]).collect();
        windows.push(EnvelopeWindow {
            start,
            end,
            amplitude_x: peak_to_peak(&t, &x)?,
            amplitude_y: peak_to_peak(&t, &y)?,
        });
        k += 1;
    }
    Ok(ZbwEnvelope {
        drift_slope: (vx, vy),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(n: f64, m: f64) -> WavePacketSpec {
        WavePacketSpec::new(n, m).unwrap()
    }

    #[test]
    fn vanishes_at_time_zero() {
        for (n, m) in [(0.0, 0.0), (1.0, 1.0), (0.0, 2.0)] {
            let r = mean_position_quadrature(&spec(n, m), 0.0, &QuadratureConfig::default()).unwrap();
            assert_eq!((r.x, r.y), (0.0, 0.0));
        }
    }

    #[test]
    fn negative_time_is_rejected() {
        let cfg = QuadratureConfig::default();
        assert_eq!(
            mean_position_quadrature(&spec(0.0, 0.0), -1.0, &cfg),
            Err(ObservableError::NegativeTime(-1.0))
        );
    }

    #[test]
    fn odd_integrand_gives_zero_y() {
        let cfg = QuadratureConfig::default();
        for t in [0.5, 1.5, 3.0, 5.0] {
            let r = mean_position_quadrature(&spec(0.0, 1.0), t, &cfg).unwrap();
            assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn non_default_spinor_is_rejected() {
        let s = spec(0.0, 0.0)
            .with_internal([num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 0.0)])
            .unwrap();
        assert_eq!(
            mean_position_quadrature(&s, 1.0, &QuadratureConfig::default()),
            Err(ObservableError::UnsupportedInternalState)
        );
    }

    #[test]
    fn fixed_rule_matches_adaptive() {
        let a = mean_position_quadrature(&spec(1.0, 1.0), 1.5, &QuadratureConfig::default()).unwrap();
        let b = mean_position_quadrature(&spec(1.0, 1.0), 1.5, &QuadratureConfig::tensor(14, 0.5)).unwrap();
        assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-10);
        assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-10);
        assert!(!b.warning);
    }

    #[test]
    fn coarse_fixed_rule_sets_warning() {
        let cfg = QuadratureConfig {
            tolerance: 1e-14,
            ..QuadratureConfig::tensor(4, 2.0)
        };
        let r = mean_position_quadrature(&spec(1.0, 0.0), 3.0, &cfg).unwrap();
        assert!(r.warning);
    }

    #[test]
    fn adaptive_failure_carries_estimate() {
        let cfg = QuadratureConfig {
            rule: QuadratureRule::Adaptive { order: 4, max_panels: 50 },
            tolerance: 1e-15,
            ..QuadratureConfig::default()
        };
        match mean_position_quadrature(&spec(1.0, 0.0), 3.0, &cfg) {
            Err(ObservableError::QuadratureFailure { estimate, .. }) => assert!(estimate > 1e-15),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn x_is_even_in_the_y_kick() {
        let cfg = QuadratureConfig::default();
        for t in [0.7, 2.2] {
            let a = mean_position_quadrature_centred((-1.0, -1.5), 1.0, t, &cfg).unwrap();
            let b = mean_position_quadrature_centred((-1.0, 1.5), 1.0, t, &cfg).unwrap();
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-10);
            assert_abs_diff_eq!(a.y, -b.y, epsilon = 1e-10);
        }
    }

    #[test]
    fn centred_weights_split_evenly() {
        let g = MomentumGrid::default_for(&spec(0.0, 0.0));
        let r = weight_ratio(&spec(0.0, 0.0), &g).unwrap();
        assert_abs_diff_eq!(r.ratio, 1.0, epsilon = 1e-6);
        assert!(!r.saturated);
        let kicked = weight_ratio(&spec(1.0, 0.0), &g).unwrap();
        assert!(kicked.ratio > 10.0);
    }

    #[test]
    fn mirrored_internal_state_inverts_the_ratio() {
        use num_complex::Complex64;
        // (1, −1)/√2 swaps the (1 ∓ cos θ)/2 helicity weights at every node
        let g = MomentumGrid::default_for(&spec(0.0, 0.0));
        for (n, m) in [(0.0, 0.0), (1.0, 0.5)] {
            let plus = spec(n, m);
            let mirror = plus
                .with_internal([Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)])
                .unwrap();
            let a = weight_ratio(&plus, &g).unwrap().ratio;
            let b = weight_ratio(&mirror, &g).unwrap().ratio;
            assert_abs_diff_eq!(a * b, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn trajectory_validation_and_speeds() {
        assert!(TrajectoryRecord::new(vec![0.0, 0.0], vec![0.0; 2], vec![0.0; 2], Method::Spectral).is_err());
        assert!(TrajectoryRecord::new(vec![0.0, 1.0], vec![0.0; 3], vec![0.0; 2], Method::Spectral).is_err());
        let tr = TrajectoryRecord::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.6, 1.2],
            vec![0.0, 0.8, 1.6],
            Method::Quadrature,
        )
        .unwrap();
        assert_eq!(tr.speeds(), vec![1.0, 1.0]);
        assert_abs_diff_eq!(tr.mean_speed(0.0, 2.0).unwrap(), 1.0, epsilon = 1e-15);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mean_x,mean_y,method\n0,0,0,quadrature\n"));
    }

    #[test]
    fn straight_line_has_no_envelope() {
        let times = uniform_times(6.0, 61);
        let x: Vec<f64> = times.iter().map(|t| 0.3 - 0.8 * t).collect();
        let y: Vec<f64> = times.iter().map(|t| 0.1 * t).collect();
        let tr = TrajectoryRecord::new(times, x, y, Method::Quadrature).unwrap();
        let env = zbw_envelope(&tr, &EnvelopeConfig::default()).unwrap();
        assert_eq!(env.windows.len(), 5);
        assert!(env.amplitudes().iter().all(|a| *a < 1e-12));
        assert_abs_diff_eq!(env.drift_slope.0, -0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(env.drift_slope.1, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn envelope_tracks_a_decaying_oscillation() {
        let times = uniform_times(6.0, 241);
        let x: Vec<f64> = times.iter().map(|t| -0.7 * t + 0.2 * (-t).exp() * (3.0 * t).sin()).collect();
        let tr = TrajectoryRecord::new(times.clone(), x, vec![0.0; times.len()], Method::Quadrature).unwrap();
        let amps = zbw_envelope(&tr, &EnvelopeConfig::default()).unwrap().amplitudes();
        assert!(amps.windows(2).all(|w| w[1] < w[0]), "{amps:?}");
    }

    #[test]
    fn envelope_needs_coverage() {
        let times = uniform_times(1.0, 11);
        let tr = TrajectoryRecord::new(times.clone(), times.clone(), times.clone(), Method::Spectral).unwrap();
        assert!(matches!(zbw_envelope(&tr, &EnvelopeConfig::default()), Err(ObservableError::Fit(_))));
    }
}
