//! Momentum-kicked Gaussian spinor packets and their exact evolution under the
//! 1+2-dimensional Weyl Hamiltonian `H(p) = −(σx px + σy py)`.
//!
//! Everything is dimensionless (`ħ = c = Δ = 1`). Fields live on a square
//! momentum grid; [`to_position`] maps them to the conjugate position grid with
//! a unitary DFT, so discrete norms are preserved exactly up to rounding.
//!
//! The helicity factor `(px + i py)/|p|` has no value at `p = 0`. Grids are
//! half-cell offset by default so that node is never sampled; operations that
//! need the factor report [`PacketError::SingularNode`] otherwise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};

use ndarray::{Array2, Axis as NdAxis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("invalid packet parameters: {0}")]
    InvalidSpec(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid truncates the packet: tail mass {tail:.3e} outside the grid exceeds {limit:.1e}")]
    Truncation { tail: f64, limit: f64 },
    #[error("momentum node ({px}, {py}) is the origin where the helicity factor is undefined; use an offset grid")]
    SingularNode { px: f64, py: f64 },
    #[error("expected a field in the {expected:?} representation")]
    WrongRepresentation { expected: Representation },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Largest tolerated probability outside the grid for a freshly built packet.
pub const TAIL_LIMIT: f64 = 1e-6;

/// Internal-state spinor `(upper, lower)` of the initial packet.
pub type Spinor = [Complex64; 2];

/// The σx = +1 eigenstate `(1, 1)/√2` used throughout the protocol.
pub const SIGMA_X_PLUS: Spinor = [
    Complex64 { re: FRAC_1_SQRT_2, im: 0.0 },
    Complex64 { re: FRAC_1_SQRT_2, im: 0.0 },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavePacketSpec {
    /// Momentum kick along x; the mean momentum is `−kick_x / width`.
    pub kick_x: f64,
    /// Momentum kick along y.
    pub kick_y: f64,
    /// Position-space standard deviation of the motional ground state.
    pub width: f64,
    pub internal: Spinor,
}

impl WavePacketSpec {
    pub fn new(kick_x: f64, kick_y: f64) -> Result<Self, PacketError> {
        Self::with_width(kick_x, kick_y, 1.0)
    }

    pub fn with_width(kick_x: f64, kick_y: f64, width: f64) -> Result<Self, PacketError> {
        let spec = Self {
            kick_x,
            kick_y,
            width,
            internal: SIGMA_X_PLUS,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Replace the internal state; the spinor is normalized.
    pub fn with_internal(mut self, spinor: Spinor) -> Result<Self, PacketError> {
        let norm = (spinor[0].norm_sqr() + spinor[1].norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(PacketError::InvalidSpec("internal spinor has zero norm".into()));
        }
        self.internal = [spinor[0] / norm, spinor[1] / norm];
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PacketError> {
        for (name, v) in [("kick_x", self.kick_x), ("kick_y", self.kick_y)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PacketError::InvalidSpec(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(PacketError::InvalidSpec(format!("width = {} must be > 0", self.width)));
        }
        Ok(())
    }

    /// Mean momentum `(⟨px⟩, ⟨py⟩)` of the packet.
    pub fn mean_momentum(&self) -> (f64, f64) {
        (-self.kick_x / self.width, -self.kick_y / self.width)
    }

    /// Normalized scalar momentum amplitude at `(px, py)`; the spinor factor is separate.
    pub fn envelope(&self, px: f64, py: f64) -> f64 {
        let w = self.width;
        let (cx, cy) = self.mean_momentum();
        w * (2.0 / PI).sqrt() * (-(w * w) * ((px - cx).powi(2) + (py - cy).powi(2))).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumGrid {
    half_extent: f64,
    points: usize,
    offset: bool,
}

impl MomentumGrid {
    pub fn new(half_extent: f64, points: usize, offset: bool) -> Result<Self, PacketError> {
        if points < 16 || points % 2 != 0 {
            return Err(PacketError::InvalidGrid(format!(
                "points per axis must be even and >= 16, got {points}"
            )));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(PacketError::InvalidGrid(format!("half extent {half_extent} must be > 0")));
        }
        Ok(Self {
            half_extent,
            points,
            offset,
        })
    }

    /// 256 offset nodes per axis over `[−8, 8]`, widened for large kicks.
    pub fn default_for(spec: &WavePacketSpec) -> Self {
        let (cx, cy) = spec.mean_momentum();
        let reach = cx.abs().max(cy.abs()) + 6.0 / spec.width;
        Self {
            half_extent: reach.max(8.0),
            points: 256,
            offset: true,
        }
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn is_offset(&self) -> bool {
        self.offset
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points as f64
    }

    fn shift(&self) -> f64 {
        if self.offset {
            0.5
        } else {
            0.0
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_extent + self.spacing() * (j as f64 + self.shift())
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }

    /// Spacing of the conjugate position grid, `2π / (N dp)`.
    pub fn position_spacing(&self) -> f64 {
        2.0 * PI / (self.points as f64 * self.spacing())
    }

    pub fn position_node(&self, k: usize) -> f64 {
        self.position_spacing() * (k as f64 - (self.points / 2) as f64)
    }

    pub fn position_nodes(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.position_node(k)).collect()
    }

    pub fn cell_area(&self, repr: Representation) -> f64 {
        match repr {
            Representation::Momentum => self.spacing().powi(2),
            Representation::Position => self.position_spacing().powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Position,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Two-component complex field sampled on a square grid, indexed `[ix, iy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub representation: Representation,
    pub grid: MomentumGrid,
    pub upper: Array2<Complex64>,
    pub lower: Array2<Complex64>,
}

impl SpinorField {
    pub fn zeros(grid: MomentumGrid, representation: Representation) -> Self {
        let n = grid.points;
        Self {
            representation,
            grid,
            upper: Array2::zeros((n, n)),
            lower: Array2::zeros((n, n)),
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.grid.cell_area(self.representation)
    }

    pub fn coordinates(&self) -> Vec<f64> {
        match self.representation {
            Representation::Momentum => self.grid.nodes(),
            Representation::Position => self.grid.position_nodes(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        let s: f64 = self
            .upper
            .iter()
            .chain(self.lower.iter())
            .map(|z| z.norm_sqr())
            .sum();
        s * self.cell_area()
    }

    /// Discrete inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &SpinorField) -> Result<Complex64, PacketError> {
        self.check_compatible(other)?;
        let s: Complex64 = self
            .upper
            .iter()
            .zip(other.upper.iter())
            .chain(self.lower.iter().zip(other.lower.iter()))
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.cell_area())
    }

    /// Largest node-wise difference over both components.
    pub fn max_abs_diff(&self, other: &SpinorField) -> Result<f64, PacketError> {
        self.check_compatible(other)?;
        Ok(self
            .upper
            .iter()
            .zip(other.upper.iter())
            .chain(self.lower.iter().zip(other.lower.iter()))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn add(&self, other: &SpinorField) -> Result<SpinorField, PacketError> {
        self.check_compatible(other)?;
        Ok(SpinorField {
            representation: self.representation,
            grid: self.grid,
            upper: &self.upper + &other.upper,
            lower: &self.lower + &other.lower,
        })
    }

    fn check_compatible(&self, other: &SpinorField) -> Result<(), PacketError> {
        if self.grid != other.grid {
            return Err(PacketError::GridMismatch);
        }
        if self.representation != other.representation {
            return Err(PacketError::WrongRepresentation {
                expected: self.representation,
            });
        }
        Ok(())
    }

    fn require(&self, repr: Representation) -> Result<(), PacketError> {
        if self.representation != repr {
            return Err(PacketError::WrongRepresentation { expected: repr });
        }
        Ok(())
    }

    /// Node-wise map over the spinor with the node's coordinates.
    fn map_nodes<F>(&self, mut f: F) -> Result<SpinorField, PacketError>
    where
        F: FnMut(f64, f64, Complex64, Complex64) -> Result<(Complex64, Complex64), PacketError>,
    {
        let coords = self.coordinates();
        let mut out = SpinorField::zeros(self.grid, self.representation);
        for ((ix, iy), a) in self.upper.indexed_iter() {
            let b = self.lower[[ix, iy]];
            let (u, l) = f(coords[ix], coords[iy], *a, b)?;
            out.upper[[ix, iy]] = u;
            out.lower[[ix, iy]] = l;
        }
        Ok(out)
    }

    /// Total density `|upper|² + |lower|²` per node.
    pub fn density(&self) -> Array2<f64> {
        let mut rho = self.upper.mapv(|z| z.norm_sqr());
        rho.zip_mut_with(&self.lower, |r, z| *r += z.norm_sqr());
        rho
    }
}

/// `e^{iθ} = (px + i py)/|p|`.
fn helicity_phase(px: f64, py: f64) -> Result<Complex64, PacketError> {
    let r = px.hypot(py);
    if r == 0.0 {
        return Err(PacketError::SingularNode { px, py });
    }
    Ok(Complex64::new(px / r, py / r))
}

/// Builds the kicked packet `ψ(p) ∝ exp(−w²|p − p̄|²) · spinor` on `grid`,
/// normalized by the discrete sum.
pub fn make_initial(spec: &WavePacketSpec, grid: &MomentumGrid) -> Result<SpinorField, PacketError> {
    spec.validate()?;
    let nodes = grid.nodes();
    let dp = grid.spacing();
    let (cx, cy) = spec.mean_momentum();
    let w = spec.width;

    // Per-axis captured probability of exp(−2w²q²) against its exact integral √(π/2)/w.
    let captured = |centre: f64| -> f64 {
        let s: f64 = nodes
            .iter()
            .map(|p| (-2.0 * w * w * (p - centre).powi(2)).exp())
            .sum();
        s * dp * w / (PI / 2.0).sqrt()
    };
    let tail = 1.0 - captured(cx) * captured(cy);
    if tail > TAIL_LIMIT {
        return Err(PacketError::Truncation {
            tail,
            limit: TAIL_LIMIT,
        });
    }

    let mut field = SpinorField::zeros(*grid, Representation::Momentum);
    for (ix, &px) in nodes.iter().enumerate() {
        for (iy, &py) in nodes.iter().enumerate() {
            let g = spec.envelope(px, py);
            field.upper[[ix, iy]] = spec.internal[0] * g;
            field.lower[[ix, iy]] = spec.internal[1] * g;
        }
    }
    let norm = field.norm_sqr().sqrt();
    field.upper.mapv_inplace(|z| z / norm);
    field.lower.mapv_inplace(|z| z / norm);
    Ok(field)
}

/// Weights `(χ₊, χ₋)` of the positive- and negative-energy plane-wave spinors
/// `(∓(px − i py)/|p|, 1)` in the packet, with the `e^{i p·r}` Fourier
/// convention (no `1/2π` in front of the position-space integral).
pub fn chi_amplitudes(spec: &WavePacketSpec, p: (f64, f64)) -> Result<(Complex64, Complex64), PacketError> {
    let phase = helicity_phase(p.0, p.1)?;
    let [s0, s1] = spec.internal;
    // Projections onto the unit eigenvectors (∓e^{−iθ}, 1)/√2.
    let plus = (-phase * s0 + s1) * FRAC_1_SQRT_2;
    let minus = (phase * s0 + s1) * FRAC_1_SQRT_2;
    let scale = spec.envelope(p.0, p.1) * FRAC_1_SQRT_2 / (2.0 * PI);
    Ok((plus * scale, minus * scale))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecomposition {
    pub plus: SpinorField,
    pub minus: SpinorField,
}

impl EnergyDecomposition {
    pub fn weights(&self) -> (f64, f64) {
        (self.plus.norm_sqr(), self.minus.norm_sqr())
    }
}

/// Projects a momentum-space field onto the `E = ±|p|` eigenspaces of `H(p)`.
pub fn decompose(field: &SpinorField) -> Result<EnergyDecomposition, PacketError> {
    field.require(Representation::Momentum)?;
    let mut plus = SpinorField::zeros(field.grid, Representation::Momentum);
    let minus = field.map_nodes(|px, py, a, b| {
        let e = helicity_phase(px, py)?;
        // P∓ = ½ [[1, ±e^{−iθ}], [±e^{iθ}, 1]]
        let minus_u = 0.5 * (a + e.conj() * b);
        let minus_l = 0.5 * (e * a + b);
        Ok((minus_u, minus_l))
    })?;
    plus.upper = &field.upper - &minus.upper;
    plus.lower = &field.lower - &minus.lower;
    Ok(EnergyDecomposition { plus, minus })
}

/// Applies `exp(−i H(p) t)` node by node.
pub fn evolve(field: &SpinorField, t: f64) -> Result<SpinorField, PacketError> {
    field.require(Representation::Momentum)?;
    field.map_nodes(|px, py, a, b| {
        let e = px.hypot(py);
        if e == 0.0 {
            return Ok((a, b));
        }
        let phase = Complex64::new(px / e, py / e);
        let (s, c) = (e * t).sin_cos();
        // U = cos(Et) − i sin(Et) h with h = −[[0, e^{−iθ}], [e^{iθ}, 0]].
        let off = I * s;
        Ok((c * a + off * phase.conj() * b, off * phase * a + c * b))
    })
}

/// Unitary DFT along one array axis, momentum → position when `to_position`.
fn transform_axis(data: &mut Array2<Complex64>, axis: usize, grid: &MomentumGrid, to_position: bool) {
    let n = grid.points;
    let half = (n / 2) as f64;
    let s = grid.shift();
    let norm = grid.spacing() / (2.0 * PI).sqrt();
    let sign = if to_position { 1.0 } else { -1.0 };
    // e^{i p_j x_k} = (−1)^{j+k+N/2} e^{2πi jk/N} e^{2πi s (k − N/2)/N}
    let pre: Vec<Complex64> = (0..n)
        .map(|j| if j % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(-1.0, 0.0) })
        .collect();
    let post: Vec<Complex64> = (0..n)
        .map(|k| {
            let parity = if (k + n / 2) % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::from_polar(parity, sign * 2.0 * PI * s * (k as f64 - half) / n as f64)
        })
        .collect();
    let (first, second) = if to_position { (&pre, &post) } else { (&post, &pre) };
    let scale = if to_position { norm } else { grid.position_spacing() / (2.0 * PI).sqrt() };
    let direction = if to_position {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    let fft = FftPlanner::new().plan_fft(n, direction);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for mut lane in data.lanes_mut(NdAxis(axis)) {
        for (j, v) in lane.iter().enumerate() {
            buf[j] = *v * first[j];
        }
        fft.process(&mut buf);
        for (k, v) in lane.iter_mut().enumerate() {
            *v = buf[k] * second[k] * scale;
        }
    }
}

fn transform(field: &SpinorField, to_position: bool) -> SpinorField {
    let mut out = field.clone();
    for comp in [&mut out.upper, &mut out.lower] {
        transform_axis(comp, 0, &field.grid, to_position);
        transform_axis(comp, 1, &field.grid, to_position);
    }
    out.representation = if to_position {
        Representation::Position
    } else {
        Representation::Momentum
    };
    out
}

pub fn to_position(field: &SpinorField) -> Result<SpinorField, PacketError> {
    field.require(Representation::Momentum)?;
    Ok(transform(field, true))
}

pub fn to_momentum(field: &SpinorField) -> Result<SpinorField, PacketError> {
    field.require(Representation::Position)?;
    Ok(transform(field, false))
}

/// Position-space density on the conjugate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub coords: Vec<f64>,
    pub spacing: f64,
    pub values: Array2<f64>,
}

impl DensityMap {
    pub fn total(&self) -> f64 {
        self.values.sum() * self.spacing * self.spacing
    }

    pub fn first_moments(&self) -> (f64, f64) {
        let area = self.spacing * self.spacing;
        let mut mx = 0.0;
        let mut my = 0.0;
        for ((ix, iy), v) in self.values.indexed_iter() {
            mx += v * self.coords[ix];
            my += v * self.coords[iy];
        }
        (mx * area, my * area)
    }

    /// Strict local maxima (8-neighbourhood, ties broken by index order) at or
    /// above `fraction` of the global maximum.
    pub fn local_maxima(&self, fraction: f64) -> Vec<(f64, f64, f64)> {
        let peak = self.values.iter().cloned().fold(f64::MIN, f64::max);
        let n = self.coords.len();
        let mut found = Vec::new();
        for ix in 1..n - 1 {
            for iy in 1..n - 1 {
                let v = self.values[[ix, iy]];
                if v < fraction * peak {
                    continue;
                }
                let mut is_max = true;
                'nb: for dx in -1i64..=1 {
                    for dy in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (jx, jy) = ((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
                        let u = self.values[[jx, jy]];
                        // an equal neighbour earlier in index order owns the plateau
                        if u > v || (u == v && (jx, jy) < (ix, iy)) {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    found.push((self.coords[ix], self.coords[iy], v));
                }
            }
        }
        found
    }
}

pub fn position_density(field: &SpinorField) -> Result<DensityMap, PacketError> {
    field.require(Representation::Position)?;
    Ok(DensityMap {
        coords: field.grid.position_nodes(),
        spacing: field.grid.position_spacing(),
        values: field.density(),
    })
}

/// One-dimensional density with the other axis integrated out.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub coords: Vec<f64>,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl Marginal {
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    pub fn mean(&self) -> f64 {
        self.coords.iter().zip(&self.values).map(|(q, v)| q * v).sum::<f64>() * self.spacing
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.coords
            .iter()
            .zip(&self.values)
            .map(|(q, v)| (q - m).powi(2) * v)
            .sum::<f64>()
            * self.spacing
    }
}

/// Density along `axis` of a position-space field.
pub fn marginal(field: &SpinorField, axis: Axis) -> Result<Marginal, PacketError> {
    let map = position_density(field)?;
    Ok(marginal_of(&map, axis))
}

pub fn marginal_of(map: &DensityMap, axis: Axis) -> Marginal {
    // keep `axis`, sum over the other one
    let summed = match axis {
        Axis::X => map.values.sum_axis(NdAxis(1)),
        Axis::Y => map.values.sum_axis(NdAxis(0)),
    };
    Marginal {
        coords: map.coords.clone(),
        spacing: map.spacing,
        values: summed.iter().map(|v| v * map.spacing).collect(),
    }
}

/// Total, positive-energy and negative-energy position densities of a packet at one time.
#[derive(Debug, Clone)]
pub struct DensitySnapshot {
    pub time: f64,
    pub total: DensityMap,
    pub plus: DensityMap,
    pub minus: DensityMap,
}

impl DensitySnapshot {
    pub fn compute(spec: &WavePacketSpec, grid: &MomentumGrid, t: f64) -> Result<Self, PacketError> {
        let evolved = evolve(&make_initial(spec, grid)?, t)?;
        let parts = decompose(&evolved)?;
        Ok(Self {
            time: t,
            total: position_density(&to_position(&evolved)?)?,
            plus: position_density(&to_position(&parts.plus)?)?,
            minus: position_density(&to_position(&parts.minus)?)?,
        })
    }

    /// CSV `x,y,density_total,density_plus,density_minus_inverted` over `|x|, |y| ≤ window`.
    pub fn write_csv<W: Write>(&self, mut out: W, window: f64) -> io::Result<()> {
        writeln!(out, "x,y,density_total,density_plus,density_minus_inverted")?;
        let coords = &self.total.coords;
        for (ix, &x) in coords.iter().enumerate() {
            if x.abs() > window {
                continue;
            }
            for (iy, &y) in coords.iter().enumerate() {
                if y.abs() > window {
                    continue;
                }
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    x,
                    y,
                    self.total.values[[ix, iy]],
                    self.plus.values[[ix, iy]],
                    -self.minus.values[[ix, iy]]
                )?;
            }
        }
        Ok(())
    }
}
