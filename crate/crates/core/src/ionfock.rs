//! Truncated Fock-space model of one trapped ion: a qubit coupled to one or two
//! motional modes by red (Jaynes–Cummings) and blue (anti-Jaynes–Cummings)
//! sideband drives.
//!
//! Conventions:
//!
//! * `ħ = 1` and lengths are in units of the ground-state width `Δ`, so
//!   `x̂ = a + a†` and `p̂ = −(i/2)(a − a†)`. Times are in units of `1/(ηΩ)`
//!   scaled by the configured coupling; the simulated light speed is
//!   `c = 2ηΩ` and the dimensionless Weyl time is `t̃ = 2ηΩ t`.
//! * Qubit `|0⟩` is the ground level, `|1⟩` the excited level,
//!   `σ⁺ = |1⟩⟨0|` and `σz = |1⟩⟨1| − |0⟩⟨0|`. The upper spinor component of
//!   [`crate::wavepacket`] is `|1⟩`, the lower is `|0⟩`.
//! * Basis index: qubit slowest, then the x mode, then the y mode.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observables::{self, ObservableError};
use crate::wavepacket::{MomentumGrid, WavePacketSpec};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("truncation exceeded: leakage {leakage:.3e} into the top Fock levels exceeds {limit:.1e}; {advice}")]
    TruncationExceeded { leakage: f64, limit: f64, advice: String },
    #[error("operator is not Hermitian: max deviation {0:.3e}")]
    NotHermitian(f64),
    #[error("state and operator live on different spaces")]
    DimensionMismatch,
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

/// Largest tolerated population in the top two Fock levels of any mode.
pub const LEAKAGE_LIMIT: f64 = 1e-6;
/// Hilbert-space dimension up to which propagators are built densely.
pub const DENSE_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modes {
    X,
    Y,
    Xy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionalMode {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sideband {
    Red,
    Blue,
}

/// Reduces an angle to `(−π, π]`.
pub fn reduce_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandPhases {
    pub red_x: f64,
    pub blue_x: f64,
    pub red_y: f64,
    pub blue_y: f64,
}

impl SidebandPhases {
    /// The phase choice that synthesizes `−c(σx p̂x + σy p̂y)`.
    pub fn weyl() -> Self {
        Self {
            red_x: PI / 2.0,
            blue_x: -PI / 2.0,
            red_y: 0.0,
            blue_y: PI,
        }
    }

    pub fn reduced(self) -> Self {
        Self {
            red_x: reduce_phase(self.red_x),
            blue_x: reduce_phase(self.blue_x),
            red_y: reduce_phase(self.red_y),
            blue_y: reduce_phase(self.blue_y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockConfig {
    /// Number of Fock levels kept per mode.
    pub truncation: usize,
    pub modes: Modes,
    pub eta: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub phases: SidebandPhases,
}

impl FockConfig {
    pub fn new(truncation: usize, modes: Modes, eta: f64, omega: f64) -> Result<Self, FockError> {
        let cfg = Self {
            truncation,
            modes,
            eta,
            omega_x: omega,
            omega_y: omega,
            phases: SidebandPhases::weyl(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FockError> {
        if self.truncation < 8 {
            return Err(FockError::Config(format!(
                "Fock truncation must be at least 8, got {}",
                self.truncation
            )));
        }
        for (name, v) in [("eta", self.eta), ("omega_x", self.omega_x), ("omega_y", self.omega_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FockError::Config(format!("{name} = {v} must be finite and > 0")));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> FockLayout {
        FockLayout {
            modes: self.modes,
            levels: self.truncation,
        }
    }

    /// Sideband coupling `ηΩ` for a mode.
    pub fn coupling(&self, mode: MotionalMode) -> f64 {
        match mode {
            MotionalMode::X => self.eta * self.omega_x,
            MotionalMode::Y => self.eta * self.omega_y,
        }
    }

    fn equal_couplings(&self) -> Result<f64, FockError> {
        let (a, b) = (self.omega_x, self.omega_y);
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
            return Err(FockError::Config(format!(
                "bichromatic Weyl drive needs equal couplings on both modes, got Ωx = {a}, Ωy = {b}"
            )));
        }
        Ok(self.eta * a)
    }

    /// Simulated light speed `c = 2ηΩ` (lengths in Δ).
    pub fn light_speed(&self) -> Result<f64, FockError> {
        Ok(2.0 * self.equal_couplings()?)
    }
}

/// A basis label `(qubit, nx, ny)`; the index of an inactive mode is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub qubit: usize,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockLayout {
    pub modes: Modes,
    pub levels: usize,
}

impl FockLayout {
    fn motional_dim(&self) -> usize {
        match self.modes {
            Modes::X | Modes::Y => self.levels,
            Modes::Xy => self.levels * self.levels,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.motional_dim()
    }

    pub fn has(&self, mode: MotionalMode) -> bool {
        matches!(
            (self.modes, mode),
            (Modes::Xy, _) | (Modes::X, MotionalMode::X) | (Modes::Y, MotionalMode::Y)
        )
    }

    pub fn index(&self, s: BasisState) -> usize {
        let n = self.levels;
        let motional = match self.modes {
            Modes::X => s.nx,
            Modes::Y => s.ny,
            Modes::Xy => s.nx * n + s.ny,
        };
        s.qubit * self.motional_dim() + motional
    }

    pub fn state(&self, index: usize) -> BasisState {
        let md = self.motional_dim();
        let (qubit, rest) = (index / md, index % md);
        let n = self.levels;
        match self.modes {
            Modes::X => BasisState { qubit, nx: rest, ny: 0 },
            Modes::Y => BasisState { qubit, nx: 0, ny: rest },
            Modes::Xy => BasisState {
                qubit,
                nx: rest / n,
                ny: rest % n,
            },
        }
    }

    fn occupation(&self, s: BasisState, mode: MotionalMode) -> usize {
        match mode {
            MotionalMode::X => s.nx,
            MotionalMode::Y => s.ny,
        }
    }

    fn with_occupation(&self, s: BasisState, mode: MotionalMode, n: usize) -> BasisState {
        match mode {
            MotionalMode::X => BasisState { nx: n, ..s },
            MotionalMode::Y => BasisState { ny: n, ..s },
        }
    }

    /// Whether every active mode sits below the top Fock level.
    pub fn is_interior(&self, s: BasisState) -> bool {
        let top = self.levels - 1;
        [MotionalMode::X, MotionalMode::Y]
            .iter()
            .filter(|m| self.has(**m))
            .all(|m| self.occupation(s, *m) < top)
    }

    fn in_top_two(&self, s: BasisState) -> bool {
        let cut = self.levels - 2;
        [MotionalMode::X, MotionalMode::Y]
            .iter()
            .filter(|m| self.has(**m))
            .any(|m| self.occupation(s, *m) >= cut)
    }
}

/// Sparse operator on the qubit ⊗ Fock space, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub layout: FockLayout,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl FockOperator {
    pub fn zeros(layout: FockLayout) -> Self {
        Self {
            layout,
            rows: vec![Vec::new(); layout.dim()],
        }
    }

    /// Builds the operator column by column from its action on basis states.
    fn from_action<F>(layout: FockLayout, action: F) -> Self
    where
        F: Fn(BasisState) -> Vec<(BasisState, Complex64)>,
    {
        let mut op = Self::zeros(layout);
        for col in 0..layout.dim() {
            for (target, amp) in action(layout.state(col)) {
                if amp != ZERO {
                    op.push(layout.index(target), col, amp);
                }
            }
        }
        for row in &mut op.rows {
            row.sort_by_key(|(c, _)| *c);
        }
        op
    }

    fn push(&mut self, row: usize, col: usize, v: Complex64) {
        match self.rows[row].iter_mut().find(|(c, _)| *c == col) {
            Some((_, acc)) => *acc += v,
            None => self.rows[row].push((col, v)),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.rows[row]
            .iter()
            .find(|(c, _)| *c == col)
            .map(|(_, v)| *v)
            .unwrap_or(ZERO)
    }

    pub fn add(&self, other: &FockOperator) -> Result<FockOperator, FockError> {
        if self.layout != other.layout {
            return Err(FockError::DimensionMismatch);
        }
        let mut out = self.clone();
        for (r, row) in other.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(r, c, v);
            }
        }
        for row in &mut out.rows {
            row.sort_by_key(|(c, _)| *c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: Complex64) -> FockOperator {
        let mut out = self.clone();
        for row in &mut out.rows {
            for (_, v) in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        DVector::from_iterator(
            self.dim(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(c, a)| a * v[c]).sum::<Complex64>()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `max |H_rc − conj(H_cr)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                worst = worst.max((v - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// Max-norm bound on `‖H‖₂` from the largest absolute row sum.
    fn norm_bound(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest element-wise deviation from a dense matrix over entries whose row
    /// and column are both interior (every mode below its top level).
    pub fn max_interior_deviation(&self, reference: &DMatrix<Complex64>) -> f64 {
        let dense = self.to_dense();
        let interior: Vec<usize> = (0..self.dim())
            .filter(|&k| self.layout.is_interior(self.layout.state(k)))
            .collect();
        let mut worst: f64 = 0.0;
        for &r in &interior {
            for &c in &interior {
                worst = worst.max((dense[(r, c)] - reference[(r, c)]).norm());
            }
        }
        worst
    }
}

fn lower(layout: &FockLayout, s: BasisState, mode: MotionalMode) -> Option<(BasisState, f64)> {
    let n = layout.occupation(s, mode);
    (n > 0).then(|| (layout.with_occupation(s, mode, n - 1), (n as f64).sqrt()))
}

fn raise(layout: &FockLayout, s: BasisState, mode: MotionalMode) -> Option<(BasisState, f64)> {
    let n = layout.occupation(s, mode);
    (n + 1 < layout.levels).then(|| (layout.with_occupation(s, mode, n + 1), ((n + 1) as f64).sqrt()))
}

fn require_mode(cfg: &FockConfig, mode: MotionalMode) -> Result<(), FockError> {
    if !cfg.layout().has(mode) {
        return Err(FockError::Config(format!("mode {mode:?} is not part of {:?}", cfg.modes)));
    }
    Ok(())
}

/// `ηΩ (a σ⁺ e^{iφ} + a† σ⁻ e^{−iφ})` for red, `ηΩ (a† σ⁺ e^{iφ} + a σ⁻ e^{−iφ})` for blue.
pub fn build_sideband(kind: Sideband, mode: MotionalMode, phase: f64, cfg: &FockConfig) -> Result<FockOperator, FockError> {
    cfg.validate()?;
    require_mode(cfg, mode)?;
    let layout = cfg.layout();
    let g = cfg.coupling(mode);
    let up = Complex64::from_polar(g, phase);
    let down = up.conj();
    Ok(FockOperator::from_action(layout, |s| {
        let mut out = Vec::with_capacity(1);
        // σ⁺ acts on |0⟩, σ⁻ on |1⟩
        let (motion, spin_amp) = if s.qubit == 0 {
            let m = match kind {
                Sideband::Red => lower(&layout, s, mode),
                Sideband::Blue => raise(&layout, s, mode),
            };
            (m, up)
        } else {
            let m = match kind {
                Sideband::Red => raise(&layout, s, mode),
                Sideband::Blue => lower(&layout, s, mode),
            };
            (m, down)
        };
        if let Some((t, amp)) = motion {
            out.push((BasisState { qubit: 1 - s.qubit, ..t }, spin_amp * amp));
        }
        out
    }))
}

/// Red plus blue sidebands on each active mode with the configured phases.
pub fn build_bichromatic(cfg: &FockConfig, phases: &SidebandPhases) -> Result<FockOperator, FockError> {
    let mut total = FockOperator::zeros(cfg.layout());
    let layout = cfg.layout();
    for (mode, red, blue) in [
        (MotionalMode::X, phases.red_x, phases.blue_x),
        (MotionalMode::Y, phases.red_y, phases.blue_y),
    ] {
        if layout.has(mode) {
            total = total.add(&build_sideband(Sideband::Red, mode, red, cfg)?)?;
            total = total.add(&build_sideband(Sideband::Blue, mode, blue, cfg)?)?;
        }
    }
    Ok(total)
}

/// Four-beam drive with the Weyl phases; equals `−c(σx p̂x + σy p̂y)` with `c = 2ηΩ`.
pub fn build_bichromatic_weyl(cfg: &FockConfig) -> Result<FockOperator, FockError> {
    if cfg.modes != Modes::Xy {
        return Err(FockError::Config("the Weyl drive needs both x and y modes".into()));
    }
    cfg.equal_couplings()?;
    build_bichromatic(cfg, &SidebandPhases::weyl())
}

/// Red plus blue sideband with zero phases on one mode; equals `(ηΩ/Δ) x̂ σx`.
pub fn build_displacement(mode: MotionalMode, cfg: &FockConfig) -> Result<FockOperator, FockError> {
    let red = build_sideband(Sideband::Red, mode, 0.0, cfg)?;
    red.add(&build_sideband(Sideband::Blue, mode, 0.0, cfg)?)
}

/// Dense reference matrices built from Kronecker products, independent of the
/// sparse sideband construction.
pub mod reference {
    use super::*;

    pub fn pauli_x() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    /// `σy = −i(σ⁺ − σ⁻)` in the `(|0⟩, |1⟩)` ordering.
    pub fn pauli_y() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, I, -I, ZERO])
    }

    pub fn pauli_z() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(2, 2, &[-ONE, ZERO, ZERO, ONE])
    }

    pub fn annihilation(levels: usize) -> DMatrix<Complex64> {
        let mut a = DMatrix::zeros(levels, levels);
        for n in 1..levels {
            a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    /// `x̂ = a + a†` in units of Δ.
    pub fn position(levels: usize) -> DMatrix<Complex64> {
        let a = annihilation(levels);
        &a + a.adjoint()
    }

    /// `p̂ = −(i/2)(a − a†)` in units of ħ/Δ.
    pub fn momentum(levels: usize) -> DMatrix<Complex64> {
        let a = annihilation(levels);
        (&a - a.adjoint()) * Complex64::new(0.0, -0.5)
    }

    /// Embeds `spin ⊗ motion_on(mode)` into the layout's full space.
    pub fn embed(
        layout: &FockLayout,
        spin: &DMatrix<Complex64>,
        mode: MotionalMode,
        motion: &DMatrix<Complex64>,
    ) -> DMatrix<Complex64> {
        let id = DMatrix::<Complex64>::identity(layout.levels, layout.levels);
        let motional = match layout.modes {
            Modes::X | Modes::Y => motion.clone(),
            Modes::Xy => match mode {
                MotionalMode::X => motion.kronecker(&id),
                MotionalMode::Y => id.kronecker(motion),
            },
        };
        spin.kronecker(&motional)
    }

    /// `−c(σx p̂x + σy p̂y)` restricted to the active modes.
    pub fn weyl(layout: &FockLayout, light_speed: f64) -> DMatrix<Complex64> {
        let p = momentum(layout.levels);
        let mut h = DMatrix::zeros(layout.dim(), layout.dim());
        if layout.has(MotionalMode::X) {
            h += embed(layout, &pauli_x(), MotionalMode::X, &p);
        }
        if layout.has(MotionalMode::Y) {
            h += embed(layout, &pauli_y(), MotionalMode::Y, &p);
        }
        h * Complex64::new(-light_speed, 0.0)
    }

    /// `(ηΩ/Δ) x̂ σx` on one mode.
    pub fn displacement(layout: &FockLayout, mode: MotionalMode, coupling: f64) -> DMatrix<Complex64> {
        embed(layout, &pauli_x(), mode, &position(layout.levels)) * Complex64::new(coupling, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub layout: FockLayout,
    pub amplitudes: DVector<Complex64>,
}

impl FockState {
    /// `qubit ⊗ |0⟩(⊗|0⟩)` with the qubit amplitudes given as `(|0⟩, |1⟩)`.
    pub fn ground(layout: FockLayout, qubit: [Complex64; 2]) -> Self {
        let mut amplitudes = DVector::zeros(layout.dim());
        for (q, amp) in qubit.iter().enumerate() {
            amplitudes[layout.index(BasisState { qubit: q, nx: 0, ny: 0 })] = *amp;
        }
        let mut s = Self { layout, amplitudes };
        s.normalize();
        s
    }

    /// Ground motion with the σx = +1 qubit `(|0⟩ + |1⟩)/√2`.
    pub fn kick_ready(layout: FockLayout) -> Self {
        Self::ground(layout, [ONE, ONE])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes /= Complex64::new(n, 0.0);
        }
    }

    /// Population with any active mode in its top two levels.
    pub fn leakage(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| self.layout.in_top_two(self.layout.state(*k)))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn expectation(&self, op: &FockOperator) -> Result<Complex64, FockError> {
        if op.layout != self.layout {
            return Err(FockError::DimensionMismatch);
        }
        Ok(self.amplitudes.dotc(&op.apply(&self.amplitudes)))
    }

    fn quadrature(&self, mode: MotionalMode, momentum: bool) -> Result<f64, FockError> {
        if !self.layout.has(mode) {
            return Err(FockError::Config(format!("mode {mode:?} is not part of {:?}", self.layout.modes)));
        }
        let layout = self.layout;
        let op = FockOperator::from_action(layout, |s| {
            let mut out = Vec::with_capacity(2);
            // x̂ = a + a†, p̂ = −(i/2)(a − a†)
            let (ca, cd) = if momentum {
                (Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5))
            } else {
                (ONE, ONE)
            };
            if let Some((t, amp)) = lower(&layout, s, mode) {
                out.push((t, ca * amp));
            }
            if let Some((t, amp)) = raise(&layout, s, mode) {
                out.push((t, cd * amp));
            }
            out
        });
        Ok(self.expectation(&op)?.re)
    }

    pub fn mean_position(&self, mode: MotionalMode) -> Result<f64, FockError> {
        self.quadrature(mode, false)
    }

    pub fn mean_momentum(&self, mode: MotionalMode) -> Result<f64, FockError> {
        self.quadrature(mode, true)
    }

    /// CSV `qubit,nx,ny,re,im`, one row per basis state in index order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "qubit,nx,ny,re,im")?;
        for (k, a) in self.amplitudes.iter().enumerate() {
            let s = self.layout.state(k);
            writeln!(out, "{},{},{},{},{}", s.qubit, s.nx, s.ny, a.re, a.im)?;
        }
        Ok(())
    }
}

/// Dense `exp(−iHt)` from the Hermitian eigendecomposition of `H`.
pub fn propagator(h: &FockOperator, duration: f64) -> Result<DMatrix<Complex64>, FockError> {
    let herm = h.hermiticity_error();
    if herm > 1e-12 {
        return Err(FockError::NotHermitian(herm));
    }
    Ok(dense_propagator(&h.to_dense(), duration))
}

pub(crate) fn dense_propagator(h: &DMatrix<Complex64>, duration: f64) -> DMatrix<Complex64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|e| Complex64::from_polar(1.0, -e * duration)),
    );
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * v.adjoint()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub state: FockState,
    /// Largest leakage seen at any checkpoint.
    pub max_leakage: f64,
}

fn leakage_guard(leakage: f64, layout: &FockLayout) -> Result<(), FockError> {
    if leakage > LEAKAGE_LIMIT {
        return Err(FockError::TruncationExceeded {
            leakage,
            limit: LEAKAGE_LIMIT,
            advice: format!("increase the truncation beyond {} levels per mode", layout.levels),
        });
    }
    Ok(())
}

/// Short Taylor steps of `exp(−iH dt)`, with `‖H‖ dt ≤ 1/2`.
fn taylor_evolve(
    h: &FockOperator,
    mut v: DVector<Complex64>,
    duration: f64,
    layout: &FockLayout,
) -> Result<(DVector<Complex64>, f64), FockError> {
    let bound = h.norm_bound();
    let steps = ((bound * duration.abs()) / 0.5).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let factor = Complex64::new(0.0, -dt);
    let mut max_leak: f64 = 0.0;
    for _ in 0..steps {
        let mut term = v.clone();
        let mut sum = v.clone();
        for k in 1..60 {
            term = h.apply(&term) * (factor / k as f64);
            sum += &term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        v = sum;
        let state = FockState {
            layout: *layout,
            amplitudes: v.clone(),
        };
        max_leak = max_leak.max(state.leakage());
        leakage_guard(max_leak, layout)?;
    }
    Ok((v, max_leak))
}

/// Applies `exp(−iH·duration)`: dense below [`DENSE_LIMIT`], short-step Taylor above.
/// Leakage is checked at intermediate checkpoints.
pub fn evolve_fock(state: &FockState, h: &FockOperator, duration: f64) -> Result<Evolution, FockError> {
    if h.layout != state.layout {
        return Err(FockError::DimensionMismatch);
    }
    let herm = h.hermiticity_error();
    if herm > 1e-12 {
        return Err(FockError::NotHermitian(herm));
    }
    let layout = state.layout;
    let mut max_leakage = state.leakage();
    leakage_guard(max_leakage, &layout)?;
    if duration == 0.0 {
        return Ok(Evolution {
            state: state.clone(),
            max_leakage,
        });
    }
    let amplitudes = if layout.dim() <= DENSE_LIMIT {
        const CHECKPOINTS: usize = 8;
        let u = propagator(h, duration / CHECKPOINTS as f64)?;
        let mut v = state.amplitudes.clone();
        for _ in 0..CHECKPOINTS {
            v = &u * v;
            let s = FockState { layout, amplitudes: v.clone() };
            max_leakage = max_leakage.max(s.leakage());
            leakage_guard(max_leakage, &layout)?;
        }
        v
    } else {
        let (v, leak) = taylor_evolve(h, state.amplitudes.clone(), duration, &layout)?;
        max_leakage = max_leakage.max(leak);
        v
    };
    Ok(Evolution {
        state: FockState { layout, amplitudes },
        max_leakage,
    })
}

/// Displacement pulses of `n/(ηΩ)` on x then `m/(ηΩ)` on y, starting from
/// `(|0⟩ + |1⟩)/√2 ⊗ |0, 0⟩`. Imparts mean momenta `−n` and `−m` (units ħ/Δ).
pub fn prepare_kicked_state(n: f64, m: f64, cfg: &FockConfig) -> Result<Evolution, FockError> {
    prepare_kicked_state_ordered(n, m, cfg, false)
}

/// As [`prepare_kicked_state`], optionally pulsing y before x.
pub fn prepare_kicked_state_ordered(n: f64, m: f64, cfg: &FockConfig, y_first: bool) -> Result<Evolution, FockError> {
    cfg.validate()?;
    for (name, v) in [("n", n), ("m", m)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(FockError::Config(format!("kick {name} = {v} must be finite and >= 0")));
        }
    }
    let layout = cfg.layout();
    let mut pulses = vec![(MotionalMode::X, n), (MotionalMode::Y, m)];
    if y_first {
        pulses.reverse();
    }
    let mut state = FockState::kick_ready(layout);
    let mut max_leakage = state.leakage();
    for (mode, kick) in pulses {
        if kick == 0.0 {
            continue;
        }
        require_mode(cfg, mode)?;
        let h = build_displacement(mode, cfg)?;
        let ev = evolve_fock(&state, &h, kick / cfg.coupling(mode))?;
        state = ev.state;
        max_leakage = max_leakage.max(ev.max_leakage);
    }
    Ok(Evolution { state, max_leakage })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosscheckReport {
    pub time: f64,
    pub fock: (f64, f64),
    pub spectral: (f64, f64),
    pub deviation: f64,
    pub max_leakage: f64,
}

/// Mean positions along a sequence of dimensionless times, evolving the
/// prepared state under the four-beam Weyl drive.
pub fn fock_trajectory(spec: &WavePacketSpec, times: &[f64], cfg: &FockConfig) -> Result<(Vec<(f64, f64)>, f64), FockError> {
    if spec.width != 1.0 {
        return Err(FockError::Config("the ion engine measures lengths in the ground-state width".into()));
    }
    let h = build_bichromatic_weyl(cfg)?;
    let c = cfg.light_speed()?;
    let prepared = prepare_kicked_state(spec.kick_x, spec.kick_y, cfg)?;
    let mut state = prepared.state;
    let mut max_leakage = prepared.max_leakage;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= now) {
            return Err(FockError::Config("times must be non-decreasing and non-negative".into()));
        }
        let ev = evolve_fock(&state, &h, (t - now) / c)?;
        state = ev.state;
        max_leakage = max_leakage.max(ev.max_leakage);
        now = t;
        out.push((
            state.mean_position(MotionalMode::X)?,
            state.mean_position(MotionalMode::Y)?,
        ));
    }
    Ok((out, max_leakage))
}

/// Compares the ion engine's `⟨x̂⟩, ⟨ŷ⟩` at dimensionless time `t` with the
/// spectral wave-packet engine.
pub fn fock_vs_spectral_crosscheck(
    spec: &WavePacketSpec,
    t: f64,
    cfg: &FockConfig,
    grid: &MomentumGrid,
) -> Result<CrosscheckReport, FockError> {
    let (points, max_leakage) = fock_trajectory(spec, &[t], cfg)?;
    let fock = points[0];
    let s = observables::mean_position_spectral(spec, t, grid)?;
    Ok(CrosscheckReport {
        time: t,
        fock,
        spectral: (s.x, s.y),
        deviation: (fock.0 - s.x).abs().max((fock.1 - s.y).abs()),
        max_leakage,
    })
}

/// Result of one effective-Hamiltonian identity check.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub truncation: usize,
    pub deviation: f64,
    pub hermiticity: f64,
}

impl IdentityCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.deviation <= tol && self.hermiticity <= tol
    }
}

/// The Weyl, single-mode and displacement identities at one truncation.
pub fn verify_identities(cfg: &FockConfig) -> Result<Vec<IdentityCheck>, FockError> {
    let n = cfg.truncation;
    let both = FockConfig { modes: Modes::Xy, ..*cfg };
    let mut checks = Vec::new();

    let h = build_bichromatic_weyl(&both)?;
    let c = both.light_speed()?;
    checks.push(IdentityCheck {
        name: "weyl: four-beam drive = -c(sx px + sy py)".into(),
        truncation: n,
        deviation: h.max_interior_deviation(&reference::weyl(&both.layout(), c)),
        hermiticity: h.hermiticity_error(),
    });

    let x_only = FockConfig { modes: Modes::X, ..*cfg };
    let hx = build_bichromatic(&x_only, &SidebandPhases::weyl())?;
    checks.push(IdentityCheck {
        name: "weyl-x: x-beams = -c sx px".into(),
        truncation: n,
        deviation: hx.max_interior_deviation(&reference::weyl(&x_only.layout(), 2.0 * x_only.coupling(MotionalMode::X))),
        hermiticity: hx.hermiticity_error(),
    });

    for mode in [MotionalMode::X, MotionalMode::Y] {
        let d = build_displacement(mode, &both)?;
        let label = match mode {
            MotionalMode::X => "displacement-x: zero-phase x beams = (eta Omega / Delta) x sx",
            MotionalMode::Y => "displacement-y: zero-phase y beams = (eta Omega / Delta) y sx",
        };
        checks.push(IdentityCheck {
            name: label.into(),
            truncation: n,
            deviation: d.max_interior_deviation(&reference::displacement(&both.layout(), mode, both.coupling(mode))),
            hermiticity: d.hermiticity_error(),
        });
    }
    Ok(checks)
}
