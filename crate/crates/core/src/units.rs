//! Physical trap parameters and the dimensionless unit system.
//!
//! Every engine in this crate works in units where the ground-state width
//! `Δ = sqrt(ħ / 2mω)` is the unit of length, `ħ/Δ` the unit of momentum and
//! `Δ/c` the unit of time, with `c = ħηΩ sqrt(2 / mωħ)` the simulated speed of
//! light. In those units `ħ = c = Δ = 1`. [`PhysicalParams`] only appears at the
//! configuration boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitsError {
    #[error("invalid parameter `{name}` = {value}: must be finite and strictly positive")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("unit kind mismatch: value is a {found:?}, expected a {expected:?}")]
    KindMismatch {
        expected: QuantityKind,
        found: QuantityKind,
    },
}

/// Atomic mass unit in kg.
const AMU: f64 = 1.660_539_066_60e-27;
/// Reduced Planck constant in J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Trap and laser parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    /// Angular trap frequency ω (rad/s).
    pub trap_freq: f64,
    /// Lamb–Dicke parameter η.
    pub lamb_dicke: f64,
    /// Sideband coupling strength Ω (rad/s).
    pub rabi: f64,
}

impl PhysicalParams {
    pub fn new(
        hbar: f64,
        mass: f64,
        trap_freq: f64,
        lamb_dicke: f64,
        rabi: f64,
    ) -> Result<Self, UnitsError> {
        let p = Self {
            hbar,
            mass,
            trap_freq,
            lamb_dicke,
            rabi,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for which every natural scale is exactly one.
    pub fn unit() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            trap_freq: 0.5,
            lamb_dicke: 0.5,
            rabi: 1.0,
        }
    }

    /// A ⁴⁰Ca⁺ ion in a 1 MHz trap driven with a 2π·50 kHz sideband Rabi
    /// frequency. Demo values only.
    pub fn calcium40_demo() -> Self {
        Self {
            hbar: HBAR_SI,
            mass: 39.962_590_86 * AMU,
            trap_freq: 2.0 * std::f64::consts::PI * 1.0e6,
            lamb_dicke: 0.1,
            rabi: 2.0 * std::f64::consts::PI * 50.0e3,
        }
    }

    pub fn validate(&self) -> Result<(), UnitsError> {
        let fields = [
            ("hbar", self.hbar),
            ("mass", self.mass),
            ("trap_freq", self.trap_freq),
            ("lamb_dicke", self.lamb_dicke),
            ("rabi", self.rabi),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(UnitsError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Ground-state width Δ = sqrt(ħ / 2mω).
    pub fn width(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.trap_freq)).sqrt()
    }

    /// Simulated light speed c = ħηΩ sqrt(2 / mωħ).
    pub fn light_speed(&self) -> f64 {
        self.hbar * self.lamb_dicke * self.rabi * (2.0 / (self.mass * self.trap_freq * self.hbar)).sqrt()
    }
}

/// The scales that make a quantity dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalUnits {
    /// Δ
    pub length_scale: f64,
    /// Δ / c
    pub time_scale: f64,
    /// ħ / Δ
    pub momentum_scale: f64,
    pub light_speed: f64,
    pub hbar: f64,
}

impl NaturalUnits {
    /// The identity unit system, for configurations that are already dimensionless.
    pub fn dimensionless() -> Self {
        Self {
            length_scale: 1.0,
            time_scale: 1.0,
            momentum_scale: 1.0,
            light_speed: 1.0,
            hbar: 1.0,
        }
    }

    fn scale(&self, kind: QuantityKind) -> f64 {
        match kind {
            QuantityKind::Length => self.length_scale,
            QuantityKind::Time => self.time_scale,
            QuantityKind::Momentum => self.momentum_scale,
        }
    }
}

pub fn derive_scales(p: &PhysicalParams) -> Result<NaturalUnits, UnitsError> {
    p.validate()?;
    let length_scale = p.width();
    let light_speed = p.light_speed();
    let units = NaturalUnits {
        length_scale,
        time_scale: length_scale / light_speed,
        momentum_scale: p.hbar / length_scale,
        light_speed,
        hbar: p.hbar,
    };
    for (name, value) in [
        ("width", units.length_scale),
        ("light_speed", units.light_speed),
        ("time_scale", units.time_scale),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(UnitsError::InvalidParameter { name, value });
        }
    }
    Ok(units)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantityKind {
    Length,
    Time,
    Momentum,
}

/// A dimensioned SI quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    Length(f64),
    Time(f64),
    Momentum(f64),
}

impl Quantity {
    pub fn kind(&self) -> QuantityKind {
        match self {
            Quantity::Length(_) => QuantityKind::Length,
            Quantity::Time(_) => QuantityKind::Time,
            Quantity::Momentum(_) => QuantityKind::Momentum,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Quantity::Length(v) | Quantity::Time(v) | Quantity::Momentum(v) => v,
        }
    }

    fn with_value(kind: QuantityKind, v: f64) -> Self {
        match kind {
            QuantityKind::Length => Quantity::Length(v),
            QuantityKind::Time => Quantity::Time(v),
            QuantityKind::Momentum => Quantity::Momentum(v),
        }
    }
}

/// A number in natural units that remembers which kind of quantity it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensionless {
    pub kind: QuantityKind,
    pub value: f64,
}

pub fn to_dimensionless(q: Quantity, u: &NaturalUnits) -> Dimensionless {
    Dimensionless {
        kind: q.kind(),
        value: q.value() / u.scale(q.kind()),
    }
}

pub fn from_dimensionless(
    d: Dimensionless,
    kind: QuantityKind,
    u: &NaturalUnits,
) -> Result<Quantity, UnitsError> {
    if d.kind != kind {
        return Err(UnitsError::KindMismatch {
            expected: kind,
            found: d.kind,
        });
    }
    Ok(Quantity::with_value(kind, d.value * u.scale(kind)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_parameters_give_unit_scales() {
        let u = derive_scales(&PhysicalParams::unit()).unwrap();
        assert_relative_eq!(u.length_scale, 1.0, max_relative = 1e-15);
        assert_relative_eq!(u.light_speed, 1.0, max_relative = 1e-15);
        assert_relative_eq!(u.time_scale, 1.0, max_relative = 1e-15);
        assert_relative_eq!(u.momentum_scale, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn time_scale_is_inverse_two_eta_omega() {
        for p in [PhysicalParams::unit(), PhysicalParams::calcium40_demo()] {
            let u = derive_scales(&p).unwrap();
            assert_relative_eq!(u.time_scale * 2.0 * p.lamb_dicke * p.rabi, 1.0, max_relative = 1e-12);
            assert_relative_eq!(u.length_scale * u.momentum_scale, p.hbar, max_relative = 1e-12);
        }
    }

    #[test]
    fn doubling_rabi_halves_time_scale() {
        let p = PhysicalParams::calcium40_demo();
        let q = PhysicalParams { rabi: 2.0 * p.rabi, ..p };
        let (a, b) = (derive_scales(&p).unwrap(), derive_scales(&q).unwrap());
        assert_eq!(a.length_scale, b.length_scale);
        assert_relative_eq!(b.time_scale, 0.5 * a.time_scale, max_relative = 1e-14);
    }

    #[test]
    fn rejects_non_positive() {
        let p = PhysicalParams { mass: 0.0, ..PhysicalParams::unit() };
        assert!(matches!(derive_scales(&p), Err(UnitsError::InvalidParameter { name: "mass", .. })));
        assert!(PhysicalParams::new(1.0, 1.0, -1.0, 0.1, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn natural_scales_map_to_one() {
        let u = derive_scales(&PhysicalParams::calcium40_demo()).unwrap();
        assert_relative_eq!(to_dimensionless(Quantity::Length(u.length_scale), &u).value, 1.0);
        assert_relative_eq!(to_dimensionless(Quantity::Time(u.time_scale), &u).value, 1.0);
        assert_relative_eq!(to_dimensionless(Quantity::Momentum(-u.momentum_scale), &u).value, -1.0);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let u = NaturalUnits::dimensionless();
        let d = to_dimensionless(Quantity::Time(2.0), &u);
        assert_eq!(
            from_dimensionless(d, QuantityKind::Length, &u),
            Err(UnitsError::KindMismatch {
                expected: QuantityKind::Length,
                found: QuantityKind::Time
            })
        );
    }

    proptest! {
        #[test]
        fn round_trip(v in -1e3f64..1e3, k in 0usize..3) {
            let u = derive_scales(&PhysicalParams::calcium40_demo()).unwrap();
            let kind = [QuantityKind::Length, QuantityKind::Time, QuantityKind::Momentum][k];
            let q = Quantity::with_value(kind, v * u.scale(kind));
            let back = from_dimensionless(to_dimensionless(q, &u), kind, &u).unwrap();
            prop_assert!((back.value() - q.value()).abs() <= 1e-14 * q.value().abs());
        }

        #[test]
        fn rabi_scaling_scales_light_speed(lambda in 0.01f64..100.0) {
            let p = PhysicalParams::calcium40_demo();
            let q = PhysicalParams { rabi: lambda * p.rabi, ..p };
            let (a, b) = (derive_scales(&p).unwrap(), derive_scales(&q).unwrap());
            prop_assert_eq!(a.length_scale, b.length_scale);
            prop_assert!((b.light_speed / a.light_speed - lambda).abs() <= 1e-12 * lambda);
        }
    }
}
