//! Invariant suites run by `weylsim verify`.

use serde::{Deserialize, Serialize};
use weyl_core::ionfock::{self, FockConfig, MotionalMode};
use weyl_core::measurement::{self, ProbeSchedule};
use weyl_core::observables::{self, QuadratureConfig};

use crate::config::ExperimentConfig;
use crate::runner::{sha256_hex, Status};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyReport {
    pub version: String,
    pub config_hash: String,
    pub suites: Vec<SuiteReport>,
    pub status: Status,
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    /// Records `|value| ≤ tolerance`.
    fn within(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance,
            pass: value.abs() <= tolerance,
        });
    }
}

fn suite<F>(name: &str, body: F) -> SuiteReport
where
    F: FnOnce(&mut Suite) -> Result<(), String>,
{
    let mut s = Suite { checks: Vec::new() };
    let result = body(&mut s);
    let ok = result.is_ok() && s.checks.iter().all(|c| c.pass);
    SuiteReport {
        suite: name.to_owned(),
        status: Status::from_bool(ok),
        checks: s.checks,
        error: result.err(),
    }
}

const TIMES: [f64; 3] = [0.5, 1.5, 3.0];

fn identities(fc: &FockConfig) -> SuiteReport {
    suite("identities", |s| {
        for n in [8, 16] {
            for c in ionfock::verify_identities(&FockConfig { truncation: n, ..*fc }).map_err(|e| e.to_string())? {
                s.within(format!("{} (N={n})", c.name), c.deviation, 1e-12);
                s.within(format!("{} hermiticity (N={n})", c.name), c.hermiticity, 1e-12);
            }
        }
        Ok(())
    })
}

fn preparation(fc: &FockConfig, n: f64, m: f64) -> SuiteReport {
    suite("preparation", |s| {
        let ev = ionfock::prepare_kicked_state(n, m, fc).map_err(|e| e.to_string())?;
        s.within("leakage", ev.max_leakage, ionfock::LEAKAGE_LIMIT);
        s.within("norm - 1", ev.state.norm() - 1.0, 1e-10);
        for (mode, key, kick) in [(MotionalMode::X, "px", n), (MotionalMode::Y, "py", m)] {
            if ev.state.layout.has(mode) {
                let p = ev.state.mean_momentum(mode).map_err(|e| e.to_string())?;
                s.within(format!("<{key}> + {kick}"), p + kick, 1e-6);
            }
        }
        Ok(())
    })
}

fn oracles(cfg: &ExperimentConfig) -> SuiteReport {
    suite("oracles", |s| {
        let packet = cfg.packet.clone().unwrap_or_default();
        let spec = packet.spec(None)?;
        let grid = packet.grid(&spec)?;
        let quad = QuadratureConfig::default();
        let c = 1.0;
        let h = 1e-3;
        // ⟨x⟩ and ⟨y⟩ are odd in t, so the central difference is ⟨x(h)⟩/h
        let step = observables::mean_position_quadrature(&spec, h, &quad).map_err(|e| e.to_string())?;
        let (vx, vy) = (step.x / h, step.y / h);
        s.within("initial velocity x + c", vx + c, 1e-4 * c);
        s.within("initial velocity y", vy, 1e-6 * c);
        for t in TIMES {
            let q = observables::mean_position_quadrature(&spec, t, &quad).map_err(|e| e.to_string())?;
            let sp = observables::mean_position_spectral(&spec, t, &grid).map_err(|e| e.to_string())?;
            let tol = 1e-4 + q.error.0.max(q.error.1);
            s.within(format!("quadrature - spectral x (t={t})"), q.x - sp.x, tol);
            s.within(format!("quadrature - spectral y (t={t})"), q.y - sp.y, tol);
            if spec.kick_x == 0.0 || spec.kick_y == 0.0 {
                s.within(format!("odd null <y> (t={t})"), q.y, 1e-6);
            }
        }
        Ok(())
    })
}

fn crosscheck(cfg: &ExperimentConfig, fc: &FockConfig) -> SuiteReport {
    suite("crosscheck", |s| {
        let packet = cfg.packet.clone().unwrap_or_default();
        let spec = packet.spec(None)?;
        let grid = packet.grid(&spec)?;
        let r = ionfock::fock_vs_spectral_crosscheck(&spec, 1.5, fc, &grid).map_err(|e| e.to_string())?;
        s.within("fock - spectral (t=1.5)", r.deviation, 0.02);
        s.within("leakage", r.max_leakage, ionfock::LEAKAGE_LIMIT);
        Ok(())
    })
}

fn measurement_round_trip(cfg: &ExperimentConfig) -> SuiteReport {
    suite("measurement", |s| {
        let probe = cfg.probe.clone().unwrap_or_default();
        let width = cfg.packet.as_ref().map_or(1.0, |p| p.width);
        let schedule: ProbeSchedule = probe.schedule(None)?;
        let y0 = 1.7 * width;
        let rec = measurement::record_from_characteristic(
            schedule.axis,
            &schedule.k_samples,
            measurement::gaussian_characteristic(y0, width * width),
        )
        .map_err(|e| e.to_string())?;
        let r = measurement::reconstruct_density(&rec, &probe.reconstruction(width)).map_err(|e| e.to_string())?;
        s.within("gaussian L1", r.l1_distance(measurement::gaussian_density(y0, width * width)), 0.01);
        s.within("mean - y0", r.mean().map_err(|e| e.to_string())? - y0, r.resolution / 2.0);
        Ok(())
    })
}

/// Runs every suite the config's sections allow.
pub fn verify(cfg: &ExperimentConfig, config_bytes: &[u8]) -> VerifyReport {
    let mut suites = Vec::new();
    if let Some(ion) = &cfg.ion {
        match ion.fock_config() {
            Ok(fc) => {
                suites.push(identities(&fc));
                let p = cfg.packet.clone().unwrap_or_default();
                suites.push(preparation(&fc, p.kick_x, p.kick_y));
                if cfg.packet.is_some() {
                    suites.push(crosscheck(cfg, &fc));
                }
            }
            Err(e) => suites.push(SuiteReport {
                suite: "ion".into(),
                status: Status::Fail,
                checks: Vec::new(),
                error: Some(e.to_string()),
            }),
        }
    }
    if cfg.packet.is_some() {
        suites.push(oracles(cfg));
    }
    if cfg.probe.is_some() {
        suites.push(measurement_round_trip(cfg));
    }
    let status = Status::from_bool(suites.iter().all(|s| s.status == Status::Pass));
    VerifyReport {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: sha256_hex(config_bytes),
        suites,
        status,
    }
}
