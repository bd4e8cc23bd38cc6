//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use weyl_core::ionfock::{self, FockConfig, Modes, MotionalMode, LEAKAGE_LIMIT};
use weyl_core::measurement::{self, ProbeSchedule, ReconstructionConfig};
use weyl_core::observables::{self, EnvelopeConfig, Method, QuadratureConfig};
use weyl_core::wavepacket::{self, Axis, DensitySnapshot, MomentumGrid, WavePacketSpec};

type Outcome = Result<(bool, String), String>;

const C: f64 = 1.0;
const TIMES: [f64; 3] = [0.5, 1.5, 3.0];

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn spec(n: f64, m: f64) -> Result<WavePacketSpec, String> {
    WavePacketSpec::new(n, m).map_err(err)
}

fn grid(s: &WavePacketSpec) -> MomentumGrid {
    MomentumGrid::default_for(s)
}

fn fock(n: usize) -> Result<FockConfig, String> {
    FockConfig::new(n, Modes::Xy, 0.1, 1.0).map_err(err)
}

fn identities() -> Outcome {
    let mut worst = 0.0f64;
    for n in [8, 16] {
        for c in ionfock::verify_identities(&fock(n)?).map_err(err)? {
            worst = worst.max(c.deviation).max(c.hermiticity);
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e} (tol 1e-12) at N=8,16")))
}

fn preparation() -> Outcome {
    let ev = ionfock::prepare_kicked_state(1.0, 0.0, &fock(32)?).map_err(err)?;
    let px = ev.state.mean_momentum(MotionalMode::X).map_err(err)?;
    let py = ev.state.mean_momentum(MotionalMode::Y).map_err(err)?;
    let ok = (px + 1.0).abs() <= 1e-6 && py.abs() <= 1e-10;
    Ok((ok, format!("<px>={px:.9} (target -1 ± 1e-6), <py>={py:.1e} (tol 1e-10), leakage {:.1e}", ev.max_leakage)))
}

/// Spectral `⟨x⟩, ⟨y⟩` at any real time, including negative ones.
fn spectral_moments(s: &WavePacketSpec, t: f64) -> Result<(f64, f64), String> {
    let init = wavepacket::make_initial(s, &grid(s)).map_err(err)?;
    let field = wavepacket::to_position(&wavepacket::evolve(&init, t).map_err(err)?).map_err(err)?;
    Ok(wavepacket::position_density(&field).map_err(err)?.first_moments())
}

fn initial_velocity() -> Outcome {
    let h = 1e-3;
    let quad = QuadratureConfig::default();
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for (n, m) in [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 1.0)] {
        let s = spec(n, m)?;
        // odd in t: the central difference reduces to ⟨x(h)⟩/h
        let q = observables::mean_position_quadrature(&s, h, &quad).map_err(err)?;
        let (vx, vy) = (q.x / h, q.y / h);
        let (a, b) = (spectral_moments(&s, h)?, spectral_moments(&s, -h)?);
        let ox = (a.0 - b.0) / (2.0 * h);
        ok &= (vx + C).abs() <= 1e-4 * C && vy.abs() <= 1e-6 * C && (ox + C).abs() <= 1e-4 * C;
        worst.0 = worst.0.max((vx + C).abs());
        worst.1 = worst.1.max(vy.abs());
        worst.2 = worst.2.max((ox + C).abs());
    }
    Ok((
        ok,
        format!(
            "max |vx+c|={:.1e} (tol 1e-4), max |vy|={:.1e} (tol 1e-6), spectral oracle max |vx+c|={:.1e}",
            worst.0, worst.1, worst.2
        ),
    ))
}

fn odd_null() -> Outcome {
    let quad = QuadratureConfig::default();
    let mut worst = 0.0f64;
    for (n, m) in [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 0.0), (2.0, 0.0)] {
        for t in TIMES {
            let q = observables::mean_position_quadrature(&spec(n, m)?, t, &quad).map_err(err)?;
            worst = worst.max(q.y.abs());
        }
    }
    let x3 = observables::mean_position_quadrature(&spec(0.0, 0.0)?, 3.0, &quad).map_err(err)?.x;
    let ok = worst <= 1e-6 && x3.abs() >= 0.1;
    Ok((ok, format!("max |<y>|={worst:.1e} (tol 1e-6), spec(0,0) <x(3)>={x3:.5} (need |.| >= 0.1)")))
}

fn oracle_equivalence() -> Outcome {
    let quad = QuadratureConfig::default();
    let mut ok = true;
    let mut worst = 0.0f64;
    for (n, m) in [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 0.0), (1.0, 1.0)] {
        let s = spec(n, m)?;
        let g = grid(&s);
        for t in TIMES {
            let q = observables::mean_position_quadrature(&s, t, &quad).map_err(err)?;
            let p = observables::mean_position_spectral(&s, t, &g).map_err(err)?;
            for (a, b, ea, eb) in [(q.x, p.x, q.error.0, p.error.0), (q.y, p.y, q.error.1, p.error.1)] {
                let d = (a - b).abs();
                ok &= d <= 1e-4 + ea + eb;
                worst = worst.max(d);
            }
        }
    }
    Ok((ok, format!("max |quadrature - spectral|={worst:.1e} over 5 specs x 3 times (tol 1e-4 + estimates)")))
}

fn quadrature_track(n: f64, m: f64, t_max: f64, samples: usize) -> Result<observables::TrajectoryRecord, String> {
    let s = spec(n, m)?;
    let times = observables::uniform_times(t_max, samples);
    observables::trajectory(&s, &times, Method::Quadrature, &QuadratureConfig::default(), &grid(&s)).map_err(err)
}

fn light_speed() -> Outcome {
    let mut vmax = 0.0f64;
    for (n, m) in [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 0.0), (1.0, 1.0), (1.0, 2.0)] {
        vmax = vmax.max(quadrature_track(n, m, 6.0, 241)?.max_speed());
    }
    let mean = quadrature_track(1.0, 0.0, 3.0, 121)?.mean_speed(1.0, 3.0).map_err(err)?;
    let s = spec(1.0, 0.0)?;
    let ratio = observables::weight_ratio(&s, &grid(&s)).map_err(err)?.ratio;
    let bound = vmax <= C * (1.0 + 1e-3);
    let ok = bound && mean >= 0.98 * C && ratio >= 50.0;
    Ok((
        ok,
        format!(
            "max speed {vmax:.5} (bound {}: {}), spec(1,0) mean speed [1,3] {mean:.4} (need >= 0.98), weight ratio {ratio:.3} (need >= 50)",
            1.0 + 1e-3,
            if bound { "ok" } else { "violated" }
        ),
    ))
}

fn zbw_fading() -> Outcome {
    let env = observables::zbw_envelope(&quadrature_track(1.0, 1.0, 6.0, 241)?, &EnvelopeConfig::default()).map_err(err)?;
    let amps = env.amplitudes();
    let falling = amps.windows(2).all(|w| w[1] < w[0]);
    let whole = EnvelopeConfig { window: 3.0, step: 3.0 };
    let a00 = observables::zbw_envelope(&quadrature_track(0.0, 0.0, 3.0, 121)?, &whole).map_err(err)?.amplitudes()[0];
    let shown: Vec<String> = amps.iter().map(|a| format!("{a:.4}")).collect();
    Ok((
        falling && a00 >= 0.05,
        format!("spec(1,1) amplitudes [{}], spec(0,0) amplitude {a00:.4} (need >= 0.05)", shown.join(", ")),
    ))
}

fn energy_split() -> Outcome {
    let s = spec(0.0, 0.0)?;
    let ratio = observables::weight_ratio(&s, &grid(&s)).map_err(err)?.ratio;
    let s = spec(1.0, 0.0)?;
    let snap = DensitySnapshot::compute(&s, &grid(&s), 3.0).map_err(err)?;
    let peaks = snap.minus.local_maxima(0.1);
    let ok = (ratio - 1.0).abs() <= 1e-4 && peaks.len() == 2;
    let at: Vec<String> = peaks.iter().map(|p| format!("({:.2}, {:.2})", p.0, p.1)).collect();
    Ok((ok, format!("spec(0,0) ratio {ratio:.8} (1 ± 1e-4), spec(1,0) |Psi-|^2 peaks at t=3: {}", at.join(" "))))
}

fn round_trip() -> Outcome {
    let cfg = ReconstructionConfig::default();
    let sched = ProbeSchedule::default_for(Axis::Y, 1.0).map_err(err)?;
    let y0 = 1.7;
    let rec = measurement::record_from_characteristic(Axis::Y, &sched.k_samples, measurement::gaussian_characteristic(y0, 1.0))
        .map_err(err)?;
    let r = measurement::reconstruct_density(&rec, &cfg).map_err(err)?;
    let l1 = r.l1_distance(measurement::gaussian_density(y0, 1.0));
    let dm = r.mean().map_err(err)? - y0;
    let gauss_ok = l1 <= 0.01 && dm.abs() <= r.resolution / 2.0;

    let s = spec(0.0, 1.0)?;
    let g = grid(&s);
    let field = wavepacket::to_position(&wavepacket::evolve(&wavepacket::make_initial(&s, &g).map_err(err)?, 1.5).map_err(err)?)
        .map_err(err)?;
    let sched = ProbeSchedule::default_for(Axis::X, 1.0).map_err(err)?;
    let rec = measurement::measure(&field, &sched, 0).map_err(err)?;
    let mean = measurement::reconstruct_mean(&rec, &cfg).map_err(err)?;
    let reference = observables::mean_position_spectral(&s, 1.5, &g).map_err(err)?.x;
    let dx = (mean - reference).abs();
    let engine_ok = dx <= 0.02 + r.resolution / 2.0;
    Ok((
        gauss_ok && engine_ok,
        format!(
            "gaussian L1 {:.3}% (tol 1%), mean error {dm:.1e} (tol {:.3}); spec(0,1) t=1.5 reconstructed <x> {mean:.5} vs spectral {reference:.5}",
            100.0 * l1,
            r.resolution / 2.0
        ),
    ))
}

fn fock_crosscheck() -> Outcome {
    let s = spec(0.0, 0.0)?;
    let r = ionfock::fock_vs_spectral_crosscheck(&s, 1.5, &fock(48)?, &grid(&s)).map_err(err)?;
    let ok = r.deviation <= 0.02 && r.max_leakage <= LEAKAGE_LIMIT;
    Ok((
        ok,
        format!(
            "N=48 deviation {:.2e} (tol 0.02), leakage {:.1e} (tol 1e-6), fock <x>={:.5} spectral <x>={:.5}",
            r.deviation, r.max_leakage, r.fock.0, r.spectral.0
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Option<f64>, fn() -> Outcome); 10] = [
        (1, "operator identities", Some(5.0), identities),
        (2, "state preparation", Some(10.0), preparation),
        (3, "initial velocity", None, initial_velocity),
        (4, "odd-integrand null", None, odd_null),
        (5, "oracle equivalence", Some(120.0), oracle_equivalence),
        (6, "speed of light and near-luminal limit", None, light_speed),
        (7, "zitterbewegung fading", None, zbw_fading),
        (8, "energy split and two peaks", None, energy_split),
        (9, "measurement round trip", None, round_trip),
        (10, "fock vs spectral crosscheck", Some(600.0), fock_crosscheck),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let in_time = budget.is_none_or(|b| secs < b);
        let (pass, detail) = match outcome {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = match budget {
            Some(b) => format!("{secs:.2}s, budget {b}s"),
            None => format!("{secs:.2}s"),
        };
        println!("criterion {id:>2} {}: {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
        failures += usize::from(!pass);
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
