//! Task execution and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use weyl_core::ionfock::{self, FockConfig, MotionalMode};
use weyl_core::measurement::{self, Shots};
use weyl_core::observables::{self, QuadratureConfig};
use weyl_core::units::{derive_scales, NaturalUnits};
use weyl_core::wavepacket::{self, Axis, DensitySnapshot};

use crate::config::{ExperimentConfig, TaskSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_DIR_ENV: &str = "WEYLSIM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "weylsim-out";

/// Light-speed bound with the finite-difference allowance.
const SPEED_LIMIT: f64 = 1.0 + 1e-3;
const IDENTITY_TOL: f64 = 1e-12;
const KICK_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("output directory {0} is not empty; pass --overwrite (or set `overwrite = true`) to reuse it")]
    WouldOverwrite(PathBuf),
    #[error("cannot prepare output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TaskRecord {
    pub name: String,
    pub kind: String,
    pub status: Status,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
    pub metrics: BTreeMap<String, f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub config_path: String,
    pub config_hash: String,
    pub output_dir: String,
    pub units: Option<NaturalUnits>,
    pub tasks: Vec<TaskRecord>,
    pub status: Status,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub overwrite: bool,
    pub parallel: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Flag, then config, then `WEYLSIM_OUT_DIR`, then `./weylsim-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, env: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or(env)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn prepare_out_dir(dir: &Path, overwrite: bool) -> Result<(), RunError> {
    let io_err = |source| RunError::OutputDir {
        path: dir.to_owned(),
        source,
    };
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(io_err)?.next().is_some();
        if non_empty && !overwrite {
            return Err(RunError::WouldOverwrite(dir.to_owned()));
        }
    } else {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    Ok(())
}

/// Writes `value` as pretty JSON through a temporary file in the same directory.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::Manifest(e.to_string()))?;
    serde_json::to_writer_pretty(&mut tmp, value).map_err(|e| RunError::Manifest(e.to_string()))?;
    tmp.write_all(b"\n").map_err(|e| RunError::Manifest(e.to_string()))?;
    tmp.persist(path).map_err(|e| RunError::Manifest(e.to_string()))?;
    Ok(())
}

/// Runs every task of the plan; failures are recorded per task and the
/// remaining tasks still run.
pub fn run(cfg: &ExperimentConfig, config_path: &str, config_bytes: &[u8], opts: &RunOptions) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    prepare_out_dir(&opts.out_dir, opts.overwrite || cfg.overwrite)?;
    let units = cfg.units.as_ref().and_then(|u| u.params().ok()).and_then(|p| derive_scales(&p).ok());
    let exec = |(index, task): (usize, &TaskSpec)| run_task(cfg, index, task, &opts.out_dir);
    let tasks: Vec<TaskRecord> = if opts.parallel {
        cfg.tasks.par_iter().enumerate().map(exec).collect()
    } else {
        cfg.tasks.iter().enumerate().map(exec).collect()
    };
    let status = Status::from_bool(tasks.iter().all(|t| t.status == Status::Pass));
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_path: config_path.to_owned(),
        config_hash: sha256_hex(config_bytes),
        output_dir: opts.out_dir.display().to_string(),
        units,
        tasks,
        status,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json_atomic(&opts.out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Default)]
struct Outcome {
    outputs: Vec<String>,
    metrics: BTreeMap<String, f64>,
    passed: bool,
    message: Option<String>,
}

impl Outcome {
    fn fail(&mut self, msg: String) {
        self.passed = false;
        match &mut self.message {
            Some(m) => {
                m.push_str("; ");
                m.push_str(&msg);
            }
            None => self.message = Some(msg),
        }
    }
}

fn run_task(cfg: &ExperimentConfig, index: usize, task: &TaskSpec, dir: &Path) -> TaskRecord {
    let start = Instant::now();
    let name = task.name(index);
    let mut out = Outcome {
        passed: true,
        ..Default::default()
    };
    if let Err(e) = execute(cfg, task, &name, dir, &mut out) {
        out.fail(e);
    }
    if let Some(missing) = out.outputs.iter().find(|f| !dir.join(f).exists()) {
        out.fail(format!("declared output {missing} was not written"));
    }
    TaskRecord {
        name,
        kind: task.kind().to_owned(),
        status: Status::from_bool(out.passed),
        outputs: out.outputs,
        wall_seconds: start.elapsed().as_secs_f64(),
        metrics: out.metrics,
        message: out.message,
    }
}

fn label(v: f64) -> String {
    format!("{v}").replace('-', "m").replace('.', "p")
}

fn write_file<F>(dir: &Path, file: String, out: &mut Outcome, body: F) -> Result<(), String>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let path = dir.join(&file);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| format!("{}: {e}", path.display()))?;
    out.outputs.push(file);
    Ok(())
}

fn fock_config(cfg: &ExperimentConfig) -> Result<FockConfig, String> {
    cfg.ion
        .as_ref()
        .ok_or("missing [ion] section")?
        .fock_config()
        .map_err(|e| e.to_string())
}

fn kicks_for(cfg: &ExperimentConfig, n: Option<f64>, m: Option<f64>) -> (f64, f64) {
    let p = cfg.packet.clone().unwrap_or_default();
    (n.unwrap_or(p.kick_x), m.unwrap_or(p.kick_y))
}

fn execute(cfg: &ExperimentConfig, task: &TaskSpec, name: &str, dir: &Path, out: &mut Outcome) -> Result<(), String> {
    let packet = cfg.packet.clone().unwrap_or_default();
    match task {
        TaskSpec::Trajectory {
            kicks,
            t_max,
            samples,
            method,
            ..
        } => {
            if !(*t_max > 0.0) || *samples < 2 {
                return Err("trajectory needs t_max > 0 and at least 2 samples".into());
            }
            let kicks = kicks.clone().unwrap_or(vec![[packet.kick_x, packet.kick_y]]);
            let times = observables::uniform_times(*t_max, *samples);
            let quad = QuadratureConfig::default();
            for kick in kicks {
                let spec = packet.spec(Some(kick))?;
                let grid = packet.grid(&spec)?;
                let tag = format!("n{}_m{}", label(kick[0]), label(kick[1]));
                let mut records = Vec::new();
                for m in method.methods() {
                    let rec = observables::trajectory(&spec, &times, m, &quad, &grid).map_err(|e| format!("{tag}: {e}"))?;
                    write_file(dir, format!("{name}_{tag}_{}.csv", m.as_str()), out, |w| rec.write_csv(w))?;
                    // speeds in units of c = 1 (lengths and times share the width scale)
                    let speed = rec.max_speed();
                    out.metrics.insert(format!("{tag}.{}.max_speed", m.as_str()), speed);
                    if speed > SPEED_LIMIT {
                        out.fail(format!("{tag}: speed {speed:.6} exceeds c"));
                    }
                    records.push(rec);
                }
                if let [a, b] = records.as_slice() {
                    let gap = a
                        .mean_x
                        .iter()
                        .zip(&b.mean_x)
                        .chain(a.mean_y.iter().zip(&b.mean_y))
                        .map(|(p, q)| (p - q).abs())
                        .fold(0.0, f64::max);
                    out.metrics.insert(format!("{tag}.method_gap"), gap);
                }
            }
        }
        TaskSpec::Density { kicks, times, window, .. } => {
            let kicks = kicks.clone().unwrap_or(vec![[packet.kick_x, packet.kick_y]]);
            for kick in kicks {
                let spec = packet.spec(Some(kick))?;
                let grid = packet.grid(&spec)?;
                let tag = format!("n{}_m{}", label(kick[0]), label(kick[1]));
                let ratio = observables::weight_ratio(&spec, &grid).map_err(|e| e.to_string())?;
                out.metrics.insert(format!("{tag}.weight_ratio"), ratio.ratio);
                for &t in times {
                    let snap = DensitySnapshot::compute(&spec, &grid, t).map_err(|e| format!("{tag} t={t}: {e}"))?;
                    out.metrics.insert(
                        format!("{tag}.t{}.minus_peaks", label(t)),
                        snap.minus.local_maxima(0.1).len() as f64,
                    );
                    write_file(dir, format!("{name}_{tag}_t{}.csv", label(t)), out, |w| snap.write_csv(w, *window))?;
                }
            }
        }
        TaskSpec::Prepare { n, m, .. } => {
            let (n, m) = kicks_for(cfg, *n, *m);
            let fc = fock_config(cfg)?;
            let ev = ionfock::prepare_kicked_state(n, m, &fc).map_err(|e| e.to_string())?;
            write_file(dir, format!("{name}_state.csv"), out, |w| ev.state.write_csv(w))?;
            out.metrics.insert("leakage".into(), ev.max_leakage);
            for (mode, key, kick) in [(MotionalMode::X, "px", n), (MotionalMode::Y, "py", m)] {
                if !ev.state.layout.has(mode) {
                    continue;
                }
                let p = ev.state.mean_momentum(mode).map_err(|e| e.to_string())?;
                out.metrics.insert(format!("mean_{key}"), p);
                if (p + kick).abs() > KICK_TOL {
                    out.fail(format!("<{key}> = {p:.9}, expected {}", -kick));
                }
            }
        }
        TaskSpec::Measure { n, m, t, axis, .. } => {
            let probe = cfg.probe.clone().ok_or("missing [probe] section")?;
            let (n, m) = kicks_for(cfg, *n, *m);
            let spec = packet.spec(Some([n, m]))?;
            let grid = packet.grid(&spec)?;
            let schedule = probe.schedule(*axis)?;
            let field = wavepacket::evolve(&wavepacket::make_initial(&spec, &grid).map_err(|e| e.to_string())?, *t)
                .map_err(|e| e.to_string())?;
            let rec = measurement::measure(&field, &schedule, probe.seed).map_err(|e| e.to_string())?;
            write_file(dir, format!("{name}_record.csv"), out, |w| rec.write_csv(w))?;
            let recon = measurement::reconstruct_density(&rec, &probe.reconstruction(packet.width)).map_err(|e| e.to_string())?;
            write_file(dir, format!("{name}_density.csv"), out, |w| recon.write_csv(w))?;
            out.metrics.insert("resolution".into(), recon.resolution);
            out.metrics.insert("bandwidth_warning".into(), f64::from(u8::from(recon.bandwidth_warning)));
            let truth = observables::mean_position_spectral(&spec, *t, &grid).map_err(|e| e.to_string())?;
            let truth = match schedule.axis {
                Axis::X => truth.x,
                Axis::Y => truth.y,
            };
            out.metrics.insert("true_mean".into(), truth);
            let mean = recon.mean().map_err(|e| e.to_string())?;
            out.metrics.insert("reconstructed_mean".into(), mean);
            if rec.shots == Shots::Exact {
                let tol = 0.02 * packet.width + recon.resolution / 2.0;
                if (mean - truth).abs() > tol {
                    out.fail(format!("reconstructed mean {mean:.6} differs from {truth:.6} by more than {tol:.4}"));
                }
            }
        }
        TaskSpec::VerifyIdentities { truncations, .. } => {
            let fc = fock_config(cfg)?;
            let truncations = truncations.clone().unwrap_or(vec![8, 16]);
            let mut checks = Vec::new();
            for n in truncations {
                checks.extend(ionfock::verify_identities(&FockConfig { truncation: n, ..fc }).map_err(|e| e.to_string())?);
            }
            write_file(dir, format!("{name}_identities.csv"), out, |w| {
                writeln!(w, "check,truncation,deviation,hermiticity,pass")?;
                for c in &checks {
                    writeln!(w, "{},{},{:e},{:e},{}", c.name, c.truncation, c.deviation, c.hermiticity, c.passes(IDENTITY_TOL))?;
                }
                Ok(())
            })?;
            let worst = checks.iter().map(|c| c.deviation.max(c.hermiticity)).fold(0.0, f64::max);
            out.metrics.insert("max_deviation".into(), worst);
            if let Some(bad) = checks.iter().find(|c| !c.passes(IDENTITY_TOL)) {
                out.fail(format!("{} at N = {}: deviation {:e}", bad.name, bad.truncation, bad.deviation));
            }
        }
        TaskSpec::Crosscheck { n, m, t, tolerance, .. } => {
            let (n, m) = kicks_for(cfg, *n, *m);
            let fc = fock_config(cfg)?;
            let spec = packet.spec(Some([n, m]))?;
            let grid = packet.grid(&spec)?;
            let r = ionfock::fock_vs_spectral_crosscheck(&spec, *t, &fc, &grid).map_err(|e| e.to_string())?;
            write_file(dir, format!("{name}_crosscheck.csv"), out, |w| {
                writeln!(w, "t,fock_x,fock_y,spectral_x,spectral_y,deviation,leakage")?;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.time, r.fock.0, r.fock.1, r.spectral.0, r.spectral.1, r.deviation, r.max_leakage
                )
            })?;
            out.metrics.insert("deviation".into(), r.deviation);
            out.metrics.insert("leakage".into(), r.max_leakage);
            if r.deviation > *tolerance {
                out.fail(format!("deviation {:.6} exceeds {tolerance}", r.deviation));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_filename_safe() {
        assert_eq!(label(1.5), "1p5");
        assert_eq!(label(-2.0), "m2");
        assert_eq!(label(0.0), "0");
    }

    #[test]
    fn out_dir_precedence() {
        let mut cfg: ExperimentConfig = toml::from_str("").unwrap();
        let env = Some(PathBuf::from("env"));
        assert_eq!(resolve_out_dir(None, &cfg, None), PathBuf::from(DEFAULT_OUT_DIR));
        assert_eq!(resolve_out_dir(None, &cfg, env.clone()), PathBuf::from("env"));
        cfg.output_dir = Some("cfg".into());
        assert_eq!(resolve_out_dir(None, &cfg, env.clone()), PathBuf::from("cfg"));
        assert_eq!(resolve_out_dir(Some("flag".into()), &cfg, env), PathBuf::from("flag"));
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
