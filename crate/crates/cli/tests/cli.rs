use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use weylsim::config::ExperimentConfig;
use weylsim::runner::sha256_hex;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_weylsim"));
    c.env_remove("WEYLSIM_OUT_DIR");
    c
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("test.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[packet]
[probe]
k_max = 8.0
dk = 0.1

[[tasks]]
kind = "trajectory"
name = "traj"
kicks = [[0, 0], [0, 1]]
t_max = 1.0
samples = 6
method = "both"

[[tasks]]
kind = "density"
name = "dens"
times = [0.0, 1.0]
window = 2.0

[[tasks]]
kind = "measure"
name = "meas"
t = 1.0
"#;

#[test]
fn bundled_configs_parse() {
    for name in ["fig1.cfg", "fig2.cfg", "verify.cfg"] {
        let (cfg, _) = ExperimentConfig::load(&configs_dir().join(name)).unwrap();
        assert!(!cfg.tasks.is_empty(), "{name}");
    }
}

#[test]
fn empty_plan_writes_empty_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "");
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["tasks"].as_array().unwrap().len(), 0);
    assert_eq!(m["status"], "pass");
    assert_eq!(m["config_hash"], sha256_hex(&fs::read(&cfg).unwrap()));
}

#[test]
fn runs_are_deterministic_and_outputs_exist() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, &[]).status.success());
    let o = run(&cfg, &b, &["--parallel"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&a);
    let mut files = 0;
    for task in m["tasks"].as_array().unwrap() {
        assert_eq!(task["status"], "pass", "{task}");
        for f in task["outputs"].as_array().unwrap() {
            let f = f.as_str().unwrap();
            let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
            assert_eq!(x, y, "{f} differs between runs");
            files += 1;
        }
    }
    // 2 kicks × 2 methods, 2 snapshots, record + density
    assert_eq!(files, 8);
    let traj = fs::read_to_string(a.join("traj_n0_m1_quadrature.csv")).unwrap();
    assert!(traj.starts_with("t,mean_x,mean_y,method\n"));
    assert_eq!(traj.lines().count(), 7);
    let dens = fs::read_to_string(a.join("dens_n0_m0_t1.csv")).unwrap();
    assert!(dens.starts_with("x,y,density_total,density_plus,density_minus_inverted\n"));
    assert!(fs::read_to_string(a.join("meas_record.csv")).unwrap().starts_with("k,P_z,P_y,cos_k,sin_k\n"));
    assert!(fs::read_to_string(a.join("meas_density.csv")).unwrap().starts_with("y,density\n"));
}

#[test]
fn refuses_to_overwrite_without_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "");
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, &[]).status.success());
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--overwrite"));
    assert!(run(&cfg, &out, &["--overwrite"]).status.success());
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "");
    let out = tmp.path().join("from-env");
    let o = bin().arg("run").arg(&cfg).env("WEYLSIM_OUT_DIR", &out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn missing_section_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "[packet]\n[[tasks]]\nkind = \"measure\"\n");
    let o = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tasks[0] (measure) references section [probe]"), "{}", stderr(&o));
}

#[test]
fn parse_error_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "[packet]\nwidth = 1.0\nkick_x = [\n");
    let o = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn failed_task_does_not_stop_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
        [packet]
        [ion]
        fock_n = 8
        [[tasks]]
        kind = "prepare"
        name = "too_small"
        n = 2.0
        m = 0.0
        [[tasks]]
        kind = "verify-identities"
        name = "ids"
        "#,
    );
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "fail");
    assert_eq!(m["tasks"][0]["status"], "fail");
    assert!(m["tasks"][0]["message"].as_str().unwrap().contains("truncation"));
    assert_eq!(m["tasks"][1]["status"], "pass");
}

fn verify(text: &str) -> (Option<i32>, Value) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), text);
    let o = bin().arg("verify").arg(&cfg).output().unwrap();
    (o.status.code(), serde_json::from_slice(&o.stdout).unwrap())
}

fn suite<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["suites"].as_array().unwrap().iter().find(|s| s["suite"] == name).unwrap()
}

#[test]
fn bundled_verify_config_passes() {
    let o = bin().arg("verify").arg(configs_dir().join("verify.cfg")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["status"], "pass");
}

#[test]
fn verify_fails_for_mismatched_couplings() {
    let (code, r) = verify("[ion]\nfock_n = 8\nomega_x = 1.0\nomega_y = 1.3\n");
    assert_eq!(code, Some(1));
    let s = suite(&r, "identities");
    assert_eq!(s["status"], "fail");
    assert!(s["error"].as_str().unwrap().contains("equal couplings"));
}

#[test]
fn verify_reports_truncation_advice() {
    let (code, r) = verify("[ion]\nfock_n = 8\n[packet]\nkick_x = 2.0\n");
    assert_eq!(code, Some(1));
    let s = suite(&r, "preparation");
    assert_eq!(s["status"], "fail");
    let msg = s["error"].as_str().unwrap();
    assert!(msg.contains("truncation exceeded") && msg.contains("increase the truncation"), "{msg}");
    assert_eq!(suite(&r, "identities")["status"], "pass");
}

#[test]
fn trajectory_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let o = bin()
        .args(["trajectory", "--n", "1", "--m", "1", "--t-max", "1", "--samples", "5", "--method", "spectral", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trajectory_n1_m1_spectral.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[3], "spectral");
    for v in &first[1..3] {
        assert!(v.parse::<f64>().unwrap().abs() < 1e-12);
    }
}

#[test]
fn measure_subcommand_is_seed_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let go = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        let o = bin()
            .args(["measure", "--axis", "x", "--k-max", "8", "--dk", "0.1", "--shots", "200", "--seed", seed, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("measure_record.csv")).unwrap()
    };
    let (a, b, c) = (go("a", "5"), go("b", "5"), go("c", "6"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(go("d", "5")).unwrap().starts_with("k,P_z,P_y,cos_k,sin_k\n"));
}

#[test]
fn ion_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["verify-identities", "--truncations", "8,12", "--out"])
        .arg(tmp.path().join("ids"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let ids = fs::read_to_string(tmp.path().join("ids/identities_identities.csv")).unwrap();
    assert!(ids.starts_with("check,truncation,deviation,hermiticity,pass\n"));
    assert_eq!(ids.lines().count(), 1 + 2 * 4);

    let o = bin()
        .args(["prepare", "--n", "1", "--fock-n", "16", "--out"])
        .arg(tmp.path().join("prep"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let state = fs::read_to_string(tmp.path().join("prep/prepare_state.csv")).unwrap();
    assert_eq!(state.lines().count(), 1 + 2 * 16 * 16);

    let o = bin()
        .args(["crosscheck", "--fock-n", "8", "--n", "2", "--out"])
        .arg(tmp.path().join("cc"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncation"), "{}", stderr(&o));
}
