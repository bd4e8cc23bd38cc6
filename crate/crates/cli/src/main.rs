use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use weyl_core::wavepacket::Axis;
use weylsim::config::{ExperimentConfig, IonSection, MethodChoice, PacketSection, ProbeSection, ShotsSetting, TaskSpec};
use weylsim::runner::{self, RunManifest, RunOptions, Status, OUT_DIR_ENV};
use weylsim::verify;

#[derive(Parser)]
#[command(name = "weylsim", version, about = "Weyl-equation trapped-ion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output directory (default: config `output_dir`, then $WEYLSIM_OUT_DIR, then ./weylsim-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse a non-empty output directory
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args, Clone)]
struct IonArgs {
    /// Fock levels per mode
    #[arg(long, default_value_t = 48)]
    fock_n: usize,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
}

impl IonArgs {
    fn section(&self) -> IonSection {
        IonSection {
            fock_n: self.fock_n,
            eta: self.eta,
            omega_rabi: self.omega,
            ..IonSection::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a config file
    Run {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
        /// Run independent tasks in parallel
        #[arg(long)]
        parallel: bool,
    },
    /// Run the invariant suites for a config and print a JSON report
    Verify { config: PathBuf },
    /// Mean-position trajectory of one kicked packet
    Trajectory {
        #[arg(long, default_value_t = 0.0)]
        n: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 121)]
        samples: usize,
        #[arg(long, value_enum, default_value = "quadrature")]
        method: MethodArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Probe an evolved packet and reconstruct its marginal
    Measure {
        #[arg(long, default_value_t = 0.0)]
        n: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        /// Evolution time before the probe
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, value_enum, default_value = "y")]
        axis: AxisArg,
        #[arg(long, default_value_t = 10.0)]
        k_max: f64,
        #[arg(long, default_value_t = 0.05)]
        dk: f64,
        /// Shots per probe setting; exact populations when omitted
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check the sideband operator identities
    VerifyIdentities {
        #[arg(long, value_delimiter = ',', default_value = "8,16")]
        truncations: Vec<usize>,
        #[command(flatten)]
        ion: IonArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Prepare a kicked ion state and dump its amplitudes
    Prepare {
        #[arg(long, default_value_t = 0.0)]
        n: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[command(flatten)]
        ion: IonArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare the ion engine against the spectral engine
    Crosscheck {
        #[arg(long, default_value_t = 0.0)]
        n: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[arg(long, default_value_t = 1.5)]
        t: f64,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        #[command(flatten)]
        ion: IonArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum MethodArg {
    Quadrature,
    Spectral,
    Both,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum AxisArg {
    X,
    Y,
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn execute(cfg: &ExperimentConfig, label: &str, bytes: &[u8], output: &OutputArgs, parallel: bool) -> Result<RunManifest> {
    let opts = RunOptions {
        out_dir: runner::resolve_out_dir(output.out.clone(), cfg, env_out_dir()),
        overwrite: output.overwrite,
        parallel,
    };
    let manifest = runner::run(cfg, label, bytes, &opts)?;
    for t in &manifest.tasks {
        let status = match t.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
        };
        match &t.message {
            Some(msg) => eprintln!("[{status}] {} ({}, {:.2}s): {msg}", t.name, t.kind, t.wall_seconds),
            None => eprintln!("[{status}] {} ({}, {:.2}s)", t.name, t.kind, t.wall_seconds),
        }
    }
    eprintln!("manifest: {}", opts.out_dir.join(runner::MANIFEST_FILE).display());
    Ok(manifest)
}

/// Wraps one task into an in-memory config and runs it.
fn single_task(task: TaskSpec, mut cfg: ExperimentConfig, output: &OutputArgs) -> Result<RunManifest> {
    cfg.tasks.push(task);
    cfg.validate()?;
    let text = toml::to_string(&cfg).context("serializing generated config")?;
    execute(&cfg, "<command line>", text.as_bytes(), output, false)
}

fn empty_config() -> ExperimentConfig {
    ExperimentConfig {
        output_dir: None,
        overwrite: false,
        units: None,
        packet: None,
        ion: None,
        probe: None,
        tasks: Vec::new(),
    }
}

fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
    Ok(ExperimentConfig::load(path)?)
}

fn exit_for(status: Status) -> ExitCode {
    match status {
        Status::Pass => ExitCode::SUCCESS,
        Status::Fail => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let manifest = match cli.command {
        Command::Run { config, output, parallel } => {
            let (cfg, bytes) = load(&config)?;
            execute(&cfg, &config.display().to_string(), &bytes, &output, parallel)?
        }
        Command::Verify { config } => {
            let (cfg, bytes) = load(&config)?;
            let report = verify::verify(&cfg, &bytes);
            // a closed pipe should not turn a verdict into a panic
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report)?);
            return Ok(exit_for(report.status));
        }
        Command::Trajectory {
            n,
            m,
            t_max,
            samples,
            method,
            output,
        } => {
            let method = match method {
                MethodArg::Quadrature => MethodChoice::Quadrature,
                MethodArg::Spectral => MethodChoice::Spectral,
                MethodArg::Both => MethodChoice::Both,
            };
            let cfg = ExperimentConfig {
                packet: Some(PacketSection::default()),
                ..empty_config()
            };
            let task = TaskSpec::Trajectory {
                name: Some("trajectory".into()),
                kicks: Some(vec![[n, m]]),
                t_max,
                samples,
                method,
            };
            single_task(task, cfg, &output)?
        }
        Command::Measure {
            n,
            m,
            t,
            axis,
            k_max,
            dk,
            shots,
            seed,
            output,
        } => {
            let axis = match axis {
                AxisArg::X => Axis::X,
                AxisArg::Y => Axis::Y,
            };
            let mut probe = ProbeSection {
                axis,
                k_max,
                dk,
                seed,
                ..ProbeSection::default()
            };
            if let Some(s) = shots {
                probe.shots = ShotsSetting::Count(s);
            }
            let cfg = ExperimentConfig {
                packet: Some(PacketSection::default()),
                probe: Some(probe),
                ..empty_config()
            };
            let task = TaskSpec::Measure {
                name: Some("measure".into()),
                n: Some(n),
                m: Some(m),
                t,
                axis: None,
            };
            single_task(task, cfg, &output)?
        }
        Command::VerifyIdentities { truncations, ion, output } => {
            let cfg = ExperimentConfig {
                ion: Some(ion.section()),
                ..empty_config()
            };
            let task = TaskSpec::VerifyIdentities {
                name: Some("identities".into()),
                truncations: Some(truncations),
            };
            single_task(task, cfg, &output)?
        }
        Command::Prepare { n, m, ion, output } => {
            let cfg = ExperimentConfig {
                ion: Some(ion.section()),
                ..empty_config()
            };
            let task = TaskSpec::Prepare {
                name: Some("prepare".into()),
                n: Some(n),
                m: Some(m),
            };
            single_task(task, cfg, &output)?
        }
        Command::Crosscheck {
            n,
            m,
            t,
            tolerance,
            ion,
            output,
        } => {
            let cfg = ExperimentConfig {
                ion: Some(ion.section()),
                packet: Some(PacketSection::default()),
                ..empty_config()
            };
            let task = TaskSpec::Crosscheck {
                name: Some("crosscheck".into()),
                n: Some(n),
                m: Some(m),
                t,
                tolerance,
            };
            single_task(task, cfg, &output)?
        }
    };
    Ok(exit_for(manifest.status))
}
