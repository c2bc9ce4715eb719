use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mab_core::analysis;
use mab_core::verify::{run_campaign, Fault};
use mab_core::{MabError, Modulation, PhaseShiftSet, Scenario};

#[derive(Parser)]
#[command(
    name = "mab",
    version,
    about = "Multi-active-bridge converter analysis and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state edge currents, ZVS status, RMS and power per port.
    Steady {
        #[command(flatten)]
        common: Common,
        /// Outer shifts d_1..d_N (comma separated); skips the controllers.
        #[arg(long, value_delimiter = ',', requires = "inner")]
        outer: Option<Vec<f64>>,
        /// Inner shifts D_1..D_N (comma separated).
        #[arg(long, value_delimiter = ',', requires = "outer")]
        inner: Option<Vec<f64>>,
    },
    /// SPS against online ZVS at the same loads.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop run of the scenario events.
    Dynamic {
        #[command(flatten)]
        common: Common,
    },
    /// Both modes over the load range in the scenario's sweep section.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept port (1-based); overrides the file.
        #[arg(long)]
        port: Option<usize>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        /// Number of load points.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Randomized oracle and identity campaign.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 2)]
        min_ports: usize,
        #[arg(long, default_value_t = 6)]
        max_ports: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sps,
    Zvs,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eps_current: Option<f64>,
    /// Override a load value, e.g. `--set-load 4=2000`.
    #[arg(long, value_parser = parse_load)]
    set_load: Vec<(usize, f64)>,
}

fn parse_load(s: &str) -> Result<(usize, f64), String> {
    let (p, v) = s.split_once('=').ok_or("expected PORT=VALUE")?;
    let port: usize = p.trim().parse().map_err(|e| format!("port: {e}"))?;
    let value: f64 = v.trim().parse().map_err(|e| format!("value: {e}"))?;
    if port == 0 {
        return Err("ports are numbered from 1".into());
    }
    Ok((port, value))
}

impl Common {
    fn scenario(&self) -> Result<Scenario, MabError> {
        let mut s = Scenario::load(&self.config)?;
        if let Some(m) = self.mode {
            s.options.mode = match m {
                ModeArg::Sps => Modulation::Sps,
                ModeArg::Zvs => Modulation::Zvs,
            };
        }
        if let Some(eps) = self.eps_current {
            if eps.is_nan() || eps < 0.0 {
                return Err(MabError::NegativeTolerance(eps));
            }
            s.analysis.eps_current = eps;
            s.options.eps_current = eps;
        }
        for &(port, value) in &self.set_load {
            s.set_load(port - 1, value)?;
        }
        if self.out.is_some() {
            s.output_dir = self.out.clone();
        }
        Ok(s)
    }
}

/// Writes a fully rendered buffer so a failed run never leaves a partial file.
fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, MabError> {
    let io = |e: std::io::Error, p: &Path| MabError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io(e, &path))?;
    Ok(path)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, MabError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| MabError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    })?;
    Ok(buf)
}

fn mode_tag(m: Modulation) -> &'static str {
    match m {
        Modulation::Sps => "sps",
        Modulation::Zvs => "zvs",
    }
}

enum Failure {
    Error(MabError),
    Verification,
}

impl From<MabError> for Failure {
    fn from(e: MabError) -> Self {
        Failure::Error(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Steady { common, outer, inner } => {
            let s = common.scenario()?;
            let (report, waves) = match (outer, inner) {
                (Some(outer), Some(inner)) => {
                    let shifts = PhaseShiftSet::new(outer, inner)?;
                    if shifts.len() != s.config.num_ports() {
                        return Err(MabError::LengthMismatch {
                            expected: s.config.num_ports(),
                            found: shifts.len(),
                        }
                        .into());
                    }
                    let op = mab_core::OperatingPoint::at_setpoints(&s.config, shifts)?;
                    let waves = op.sample_waveforms(s.analysis.points_per_period, s.analysis.periods)?;
                    (op.report(s.analysis.eps_current)?, waves)
                }
                _ => {
                    let a = analysis::steady(&s)?;
                    let waves = a.waveforms(&s)?;
                    println!("mode: {}", a.mode);
                    (a.report, waves)
                }
            };
            println!("{report}");
            if let Some(dir) = &s.output_dir {
                let bytes = csv_bytes(|b| waves.write_csv(b))?;
                let p = write_output(dir, &format!("waveforms_{}.csv", mode_tag(s.options.mode)), &bytes)?;
                println!("wrote {}", p.display());
            }
        }
        Command::Compare { common } => {
            let s = common.scenario()?;
            let c = analysis::compare(&s)?;
            println!("{c}");
        }
        Command::Dynamic { common } => {
            let s = common.scenario()?;
            let r = analysis::dynamic(&s)?;
            println!("mode: {}", r.mode);
            println!("{}", analysis::dynamic_summary(&r));
            if let Some(dir) = &s.output_dir {
                let bytes = csv_bytes(|b| r.write_csv(b))?;
                let p = write_output(dir, &format!("dynamic_{}.csv", mode_tag(r.mode)), &bytes)?;
                println!("wrote {}", p.display());
            }
        }
        Command::Sweep {
            common,
            port,
            start,
            stop,
            points,
        } => {
            let mut s = common.scenario()?;
            let mut sweep = s.analysis.sweep.clone().unwrap_or(mab_core::scenario::SweepSection {
                port: s.config.num_ports(),
                start: 0.0,
                stop: 0.0,
                points: 0,
            });
            sweep.port = port.unwrap_or(sweep.port);
            sweep.start = start.unwrap_or(sweep.start);
            sweep.stop = stop.unwrap_or(sweep.stop);
            sweep.points = points.unwrap_or(sweep.points);
            if sweep.port == 0 || sweep.port > s.config.num_ports() {
                return Err(MabError::PortOutOfRange {
                    port: sweep.port,
                    ports: s.config.num_ports(),
                }
                .into());
            }
            if !(sweep.start > 0.0 && sweep.stop > 0.0) || sweep.points == 0 {
                return Err(
                    MabError::InvalidArgument("sweep range must be positive with at least one point".into()).into(),
                );
            }
            s.analysis.sweep = Some(sweep);
            let rows = analysis::sweep(&s)?;
            let bytes = csv_bytes(|b| analysis::write_sweep_csv(&rows, b))?;
            match &s.output_dir {
                Some(dir) => {
                    let p = write_output(dir, "sweep.csv", &bytes)?;
                    println!("wrote {} ({} rows)", p.display(), rows.len());
                }
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
        }
        Command::Verify {
            seed,
            draws,
            min_ports,
            max_ports,
            inject_fault,
        } => {
            let fault = inject_fault.then_some(Fault::CurrentOffset);
            let report = run_campaign(seed, draws, (min_ports, max_ports), fault)?;
            println!("{report}");
            if !report.passed() {
                return Err(Failure::Verification);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_runtime() { 2 } else { 1 })
        }
    }
}
