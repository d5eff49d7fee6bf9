//! `cacti` — simulate coded-exposure snapshots, invert them, and score the
//! results. Exit codes: 0 success, 1 usage or configuration error, 2 data
//! error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::DemoSize;
use config::{ColorMode, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "cacti", about = "Coded-exposure compressive video pipeline", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

/// Flags shared by the pipeline subcommands; each overrides its config key.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input video: PNG frame directory or float container.
    #[arg(long)]
    video: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Frames per coded snapshot.
    #[arg(long)]
    nt: Option<usize>,
    /// Mask pattern file (PNG or ASCII 0/1 grid).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Shift schedule CSV `k,r,s`.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long = "basis-x", value_parser = ["db8", "dct"])]
    basis_x: Option<String>,
    #[arg(long = "basis-y", value_parser = ["db8", "dct"])]
    basis_y: Option<String>,
    #[arg(long = "basis-t", value_parser = ["db8", "dct"])]
    basis_t: Option<String>,
    /// Wavelet decomposition depth.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<f64>,
    #[arg(long, value_parser = ["mono", "bayer"])]
    color: Option<String>,
    /// Output directory; also where invert/evaluate look for inputs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "tau-update", value_parser = ["verbatim", "mgp"])]
    tau_update: Option<String>,
    /// Print the per-sweep diagnostics to stdout.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate coded measurements from an input video.
    Simulate(Overrides),
    /// Reconstruct frames from measurements under the output directory.
    Invert(Overrides),
    /// PSNR of a reconstruction against ground truth.
    Evaluate {
        /// Reconstruction container (default: <out>/recon.fc).
        recon: Option<PathBuf>,
        /// Ground-truth container (default: <out>/truth.fc).
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Synthetic end-to-end run at a preset size.
    Demo {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
        #[arg(long, default_value = "tiny", value_parser = ["tiny", "small"])]
        size: String,
    },
}

fn resolve_config(ov: &Overrides) -> anyhow::Result<RunConfig> {
    let mut cfg = match &ov.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &ov.video {
        cfg.video = Some(v.clone());
    }
    if let Some(v) = ov.seed {
        cfg.seed = v;
    }
    if let Some(v) = ov.nt {
        cfg.nt = v;
    }
    if let Some(v) = &ov.mask {
        cfg.mask = Some(v.clone());
    }
    if let Some(v) = &ov.schedule {
        cfg.schedule = Some(v.clone());
    }
    if let Some(v) = &ov.basis_x {
        cfg.basis_x = v.clone();
    }
    if let Some(v) = &ov.basis_y {
        cfg.basis_y = v.clone();
    }
    if let Some(v) = &ov.basis_t {
        cfg.basis_t = v.clone();
    }
    if let Some(v) = ov.levels {
        cfg.levels = v;
    }
    if let Some(v) = ov.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = &ov.color {
        cfg.color = ColorMode::parse(v)?;
    }
    if let Some(v) = &ov.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &ov.tau_update {
        cfg.tau_update = match v.as_str() {
            "mgp" => cacti_core::TauUpdateMode::Mgp,
            _ => cacti_core::TauUpdateMode::Verbatim,
        };
    }
    if ov.trace {
        cfg.trace = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Command::Simulate(ov) => commands::cmd_simulate(&resolve_config(&ov)?),
        Command::Invert(ov) => {
            commands::cmd_invert(&resolve_config(&ov)?)?;
            Ok(())
        }
        Command::Evaluate { recon, truth, peak, out } => {
            let recon = recon.unwrap_or_else(|| out.join("recon.fc"));
            let truth = truth.unwrap_or_else(|| out.join("truth.fc"));
            let rep = commands::cmd_evaluate(&recon, &truth, peak, &out)?;
            println!("mean PSNR: {:.4} dB", rep.mean);
            Ok(())
        }
        Command::Demo { seed, out, size } => {
            let mut cfg = RunConfig::default();
            cfg.seed = seed;
            cfg.out = out;
            cfg.trace = false;
            commands::cmd_demo(&cfg, DemoSize::parse(&size)?)
        }
    }
}

/// Map an error chain to the documented exit codes. Errors raised inside the
/// core pipeline are data (2) or numerical (3) failures; everything else is a
/// usage/config problem (1).
fn code_of(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cacti_core::Error>() {
            return match e {
                cacti_core::Error::Numerical { .. } => 3,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // keep clap's rendered help/usage text but our exit convention
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_of(&e))
        }
    }
}
