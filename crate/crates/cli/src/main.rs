//! Command-line front end for the stencil roofline model.

mod render;

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stencil_roofline::analysis::{analyze, read_weights_csv, roofline_export, sweep, verify};
use stencil_roofline::hwdb::{self, BUILTIN_A100};
use stencil_roofline::{
    AnalysisRequest, DataType, HardwareProfile, Kernel, SchemeKind, Shape, Sparsity, Unit,
};

/// Roofline analysis of stencil kernels on CUDA Cores, Tensor Cores and
/// Sparse Tensor Cores.
#[derive(Parser, Debug)]
#[command(name = "stencil-roofline", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze one configuration at a single fusion depth
    Analyze {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Temporal fusion depth
        #[arg(long, default_value_t = 1)]
        t: u32,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate a range of fusion depths
    Sweep {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Inclusive depth range, e.g. `1..8` or `1-8`
        #[arg(long, value_parser = parse_range)]
        t_range: (u32, u32),
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Export roofline polylines and workload markers for plotting
    Roofline {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Fusion depths to place as markers (comma separated); none for
        /// polylines only
        #[arg(long, value_delimiter = ',')]
        t: Vec<u32>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the built-in golden checks against a profile
    Verify {
        #[command(flatten)]
        profile: ProfileArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Debug)]
struct WorkloadArgs {
    /// Stencil shape: box, star or custom (custom requires --weights)
    #[arg(long, default_value = "box")]
    shape: Shape,
    /// Spatial dimensionality
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Stencil radius
    #[arg(long, default_value_t = 1)]
    radius: u32,
    /// CSV of `x0,...,x{d-1},weight` lines; overrides --shape and --radius
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Element type: half, float or double
    #[arg(long, default_value = "double")]
    dtype: DataType,
    /// Operand construction: flattening or decomposition
    #[arg(long, default_value = "flattening")]
    scheme: SchemeKind,
    /// Override the operand sparsity: a value in (0, 1], a fraction such as
    /// `15/32`, or `spider` (= 15/32)
    #[arg(long, value_parser = parse_sparsity)]
    sparsity: Option<Sparsity>,
    /// Units to compare against CUDA Cores: tc, sptc (comma separated)
    #[arg(long, value_delimiter = ',')]
    units: Vec<Unit>,
    #[command(flatten)]
    profile: ProfileArgs,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    /// Hardware profile name
    #[arg(long, default_value = BUILTIN_A100)]
    profile: String,
    /// TOML profile file replacing the built-in database
    #[arg(long)]
    profiles_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = ["..=", "..", ":", "-"]
        .iter()
        .find_map(|sep| s.split_once(sep))
        .unwrap_or((s, s));
    let lo: u32 = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
    let hi: u32 = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
    if lo == 0 || hi < lo {
        return Err(format!("range `{s}` must satisfy 1 <= start <= end"));
    }
    Ok((lo, hi))
}

fn parse_sparsity(s: &str) -> Result<Sparsity, String> {
    let value = match s.trim().to_ascii_lowercase().as_str() {
        "spider" => return Ok(Sparsity::FIFTEEN_32NDS),
        "dense" => return Ok(Sparsity::DENSE),
        v => match v.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n.trim().parse().map_err(|_| format!("bad sparsity `{s}`"))?;
                let d: f64 = d.trim().parse().map_err(|_| format!("bad sparsity `{s}`"))?;
                n / d
            }
            None => v.parse().map_err(|_| format!("bad sparsity `{s}`"))?,
        },
    };
    Sparsity::new(value).map_err(|e| e.to_string())
}

fn load_profile(args: &ProfileArgs) -> Result<HardwareProfile> {
    let db = match &args.profiles_file {
        Some(path) => hwdb::load_profiles(path)?,
        None => hwdb::builtin(),
    };
    Ok(db.get(&args.profile)?.clone())
}

fn build_request(w: &WorkloadArgs) -> Result<AnalysisRequest> {
    let kernel = match &w.weights {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("cannot open weights file {}", path.display()))?;
            let entries = read_weights_csv(BufReader::new(file), w.dim)?;
            Kernel::custom(w.dim, entries)?
        }
        None if w.shape == Shape::Custom => bail!("--shape custom requires --weights"),
        None => Kernel::new(w.shape, w.dim, w.radius, None)?,
    };
    let profile = load_profile(&w.profile)?;
    Ok(AnalysisRequest::new(
        kernel,
        w.dtype,
        w.scheme,
        w.sparsity,
        profile,
        &w.units,
    )?)
}

fn emit(output: &OutputArgs, bytes: Vec<u8>) -> Result<()> {
    match &output.out {
        Some(path) => std::fs::write(path, bytes)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn json(value: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Runs the command; `Ok(false)` means verification failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze { workload, t, output } => {
            let report = analyze(&build_request(&workload)?, t)?;
            let bytes = match output.format {
                Format::Table => render::analysis_table(&report).into_bytes(),
                Format::Csv => render::analysis_csv(&report)?,
                Format::Json => json(&report)?,
            };
            emit(&output, bytes)?;
        }
        Command::Sweep { workload, t_range, output } => {
            let report = sweep(&build_request(&workload)?, t_range.0, t_range.1)?;
            let bytes = match output.format {
                Format::Table => render::sweep_table(&report).into_bytes(),
                Format::Csv => render::sweep_csv(&report)?,
                Format::Json => json(&report)?,
            };
            emit(&output, bytes)?;
        }
        Command::Roofline { workload, t, output } => {
            let chart = roofline_export(&build_request(&workload)?, &t)?;
            let bytes = match output.format {
                Format::Table => render::roofline_table(&chart).into_bytes(),
                Format::Csv => render::roofline_csv(&chart)?,
                Format::Json => json(&chart)?,
            };
            emit(&output, bytes)?;
        }
        Command::Verify { profile, output } => {
            let report = verify(&load_profile(&profile)?);
            let bytes = match output.format {
                Format::Table => render::verify_table(&report).into_bytes(),
                Format::Csv => render::verify_csv(&report)?,
                Format::Json => json(&report)?,
            };
            emit(&output, bytes)?;
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(1)
        }
    }
}

fn chain(e: &anyhow::Error) -> String {
    e.chain()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(": ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..8"), Ok((1, 8)));
        assert_eq!(parse_range("1..=8"), Ok((1, 8)));
        assert_eq!(parse_range("2-4"), Ok((2, 4)));
        assert_eq!(parse_range("3"), Ok((3, 3)));
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("0..2").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn sparsity_keywords() {
        assert_eq!(parse_sparsity("spider").unwrap(), Sparsity::FIFTEEN_32NDS);
        assert_eq!(parse_sparsity("15/32").unwrap().value(), 15.0 / 32.0);
        assert_eq!(parse_sparsity("0.47").unwrap(), Sparsity::LITERAL_047);
        assert!(parse_sparsity("0").is_err());
        assert!(parse_sparsity("1.5").is_err());
        assert!(parse_sparsity("abc").is_err());
    }

    #[test]
    fn error_chain_joins_context() {
        let e = anyhow::anyhow!("x").context("y");
        assert_eq!(chain(&e), "y: x");
    }
}
