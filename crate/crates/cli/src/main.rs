use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfsl::experiment::{build_field, build_grid, Experiment};
use dfsl::presets::{self, presets};
use dfsl::report::{rerender, run};
use dfsl::config::FieldDocument;
use dfsl::{CliError, Result};
use dfsl_core::io::{write_endpoints, write_scalar, write_vector};
use dfsl_core::kernel::{estimate_kernel, Direction};
use dfsl_core::mc::{simulate, McConfig};

#[derive(Parser)]
#[command(name = "dfsl", version, about = "Fundamental solutions of drift-diffusion operators with divergence-free drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every study of a config (a path, or `preset:<name>`).
    Run {
        config: String,
        /// Output directory; defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in configs, or write them out as TOML files.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
        /// Print one preset's TOML.
        #[arg(long)]
        show: Option<String>,
    },
    /// Build the drift field of a config and store it as DFSL.
    Fields {
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute one kernel slice Γ(t, ·, y) (or Γ(t, y, ·) with --adjoint).
    Kernel {
        config: String,
        #[arg(long)]
        t: f64,
        /// Source grid index, comma separated; defaults to the box center.
        #[arg(long, value_delimiter = ',')]
        y: Option<Vec<usize>>,
        #[arg(long)]
        adjoint: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the diffusion from the box center and write its endpoints.
    Sde {
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render the summary of a finished run directory.
    Report { dir: PathBuf },
}

fn status(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn kernel(config: &str, t: f64, y: Option<Vec<usize>>, adjoint: bool, out: &PathBuf) -> Result<()> {
    let exp = Experiment::prepare(presets::load(config)?)?;
    let y = y.unwrap_or_else(|| exp.source[..exp.grid.dim()].to_vec());
    let direction = if adjoint { Direction::Adjoint } else { Direction::Forward };
    let slice = estimate_kernel(&exp.op, t, &y, direction, &exp.kernel_options())?;
    write_scalar(out, &slice.values)?;
    println!("{} slice at t = {t}: mass {:.12e}, peak {:.6e}", direction.label(), slice.mass, slice.peak());
    Ok(())
}

fn sde(config: &str, out: &PathBuf) -> Result<()> {
    let loaded = presets::load(config)?;
    let grid = build_grid(&loaded.config.grid)?;
    let b = build_field(&loaded.config.field, &loaded.base_dir, &grid)?;
    let c = &loaded.config;
    let t = c.scheme.horizon;
    let cfg = McConfig {
        start: grid.coordinate(grid.flat_index(&grid.center_index()[..grid.dim()])),
        horizon: t,
        dt: t / c.mc.steps as f64,
        paths: c.mc.paths,
        seed: c.seeds.mc,
        exit_radius: (c.mc.exit_radius * (2.0 * t).sqrt()).min(0.45 * grid.box_length()),
    };
    let sample = simulate(&b, &cfg)?;
    write_endpoints(out, &sample, &loaded.hash)?;
    println!("{} endpoints, exit fraction {:.3e}", sample.len(), dfsl_core::mc::nonexplosion(&sample));
    Ok(())
}

/// `spec` is a preset selector or a TOML file with `[grid]` and `[field]`.
fn fields(spec: &str, out: &PathBuf) -> Result<()> {
    let (doc, base) = match spec.strip_prefix("preset:") {
        Some(name) => (FieldDocument::from_text(presets::preset(name)?.text)?, PathBuf::new()),
        None => {
            let path = Path::new(spec);
            (FieldDocument::from_text(&fs::read_to_string(path)?)?, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
    };
    let grid = build_grid(&doc.grid)?;
    let b = build_field(&doc.field, &base, &grid)?;
    write_vector(out, &b)?;
    println!("wrote {} (max |b| = {:.6e})", out.display(), b.max_magnitude());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<i32> = match cli.command {
        Command::Run { config, out } => presets::load(&config).and_then(|loaded| run(loaded, out.as_deref())).map(|report| {
            print!("{}", fs::read_to_string(report.dir.join("summary.txt")).unwrap_or_default());
            report.exit_code()
        }),
        Command::Presets { write, show } => (|| {
            if let Some(name) = show {
                print!("{}", presets::preset(&name)?.text);
                return Ok(0);
            }
            if let Some(dir) = &write {
                fs::create_dir_all(dir)?;
            }
            for p in presets() {
                println!("{:<20} {}", p.name, p.summary);
                if let Some(dir) = &write {
                    fs::write(dir.join(format!("{}.toml", p.name)), p.text)?;
                }
            }
            Ok(0)
        })(),
        Command::Fields { spec, out } => fields(&spec, &out).map(|_| 0),
        Command::Kernel { config, t, y, adjoint, out } => kernel(&config, t, y, adjoint, &out).map(|_| 0),
        Command::Sde { config, out } => sde(&config, &out).map(|_| 0),
        Command::Report { dir } => rerender(&dir).map(|(m, text)| {
            print!("{text}");
            if m.passed {
                0
            } else {
                1
            }
        }),
    };
    match result {
        Ok(code) => status(code),
        Err(e) => {
            eprintln!("error: {e}");
            status(CliError::exit_code(&e))
        }
    }
}
