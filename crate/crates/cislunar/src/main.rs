//! Command-line front end: sweep, resume, map export, branch analysis, and
//! single-trajectory propagation on top of the library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cislunar::catalog::{self, DedupTolerances};
use cislunar::config::ConfigError;
use cislunar::dynamics::{self, CollisionMode, PropagationOptions};
use cislunar::sweep::{self, SweepError};
use cislunar::transfer::{self, ConstructionParams};
use cislunar::{GridSpec, RunConfig};

const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RESUMABLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cislunar",
    about = "Earth-Moon bi-impulsive transfer sweeps and solution-space analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonRunArgs {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker thread count override (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct GridOverrides {
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    alpha_step: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    beta_step: Option<f64>,
    /// Time-of-flight bounds and step in TU.
    #[arg(long)]
    tof_min: Option<f64>,
    #[arg(long)]
    tof_max: Option<f64>,
    #[arg(long)]
    tof_step: Option<f64>,
}

impl GridOverrides {
    fn apply(&self, grid: &mut GridSpec) {
        let pairs = [
            (&mut grid.alpha.min, self.alpha_min),
            (&mut grid.alpha.max, self.alpha_max),
            (&mut grid.alpha.step, self.alpha_step),
            (&mut grid.beta.min, self.beta_min),
            (&mut grid.beta.max, self.beta_max),
            (&mut grid.beta.step, self.beta_step),
            (&mut grid.tof.min, self.tof_min),
            (&mut grid.tof.max, self.tof_max),
            (&mut grid.tof.step, self.tof_step),
        ];
        for (slot, value) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the grid search and correction sweep, writing a catalog.
    Search {
        #[command(flatten)]
        common: CommonRunArgs,
        #[command(flatten)]
        grid: GridOverrides,
        /// Catalog path; defaults to <output_dir>/catalog.jsonl.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Continue an interrupted sweep from its checkpoint.
    Resume {
        #[command(flatten)]
        common: CommonRunArgs,
        #[command(flatten)]
        grid: GridOverrides,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Export the four solution-space maps as CSV.
    ExportMaps {
        /// Catalog to read.
        #[arg(long)]
        catalog: PathBuf,
        /// Directory for the CSV files (defaults next to the catalog).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Deduplicate before exporting.
        #[arg(long)]
        dedup: bool,
    },
    /// Report the time-of-flight band structure per departure phase angle.
    Branches {
        #[arg(long)]
        catalog: PathBuf,
        /// Restrict to one phase angle (rad); all angles when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        /// Gap threshold separating bands, in days.
        #[arg(long, default_value_t = 10.0)]
        threshold_days: f64,
        /// Deduplicate before the analysis.
        #[arg(long)]
        dedup: bool,
        /// Also write the per-band table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Propagate one construction-parameter triple and dump the trajectory.
    Propagate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Departure phase angle (rad).
        #[arg(long)]
        alpha: f64,
        /// Initial-to-circular velocity ratio.
        #[arg(long)]
        beta: f64,
        /// Time of flight (TU).
        #[arg(long)]
        tof: f64,
        /// Number of uniform samples along the arc.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Trajectory CSV path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = err.source_chain();
            while let Some(s) = source.next() {
                eprintln!("  caused by: {s}");
            }
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug)]
struct CliError {
    message: String,
    code: u8,
    chain: Vec<String>,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code,
            chain: Vec::new(),
        }
    }

    fn exit_code(&self) -> u8 {
        self.code
    }

    fn source_chain(&self) -> impl Iterator<Item = &String> {
        self.chain.iter()
    }
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        CliError::new(EXIT_CONFIG, err.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(err: SweepError) -> Self {
        let code = match &err {
            SweepError::Config(_) | SweepError::CheckpointMismatch(_) => EXIT_CONFIG,
            SweepError::Resumable { .. } => EXIT_RESUMABLE,
            _ => EXIT_INTERNAL,
        };
        CliError::new(code, err.to_string())
    }
}

impl From<catalog::CatalogError> for CliError {
    fn from(err: catalog::CatalogError) -> Self {
        CliError::new(EXIT_INTERNAL, err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::new(EXIT_INTERNAL, err.to_string())
    }
}

fn load_config(
    path: &Option<PathBuf>,
    common: Option<&CommonRunArgs>,
    grid: Option<&GridOverrides>,
) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(common) = common {
        if let Some(dir) = &common.output_dir {
            cfg.run.output_dir = dir.display().to_string();
        }
        if let Some(workers) = common.workers {
            cfg.run.workers = workers;
        }
    }
    if let Some(overrides) = grid {
        overrides.apply(&mut cfg.grid);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn catalog_path(cfg: &RunConfig, explicit: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    match explicit {
        Some(p) => Ok(p.clone()),
        None => {
            let dir = Path::new(&cfg.run.output_dir);
            std::fs::create_dir_all(dir)?;
            Ok(dir.join("catalog.jsonl"))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search {
            common,
            grid,
            catalog,
        } => {
            let cfg = load_config(&common.config, Some(&common), Some(&grid))?;
            let path = catalog_path(&cfg, &catalog)?;
            if cfg.grid.total() == 0 {
                eprintln!("warning: the configured grid is empty; writing an empty catalog");
            }
            let summary = sweep::run_search(&cfg, &path, true)?;
            summary.print();
            println!("catalog               {}", path.display());
            Ok(())
        }
        Command::Resume {
            common,
            grid,
            catalog,
        } => {
            let cfg = load_config(&common.config, Some(&common), Some(&grid))?;
            let path = catalog_path(&cfg, &catalog)?;
            let summary = sweep::resume_search(&cfg, &path, true)?;
            if summary.already_complete {
                println!("catalog already complete; nothing to do");
            } else {
                summary.print();
            }
            Ok(())
        }
        Command::ExportMaps {
            catalog: path,
            output_dir,
            dedup,
        } => {
            let data = catalog::load_catalog(&path)?;
            let solutions = if dedup {
                let out = catalog::deduplicate(&data.solutions, &DedupTolerances::default());
                println!("deduplicated {} -> {}", out.original_count, out.kept.len());
                out.kept
            } else {
                data.solutions
            };
            let dir = output_dir.unwrap_or_else(|| {
                path.parent().map(Path::to_path_buf).unwrap_or_default()
            });
            let paths = catalog::export_maps(&dir, &solutions)?;
            for p in paths {
                println!("wrote {} ({} rows)", p.display(), solutions.len());
            }
            Ok(())
        }
        Command::Branches {
            catalog: path,
            alpha,
            threshold_days,
            dedup,
            csv,
        } => {
            let data = catalog::load_catalog(&path)?;
            let solutions = if dedup {
                catalog::deduplicate(&data.solutions, &DedupTolerances::default()).kept
            } else {
                data.solutions
            };
            let reports = match alpha {
                Some(a) => catalog::detect_branches(&solutions, a, threshold_days)
                    .map(|r| vec![r])
                    .unwrap_or_default(),
                None => catalog::branch_reports(&solutions, threshold_days),
            };
            if reports.is_empty() {
                return Err(CliError::new(
                    EXIT_INTERNAL,
                    "no solutions match the requested phase angle",
                ));
            }
            print_branches(&reports);
            if let Some(csv_path) = csv {
                write_branch_csv(&csv_path, &reports)?;
                println!("wrote {}", csv_path.display());
            }
            Ok(())
        }
        Command::Propagate {
            config,
            alpha,
            beta,
            tof,
            samples,
            output,
        } => {
            let cfg = load_config(&config, None, None)?;
            propagate_command(&cfg, alpha, beta, tof, samples, output)
        }
    }
}

fn print_branches(reports: &[catalog::BranchReport]) {
    let mut counts = std::collections::BTreeMap::new();
    for report in reports {
        *counts.entry(report.band_count()).or_insert(0usize) += 1;
        let centers: Vec<String> = report
            .bands
            .iter()
            .map(|b| format!("{:.2}", b.center_days))
            .collect();
        let spacings: Vec<String> = report
            .center_spacings_days()
            .iter()
            .map(|g| format!("{g:.2}"))
            .collect();
        println!(
            "alpha {:>8.5} rad: {:>5} solutions, {} bands; centers [{}] d; spacing [{}] d",
            report.alpha,
            report.solution_count,
            report.band_count(),
            centers.join(", "),
            spacings.join(", "),
        );
    }
    if let Some((modal, _)) = counts.iter().max_by_key(|(_, n)| **n) {
        println!("modal band count: {modal}");
    }
}

fn write_branch_csv(path: &Path, reports: &[catalog::BranchReport]) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "alpha_rad,band_index,tof_min_days,tof_max_days,count,center_days"
    )?;
    for report in reports {
        for (k, band) in report.bands.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                report.alpha,
                k,
                band.tof_min_days,
                band.tof_max_days,
                band.count,
                band.center_days
            )?;
        }
    }
    Ok(())
}

fn propagate_command(
    cfg: &RunConfig,
    alpha: f64,
    beta: f64,
    tof: f64,
    samples: usize,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    use std::io::Write;
    if tof <= 0.0 {
        return Err(CliError::new(EXIT_CONFIG, "tof must be positive"));
    }
    let constants = cfg.system_constants()?;
    let orbit = cfg.orbit;
    let params = ConstructionParams::new(alpha, beta, tof).normalized();
    let s0 = transfer::departure_state(&constants, &orbit, &params);

    let opts = PropagationOptions {
        tolerance: cfg.propagation.tolerance,
        collisions: CollisionMode::Detect {
            earth_arming_radius: Some(
                cislunar::corrector::EARTH_ARMING_FACTOR * orbit.departure_radius(&constants),
            ),
        },
        sample_interval: Some(tof / samples.max(1) as f64),
        ..PropagationOptions::default()
    };
    let res = dynamics::propagate(&constants, &s0, tof, &opts)
        .map_err(|e| CliError::new(EXIT_INTERNAL, e.to_string()))?;

    let mut sink: Box<dyn Write> = match &output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "t,x,y,u,v")?;
    if let Some(samples) = &res.dense_samples {
        for (t, s) in samples {
            writeln!(sink, "{},{},{},{},{}", t, s.x, s.y, s.u, s.v)?;
        }
    }
    sink.flush()?;

    let psi = transfer::insertion_residual(&constants, &orbit, &res.final_state);
    let psi_norm = (psi[0] * psi[0] + psi[1] * psi[1]).sqrt();
    let j0 = dynamics::jacobi_energy(&constants, &s0);
    let j1 = dynamics::jacobi_energy(&constants, &res.final_state);
    eprintln!("terminated by         {:?}", res.terminated_by);
    eprintln!(
        "elapsed time          {} TU ({:.4} days)",
        res.time,
        constants.time_to_days(res.time)
    );
    eprintln!("endpoint |psi_f|      {psi_norm:.3e}");
    eprintln!("jacobi drift          {:.3e}", (j1 - j0).abs());
    if let Some(p) = output {
        eprintln!("trajectory written to {}", p.display());
    }
    Ok(())
}
