//! Command-line front end: simulation, partial data, scattering transforms,
//! D-bar reconstructions and the convergence experiments.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use partial_eit::boundary::fmt_float;
use partial_eit::dbar::{reconstruct, DbarWorkspace, SpatialGrid};
use partial_eit::experiments::{
    run_data_error_experiment, run_recon_error_experiment, run_reconstruction, DataErrorKind, ExperimentConfig,
    ForwardPath,
};
use partial_eit::fem::NeumannSolver;
use partial_eit::forward::nd_matrix_with;
use partial_eit::partial::partial_nd_matrix_with;
use partial_eit::scattering::{born_scattering, cgo_sinogram, scattering_grid, Connective, ScatteringGrid};
use partial_eit::{
    add_noise, analytic_nd_laplace, combine_matrices, difference_matrix, extrapolate_difference, restrict_trace,
    BoundaryTrace, ConductivityField, FourierIndexSet, GammaArc, NDMatrix, PartialMap, PartialMode, PhantomSpec,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "partial-eit", version, about = "Partial-boundary EIT with the D-bar method")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by all subcommands; flags override the `--config` file.
#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named reconstruction preset, e.g. circle-cutoff-75 (replaces --config).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Directory that output paths are relative to.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    phantom: Option<PhantomArg>,
    /// Index-set order N (2N basis functions).
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Boundary samples M.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Target mesh edge length.
    #[arg(long, global = true)]
    edge: Option<f64>,
    #[arg(long, global = true)]
    refinements: Option<u32>,
    /// Missing arc lengths, comma separated.
    #[arg(long = "h", global = true, value_delimiter = ',')]
    h_values: Option<Vec<f64>>,
    /// Centre of the missing arc.
    #[arg(long, global = true, allow_negative_numbers = true)]
    rotation: Option<f64>,
    #[arg(long = "map", global = true, value_enum, value_delimiter = ',')]
    maps: Option<Vec<MapArg>>,
    #[arg(long = "mode", global = true, value_enum, value_delimiter = ',')]
    modes: Option<Vec<ModeArg>>,
    /// Current orders of the single-current data-error experiment.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    currents: Option<Vec<i64>>,
    /// Data-error measure.
    #[arg(long, global = true, value_enum)]
    measure: Option<MeasureArg>,
    /// Truncation radius R.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Threshold c on |Re t| and |Im t|.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    connective: Option<ConnectiveArg>,
    /// Points per axis of a stand-alone scattering grid.
    #[arg(long = "k-points", global = true)]
    k_points: Option<usize>,
    #[arg(long, global = true)]
    q_factor: Option<f64>,
    #[arg(long, global = true)]
    m_d: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Spatial grid side for reconstructions.
    #[arg(long, global = true)]
    z_grid: Option<usize>,
    /// Relative noise level.
    #[arg(long, global = true)]
    noise: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomArg {
    Unit,
    Circle,
    HeartAndLungs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Cutoff,
    Scaling,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    IdealFull,
    Extrapolated,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    SingleCurrent,
    Matrix,
    /// Single-current errors with the exact σ ≡ 1 map.
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnectiveArg {
    Or,
    And,
}

#[derive(Subcommand)]
enum Command {
    /// Full ND matrix of a phantom.
    SimulateNd {
        /// Exact map of σ ≡ 1 instead of the FEM solve.
        #[arg(long)]
        analytic: bool,
        /// Write R_σ − R_1.
        #[arg(long)]
        difference: bool,
        #[arg(long, default_value = "nd.json")]
        output: PathBuf,
    },
    /// Partial ND matrix for the first map, h and mode.
    PartialNd {
        /// Write the difference to the σ ≡ 1 matrix (always so when extrapolated).
        #[arg(long)]
        difference: bool,
        #[arg(long, default_value = "partial.json")]
        output: PathBuf,
    },
    /// Fills the gap of a difference trace by cubic extrapolation.
    Extrapolate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "extrapolated.csv")]
        output: PathBuf,
    },
    /// Born scattering transform of a difference matrix.
    Scatter {
        #[arg(long)]
        input: PathBuf,
        /// Sample on the D-bar solver grid instead of an m × m grid over [−R, R]².
        #[arg(long)]
        solver_grid: bool,
        #[arg(long, default_value = "scattering.json")]
        output: PathBuf,
    },
    /// CGO sinogram S(θ, φ) on |k| = r.
    Sinogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value_t = 64)]
        thetas: usize,
        #[arg(long, default_value_t = 64)]
        phis: usize,
        #[arg(long, default_value = "sinogram.csv")]
        output: PathBuf,
    },
    /// D-bar reconstruction from a scattering grid.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "reconstruction.csv")]
        output: PathBuf,
    },
    /// Entrywise average of two difference matrices.
    Combine {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        #[arg(long, default_value = "combined.json")]
        output: PathBuf,
    },
    /// Adds seeded complex Gaussian noise at the configured level.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "noisy.json")]
        output: PathBuf,
    },
    /// Convergence experiments and reconstructions from a configuration.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        /// Reconstruct from full-boundary data.
        #[arg(long)]
        full_data: bool,
        /// Defaults to `<kind>.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    DataError,
    ReconError,
    Reconstruction,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::DataError => "data-error",
            ExperimentKind::ReconError => "recon-error",
            ExperimentKind::Reconstruction => "reconstruction",
        }
    }
}

fn resolve(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&common.preset, &common.config) {
        (Some(_), Some(_)) => bail!(partial_eit::Error::InvalidArgument(
            "--preset and --config are mutually exclusive".into()
        )),
        (Some(name), None) => ExperimentConfig::preset(name)?,
        (None, Some(path)) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            serde_json::from_reader(BufReader::new(file)).map_err(partial_eit::Error::from)?
        }
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(v) = &common.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(p) = common.phantom {
        cfg.phantom = match p {
            PhantomArg::Unit => PhantomSpec::Unit,
            PhantomArg::Circle => PhantomSpec::circle(),
            PhantomArg::HeartAndLungs => PhantomSpec::HeartAndLungs,
        };
    }
    if let Some(v) = common.order {
        cfg.order = v;
    }
    if let Some(v) = common.samples {
        cfg.mesh.samples = v;
    }
    if let Some(v) = common.edge {
        cfg.mesh.edge = v;
    }
    if let Some(v) = common.refinements {
        cfg.mesh.refinements = v;
    }
    if let Some(v) = &common.h_values {
        cfg.h_values = v.clone();
    }
    if let Some(v) = common.rotation {
        cfg.rotation = v;
    }
    if let Some(v) = &common.maps {
        cfg.maps = v
            .iter()
            .map(|m| match m {
                MapArg::Cutoff => PartialMap::Cutoff,
                MapArg::Scaling => PartialMap::Scaling,
            })
            .collect();
    }
    if let Some(v) = &common.modes {
        cfg.modes = v
            .iter()
            .map(|m| match m {
                ModeArg::IdealFull => PartialMode::IdealFull,
                ModeArg::Extrapolated => PartialMode::Extrapolated,
            })
            .collect();
    }
    if let Some(v) = &common.currents {
        cfg.currents = v.clone();
    }
    match common.measure {
        Some(MeasureArg::SingleCurrent) => cfg.data_error = DataErrorKind::SingleCurrent,
        Some(MeasureArg::Matrix) => cfg.data_error = DataErrorKind::Matrix,
        Some(MeasureArg::Analytic) => {
            cfg.data_error = DataErrorKind::SingleCurrent;
            cfg.forward = ForwardPath::Analytic;
            cfg.phantom = PhantomSpec::Unit;
        }
        None => {}
    }
    if let Some(v) = common.radius {
        cfg.scattering.radius = v;
    }
    if let Some(v) = common.threshold {
        cfg.scattering.threshold = Some(v);
    }
    if let Some(v) = common.connective {
        cfg.scattering.connective = match v {
            ConnectiveArg::Or => Connective::Or,
            ConnectiveArg::And => Connective::And,
        };
    }
    if let Some(v) = common.k_points {
        cfg.scattering.m = v;
    }
    if let Some(v) = common.q_factor {
        cfg.dbar.q_factor = v;
    }
    if let Some(v) = common.m_d {
        cfg.dbar.m_d = v;
    }
    if let Some(v) = common.tolerance {
        cfg.dbar.tolerance = v;
    }
    if let Some(v) = common.z_grid {
        cfg.z_grid = v;
    }
    if let Some(v) = common.noise {
        cfg.noise = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output destination under the configured directory.
fn output_path(cfg: &ExperimentConfig, name: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn read_matrix(path: &Path) -> anyhow::Result<NDMatrix> {
    Ok(NDMatrix::read_json(open(path)?)?)
}

fn provenance(cfg: &ExperimentConfig, command: &str, inputs: &[&Path]) -> Value {
    let mut p = cfg.provenance(command);
    p["inputs"] = json!(inputs.iter().map(|i| i.display().to_string()).collect::<Vec<_>>());
    p
}

fn solvers(cfg: &ExperimentConfig) -> anyhow::Result<(NeumannSolver, NeumannSolver, Arc<partial_eit::BoundaryGrid>)> {
    let field = cfg.field(&cfg.mesh)?;
    let unit = ConductivityField::uniform(field.mesh().clone(), field.background())?;
    let grid = field.mesh().grid().clone();
    Ok((NeumannSolver::new(&field)?, NeumannSolver::new(&unit)?, grid))
}

fn run(cli: Cli) -> anyhow::Result<PathBuf> {
    let cfg = resolve(&cli.common)?;
    let idx = FourierIndexSet::new(cfg.order)?;
    match cli.command {
        Command::SimulateNd {
            analytic,
            difference,
            output,
        } => {
            let m = if analytic {
                if cfg.phantom != PhantomSpec::Unit {
                    bail!(partial_eit::Error::InvalidArgument(
                        "--analytic applies only to the unit phantom".into()
                    ));
                }
                let a = analytic_nd_laplace(idx, &*cfg.mesh.grid()?)?;
                if difference {
                    difference_matrix(&a, &a)?
                } else {
                    a
                }
            } else {
                let (sigma, unit, grid) = solvers(&cfg)?;
                let full = nd_matrix_with(&sigma, &grid, idx)?;
                if difference {
                    difference_matrix(&full, &nd_matrix_with(&unit, &grid, idx)?)?
                } else {
                    full
                }
            };
            let path = output_path(&cfg, &output)?;
            m.write_json(create(&path)?, Some(provenance(&cfg, "simulate-nd", &[])))?;
            Ok(path)
        }
        Command::PartialNd { difference, output } => {
            let (sigma, unit, grid) = solvers(&cfg)?;
            let gamma = GammaArc::new(cfg.h_values[0], cfg.rotation)?;
            let map = cfg.maps[0];
            let m = match cfg.modes[0] {
                PartialMode::Extrapolated => partial_nd_matrix_with(&sigma, Some(&unit), &grid, map, gamma, idx)?,
                PartialMode::IdealFull => {
                    let p = partial_nd_matrix_with(&sigma, None, &grid, map, gamma, idx)?;
                    if difference {
                        difference_matrix(&p, &partial_nd_matrix_with(&unit, None, &grid, map, gamma, idx)?)?
                    } else {
                        p
                    }
                }
            };
            let path = output_path(&cfg, &output)?;
            m.write_json(create(&path)?, Some(provenance(&cfg, "partial-nd", &[])))?;
            Ok(path)
        }
        Command::Extrapolate { input, output } => {
            let trace = BoundaryTrace::read_csv(open(&input)?, None)?;
            let gamma = GammaArc::new(cfg.h_values[0], cfg.rotation)?;
            let filled = extrapolate_difference(&restrict_trace(&trace, gamma), gamma)?;
            let path = output_path(&cfg, &output)?;
            let header = provenance(&cfg, "extrapolate", &[&input]).to_string();
            let mut out = create(&path)?;
            filled.write_csv(&mut out, Some(&header))?;
            out.flush()?;
            Ok(path)
        }
        Command::Scatter {
            input,
            solver_grid,
            output,
        } => {
            let nd = read_matrix(&input)?;
            let truncation = cfg.scattering.truncation()?;
            let grid = if solver_grid {
                let kgrid = cfg.dbar.kgrid(truncation.radius)?;
                ScatteringGrid::evaluate(kgrid, truncation, |k| born_scattering(&nd, k).unwrap_or_default())
            } else {
                scattering_grid(&nd, truncation, cfg.scattering.m)?
            };
            let path = output_path(&cfg, &output)?;
            grid.write_json(create(&path)?, Some(provenance(&cfg, "scatter", &[&input])))?;
            Ok(path)
        }
        Command::Sinogram {
            input,
            r,
            thetas,
            phis,
            output,
        } => {
            let nd = read_matrix(&input)?;
            let angles = |n: usize| -> Vec<f64> {
                (0..n)
                    .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
                    .collect()
            };
            let (ts, ps) = (angles(thetas), angles(phis));
            let s = cgo_sinogram(&nd, r, &ts, &ps, &cfg.mesh.grid()?)?;
            let path = output_path(&cfg, &output)?;
            let mut p = provenance(&cfg, "sinogram", &[&input]);
            p["r"] = json!(r);
            let mut out = create(&path)?;
            writeln!(out, "# {p}")?;
            writeln!(out, "theta,phi,re,im")?;
            for (i, row) in s.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        fmt_float(ts[i]),
                        fmt_float(ps[j]),
                        fmt_float(v.re),
                        fmt_float(v.im)
                    )?;
                }
            }
            out.flush()?;
            Ok(path)
        }
        Command::Reconstruct { input, output } => {
            let grid = ScatteringGrid::read_json(open(&input)?)?;
            let domain = cfg.mesh.grid()?;
            let ws = DbarWorkspace::new(grid.truncation.radius, cfg.dbar)?;
            let field = reconstruct(&grid, SpatialGrid::covering(&domain, cfg.z_grid)?, &domain, &ws);
            if let Some((node, msg)) = field.failures.first() {
                log::warn!(
                    "{} D-bar solves failed, first at node {node}: {msg}",
                    field.failures.len()
                );
            }
            let path = output_path(&cfg, &output)?;
            let header = provenance(&cfg, "reconstruct", &[&input]).to_string();
            let mut out = create(&path)?;
            field.write_csv(&mut out, Some(&header))?;
            out.flush()?;
            Ok(path)
        }
        Command::Combine { first, second, output } => {
            let m = combine_matrices(&read_matrix(&first)?, &read_matrix(&second)?)?;
            let path = output_path(&cfg, &output)?;
            m.write_json(create(&path)?, Some(provenance(&cfg, "combine", &[&first, &second])))?;
            Ok(path)
        }
        Command::Noise { input, output } => {
            let m = add_noise(&read_matrix(&input)?, cfg.noise, cfg.seed)?;
            let path = output_path(&cfg, &output)?;
            m.write_json(create(&path)?, Some(provenance(&cfg, "noise", &[&input])))?;
            Ok(path)
        }
        Command::Experiment {
            kind,
            full_data,
            output,
        } => {
            let output = output.unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name())));
            let path = output_path(&cfg, &output)?;
            let mut p = provenance(&cfg, kind.name(), &[]);
            match kind {
                ExperimentKind::DataError | ExperimentKind::ReconError => {
                    let table = match kind {
                        ExperimentKind::DataError => run_data_error_experiment(&cfg)?,
                        _ => run_recon_error_experiment(&cfg)?,
                    };
                    let mut out = create(&path)?;
                    table.write_csv(&mut out, Some(&p))?;
                    out.flush()?;
                }
                ExperimentKind::Reconstruction => {
                    p["full_data"] = json!(full_data);
                    let field = run_reconstruction(&cfg, full_data)?;
                    let mut out = create(&path)?;
                    field.write_csv(&mut out, Some(&p.to_string()))?;
                    out.flush()?;
                }
            }
            Ok(path)
        }
    }
}

/// `{"error":{"kind":…,"message":…}}` for the failure.
fn error_line(err: &anyhow::Error) -> String {
    let kind = if let Some(e) = err.downcast_ref::<partial_eit::Error>() {
        e.kind()
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else if err.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else {
        "cli"
    };
    json!({"error": {"kind": kind, "message": format!("{err:#}")}}).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
