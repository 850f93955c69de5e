//! Convergence experiments over the length of the missing boundary arc, and
//! the configuration shared with the command-line tool.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary::{fmt_float, fourier_basis, BoundaryGrid, BoundaryTrace, FourierIndexSet};
use crate::dbar::{reconstruct_sampled, DbarConfig, DbarWorkspace, ReconstructionField, SpatialGrid};
use crate::error::{Error, Result};
use crate::fem::NeumannSolver;
use crate::fit::loglog_slope;
use crate::forward::{analytic_laplace_trace, nd_matrix_with, par_map};
use crate::mesh::Mesh;
use crate::ndmatrix::{add_noise, difference_matrix, NDMatrix};
use crate::partial::{apply_partial_map, partial_nd_matrix_with, GammaArc, PartialMap, PartialMode};
use crate::phantom::{build_phantom, ConductivityField, PhantomSpec};
use crate::scattering::{born_scattering, Connective, Truncation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshConfig {
    /// Boundary samples `M`.
    pub samples: usize,
    /// Target interior edge length.
    pub edge: f64,
    /// Uniform refinements applied to `(samples, edge)`; each doubles `M`
    /// and halves the edge.
    pub refinements: u32,
    /// Minimum distance from inclusions to the boundary.
    pub clearance: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            samples: crate::boundary::DEFAULT_BOUNDARY_SAMPLES,
            edge: crate::mesh::DEFAULT_EDGE_LENGTH,
            refinements: 0,
            clearance: crate::phantom::DEFAULT_CLEARANCE,
        }
    }
}

impl MeshConfig {
    pub fn refined(&self) -> Self {
        Self {
            refinements: self.refinements + 1,
            ..*self
        }
    }

    pub fn boundary_samples(&self) -> usize {
        self.samples << self.refinements
    }

    pub fn edge_length(&self) -> f64 {
        self.edge / f64::from(1u32 << self.refinements)
    }

    pub fn grid(&self) -> Result<Arc<BoundaryGrid>> {
        BoundaryGrid::unit_disk(self.boundary_samples())
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(Mesh::for_grid(&self.grid()?, self.edge_length())?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatteringConfig {
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "c")]
    pub threshold: Option<f64>,
    pub connective: Connective,
    /// Points per axis of a stand-alone scattering grid.
    pub m: usize,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        Self {
            radius: 3.0,
            threshold: None,
            connective: Connective::Or,
            m: 64,
        }
    }
}

impl ScatteringConfig {
    pub fn truncation(&self) -> Result<Truncation> {
        Truncation::new(self.radius, self.threshold, self.connective)
    }
}

/// Which quantity the data-error experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataErrorKind {
    /// `‖(R̃ − R) φ_n‖ / ‖R φ_n‖` for each `n` in `currents`.
    #[default]
    SingleCurrent,
    /// `‖R̃_{σ,1} − R_{σ,1}‖_F / ‖R_{σ,1}‖_F` for each mode in `modes`.
    Matrix,
}

/// How voltages are computed in the single-current experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardPath {
    /// Exact ND map of σ ≡ 1 on the unit disk.
    Analytic,
    #[default]
    Fem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub phantom: PhantomSpec,
    /// Lengths of the missing arc, ascending in `(0, 2π)`.
    pub h_values: Vec<f64>,
    /// Centre of the missing arc.
    pub rotation: f64,
    pub maps: Vec<PartialMap>,
    /// Index-set order `N`: the basis has `2N` functions.
    pub order: usize,
    /// Current orders `n` of the single-current experiment.
    pub currents: Vec<i64>,
    pub data_error: DataErrorKind,
    pub forward: ForwardPath,
    pub mesh: MeshConfig,
    pub modes: Vec<PartialMode>,
    /// Fraction of the sweep, from the smallest `h`, used for slopes.
    pub slope_fraction: f64,
    pub scattering: ScatteringConfig,
    pub dbar: DbarConfig,
    /// Spatial grid side for reconstructions.
    pub z_grid: usize,
    /// Relative noise level added to difference matrices before scattering.
    pub noise: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// `2π · {1/64, 2/64, …, 32/64}`.
pub fn default_h_sweep() -> Vec<f64> {
    (1..=32).map(|j| 2.0 * PI * j as f64 / 64.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::circle(),
            h_values: default_h_sweep(),
            rotation: 0.0,
            maps: vec![PartialMap::Cutoff, PartialMap::Scaling],
            order: 8,
            currents: vec![1],
            data_error: DataErrorKind::SingleCurrent,
            forward: ForwardPath::Fem,
            mesh: MeshConfig::default(),
            modes: vec![PartialMode::IdealFull, PartialMode::Extrapolated],
            slope_fraction: 0.5,
            scattering: ScatteringConfig::default(),
            dbar: DbarConfig::default(),
            z_grid: 64,
            noise: 0.0,
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 12] = [
    "circle-cutoff-75",
    "circle-cutoff-50",
    "circle-cutoff-25",
    "circle-scaling-75",
    "circle-scaling-50",
    "circle-scaling-25",
    "hnl-cutoff-87.5",
    "hnl-cutoff-75",
    "hnl-cutoff-50",
    "hnl-scaling-87.5",
    "hnl-scaling-75",
    "hnl-scaling-50",
];

fn preset_values(phantom: &str, map: PartialMap, percent: &str) -> Option<(f64, f64)> {
    use PartialMap::*;
    Some(match (phantom, map, percent) {
        ("circle", Cutoff, "75") => (5.0, 5.0),
        ("circle", Cutoff, "50") => (4.5, 6.0),
        ("circle", Cutoff, "25") => (4.5, 8.0),
        ("circle", Scaling, "75") => (5.0, 4.0),
        ("circle", Scaling, "50") => (5.0, 4.0),
        ("circle", Scaling, "25") => (4.0, 4.0),
        ("hnl", Cutoff, "87.5") => (4.0, 10.0),
        ("hnl", Cutoff, "75") => (4.0, 8.0),
        ("hnl", Cutoff, "50") => (4.0, 8.0),
        ("hnl", Scaling, "87.5") => (4.0, 10.0),
        ("hnl", Scaling, "75") => (4.0, 10.0),
        ("hnl", Scaling, "50") => (5.0, 10.0),
        _ => return None,
    })
}

impl ExperimentConfig {
    /// Reconstruction settings `<phantom>-<map>-<percent measured>`, e.g.
    /// `circle-cutoff-75`: 32 basis functions, extrapolated data and the
    /// tabulated truncation radius and threshold.
    pub fn preset(name: &str) -> Result<Self> {
        let unknown = || Error::InvalidArgument(format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")));
        let mut parts = name.splitn(3, '-');
        let (phantom, map, percent) = match (parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(m), Some(c)) => (p, m, c),
            _ => return Err(unknown()),
        };
        let map = match map {
            "cutoff" => PartialMap::Cutoff,
            "scaling" => PartialMap::Scaling,
            _ => return Err(unknown()),
        };
        let (radius, threshold) = preset_values(phantom, map, percent).ok_or_else(unknown)?;
        let measured: f64 = percent.parse().map_err(|_| unknown())?;
        Ok(Self {
            phantom: if phantom == "circle" {
                PhantomSpec::circle()
            } else {
                PhantomSpec::HeartAndLungs
            },
            h_values: vec![2.0 * PI * (1.0 - measured / 100.0)],
            maps: vec![map],
            order: 16,
            modes: vec![PartialMode::Extrapolated],
            scattering: ScatteringConfig {
                radius,
                threshold: Some(threshold),
                ..ScatteringConfig::default()
            },
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.h_values.is_empty() {
            return bad("h_values is empty".into());
        }
        if self.h_values.iter().any(|&h| !(h > 0.0 && h < 2.0 * PI)) {
            return bad(format!("h values must lie in (0, 2π), got {:?}", self.h_values));
        }
        if self.h_values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("h values must be strictly ascending".into());
        }
        if !self.rotation.is_finite() {
            return bad("rotation must be finite".into());
        }
        if self.maps.is_empty() || self.modes.is_empty() {
            return bad("maps and modes must not be empty".into());
        }
        let max_order = self.mesh.boundary_samples() / 4;
        if self.order == 0 || self.order > max_order {
            return bad(format!(
                "order must lie in 1..={max_order} for {} samples",
                self.mesh.boundary_samples()
            ));
        }
        if self
            .currents
            .iter()
            .any(|&n| n == 0 || n.unsigned_abs() as usize > max_order)
        {
            return bad(format!("current orders must be nonzero with |n| <= {max_order}"));
        }
        if !(self.mesh.edge > 0.0) || self.mesh.samples < 8 || !(self.mesh.clearance >= 0.0) {
            return bad("mesh needs samples >= 8, edge > 0 and clearance >= 0".into());
        }
        if !(self.slope_fraction > 0.0 && self.slope_fraction <= 1.0) {
            return bad(format!(
                "slope_fraction must lie in (0, 1], got {}",
                self.slope_fraction
            ));
        }
        if !(self.noise >= 0.0) {
            return bad("noise level must be non-negative".into());
        }
        if self.z_grid < 2 || self.scattering.m < 1 {
            return bad("z_grid needs at least 2 nodes and the scattering grid at least 1".into());
        }
        self.scattering.truncation()?;
        self.dbar.validate()?;
        if self.forward == ForwardPath::Analytic && self.phantom != PhantomSpec::Unit {
            return bad("the analytic path only applies to the unit phantom".into());
        }
        Ok(())
    }

    /// The h values entering the slope fit: the smallest `slope_fraction`
    /// of the sweep, at least two.
    pub fn slope_count(&self) -> usize {
        let n = self.h_values.len();
        ((self.slope_fraction * n as f64).ceil() as usize).clamp(2.min(n), n)
    }

    pub fn field(&self, mesh: &MeshConfig) -> Result<ConductivityField> {
        build_phantom(&self.phantom, mesh.mesh()?, mesh.clearance)
    }

    /// One-line JSON provenance header for output files.
    pub fn provenance(&self, experiment: &str) -> serde_json::Value {
        serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": experiment,
            "config": self,
        })
    }
}

/// One point of a convergence curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub map: PartialMap,
    /// Curve label: `n=<order>`, or the measurement mode.
    pub series: String,
    pub h: f64,
    /// The relative error, or the error kind that prevented it.
    pub error: std::result::Result<f64, String>,
}

/// Convergence curves with their log-log slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `(map, series, slope)`; NaN when fewer than two points are usable.
    pub slopes: Vec<(PartialMap, String, f64)>,
}

fn map_name(map: PartialMap) -> &'static str {
    match map {
        PartialMap::Cutoff => "cutoff",
        PartialMap::Scaling => "scaling",
    }
}

fn mode_name(mode: PartialMode) -> &'static str {
    match mode {
        PartialMode::IdealFull => "ideal-full",
        PartialMode::Extrapolated => "extrapolated",
    }
}

impl ConvergenceTable {
    fn new(rows: Vec<ConvergenceRow>, fit_count: usize) -> Self {
        let mut slopes: Vec<(PartialMap, String, f64)> = Vec::new();
        for row in &rows {
            if !slopes.iter().any(|(m, s, _)| *m == row.map && *s == row.series) {
                slopes.push((row.map, row.series.clone(), f64::NAN));
            }
        }
        for (map, series, slope) in &mut slopes {
            let (h, e): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.map == *map && r.series == *series)
                .take(fit_count)
                .filter_map(|r| r.error.as_ref().ok().map(|&e| (r.h, e)))
                .unzip();
            *slope = loglog_slope(&h, &e).unwrap_or(f64::NAN);
        }
        Self { rows, slopes }
    }

    pub fn slope(&self, map: PartialMap, series: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|(m, s, _)| *m == map && s == series)
            .map(|(_, _, v)| *v)
    }

    /// Errors of one curve in sweep order.
    pub fn errors(&self, map: PartialMap, series: &str) -> Vec<(f64, Option<f64>)> {
        self.rows
            .iter()
            .filter(|r| r.map == map && r.series == series)
            .map(|r| (r.h, r.error.as_ref().ok().copied()))
            .collect()
    }

    /// CSV `map,series,h,error,slope,status`; the slope repeats on every row
    /// of its curve.
    pub fn write_csv<W: Write>(&self, mut out: W, header: Option<&serde_json::Value>) -> Result<()> {
        if let Some(h) = header {
            writeln!(out, "# {}", serde_json::to_string(h)?)?;
        }
        writeln!(out, "map,series,h,error,slope,status")?;
        for r in &self.rows {
            let slope = self.slope(r.map, &r.series).unwrap_or(f64::NAN);
            let (error, status) = match &r.error {
                Ok(e) => (fmt_float(*e), "ok"),
                Err(kind) => ("nan".to_string(), kind.as_str()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                map_name(r.map),
                r.series,
                fmt_float(r.h),
                error,
                fmt_float(slope),
                status
            )?;
        }
        Ok(())
    }
}

fn relative(num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("reference quantity vanishes".into()));
    }
    Ok(num / den)
}

fn matrix_distance(a: &NDMatrix, b: &NDMatrix) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn row_from(map: PartialMap, series: String, h: f64, value: Result<f64>) -> ConvergenceRow {
    if let Err(e) = &value {
        log::warn!("{} {series} h = {h:.4}: {e}", map_name(map));
    }
    ConvergenceRow {
        map,
        series,
        h,
        error: value.map_err(|e| e.kind().to_string()),
    }
}

/// Relative data errors of the partial ND map against the full map over the
/// h sweep.
pub fn run_data_error_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let rows = match cfg.data_error {
        DataErrorKind::SingleCurrent => single_current_rows(cfg)?,
        DataErrorKind::Matrix => matrix_rows(cfg)?,
    };
    Ok(ConvergenceTable::new(rows, cfg.slope_count()))
}

fn single_current_rows(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    let grid = cfg.mesh.grid()?;
    let solver = match cfg.forward {
        ForwardPath::Analytic => None,
        ForwardPath::Fem => Some(NeumannSolver::new(&cfg.field(&cfg.mesh)?)?),
    };
    let forward = |phi: &BoundaryTrace| -> Result<BoundaryTrace> {
        match &solver {
            None => analytic_laplace_trace(phi),
            Some(s) => s.solve(phi),
        }
    };
    let currents = cfg
        .currents
        .iter()
        .map(|&n| fourier_basis(n, &grid))
        .collect::<Result<Vec<_>>>()?;
    let full = currents.iter().map(&forward).collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = match cfg.forward {
        ForwardPath::Analytic => full.iter().map(BoundaryTrace::norm).collect(),
        ForwardPath::Fem => {
            let fine = cfg.mesh.refined();
            let reference = NeumannSolver::new(&cfg.field(&fine)?)?;
            let fine_grid = fine.grid()?;
            cfg.currents
                .iter()
                .map(|&n| Ok(reference.solve(&fourier_basis(n, &fine_grid)?)?.norm()))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let cases: Vec<(PartialMap, f64)> = cfg
        .maps
        .iter()
        .flat_map(|&m| cfg.h_values.iter().map(move |&h| (m, h)))
        .collect();
    let gammas = cases
        .iter()
        .map(|&(_, h)| GammaArc::new(h, cfg.rotation))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<usize> = (0..cases.len()).collect();
    let results = par_map(&jobs, |&i| -> Vec<Result<f64>> {
        currents
            .iter()
            .zip(&full)
            .zip(&norms)
            .map(|((phi, u), &den)| {
                let partial = forward(&apply_partial_map(cases[i].0, phi, gammas[i])?)?;
                relative(partial.sub(u)?.norm(), den)
            })
            .collect()
    });
    let mut rows: Vec<(usize, usize, ConvergenceRow)> = Vec::new();
    for (&(map, h), res) in cases.iter().zip(results) {
        let m = cfg.maps.iter().position(|&x| x == map).unwrap_or(0);
        for (j, (r, &n)) in res.into_iter().zip(&cfg.currents).enumerate() {
            rows.push((m, j, row_from(map, format!("n={n}"), h, r)));
        }
    }
    rows.sort_by_key(|&(m, j, _)| (m, j));
    Ok(rows.into_iter().map(|(_, _, r)| r).collect())
}

/// Solvers for σ and for the unit background on the same mesh.
struct SolverPair {
    grid: Arc<BoundaryGrid>,
    sigma: NeumannSolver,
    unit: NeumannSolver,
}

impl SolverPair {
    fn new(cfg: &ExperimentConfig, mesh: &MeshConfig) -> Result<Self> {
        let field = cfg.field(mesh)?;
        let unit = ConductivityField::uniform(field.mesh().clone(), field.background())?;
        Ok(Self {
            grid: field.mesh().grid().clone(),
            sigma: NeumannSolver::new(&field)?,
            unit: NeumannSolver::new(&unit)?,
        })
    }

    fn full_difference(&self, idx: FourierIndexSet) -> Result<NDMatrix> {
        difference_matrix(
            &nd_matrix_with(&self.sigma, &self.grid, idx)?,
            &nd_matrix_with(&self.unit, &self.grid, idx)?,
        )
    }

    /// Partial difference matrix `R̃_{σ,1}` in the given measurement mode.
    fn partial_difference(
        &self,
        map: PartialMap,
        gamma: GammaArc,
        idx: FourierIndexSet,
        mode: PartialMode,
    ) -> Result<NDMatrix> {
        match mode {
            PartialMode::IdealFull => difference_matrix(
                &partial_nd_matrix_with(&self.sigma, None, &self.grid, map, gamma, idx)?,
                &partial_nd_matrix_with(&self.unit, None, &self.grid, map, gamma, idx)?,
            ),
            PartialMode::Extrapolated => {
                partial_nd_matrix_with(&self.sigma, Some(&self.unit), &self.grid, map, gamma, idx)
            }
        }
    }
}

fn sweep_cases(cfg: &ExperimentConfig) -> Vec<(PartialMap, PartialMode, f64)> {
    let mut cases = Vec::new();
    for &map in &cfg.maps {
        for &mode in &cfg.modes {
            for &h in &cfg.h_values {
                cases.push((map, mode, h));
            }
        }
    }
    cases
}

fn matrix_rows(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    if cfg.phantom == PhantomSpec::Unit {
        return Err(Error::InvalidArgument(
            "the matrix experiment needs a phantom with R_σ ≠ R_1".into(),
        ));
    }
    let idx = FourierIndexSet::new(cfg.order)?;
    let pair = SolverPair::new(cfg, &cfg.mesh)?;
    let full = pair.full_difference(idx)?;
    let den = SolverPair::new(cfg, &cfg.mesh.refined())?
        .full_difference(idx)?
        .frobenius_norm();
    let cases = sweep_cases(cfg);
    let results = par_map(&cases, |&(map, mode, h)| -> Result<f64> {
        let gamma = GammaArc::new(h, cfg.rotation)?;
        let partial = pair.partial_difference(map, gamma, idx, mode)?;
        relative(matrix_distance(&partial, &full), den)
    });
    Ok(cases
        .into_iter()
        .zip(results)
        .map(|((map, mode, h), r)| row_from(map, mode_name(mode).to_string(), h, r))
        .collect())
}

/// Spatial grid, D-bar workspace and truncation shared by reconstructions.
pub struct ReconstructionSetup {
    pub z_grid: SpatialGrid,
    pub truncation: Truncation,
    pub workspace: DbarWorkspace,
    pub domain: Arc<BoundaryGrid>,
}

impl ReconstructionSetup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let domain = cfg.mesh.grid()?;
        let truncation = cfg.scattering.truncation()?;
        Ok(Self {
            z_grid: SpatialGrid::covering(&domain, cfg.z_grid)?,
            truncation,
            workspace: DbarWorkspace::new(truncation.radius, cfg.dbar)?,
            domain,
        })
    }

    /// Born scattering data of `nd_diff` sampled on the solver grid, then
    /// the D-bar reconstruction on `z_grid`.
    pub fn reconstruct(&self, nd_diff: &NDMatrix) -> Result<ReconstructionField> {
        let t = self
            .workspace
            .sample_fn(self.truncation, |k| born_scattering(nd_diff, k).unwrap_or_default());
        Ok(reconstruct_sampled(
            &t,
            self.truncation,
            self.z_grid,
            &self.domain,
            &self.workspace,
        ))
    }
}

fn noisy(m: NDMatrix, level: f64, seed: u64) -> Result<NDMatrix> {
    if level > 0.0 {
        add_noise(&m, level, seed)
    } else {
        Ok(m)
    }
}

/// Relative errors of partial-data reconstructions against the full-data
/// reconstruction on the same spatial grid.
pub fn run_recon_error_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    if cfg.scattering.threshold.is_some() {
        return Err(Error::InvalidArgument(
            "the reconstruction-error experiment uses a fixed radius without threshold".into(),
        ));
    }
    let idx = FourierIndexSet::new(cfg.order)?;
    let pair = SolverPair::new(cfg, &cfg.mesh)?;
    let setup = ReconstructionSetup::new(cfg)?;
    let full = noisy(pair.full_difference(idx)?, cfg.noise, cfg.seed)?;
    let reference = setup.reconstruct(&full)?;
    if !reference.failures.is_empty() {
        return Err(clone_failure(&reference));
    }
    let cases = sweep_cases(cfg);
    let mut rows = Vec::with_capacity(cases.len());
    for (i, &(map, mode, h)) in cases.iter().enumerate() {
        let result = (|| -> Result<f64> {
            let gamma = GammaArc::new(h, cfg.rotation)?;
            let partial = pair.partial_difference(map, gamma, idx, mode)?;
            let partial = noisy(partial, cfg.noise, cfg.seed.wrapping_add(1 + i as u64))?;
            let field = setup.reconstruct(&partial)?;
            if !field.failures.is_empty() {
                return Err(clone_failure(&field));
            }
            field.relative_l2_error(&reference)
        })();
        rows.push(row_from(map, mode_name(mode).to_string(), h, result));
    }
    Ok(ConvergenceTable::new(rows, cfg.slope_count()))
}

fn clone_failure(field: &ReconstructionField) -> Error {
    let (node, msg) = &field.failures[0];
    log::warn!(
        "{} D-bar solves failed, first at node {node}: {msg}",
        field.failures.len()
    );
    Error::NotConverged {
        residual: field
            .residual
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max),
        iterations: 0,
    }
}

/// Reconstruction from the first map and h of `cfg` with extrapolated data
/// (the first mode); full-boundary data when `full_data` is set.
pub fn run_reconstruction(cfg: &ExperimentConfig, full_data: bool) -> Result<ReconstructionField> {
    cfg.validate()?;
    let idx = FourierIndexSet::new(cfg.order)?;
    let pair = SolverPair::new(cfg, &cfg.mesh)?;
    let setup = ReconstructionSetup::new(cfg)?;
    let data = if full_data {
        pair.full_difference(idx)?
    } else {
        let gamma = GammaArc::new(cfg.h_values[0], cfg.rotation)?;
        pair.partial_difference(cfg.maps[0], gamma, idx, cfg.modes[0])?
    };
    setup.reconstruct(&noisy(data, cfg.noise, cfg.seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analytic_config(h_values: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            phantom: PhantomSpec::Unit,
            forward: ForwardPath::Analytic,
            h_values,
            currents: vec![1, 2],
            mesh: MeshConfig {
                samples: 512,
                ..MeshConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.h_values.len(), 32);
        assert!((cfg.h_values[0] - PI / 32.0).abs() < 1e-15 && (cfg.h_values[31] - PI).abs() < 1e-15);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"order": 4, "scattering": {"R": 5.0, "c": 6.0}}"#).unwrap();
        assert_eq!(partial.order, 4);
        assert_eq!(partial.scattering.threshold, Some(6.0));
        assert_eq!(partial.scattering.m, 64);
        assert_eq!(partial.dbar, DbarConfig::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = ExperimentConfig::default();
        let cases = [
            ExperimentConfig {
                h_values: vec![0.5, 0.2],
                ..base.clone()
            },
            ExperimentConfig {
                h_values: vec![0.5, 2.0 * PI],
                ..base.clone()
            },
            ExperimentConfig {
                h_values: vec![],
                ..base.clone()
            },
            ExperimentConfig {
                forward: ForwardPath::Analytic,
                ..base.clone()
            },
            ExperimentConfig {
                currents: vec![0],
                ..base.clone()
            },
            ExperimentConfig {
                order: 65,
                ..base.clone()
            },
            ExperimentConfig {
                slope_fraction: 0.0,
                ..base.clone()
            },
            ExperimentConfig {
                dbar: DbarConfig {
                    tolerance: 0.0,
                    ..DbarConfig::default()
                },
                ..base.clone()
            },
        ];
        for cfg in cases {
            assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))), "{cfg:?}");
        }
    }

    #[test]
    fn presets_carry_the_tabulated_parameters() {
        let cfg = ExperimentConfig::preset("circle-cutoff-75").unwrap();
        assert_eq!((cfg.scattering.radius, cfg.scattering.threshold), (5.0, Some(5.0)));
        assert!((cfg.h_values[0] - PI / 2.0).abs() < 1e-15);
        assert_eq!(cfg.maps, vec![PartialMap::Cutoff]);
        assert_eq!(cfg.order, 16);
        let hnl = ExperimentConfig::preset("hnl-scaling-87.5").unwrap();
        assert_eq!(hnl.phantom, PhantomSpec::HeartAndLungs);
        assert!((hnl.h_values[0] - PI / 4.0).abs() < 1e-15);
        for name in PRESETS {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("circle-cutoff-60").is_err());
        assert!(ExperimentConfig::preset("nonsense").is_err());
    }

    #[test]
    fn slope_count_uses_the_small_half() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.slope_count(), 16);
        let cfg = ExperimentConfig {
            h_values: vec![0.1, 0.2, 0.3],
            ..cfg
        };
        assert_eq!(cfg.slope_count(), 2);
    }

    #[test]
    fn analytic_data_error_vanishes_linearly() {
        let hs: Vec<f64> = (1..=8).map(|j| PI * j as f64 / 64.0).collect();
        let table = run_data_error_experiment(&analytic_config(hs)).unwrap();
        for map in [PartialMap::Cutoff, PartialMap::Scaling] {
            for series in ["n=1", "n=2"] {
                let errs: Vec<f64> = table.errors(map, series).iter().map(|e| e.1.unwrap()).collect();
                assert!(errs.windows(2).all(|w| w[0] < w[1]), "{map:?} {series}: {errs:?}");
                let slope = table.slope(map, series).unwrap();
                assert!((slope - 1.0).abs() < 0.2, "{map:?} {series}: {slope}");
            }
        }
        // higher orders are hit harder at fixed h
        let e1 = table.errors(PartialMap::Scaling, "n=1");
        let e2 = table.errors(PartialMap::Scaling, "n=2");
        assert!(e1.iter().zip(&e2).all(|(a, b)| a.1 < b.1));
    }

    #[test]
    fn csv_output_is_deterministic_and_labelled() {
        let cfg = analytic_config(vec![0.1, 0.2, 0.4]);
        let write = || {
            let table = run_data_error_experiment(&cfg).unwrap();
            let mut buf = Vec::new();
            table.write_csv(&mut buf, Some(&cfg.provenance("data-error"))).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let text = write();
        assert_eq!(text, write());
        let mut lines = text.lines();
        let header: serde_json::Value =
            serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
        assert_eq!(header["experiment"], "data-error");
        let back: ExperimentConfig = serde_json::from_value(header["config"].clone()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(lines.next(), Some("map,series,h,error,slope,status"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert!(rows[0].starts_with("cutoff,n=1,1e-1,"));
        assert!(rows.iter().all(|r| r.ends_with(",ok")));
    }

    #[test]
    fn failing_points_are_flagged_and_the_sweep_continues() {
        let cfg = ExperimentConfig {
            h_values: vec![PI / 2.0, 2.0 * PI * 27.0 / 32.0],
            maps: vec![PartialMap::Cutoff],
            modes: vec![PartialMode::Extrapolated],
            data_error: DataErrorKind::Matrix,
            order: 4,
            mesh: MeshConfig {
                samples: 32,
                edge: 0.2,
                ..MeshConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let table = run_data_error_experiment(&cfg).unwrap();
        assert!(table.rows[0].error.is_ok());
        assert_eq!(table.rows[1].error, Err("extrapolation".to_string()));
        assert!(table.slope(PartialMap::Cutoff, "extrapolated").unwrap().is_nan());
    }

    #[test]
    fn matrix_mode_needs_a_contrast() {
        let cfg = ExperimentConfig {
            phantom: PhantomSpec::Unit,
            data_error: DataErrorKind::Matrix,
            ..ExperimentConfig::default()
        };
        assert!(run_data_error_experiment(&cfg).is_err());
    }

    #[test]
    fn recon_experiment_refuses_thresholds() {
        let mut cfg = ExperimentConfig::default();
        cfg.scattering.threshold = Some(5.0);
        assert!(matches!(
            run_recon_error_experiment(&cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
}
