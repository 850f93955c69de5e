//! D-bar equation in the spectral variable and conductivity reconstruction.
//!
//! For fixed `z` the equation `∂̄_k μ = t(k) e_{−k}(z) μ̄ / (4π k̄)` is solved
//! in its integral form `μ = 1 + C[T μ̄]`, where `C` is convolution with
//! `1/(πk)`. The convolution is evaluated on a uniform cell-centred grid by
//! zero padding to the doubled cell and FFT; the real-linear equation is
//! solved by GMRES on the stacked real and imaginary parts.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::boundary::{fmt_float, parse_float, BoundaryGrid};
use crate::error::{Error, Result};
use crate::forward::par_map;
use crate::gmres::{gmres, GmresConfig};
use crate::scattering::{KGrid, ScatteringGrid, Truncation};

/// Tolerance band of the inside test against the boundary polyline.
pub const INSIDE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbarConfig {
    /// Solver grid side as a multiple of the truncation radius.
    pub q_factor: f64,
    /// Grid points per axis.
    pub m_d: usize,
    /// Bound on `‖μ − 1 − C[T μ̄]‖ / ‖μ‖`.
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for DbarConfig {
    fn default() -> Self {
        Self {
            q_factor: 2.3,
            m_d: 128,
            tolerance: 1e-6,
            restart: 40,
            max_iterations: 400,
        }
    }
}

impl DbarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_factor > 2.0) || self.m_d < 2 || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid D-bar settings: q_factor must exceed 2, m_d >= 2, tolerance > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Solver grid for truncation radius `radius`.
    pub fn kgrid(&self, radius: f64) -> Result<KGrid> {
        self.validate()?;
        KGrid::new(self.q_factor * radius / 2.0, self.m_d)
    }
}

/// Precomputed data shared by all spatial points.
pub struct DbarWorkspace {
    kgrid: KGrid,
    config: DbarConfig,
    /// Spectrum of the padded kernel, stored column-major (transposed).
    kernel_hat: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DbarWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DbarWorkspace")
            .field("kgrid", &self.kgrid)
            .field("config", &self.config)
            .finish()
    }
}

/// Scattering transform sampled on the solver grid.
#[derive(Debug, Clone)]
pub struct SampledTransform {
    values: Vec<C64>,
    active_rows: Vec<bool>,
}

impl SampledTransform {
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        !self.active_rows.iter().any(|&a| a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbarSolution {
    pub mu0: C64,
    pub residual: f64,
    pub iterations: usize,
}

fn transpose(src: &[C64], dst: &mut [C64], n: usize) {
    for r in 0..n {
        for c in 0..n {
            dst[c * n + r] = src[r * n + c];
        }
    }
}

impl DbarWorkspace {
    /// Workspace for scattering data supported in `|k| < radius`.
    pub fn new(radius: f64, config: DbarConfig) -> Result<Self> {
        let kgrid = config.kgrid(radius)?;
        let m = kgrid.m;
        let n = 2 * m;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let s = kgrid.spacing();
        let mut kernel = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            let ay = if r < m { r as f64 } else { r as f64 - n as f64 };
            for c in 0..n {
                let ax = if c < m { c as f64 } else { c as f64 - n as f64 };
                if (r == 0 && c == 0) || r == m || c == m {
                    continue;
                }
                kernel[r * n + c] = s / (PI * C64::new(ax, ay));
            }
        }
        forward.process(&mut kernel);
        let mut kernel_hat = vec![C64::new(0.0, 0.0); n * n];
        transpose(&kernel, &mut kernel_hat, n);
        forward.process(&mut kernel_hat);
        let scale = 1.0 / (n * n) as f64;
        kernel_hat.iter_mut().for_each(|v| *v *= scale);
        Ok(Self {
            kgrid,
            config,
            kernel_hat,
            forward,
            inverse,
        })
    }

    pub fn kgrid(&self) -> KGrid {
        self.kgrid
    }

    pub fn config(&self) -> &DbarConfig {
        &self.config
    }

    /// Samples `grid` on the solver nodes: directly when the grids agree,
    /// by bilinear interpolation otherwise.
    pub fn sample(&self, grid: &ScatteringGrid) -> SampledTransform {
        let values = if grid.kgrid == self.kgrid {
            grid.values.clone()
        } else {
            self.kgrid.nodes().into_iter().map(|k| grid.interpolate(k)).collect()
        };
        self.sample_values(values)
    }

    /// Evaluates `t` on the solver nodes with the given truncation.
    pub fn sample_fn(&self, truncation: Truncation, t: impl Fn(C64) -> C64 + Sync) -> SampledTransform {
        let grid = ScatteringGrid::evaluate(self.kgrid, truncation, t);
        self.sample_values(grid.values)
    }

    fn sample_values(&self, values: Vec<C64>) -> SampledTransform {
        let m = self.kgrid.m;
        let active_rows = values
            .chunks_exact(m)
            .map(|row| row.iter().any(|v| v.norm_sqr() > 0.0))
            .collect();
        SampledTransform { values, active_rows }
    }

    /// `C[f]` on the `m × m` grid.
    fn convolve(&self, f: &[C64], active_rows: &[bool], buf: &mut [C64], buf_t: &mut [C64], out: &mut [C64]) {
        let m = self.kgrid.m;
        let n = 2 * m;
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for r in 0..m {
            if active_rows[r] {
                buf[r * n..r * n + m].copy_from_slice(&f[r * m..(r + 1) * m]);
                self.forward.process(&mut buf[r * n..(r + 1) * n]);
            }
        }
        transpose(buf, buf_t, n);
        self.forward.process(buf_t);
        for (v, k) in buf_t.iter_mut().zip(&self.kernel_hat) {
            *v *= k;
        }
        self.inverse.process(buf_t);
        for r in 0..m {
            for c in 0..n {
                buf[r * n + c] = buf_t[c * n + r];
            }
            self.inverse.process(&mut buf[r * n..(r + 1) * n]);
            out[r * m..(r + 1) * m].copy_from_slice(&buf[r * n..r * n + m]);
        }
    }

    /// Solves for `μ(z, ·)` and returns its value at `k = 0`.
    pub fn solve(&self, t: &SampledTransform, z: C64) -> Result<DbarSolution> {
        let m = self.kgrid.m;
        let cells = m * m;
        if t.is_zero() {
            return Ok(DbarSolution {
                mu0: C64::new(1.0, 0.0),
                residual: 0.0,
                iterations: 0,
            });
        }
        let nodes = self.kgrid.nodes();
        let weight: Vec<C64> = nodes
            .iter()
            .zip(&t.values)
            .map(|(&k, &tk)| {
                if tk.norm_sqr() == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    let e = C64::from_polar(1.0, -2.0 * (k * z).re);
                    tk * e / (4.0 * PI * k.conj())
                }
            })
            .collect();
        let n = 2 * m;
        let mut buf = vec![C64::new(0.0, 0.0); n * n];
        let mut buf_t = vec![C64::new(0.0, 0.0); n * n];
        let mut f = vec![C64::new(0.0, 0.0); cells];
        let mut conv = vec![C64::new(0.0, 0.0); cells];
        let mut apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..cells {
                f[i] = weight[i] * C64::new(x[i], -x[cells + i]);
            }
            self.convolve(&f, &t.active_rows, &mut buf, &mut buf_t, &mut conv);
            for i in 0..cells {
                y[i] = x[i] - conv[i].re;
                y[cells + i] = x[cells + i] - conv[i].im;
            }
        };
        let mut b = vec![0.0; 2 * cells];
        b[..cells].iter_mut().for_each(|v| *v = 1.0);
        let mut x = b.clone();
        let cfg = GmresConfig {
            tolerance: 0.5 * self.config.tolerance,
            restart: self.config.restart,
            max_iterations: self.config.max_iterations,
        };
        let outcome = gmres(&mut apply, &b, &mut x, &cfg);
        let mut y = vec![0.0; 2 * cells];
        apply(&x, &mut y);
        let num = b.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let den = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = num / den;
        if residual > self.config.tolerance {
            return Err(Error::NotConverged {
                residual,
                iterations: outcome.iterations,
            });
        }
        let mu = |i: usize| C64::new(x[i], x[cells + i]);
        let mu0 = if m % 2 == 1 {
            mu((m / 2) * m + m / 2)
        } else {
            let (a, c) = (m / 2 - 1, m / 2);
            (mu(a * m + a) + mu(a * m + c) + mu(c * m + a) + mu(c * m + c)) / 4.0
        };
        Ok(DbarSolution {
            mu0,
            residual,
            iterations: outcome.iterations,
        })
    }
}

/// `μ(z, 0)` for one spatial point.
pub fn solve_dbar_at(t: &ScatteringGrid, z: C64, ws: &DbarWorkspace) -> Result<DbarSolution> {
    ws.solve(&ws.sample(t), z)
}

/// Uniform spatial grid over a rectangle, nodes on the edges included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub nx: usize,
    pub ny: usize,
    /// `[xmin, xmax, ymin, ymax]`.
    pub bbox: [f64; 4],
}

impl SpatialGrid {
    pub fn new(nx: usize, ny: usize, bbox: [f64; 4]) -> Result<Self> {
        if nx < 2 || ny < 2 || !(bbox[1] > bbox[0]) || !(bbox[3] > bbox[2]) {
            return Err(Error::InvalidArgument(format!(
                "spatial grid needs at least 2x2 nodes and a non-empty box, got {nx}x{ny} over {bbox:?}"
            )));
        }
        Ok(Self { nx, ny, bbox })
    }

    /// `n × n` grid over the bounding box of the domain.
    pub fn covering(grid: &BoundaryGrid, n: usize) -> Result<Self> {
        Self::new(n, n, grid.bounding_box())
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        let (r, c) = (i / self.nx, i % self.nx);
        let [x0, x1, y0, y1] = self.bbox;
        [
            x0 + (x1 - x0) * c as f64 / (self.nx - 1) as f64,
            y0 + (y1 - y0) * r as f64 / (self.ny - 1) as f64,
        ]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reconstructed conductivity on a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionField {
    pub z_grid: SpatialGrid,
    pub inside: Vec<bool>,
    /// `μ(z, 0)²`; NaN outside the domain and where the solve failed.
    pub sigma: Vec<C64>,
    pub residual: Vec<f64>,
    pub truncation: Truncation,
    /// Nodes whose solve failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

impl ReconstructionField {
    /// Real part of the reconstruction at node `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.sigma[i].re
    }

    /// Nodes inside the domain with a successful solve.
    pub fn valid_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.sigma.len()).filter(|&i| self.inside[i] && self.sigma[i].re.is_finite())
    }

    /// `‖self − reference‖ / ‖reference‖` over nodes valid in both fields.
    pub fn relative_l2_error(&self, reference: &ReconstructionField) -> Result<f64> {
        if self.z_grid != reference.z_grid {
            return Err(Error::GridMismatch("reconstructions live on different grids".into()));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in self.valid_nodes().filter(|&i| reference.sigma[i].re.is_finite()) {
            num += (self.value(i) - reference.value(i)).powi(2);
            den += reference.value(i).powi(2);
        }
        if den == 0.0 {
            return Err(Error::InvalidArgument("reference reconstruction is empty".into()));
        }
        Ok((num / den).sqrt())
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: Option<&str>) -> Result<()> {
        if let Some(h) = header {
            writeln!(out, "# {h}")?;
        }
        writeln!(out, "x,y,inside,sigma,residual")?;
        for i in 0..self.sigma.len() {
            let [x, y] = self.z_grid.point(i);
            let sigma = if self.inside[i] {
                fmt_float(self.sigma[i].re)
            } else {
                "nan".into()
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_float(x),
                fmt_float(y),
                u8::from(self.inside[i]),
                sigma,
                fmt_float(self.residual[i])
            )?;
        }
        Ok(())
    }

    /// Reads the CSV layout written by [`write_csv`](Self::write_csv); the
    /// grid is recovered from the coordinates.
    pub fn read_csv<R: BufRead>(input: R, truncation: Truncation) -> Result<Self> {
        let mut rows: Vec<[f64; 5]> = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("x,") {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::Parse(format!("expected 5 columns: {line}")));
            }
            let mut row = [0.0; 5];
            for (v, p) in row.iter_mut().zip(&parts) {
                *v = parse_float(p).ok_or_else(|| Error::Parse(format!("bad number {p:?}")))?;
            }
            rows.push(row);
        }
        let nx = rows.iter().take_while(|r| r[1] == rows[0][1]).count();
        if nx < 2 || !rows.len().is_multiple_of(nx) {
            return Err(Error::Parse("rows do not form a rectangular grid".into()));
        }
        let ny = rows.len() / nx;
        let last = rows[rows.len() - 1];
        let z_grid = SpatialGrid::new(nx, ny, [rows[0][0], last[0], rows[0][1], last[1]])?;
        Ok(Self {
            z_grid,
            inside: rows.iter().map(|r| r[2] != 0.0).collect(),
            sigma: rows.iter().map(|r| C64::new(r[3], 0.0)).collect(),
            residual: rows.iter().map(|r| r[4]).collect(),
            truncation,
            failures: Vec::new(),
        })
    }
}

/// `σ(z) = μ(z, 0)²` at every node of `z_grid` inside `domain`.
pub fn reconstruct(
    t: &ScatteringGrid,
    z_grid: SpatialGrid,
    domain: &BoundaryGrid,
    ws: &DbarWorkspace,
) -> ReconstructionField {
    reconstruct_sampled(&ws.sample(t), t.truncation, z_grid, domain, ws)
}

pub fn reconstruct_sampled(
    t: &SampledTransform,
    truncation: Truncation,
    z_grid: SpatialGrid,
    domain: &BoundaryGrid,
    ws: &DbarWorkspace,
) -> ReconstructionField {
    let nodes: Vec<usize> = (0..z_grid.len()).collect();
    let inside: Vec<bool> = nodes
        .iter()
        .map(|&i| domain.contains(z_grid.point(i), INSIDE_TOL))
        .collect();
    let solved = par_map(&nodes, |&i| {
        if !inside[i] {
            return None;
        }
        let [x, y] = z_grid.point(i);
        Some(ws.solve(t, C64::new(x, y)))
    });
    let nan = C64::new(f64::NAN, f64::NAN);
    let mut sigma = vec![nan; nodes.len()];
    let mut residual = vec![f64::NAN; nodes.len()];
    let mut failures = Vec::new();
    for (i, s) in solved.into_iter().enumerate() {
        match s {
            None => {}
            Some(Ok(sol)) => {
                sigma[i] = sol.mu0 * sol.mu0;
                residual[i] = sol.residual;
            }
            Some(Err(e)) => {
                if let Error::NotConverged { residual: r, .. } = e {
                    residual[i] = r;
                }
                log::warn!("D-bar solve failed at node {i}: {e}");
                failures.push((i, e.to_string()));
            }
        }
    }
    ReconstructionField {
        z_grid,
        inside,
        sigma,
        residual,
        truncation,
        failures,
    }
}
