//! Partial-boundary maps, restriction to the accessible arc and cubic
//! extrapolation of difference data across the gap.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryGrid, BoundaryTrace, FourierIndexSet};
use crate::error::{Error, Result};
use crate::fem::NeumannSolver;
use crate::forward::{basis_traces, matrix_from_columns, par_map};
use crate::ndmatrix::{MatrixKind, NDMatrix};
use crate::phantom::ConductivityField;

const MEMBERSHIP_EPS: f64 = 1e-12;

/// Nodes needed on each side of the gap for the derivative stencil.
pub const STENCIL_NODES: usize = 4;

/// Accessible arc `Γ`: the boundary minus an open gap of length `h`
/// centred at parameter angle `rotation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaArc {
    pub h: f64,
    pub rotation: f64,
}

impl GammaArc {
    pub fn new(h: f64, rotation: f64) -> Result<Self> {
        if !(0.0..2.0 * PI).contains(&h) || !rotation.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gap length must lie in [0, 2π) and rotation must be finite, got h = {h}, rotation = {rotation}"
            )));
        }
        Ok(Self { h, rotation })
    }

    pub fn full() -> Self {
        Self { h: 0.0, rotation: 0.0 }
    }

    /// `|Γ| = 2π − h` in parameter angle.
    pub fn length(&self) -> f64 {
        2.0 * PI - self.h
    }

    /// Offset of `theta` from the gap centre, in `(−π, π]`.
    fn offset(&self, theta: f64) -> f64 {
        let d = (theta - self.rotation).rem_euclid(2.0 * PI);
        if d > PI {
            d - 2.0 * PI
        } else {
            d
        }
    }

    pub fn in_gap(&self, theta: f64) -> bool {
        self.offset(theta).abs() < self.h / 2.0 - MEMBERSHIP_EPS
    }

    pub fn contains(&self, theta: f64) -> bool {
        !self.in_gap(theta)
    }

    /// Grid nodes in the gap, listed counter-clockwise from the gap start.
    pub fn gap_nodes(&self, grid: &BoundaryGrid) -> Vec<usize> {
        let m = grid.len();
        let mut nodes: Vec<usize> = (0..m).filter(|&j| self.in_gap(grid.angle(j))).collect();
        nodes.sort_by(|&a, &b| {
            self.offset(grid.angle(a))
                .partial_cmp(&self.offset(grid.angle(b)))
                .unwrap()
        });
        nodes
    }

    pub fn gamma_nodes(&self, grid: &BoundaryGrid) -> Vec<usize> {
        (0..grid.len()).filter(|&j| self.contains(grid.angle(j))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartialMap {
    Cutoff,
    Scaling,
}

impl PartialMap {
    pub fn matrix_kind(self) -> MatrixKind {
        match self {
            PartialMap::Cutoff => MatrixKind::PartialCutoff,
            PartialMap::Scaling => MatrixKind::PartialScaling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartialMode {
    IdealFull,
    Extrapolated,
}

/// Sends a zero-mean current to a zero-mean current supported on `Γ`.
pub fn apply_partial_map(map: PartialMap, phi: &BoundaryTrace, gamma: GammaArc) -> Result<BoundaryTrace> {
    if !phi.is_zero_mean() {
        let mean = phi.integral().norm();
        return Err(Error::IncompatibleNeumann {
            mean,
            relative: mean / phi.norm().max(f64::MIN_POSITIVE),
        });
    }
    if gamma.h == 0.0 {
        return Ok(phi.clone());
    }
    let grid = phi.grid().clone();
    let on_gamma = gamma.gamma_nodes(&grid);
    let mut out = vec![C64::new(0.0, 0.0); grid.len()];
    match map {
        PartialMap::Cutoff => {
            for &j in &on_gamma {
                out[j] = phi.values()[j];
            }
        }
        PartialMap::Scaling => {
            let coeffs = trig_coefficients(phi.values());
            let stretch = 2.0 * PI / gamma.length();
            for &j in &on_gamma {
                let local = (grid.angle(j) - gamma.rotation).rem_euclid(2.0 * PI);
                let t = gamma.rotation + (local - gamma.h / 2.0) * stretch;
                out[j] = trig_eval(&coeffs, t);
            }
        }
    }
    // removes the Γ mean for the cut-off map and the O(Δ) quadrature residue
    // of the stretched samples for the scaling map
    if !on_gamma.is_empty() {
        let mean = on_gamma.iter().map(|&j| out[j]).sum::<C64>() / on_gamma.len() as f64;
        for &j in &on_gamma {
            out[j] -= mean;
        }
    }
    BoundaryTrace::new(grid, out)
}

/// Coefficients `a_k`, `k = −M/2..M/2`, of the trigonometric interpolant;
/// the Nyquist mode is split evenly between `±M/2`.
fn trig_coefficients(values: &[C64]) -> Vec<(i64, C64)> {
    let m = values.len();
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut out = Vec::with_capacity(m + 1);
    for (j, c) in buf.into_iter().enumerate() {
        let c = c * scale;
        if m.is_multiple_of(2) && j == m / 2 {
            out.push((j as i64, 0.5 * c));
            out.push((-(j as i64), 0.5 * c));
        } else if j <= m / 2 {
            out.push((j as i64, c));
        } else {
            out.push((j as i64 - m as i64, c));
        }
    }
    out
}

fn trig_eval(coeffs: &[(i64, C64)], theta: f64) -> C64 {
    coeffs
        .iter()
        .filter(|(_, c)| c.norm_sqr() > 0.0)
        .map(|&(k, c)| c * C64::from_polar(1.0, k as f64 * theta))
        .sum()
}

/// Replaces values in the gap by the missing-data marker.
pub fn restrict_trace(u: &BoundaryTrace, gamma: GammaArc) -> BoundaryTrace {
    let mut out = u.clone();
    let nan = C64::new(f64::NAN, f64::NAN);
    for j in gamma.gap_nodes(u.grid()) {
        out.values_mut()[j] = nan;
    }
    out
}

/// Fills the gap of restricted difference data with the cubic matching the
/// values and one-sided derivatives at the last measured node on each side.
pub fn extrapolate_difference(gtilde: &BoundaryTrace, gamma: GammaArc) -> Result<BoundaryTrace> {
    extrapolate_with_derivatives(gtilde, gamma, None)
}

/// As [`extrapolate_difference`]; `derivatives` supplies exact `θ`-derivatives
/// at the two gap end nodes instead of finite differences.
pub fn extrapolate_with_derivatives(
    gtilde: &BoundaryTrace,
    gamma: GammaArc,
    derivatives: Option<(C64, C64)>,
) -> Result<BoundaryTrace> {
    let grid = gtilde.grid();
    let m = grid.len();
    let gap = gamma.gap_nodes(grid);
    let in_gap = {
        let mut v = vec![false; m];
        for &j in &gap {
            v[j] = true;
        }
        v
    };
    if (0..m).any(|j| !in_gap[j] && gtilde.is_missing(j)) {
        return Err(Error::Extrapolation("missing values outside the gap".into()));
    }
    let mut out = gtilde.clone();
    if gap.is_empty() {
        return Ok(out);
    }
    let first = gap[0];
    let last = gap[gap.len() - 1];
    let valid = m - gap.len();
    if valid < 2 * STENCIL_NODES {
        return Err(Error::Extrapolation(format!(
            "{valid} measured nodes, the derivative stencil needs {STENCIL_NODES} on each side"
        )));
    }
    let at = |j: isize| gtilde.values()[j.rem_euclid(m as isize) as usize];
    let left = (first as isize - 1).rem_euclid(m as isize);
    let right = (last as isize + 1).rem_euclid(m as isize);
    let step = grid.weight();
    let (dl, dr) = match derivatives {
        Some(d) => d,
        None => {
            let l = [at(left), at(left - 1), at(left - 2), at(left - 3)];
            let r = [at(right), at(right + 1), at(right + 2), at(right + 3)];
            (
                (11.0 * l[0] - 18.0 * l[1] + 9.0 * l[2] - 2.0 * l[3]) / (6.0 * step),
                (-11.0 * r[0] + 18.0 * r[1] - 9.0 * r[2] + 2.0 * r[3]) / (6.0 * step),
            )
        }
    };
    let (fl, fr) = (at(left), at(right));
    let width = (gap.len() + 1) as f64 * step;
    for (k, &j) in gap.iter().enumerate() {
        let s = (k + 1) as f64 / (gap.len() + 1) as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        out.values_mut()[j] = h00 * fl + h10 * width * dl + h01 * fr + h11 * width * dr;
    }
    Ok(out)
}

/// Partial ND matrix `R_σ J` on `idx`.
pub fn partial_nd_matrix(
    field: &ConductivityField,
    map: PartialMap,
    gamma: GammaArc,
    idx: FourierIndexSet,
    mode: PartialMode,
) -> Result<NDMatrix> {
    let solver = NeumannSolver::new(field)?;
    match mode {
        PartialMode::IdealFull => partial_nd_matrix_with(&solver, None, field.mesh().grid(), map, gamma, idx),
        PartialMode::Extrapolated => {
            let unit = ConductivityField::uniform(field.mesh().clone(), field.background())?;
            let reference = NeumannSolver::new(&unit)?;
            partial_nd_matrix_with(&solver, Some(&reference), field.mesh().grid(), map, gamma, idx)
        }
    }
}

/// As [`partial_nd_matrix`] with prebuilt solvers. Without `reference` the
/// ideal full trace is paired; with it the σ and reference traces are
/// differenced, restricted to `Γ`, extrapolated and paired, giving a
/// difference matrix.
pub fn partial_nd_matrix_with(
    solver: &NeumannSolver,
    reference: Option<&NeumannSolver>,
    grid: &Arc<BoundaryGrid>,
    map: PartialMap,
    gamma: GammaArc,
    idx: FourierIndexSet,
) -> Result<NDMatrix> {
    let basis = basis_traces(grid, idx)?;
    let columns = par_map(&basis, |phi| -> Result<BoundaryTrace> {
        let current = apply_partial_map(map, phi, gamma)?;
        let u = solver.solve(&current)?;
        match reference {
            None => Ok(u),
            Some(r) => {
                let diff = u.sub(&r.solve(&current)?)?;
                extrapolate_difference(&restrict_trace(&diff, gamma), gamma)
            }
        }
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    let kind = if reference.is_some() {
        MatrixKind::Difference
    } else {
        map.matrix_kind()
    };
    Ok(matrix_from_columns(&columns, &basis, kind)?.with_kind(kind, Some(gamma)))
}
