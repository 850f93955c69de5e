//! Forward problem: boundary voltages and ND matrices for a conductivity.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::boundary::{fourier_basis, inner_product, BoundaryGrid, BoundaryTrace, FourierIndexSet};
use crate::error::{Error, Result};
use crate::fem::NeumannSolver;
use crate::ndmatrix::{MatrixKind, NDMatrix};
use crate::phantom::ConductivityField;

pub use crate::ndmatrix::analytic_nd_laplace;

/// Boundary voltage for the Neumann datum `current`.
pub fn solve_neumann(field: &ConductivityField, current: &BoundaryTrace) -> Result<BoundaryTrace> {
    NeumannSolver::new(field)?.solve(current)
}

/// Full-boundary ND matrix of `field` on `idx`.
pub fn nd_matrix(field: &ConductivityField, idx: FourierIndexSet) -> Result<NDMatrix> {
    nd_matrix_with(&NeumannSolver::new(field)?, field.mesh().grid(), idx)
}

/// As [`nd_matrix`], reusing an existing factorisation.
pub fn nd_matrix_with(solver: &NeumannSolver, grid: &Arc<BoundaryGrid>, idx: FourierIndexSet) -> Result<NDMatrix> {
    let basis = basis_traces(grid, idx)?;
    let traces = par_map(&basis, |phi| solver.solve(phi));
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    matrix_from_columns(&traces, &basis, MatrixKind::Full)
}

pub(crate) fn basis_traces(grid: &Arc<BoundaryGrid>, idx: FourierIndexSet) -> Result<Vec<BoundaryTrace>> {
    idx.indices().into_iter().map(|n| fourier_basis(n, grid)).collect()
}

/// Entry `(n, l) = ⟨columns[l], basis[n]⟩`.
pub(crate) fn matrix_from_columns(
    columns: &[BoundaryTrace],
    basis: &[BoundaryTrace],
    kind: MatrixKind,
) -> Result<NDMatrix> {
    let dim = basis.len();
    let order = dim / 2;
    let idx = FourierIndexSet::new(order)?;
    let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
    for (l, col) in columns.iter().enumerate() {
        for (n, phi) in basis.iter().enumerate() {
            entries[n * dim + l] = inner_product(col, phi)?;
        }
    }
    NDMatrix::new(idx, entries, kind, None)
}

/// ND map of σ ≡ 1 on the unit disk applied to an arbitrary zero-mean
/// trace: every Fourier mode `e^{ikθ}` is divided by `|k|`.
pub fn analytic_laplace_trace(current: &BoundaryTrace) -> Result<BoundaryTrace> {
    let grid = current.grid();
    if !grid.is_unit_disk() {
        return Err(Error::UnsupportedDomain(
            "the analytic ND map is only known on the unit disk".into(),
        ));
    }
    let m = grid.len();
    let mut buf = current.values().to_vec();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let k = if j <= m / 2 { j } else { m - j };
        *c = if k == 0 { C64::new(0.0, 0.0) } else { *c / k as f64 };
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    BoundaryTrace::new(grid.clone(), buf.into_iter().map(|v| v * scale).collect())
}

/// Maps `f` over `items` on all available cores, preserving order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}
