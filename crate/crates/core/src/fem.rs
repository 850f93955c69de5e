//! P1 finite elements for `∇·σ∇u = 0` with Neumann data.
//!
//! The constant null space is removed by adding the rank-one term `c cᵀ`,
//! `c_i = ∫_∂Ω λ_i ds`, to the stiffness matrix. For compatible data the
//! solution of `(K + c cᵀ) u = b` is the solution of the bordered system
//! `K u + c λ = b, cᵀ u = 0` with `λ = 0`, so the constraint costs nothing
//! and the operator stays symmetric positive definite. Nodes are numbered
//! ring by ring, which keeps the envelope of the factor narrow.

use num_complex::Complex64 as C64;

use crate::boundary::{zero_mean_project, BoundaryTrace};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::phantom::ConductivityField;

/// Relative residual above which a direct solve is reported as failed.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Symmetric matrix in envelope storage: row `i` holds columns `first[i]..=i`.
#[derive(Debug, Clone)]
pub(crate) struct Envelope {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl Envelope {
    fn with_profile(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        offset.push(0);
        for (i, &f) in first.iter().enumerate() {
            offset.push(offset[i] + i - f + 1);
        }
        let data = vec![0.0; offset[first.len()]];
        Self { first, offset, data }
    }

    fn dim(&self) -> usize {
        self.first.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.offset[i]..self.offset[i + 1]]
    }

    /// Adds `v` at `(i, j)` of the lower triangle (`j <= i`).
    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && j >= self.first[i]);
        self.data[self.offset[i] + j - self.first[i]] += v;
    }

    /// In-place `L Lᵀ` factorisation.
    fn factor(&mut self) -> Result<()> {
        for i in 0..self.dim() {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let (head, tail) = self.data.split_at_mut(oi);
                let lj = &head[oj + k0 - fj..oj + j - fj];
                let li = &tail[k0 - fi..j - fi];
                let dot: f64 = li.iter().zip(lj).map(|(a, b)| a * b).sum();
                let diag = head[oj + j - fj];
                tail[j - fi] = (tail[j - fi] - dot) / diag;
            }
            let row = &mut self.data[oi..self.offset[i + 1]];
            let (off, d) = row.split_at_mut(i - fi);
            let pivot = d[0] - off.iter().map(|x| x * x).sum::<f64>();
            if !(pivot > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "stiffness matrix is not positive definite at row {i}"
                )));
            }
            d[0] = pivot.sqrt();
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place.
    fn solve(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.row(i);
            let fi = self.first[i];
            let s: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let row = self.row(i);
            let fi = self.first[i];
            b[i] /= row[i - fi];
            let xi = b[i];
            for (l, x) in row[..i - fi].iter().zip(&mut b[fi..i]) {
                *x -= l * xi;
            }
        }
    }
}

/// Sparse symmetric stiffness matrix in row-compressed form.
#[derive(Debug, Clone)]
struct Stiffness {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Stiffness {
    fn assemble(mesh: &Mesh, sigma: &[f64]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.vertex_count()];
        let v = mesh.vertices();
        for t in mesh.triangles() {
            let p = [v[t[0]], v[t[1]], v[t[2]]];
            let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let s = (sigma[t[0]] + sigma[t[1]] + sigma[t[2]]) / 3.0;
            let mut b = [0.0; 3];
            let mut c = [0.0; 3];
            for k in 0..3 {
                let (j, l) = ((k + 1) % 3, (k + 2) % 3);
                b[k] = p[j][1] - p[l][1];
                c[k] = p[l][0] - p[j][0];
            }
            for a in 0..3 {
                for bb in 0..3 {
                    let val = s * (b[a] * b[bb] + c[a] * c[bb]) / (2.0 * area2);
                    rows[t[a]].push((t[bb], val));
                }
            }
        }
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, val) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += val,
                    _ => merged.push((j, val)),
                }
            }
            *row = merged;
        }
        Self { rows }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            y[i] = row.iter().map(|&(j, a)| a * x[j]).sum();
        }
    }
}

/// Factorised Neumann problem for one conductivity; reusable across currents.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    boundary: Vec<usize>,
    weights: Vec<f64>,
    stiffness: Stiffness,
    factor: Envelope,
    grid: std::sync::Arc<crate::boundary::BoundaryGrid>,
}

impl NeumannSolver {
    pub fn new(field: &ConductivityField) -> Result<Self> {
        let mesh = field.mesh();
        let stiffness = Stiffness::assemble(mesh, field.sigma());
        let boundary = mesh.boundary().to_vec();
        let weights = mesh.boundary_weights();

        let n = mesh.vertex_count();
        let mut first: Vec<usize> = (0..n).collect();
        for (i, row) in stiffness.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.first() {
                first[i] = first[i].min(j);
            }
        }
        let bmin = boundary.iter().copied().min().unwrap_or(0);
        for &b in &boundary {
            first[b] = first[b].min(bmin);
        }
        let mut factor = Envelope::with_profile(first);
        for (i, row) in stiffness.rows.iter().enumerate() {
            for &(j, a) in row.iter().filter(|e| e.0 <= i) {
                factor.add(i, j, a);
            }
        }
        for (a, &bi) in boundary.iter().enumerate() {
            for (b, &bj) in boundary.iter().enumerate() {
                if bj <= bi {
                    factor.add(bi, bj, weights[a] * weights[b]);
                }
            }
        }
        factor.factor()?;
        Ok(Self {
            boundary,
            weights,
            stiffness,
            factor,
            grid: mesh.grid().clone(),
        })
    }

    fn solve_real(&self, load: &[f64]) -> Result<Vec<f64>> {
        let n = self.factor.dim();
        let mut b = vec![0.0; n];
        for (k, &i) in self.boundary.iter().enumerate() {
            b[i] = load[k];
        }
        let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut u = b.clone();
        if bnorm == 0.0 {
            return Ok(u);
        }
        self.factor.solve(&mut u);

        let mut r = vec![0.0; n];
        self.stiffness.apply(&u, &mut r);
        let cu: f64 = self.boundary.iter().zip(&self.weights).map(|(&i, w)| w * u[i]).sum();
        for (&i, w) in self.boundary.iter().zip(&self.weights) {
            r[i] += w * cu;
        }
        let res = r.iter().zip(&b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() / bnorm;
        if res > RESIDUAL_TOL {
            return Err(Error::NotConverged {
                residual: res,
                iterations: 0,
            });
        }
        Ok(u)
    }

    /// Boundary trace of the solution for the Neumann datum `current`.
    pub fn solve(&self, current: &BoundaryTrace) -> Result<BoundaryTrace> {
        if current.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::GridMismatch(
                "current is not sampled on the mesh boundary".into(),
            ));
        }
        if !current.is_zero_mean() {
            let scale: f64 = current.values().iter().map(|v| v.norm()).sum::<f64>() * current.grid().weight();
            let mean = current.integral().norm();
            return Err(Error::IncompatibleNeumann {
                mean,
                relative: mean / scale.max(f64::MIN_POSITIVE),
            });
        }
        let total_w: f64 = self.weights.iter().sum();
        let load = |part: fn(&C64) -> f64| -> Vec<f64> {
            let raw: Vec<f64> = current
                .values()
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| part(v) * w)
                .collect();
            let s: f64 = raw.iter().sum();
            raw.iter()
                .zip(&self.weights)
                .map(|(x, w)| x - s * w / total_w)
                .collect()
        };
        let ure = self.solve_real(&load(|v| v.re))?;
        let uim = self.solve_real(&load(|v| v.im))?;
        let values = self.boundary.iter().map(|&i| C64::new(ure[i], uim[i])).collect();
        let trace = BoundaryTrace::new(self.grid.clone(), values)?;
        Ok(zero_mean_project(&trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_cholesky_solves_small_spd_system() {
        // tridiagonal 2,-1 plus a dense corner coupling rows 3 and 4 to row 0
        let n = 5;
        let first = vec![0, 0, 1, 0, 0];
        let mut a = Envelope::with_profile(first);
        let mut dense = vec![vec![0.0; n]; n];
        let mut put = |i: usize, j: usize, v: f64, a: &mut Envelope| {
            a.add(i, j, v);
            dense[i][j] += v;
            if i != j {
                dense[j][i] += v;
            }
        };
        for i in 0..n {
            put(i, i, 4.0, &mut a);
            if i > 0 {
                put(i, i - 1, -1.0, &mut a);
            }
        }
        put(3, 0, 0.5, &mut a);
        put(4, 0, 0.25, &mut a);
        a.factor().unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dense[i][j] * x_true[j]).sum()).collect();
        a.solve(&mut b);
        for (x, t) in b.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_rejects_indefinite_matrix() {
        let mut a = Envelope::with_profile(vec![0, 0]);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(a.factor().is_err());
    }
}
