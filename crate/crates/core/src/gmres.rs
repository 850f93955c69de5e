//! Restarted GMRES for real linear systems given as a matrix-free operator.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmresConfig {
    /// Target for `‖b − A x‖ / ‖b‖`.
    pub tolerance: f64,
    /// Krylov dimension between restarts.
    pub restart: usize,
    /// Total number of operator applications allowed.
    pub max_iterations: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            restart: 40,
            max_iterations: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// Relative residual `‖b − A x‖ / ‖b‖` at exit.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from the contents of `x`.
pub fn gmres(mut apply: impl FnMut(&[f64], &mut [f64]), b: &[f64], x: &mut [f64], cfg: &GmresConfig) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let restart = cfg.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    loop {
        apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        if beta / bnorm <= cfg.tolerance || iterations >= cfg.max_iterations {
            return GmresOutcome {
                iterations,
                residual: beta / bnorm,
                converged: beta / bnorm <= cfg.tolerance,
            };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns, reduced to triangular form by Givens rotations
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut g = vec![beta];
        for j in 0..restart {
            apply(&basis[j], &mut w);
            iterations += 1;
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = dot(&w, v);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
                col.push(hij);
            }
            let hnext = norm(&w);
            col.push(hnext);
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (a, bb) = (col[j], col[j + 1]);
            let rho = a.hypot(bb);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, bb / rho) };
            col[j] = rho;
            col[j + 1] = 0.0;
            cs.push((c, s));
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            let achieved = g[j + 1].abs();
            let done = achieved / bnorm <= cfg.tolerance || iterations >= cfg.max_iterations || hnext == 0.0;
            if !done {
                basis.push(w.iter().map(|v| v / hnext).collect());
            }
            if done || j + 1 == restart {
                let k = h.len();
                let mut y = vec![0.0; k];
                for i in (0..k).rev() {
                    let s: f64 = ((i + 1)..k).map(|l| h[l][i] * y[l]).sum();
                    y[i] = (g[i] - s) / h[i][i];
                }
                for (yi, v) in y.iter().zip(&basis) {
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += yi * vi;
                    }
                }
                break;
            }
        }
    }
}
