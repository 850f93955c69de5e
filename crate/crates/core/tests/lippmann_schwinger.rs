//! Born CGO sinogram against an independent Lippmann–Schwinger solve
//! `μ = 1 − g_k * (q μ)` with `q = Δ√σ / √σ`, on the circle phantom.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use partial_eit::gmres::{gmres, GmresConfig};
use partial_eit::mesh::Mesh;
use partial_eit::phantom::{Phantom, DEFAULT_CLEARANCE};
use partial_eit::scattering::{born_scattering, cgo_sinogram};
use partial_eit::{build_phantom, difference_matrix, nd_matrix, BoundaryGrid, FourierIndexSet, NDMatrix, PhantomSpec};
use rustfft::FftPlanner;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `Re E1(w)` from the power series; adequate for `|w| ≲ 10`.
fn re_e1(w: C64) -> f64 {
    let mut term = C64::new(1.0, 0.0);
    let mut sum = C64::new(0.0, 0.0);
    for n in 1..80 {
        term *= -w / n as f64;
        let add = term / n as f64;
        sum += add;
        if add.norm() < 1e-17 * sum.norm().max(1.0) {
            break;
        }
    }
    -EULER_GAMMA - w.norm().ln() - sum.re
}

/// Faddeev's Green's function for μ: `(−Δ − 4ik∂̄) g_k = δ`.
fn faddeev_g(k: C64, z: C64) -> C64 {
    let ikz = C64::i() * k * z;
    (-ikz).exp() * re_e1(-ikz) / (2.0 * PI)
}

/// Cell average of `g_k` over the square cell of side `h` centred at 0.
fn faddeev_g_cell(k: C64, h: f64) -> C64 {
    let a: f64 = 0.5 * h;
    let mean_log = 0.5 * ((2.0 * a * a).ln() - 3.0 + PI / 2.0);
    C64::new((-EULER_GAMMA - k.norm().ln() - mean_log) / (2.0 * PI), 0.0)
}

struct Scatterer {
    points: Vec<C64>,
    q: Vec<f64>,
    h: f64,
    n: usize,
}

fn scatterer(phantom: &Phantom, center: [f64; 2], half: f64, n: usize) -> Scatterer {
    let h = 2.0 * half / n as f64;
    let d = 1e-3;
    let root = |x: f64, y: f64| phantom.sigma_at([x, y]).sqrt();
    let mut points = Vec::with_capacity(n * n);
    let mut q = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let x = center[0] - half + (c as f64 + 0.5) * h;
            let y = center[1] - half + (r as f64 + 0.5) * h;
            let lap = (root(x + d, y) + root(x - d, y) + root(x, y + d) + root(x, y - d) - 4.0 * root(x, y)) / (d * d);
            points.push(C64::new(x, y));
            q.push(lap / root(x, y));
        }
    }
    Scatterer { points, q, h, n }
}

/// Solution of the discretised equation on the scatterer box: `μ` at the
/// cell centres.
fn solve_mu(s: &Scatterer, k: C64) -> Vec<C64> {
    let n = s.n;
    let p = 2 * n;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p * p);
    let inv = planner.plan_fft_inverse(p * p);
    let mut kernel = vec![C64::new(0.0, 0.0); p * p];
    for r in 0..p {
        let ay = if r < n { r as f64 } else { r as f64 - p as f64 };
        for c in 0..p {
            let ax = if c < n { c as f64 } else { c as f64 - p as f64 };
            if r == n || c == n {
                continue;
            }
            kernel[r * p + c] = if r == 0 && c == 0 {
                faddeev_g_cell(k, s.h) * s.h * s.h
            } else {
                faddeev_g(k, C64::new(ax, ay) * s.h) * s.h * s.h
            };
        }
    }
    fwd.process(&mut kernel);
    let cells = n * n;
    let mut buf = vec![C64::new(0.0, 0.0); p * p];
    let mut apply = |x: &[f64], y: &mut [f64]| {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                buf[r * p + c] = C64::new(x[i], x[cells + i]) * s.q[i];
            }
        }
        fwd.process(&mut buf);
        for (b, kk) in buf.iter_mut().zip(&kernel) {
            *b *= kk / (p * p) as f64;
        }
        inv.process(&mut buf);
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                y[i] = x[i] + buf[r * p + c].re;
                y[cells + i] = x[cells + i] + buf[r * p + c].im;
            }
        }
    };
    let mut b = vec![0.0; 2 * cells];
    b[..cells].iter_mut().for_each(|v| *v = 1.0);
    let mut x = b.clone();
    let cfg = GmresConfig {
        tolerance: 1e-10,
        restart: 60,
        max_iterations: 600,
    };
    let out = gmres(&mut apply, &b, &mut x, &cfg);
    assert!(out.converged, "{out:?}");
    (0..cells).map(|i| C64::new(x[i], x[cells + i])).collect()
}

/// `μ − 1` at points outside the scatterer box.
fn sinogram_column(s: &Scatterer, k: C64, mu: &[C64], zs: &[C64]) -> Vec<C64> {
    zs.iter()
        .map(|&z| {
            -(0..mu.len())
                .filter(|&i| s.q[i] != 0.0)
                .map(|i| faddeev_g(k, z - s.points[i]) * s.q[i] * mu[i])
                .sum::<C64>()
                * s.h
                * s.h
        })
        .collect()
}

/// `t(k) = ∫ e^{i k̄ z̄} q ψ`.
fn exact_scattering(s: &Scatterer, k: C64, mu: &[C64]) -> C64 {
    (0..mu.len())
        .map(|i| {
            let kz = k * s.points[i];
            (C64::i() * (kz + kz.conj())).exp() * s.q[i] * mu[i]
        })
        .sum::<C64>()
        * s.h
        * s.h
}

/// Born difference matrix and the Lippmann–Schwinger scatterer for a circle
/// inclusion of conductivity `value`.
fn setup(value: f64) -> (NDMatrix, Arc<BoundaryGrid>, Scatterer) {
    let spec = PhantomSpec::circle_with_value(value);
    let grid = BoundaryGrid::unit_disk(256).unwrap();
    let mesh = Arc::new(Mesh::for_grid(&grid, 0.02).unwrap());
    let idx = FourierIndexSet::new(16).unwrap();
    let field = build_phantom(&spec, mesh.clone(), DEFAULT_CLEARANCE).unwrap();
    let unit = build_phantom(&PhantomSpec::Unit, mesh, DEFAULT_CLEARANCE).unwrap();
    let diff = difference_matrix(&nd_matrix(&field, idx).unwrap(), &nd_matrix(&unit, idx).unwrap()).unwrap();
    let s = scatterer(&spec.phantom(), [-0.6, 0.0], 0.2, 192);
    (diff, grid, s)
}

fn sinogram_discrepancy(value: f64) -> f64 {
    let (diff, grid, s) = setup(value);
    let r = 2.0;
    let thetas: Vec<f64> = (0..32).map(|j| 2.0 * PI * j as f64 / 32.0).collect();
    let phis: Vec<f64> = (0..16).map(|j| 2.0 * PI * j as f64 / 16.0).collect();
    let born = cgo_sinogram(&diff, r, &thetas, &phis, &grid).unwrap();
    let zs: Vec<C64> = thetas.iter().map(|&t| C64::from_polar(1.0, t)).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for (j, &phi) in phis.iter().enumerate() {
        let k = C64::from_polar(r, phi);
        let reference = sinogram_column(&s, k, &solve_mu(&s, k), &zs);
        for (i, s_ref) in reference.iter().enumerate() {
            num += (born[i][j] - s_ref).norm_sqr();
            den += s_ref.norm_sqr();
        }
    }
    (num / den).sqrt()
}

#[test]
fn faddeev_green_function_solves_its_equation() {
    let k = C64::new(0.7, 1.3);
    let d = 1e-4;
    let g = |w: C64| faddeev_g(k, w);
    for z in [C64::new(0.3, 0.2), C64::new(-0.8, 0.5), C64::new(0.1, -1.4)] {
        let lap = (g(z + d) + g(z - d) + g(z + C64::i() * d) + g(z - C64::i() * d) - 4.0 * g(z)) / (d * d);
        let dbar = 0.5 * ((g(z + d) - g(z - d)) + C64::i() * (g(z + C64::i() * d) - g(z - C64::i() * d))) / (2.0 * d);
        assert!((lap + 4.0 * C64::i() * k * dbar).norm() < 1e-5);
    }
    // logarithmic singularity of the fundamental solution
    let (a, b) = (C64::new(1e-6, 0.0), C64::new(2e-6, 0.0));
    assert!(((g(a) - g(b)) - C64::new(2f64.ln() / (2.0 * PI), 0.0)).norm() < 1e-5);
}

#[test]
fn born_scattering_matches_the_exact_transform_at_low_contrast() {
    let (diff, _, s) = setup(1.05);
    for k in [C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(-1.5, 1.0)] {
        let exact = exact_scattering(&s, k, &solve_mu(&s, k));
        let born = born_scattering(&diff, k).unwrap();
        assert!(
            (born - exact).norm() < 0.02 * exact.norm(),
            "k = {k}: born {born}, exact {exact}"
        );
    }
}

#[test]
fn born_sinogram_tracks_the_lippmann_schwinger_reference() {
    let weak = sinogram_discrepancy(1.05);
    let circle = sinogram_discrepancy(2.0);
    println!("relative sinogram discrepancy: contrast 1.05 {weak:.4}, circle phantom {circle:.4}");
    assert!(weak < 0.02, "{weak}");
    assert!(circle <= 0.15, "{circle}");
}
