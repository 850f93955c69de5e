//! Born-approximated CGO solutions and scattering transforms computed from
//! difference ND matrices on the unit disk.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryGrid, BoundaryTrace};
use crate::error::{Error, Result};
use crate::forward::par_map;
use crate::ndmatrix::NDMatrix;

const DIAGONAL_EPS: f64 = 1e-13;

/// Relative size of the last retained expansion coefficient above which a
/// warning is logged.
pub const TAIL_WARNING: f64 = 1e-6;

fn check_k(k: C64) -> Result<()> {
    if k.norm() == 0.0 || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "spectral parameter must be finite and nonzero, got {k}"
        )));
    }
    Ok(())
}

fn check_disk(grid: &BoundaryGrid) -> Result<()> {
    if !grid.is_unit_disk() {
        return Err(Error::UnsupportedDomain(
            "CGO boundary values are implemented on the unit disk only".into(),
        ));
    }
    Ok(())
}

/// Normal derivative in `zeta` of Faddeev's Green's function `G_k(z - zeta)`
/// for boundary points of the unit circle.
pub fn faddeev_dlayer_kernel(k: C64, z: C64, zeta: C64) -> Result<f64> {
    check_k(k)?;
    Ok(kernel(k, z, zeta))
}

fn kernel(k: C64, z: C64, zeta: C64) -> f64 {
    let d = z - zeta;
    if d.norm() < DIAGONAL_EPS {
        return ((C64::i() * k * z).re - 0.5) / (2.0 * PI);
    }
    (zeta * (C64::i() * k * d).exp() / d).re / (2.0 * PI)
}

/// Coefficient of `φ_m`, `m ≥ 1`, in `∂_ν e^{ikz} = ikz e^{ikz}`.
fn normal_coefficient(k: C64, m: usize) -> C64 {
    let mut c = C64::new((2.0 * PI).sqrt(), 0.0);
    let ik = C64::i() * k;
    for j in 1..=m {
        c *= ik;
        if j > 1 {
            c /= (j - 1) as f64;
        }
    }
    c
}

/// Size of the last retained coefficient relative to the largest one.
pub fn tail_coefficient(k: C64, order: usize) -> f64 {
    let largest = (1..=order).map(|m| normal_coefficient(k, m).norm()).fold(0.0, f64::max);
    normal_coefficient(k, order).norm() / largest.max(f64::MIN_POSITIVE)
}

fn warn_tail(k: C64, order: usize) {
    let tail = tail_coefficient(k, order);
    if tail > TAIL_WARNING {
        log::warn!(
            "|k| = {:.3}: last expansion coefficient of order {order} is {tail:.2e} of the largest; the basis truncates ∂_ν e^{{ikz}}",
            k.norm()
        );
    }
}

/// Coefficients of `(R_1 - R_σ) ∂_ν e^{ikz}` in the matrix basis.
fn applied_difference(nd_diff: &NDMatrix, k: C64) -> Vec<C64> {
    let idx = nd_diff.index_set();
    let coeffs: Vec<C64> = idx
        .indices()
        .into_iter()
        .map(|n| {
            if n > 0 {
                normal_coefficient(k, n as usize)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    nd_diff.apply(&coeffs).into_iter().map(|v| -v).collect()
}

/// Born approximation `ψ(z, k) = e^{ikz} − (B_k + ½)(R_1 − R_σ) ∂_ν e^{ikz}`
/// on the grid nodes. The jump term is the limit of the double layer from
/// outside the disk.
pub fn born_cgo_boundary(nd_diff: &NDMatrix, k: C64, grid: &Arc<BoundaryGrid>) -> Result<BoundaryTrace> {
    let points: Vec<C64> = grid.angles().into_iter().map(|t| C64::from_polar(1.0, t)).collect();
    let values = born_cgo_at(nd_diff, k, grid, &points)?;
    BoundaryTrace::new(grid.clone(), values)
}

/// Born CGO values at arbitrary points `z` of the unit circle; the double
/// layer is integrated with the trapezoid rule on `grid`.
pub fn born_cgo_at(nd_diff: &NDMatrix, k: C64, grid: &Arc<BoundaryGrid>, points: &[C64]) -> Result<Vec<C64>> {
    check_k(k)?;
    check_disk(grid)?;
    let idx = nd_diff.index_set();
    if idx.order() > grid.max_order() {
        return Err(Error::InvalidArgument(format!(
            "matrix order {} exceeds the grid limit {}",
            idx.order(),
            grid.max_order()
        )));
    }
    warn_tail(k, idx.order());
    let v = applied_difference(nd_diff, k);
    let orders = idx.indices();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let density = |z: C64| -> C64 {
        let arg = z.arg();
        orders
            .iter()
            .zip(&v)
            .map(|(&n, &c)| c * C64::from_polar(norm, n as f64 * arg))
            .sum()
    };
    let nodes: Vec<C64> = grid.angles().into_iter().map(|t| C64::from_polar(1.0, t)).collect();
    let w_nodes: Vec<C64> = nodes.iter().map(|&z| density(z)).collect();
    let weight = grid.weight();
    Ok(points
        .iter()
        .map(|&z| {
            let layer: C64 = nodes
                .iter()
                .zip(&w_nodes)
                .map(|(&zeta, &w)| w * kernel(k, z, zeta))
                .sum::<C64>()
                * weight;
            (C64::i() * k * z).exp() - (layer + 0.5 * density(z))
        })
        .collect())
}

/// `S(θ, φ) = e^{−ikz} ψ(z, k) − 1` with `z = e^{iθ}`, `k = r e^{iφ}`;
/// rows follow `thetas`, columns follow `phis`.
pub fn cgo_sinogram(
    nd_diff: &NDMatrix,
    r: f64,
    thetas: &[f64],
    phis: &[f64],
    grid: &Arc<BoundaryGrid>,
) -> Result<Vec<Vec<C64>>> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sinogram radius must be positive, got {r}"
        )));
    }
    let points: Vec<C64> = thetas.iter().map(|&t| C64::from_polar(1.0, t)).collect();
    let columns = par_map(phis, |&phi| -> Result<Vec<C64>> {
        let k = C64::from_polar(r, phi);
        let psi = born_cgo_at(nd_diff, k, grid, &points)?;
        Ok(psi
            .into_iter()
            .zip(&points)
            .map(|(p, &z)| (-C64::i() * k * z).exp() * p - 1.0)
            .collect())
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..thetas.len())
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect())
}

/// Born scattering transform by basis expansion:
/// `t(k) = −Σ_{m ≥ 1} d_m (A c)_m` with `c_m = √(2π)(ik)^m/(m−1)!` and
/// `d_m = √(2π)(i k̄)^m/(m−1)!`.
pub fn born_scattering(nd_diff: &NDMatrix, k: C64) -> Result<C64> {
    check_k(k)?;
    Ok(scattering_value(nd_diff, k))
}

fn scattering_value(nd_diff: &NDMatrix, k: C64) -> C64 {
    let idx = nd_diff.index_set();
    let order = idx.order();
    let c: Vec<C64> = (1..=order).map(|m| normal_coefficient(k, m)).collect();
    let d: Vec<C64> = (1..=order).map(|m| normal_coefficient(k.conj(), m)).collect();
    let mut t = C64::new(0.0, 0.0);
    for m in 1..=order {
        let row = idx.position(m as i64).unwrap();
        let mut ac = C64::new(0.0, 0.0);
        for l in 1..=order {
            ac += nd_diff.at(row, idx.position(l as i64).unwrap()) * c[l - 1];
        }
        t -= d[m - 1] * ac;
    }
    t
}

/// The same bilinear form by boundary quadrature: project the sampled
/// `∂_ν e^{ikζ}` on the basis, apply the matrix, synthesise the voltage and
/// integrate it against the sampled `∂_ν e^{i k̄ ζ̄}`.
pub fn born_scattering_quadrature(nd_diff: &NDMatrix, k: C64, grid: &Arc<BoundaryGrid>) -> Result<C64> {
    check_k(k)?;
    check_disk(grid)?;
    let idx = nd_diff.index_set();
    let ik = C64::i() * k;
    let ikb = C64::i() * k.conj();
    let current = BoundaryTrace::from_fn(grid.clone(), |t| {
        let z = C64::from_polar(1.0, t);
        ik * z * (ik * z).exp()
    });
    let test = BoundaryTrace::from_fn(grid.clone(), |t| {
        let zb = C64::from_polar(1.0, -t);
        ikb * zb * (ikb * zb).exp()
    });
    let basis = crate::forward::basis_traces(grid, idx)?;
    let coeffs = basis
        .iter()
        .map(|phi| crate::boundary::inner_product(&current, phi))
        .collect::<Result<Vec<_>>>()?;
    let out = nd_diff.apply(&coeffs);
    let mut voltage = BoundaryTrace::zeros(grid.clone());
    for (phi, c) in basis.iter().zip(&out) {
        voltage = voltage.add(&phi.scaled(-c))?;
    }
    test.bilinear(&voltage)
}

/// Uniform cell-centred grid of `m × m` nodes over `[−L, L]²`; for odd `m`
/// the centre node is `k = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub half_width: f64,
    pub m: usize,
}

impl KGrid {
    pub fn new(half_width: f64, m: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "k-grid needs a positive half width and node count, got L = {half_width}, m = {m}"
            )));
        }
        Ok(Self { half_width, m })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.m as f64
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.spacing()
    }

    /// Node `(row, col)`: the row indexes the imaginary part, the column the
    /// real part.
    pub fn node(&self, row: usize, col: usize) -> C64 {
        C64::new(self.coordinate(col), self.coordinate(row))
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// All nodes in row-major order.
    pub fn nodes(&self) -> Vec<C64> {
        (0..self.m)
            .flat_map(|r| (0..self.m).map(move |c| (r, c)))
            .map(|(r, c)| self.node(r, c))
            .collect()
    }

    fn is_origin(&self, k: C64) -> bool {
        k.norm() < 1e-12 * self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connective {
    /// Keep a value when either part is below the threshold.
    #[default]
    Or,
    /// Keep a value only when both parts are below the threshold.
    And,
}

impl std::str::FromStr for Connective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "or" => Ok(Connective::Or),
            "and" => Ok(Connective::And),
            _ => Err(Error::Parse(format!(
                "unknown connective {s:?}, expected \"or\" or \"and\""
            ))),
        }
    }
}

/// Truncation and threshold applied to a scattering transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub radius: f64,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub connective: Connective,
}

impl Truncation {
    pub fn new(radius: f64, threshold: Option<f64>, connective: Connective) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation radius must be positive, got {radius}"
            )));
        }
        if let Some(c) = threshold {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("threshold must be positive, got {c}")));
            }
        }
        Ok(Self {
            radius,
            threshold,
            connective,
        })
    }

    pub fn radial(radius: f64) -> Self {
        Self {
            radius,
            threshold: None,
            connective: Connective::Or,
        }
    }

    /// Whether the value `t` at `k` is retained.
    pub fn keeps(&self, k: C64, t: C64) -> bool {
        if k.norm() >= self.radius {
            return false;
        }
        match self.threshold {
            None => true,
            Some(c) => {
                let (re, im) = (t.re.abs() < c, t.im.abs() < c);
                match self.connective {
                    Connective::Or => re || im,
                    Connective::And => re && im,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringGrid {
    pub kgrid: KGrid,
    pub truncation: Truncation,
    /// Row-major values, zero wherever `mask` is false.
    pub values: Vec<C64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScatteringFile {
    #[serde(rename = "R")]
    radius: f64,
    c: Option<f64>,
    connective: Connective,
    m: usize,
    half_width: f64,
    values: Vec<[f64; 2]>,
    mask: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

impl ScatteringGrid {
    /// Evaluates and truncates `t` on every node of `kgrid`.
    pub fn evaluate(kgrid: KGrid, truncation: Truncation, t: impl Fn(C64) -> C64 + Sync) -> Self {
        let nodes = kgrid.nodes();
        let raw = par_map(&nodes, |&k| {
            if kgrid.is_origin(k) || k.norm() >= truncation.radius {
                C64::new(0.0, 0.0)
            } else {
                t(k)
            }
        });
        let mask: Vec<bool> = nodes
            .iter()
            .zip(&raw)
            .map(|(&k, &v)| !kgrid.is_origin(k) && truncation.keeps(k, v))
            .collect();
        let values = raw
            .into_iter()
            .zip(&mask)
            .map(|(v, &keep)| if keep { v } else { C64::new(0.0, 0.0) })
            .collect();
        Self {
            kgrid,
            truncation,
            values,
            mask,
        }
    }

    pub fn at(&self, row: usize, col: usize) -> C64 {
        self.values[row * self.kgrid.m + col]
    }

    pub fn retained(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.kgrid.m + col]
    }

    /// Bilinear interpolation of the stored values; zero outside the grid.
    pub fn interpolate(&self, k: C64) -> C64 {
        let g = &self.kgrid;
        let s = g.spacing();
        let x = (k.re + g.half_width) / s - 0.5;
        let y = (k.im + g.half_width) / s - 0.5;
        let max = (g.m - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max && y <= max) {
            return C64::new(0.0, 0.0);
        }
        let (c0, r0) = (x.floor().min(max - 1.0).max(0.0), y.floor().min(max - 1.0).max(0.0));
        let (fx, fy) = (x - c0, y - r0);
        let (c0, r0) = (c0 as usize, r0 as usize);
        if g.m == 1 {
            return self.at(0, 0);
        }
        self.at(r0, c0) * (1.0 - fx) * (1.0 - fy)
            + self.at(r0, c0 + 1) * fx * (1.0 - fy)
            + self.at(r0 + 1, c0) * (1.0 - fx) * fy
            + self.at(r0 + 1, c0 + 1) * fx * fy
    }

    pub fn write_json<W: Write>(&self, out: W, provenance: Option<serde_json::Value>) -> Result<()> {
        let file = ScatteringFile {
            radius: self.truncation.radius,
            c: self.truncation.threshold,
            connective: self.truncation.connective,
            m: self.kgrid.m,
            half_width: self.kgrid.half_width,
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
            mask: self.mask.clone(),
            provenance,
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: ScatteringFile = serde_json::from_reader(input)?;
        let kgrid = KGrid::new(file.half_width, file.m)?;
        let truncation = Truncation::new(file.radius, file.c, file.connective)?;
        if file.values.len() != kgrid.len() || file.mask.len() != kgrid.len() {
            return Err(Error::Parse(format!(
                "scattering grid with m = {} needs {} values and mask entries",
                file.m,
                kgrid.len()
            )));
        }
        Ok(Self {
            kgrid,
            truncation,
            values: file.values.iter().map(|p| C64::new(p[0], p[1])).collect(),
            mask: file.mask,
        })
    }
}

/// Truncated, thresholded Born scattering transform on an `m × m` grid over
/// `[−R, R]²`.
pub fn scattering_grid(nd_diff: &NDMatrix, truncation: Truncation, m: usize) -> Result<ScatteringGrid> {
    let kgrid = KGrid::new(truncation.radius, m)?;
    warn_tail(C64::new(truncation.radius, 0.0), nd_diff.index_set().order());
    Ok(ScatteringGrid::evaluate(kgrid, truncation, |k| {
        scattering_value(nd_diff, k)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::FourierIndexSet;
    use crate::forward::nd_matrix;
    use crate::mesh::Mesh;
    use crate::ndmatrix::{difference_matrix, MatrixKind};
    use crate::phantom::{build_phantom, ConductivityField, PhantomSpec, DEFAULT_CLEARANCE};
    use approx::assert_abs_diff_eq;

    fn circle_difference(order: usize) -> NDMatrix {
        let grid = BoundaryGrid::unit_disk(128).unwrap();
        let mesh = Arc::new(Mesh::for_grid(&grid, 0.04).unwrap());
        let idx = FourierIndexSet::new(order).unwrap();
        let sigma = build_phantom(&PhantomSpec::circle(), mesh.clone(), DEFAULT_CLEARANCE).unwrap();
        let unit = ConductivityField::uniform(mesh, 1.0).unwrap();
        difference_matrix(&nd_matrix(&sigma, idx).unwrap(), &nd_matrix(&unit, idx).unwrap()).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let one = C64::new(1.0, 0.0);
        let diag = faddeev_dlayer_kernel(C64::i(), one, one).unwrap();
        assert_abs_diff_eq!(diag, -1.5 / (2.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(diag, -0.238732, epsilon = 1e-6);
        let v = faddeev_dlayer_kernel(one, one, -one).unwrap();
        assert_abs_diff_eq!(v, -(2.0f64).cos() / 2.0 / (2.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.033116, epsilon = 1e-6);
        assert!(faddeev_dlayer_kernel(C64::new(0.0, 0.0), one, one).is_err());
    }

    #[test]
    fn kernel_approaches_diagonal_linearly() {
        let k = C64::new(1.3, -0.7);
        let z = C64::from_polar(1.0, 0.4);
        let limit = kernel(k, z, z);
        let gap = |eps: f64| (kernel(k, z, C64::from_polar(1.0, 0.4 + eps)) - limit).abs();
        let ratio = gap(1e-3) / gap(1e-4);
        assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn zero_difference_gives_plane_wave_and_zero_transform() {
        let grid = BoundaryGrid::unit_disk(64).unwrap();
        let zero = NDMatrix::zeros(FourierIndexSet::new(8).unwrap(), MatrixKind::Difference);
        let k = C64::new(1.5, -2.0);
        let psi = born_cgo_boundary(&zero, k, &grid).unwrap();
        for (j, v) in psi.values().iter().enumerate() {
            let z = C64::from_polar(1.0, grid.angle(j));
            assert_eq!(*v, (C64::i() * k * z).exp());
        }
        assert_eq!(born_scattering(&zero, k).unwrap(), C64::new(0.0, 0.0));
        let s = cgo_sinogram(&zero, 2.0, &[0.0, 1.0, 2.0], &[0.5, 1.5], &grid).unwrap();
        assert_eq!((s.len(), s[0].len()), (3, 2));
        assert!(s.iter().flatten().all(|v| v.norm() < 1e-14));
        let g = scattering_grid(&zero, Truncation::radial(4.0), 9).unwrap();
        assert!(g.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn born_cgo_is_affine_in_the_matrix() {
        let grid = BoundaryGrid::unit_disk(64).unwrap();
        let a = circle_difference(6);
        let doubled = crate::ndmatrix::add_matrices(&a, &a).unwrap();
        let k = C64::new(0.5, 1.0);
        let one = born_cgo_boundary(&a, k, &grid).unwrap();
        let two = born_cgo_boundary(&doubled, k, &grid).unwrap();
        for (j, (p, q)) in one.values().iter().zip(two.values()).enumerate() {
            let e = (C64::i() * k * C64::from_polar(1.0, grid.angle(j))).exp();
            assert!(((q - e) - 2.0 * (p - e)).norm() < 1e-12);
        }
    }

    #[test]
    fn full_data_transform_is_conjugate_symmetric_and_matches_quadrature() {
        let a = circle_difference(16);
        let grid = BoundaryGrid::unit_disk(128).unwrap();
        for k in [
            C64::new(1.0, 0.0),
            C64::new(-2.0, 3.0),
            C64::new(0.0, 6.0),
            C64::new(4.2, -4.2),
        ] {
            let t = born_scattering(&a, k).unwrap();
            let tm = born_scattering(&a, -k).unwrap();
            assert!((tm - t.conj()).norm() <= 1e-10 * t.norm().max(1.0), "k = {k}");
            if k.norm() <= 6.0 {
                let q = born_scattering_quadrature(&a, k, &grid).unwrap();
                assert!((q - t).norm() <= 1e-8 * t.norm().max(1.0), "k = {k}: {q} vs {t}");
            }
        }
    }

    #[test]
    fn truncation_and_threshold_rules() {
        let k = C64::new(1.0, 0.0);
        let radial = Truncation::radial(2.0);
        assert!(radial.keeps(k, C64::new(100.0, 100.0)));
        assert!(!radial.keeps(C64::new(2.0, 0.0), C64::new(0.0, 0.0)));
        let or = Truncation::new(2.0, Some(1.0), Connective::Or).unwrap();
        let and = Truncation::new(2.0, Some(1.0), Connective::And).unwrap();
        assert!(or.keeps(k, C64::new(0.5, 5.0)) && !and.keeps(k, C64::new(0.5, 5.0)));
        assert!(!or.keeps(k, C64::new(5.0, 5.0)));
        assert!(and.keeps(k, C64::new(0.5, 0.5)));
        assert!(Truncation::new(0.0, None, Connective::Or).is_err());
        assert_eq!("and".parse::<Connective>().unwrap(), Connective::And);
    }

    #[test]
    fn grid_mask_is_symmetric_and_centre_is_masked() {
        let a = circle_difference(8);
        let g = scattering_grid(&a, Truncation::radial(5.0), 33).unwrap();
        let m = 33;
        assert!(!g.retained(16, 16));
        for r in 0..m {
            for c in 0..m {
                let k = g.kgrid.node(r, c);
                assert_eq!(g.retained(r, c), g.retained(m - 1 - r, m - 1 - c));
                if k.norm() >= 5.0 {
                    assert!(!g.retained(r, c) && g.at(r, c).norm() == 0.0);
                }
            }
        }
        // no threshold: every node strictly inside the disk is kept
        let kept = g.mask.iter().filter(|&&b| b).count();
        let inside = g
            .kgrid
            .nodes()
            .iter()
            .filter(|k| k.norm() < 5.0 && k.norm() > 1e-9)
            .count();
        assert_eq!(kept, inside);
    }

    #[test]
    fn grid_json_round_trip_and_interpolation() {
        let a = circle_difference(4);
        let g = scattering_grid(&a, Truncation::new(3.0, Some(0.5), Connective::And).unwrap(), 7).unwrap();
        let mut buf = Vec::new();
        g.write_json(&mut buf, None).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"R\"") && text.contains("\"connective\": \"and\""));
        let back = ScatteringGrid::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        let node = g.kgrid.node(2, 3);
        assert!((g.interpolate(node) - g.at(2, 3)).norm() < 1e-14);
        assert_eq!(g.interpolate(C64::new(10.0, 0.0)), C64::new(0.0, 0.0));
    }
}
