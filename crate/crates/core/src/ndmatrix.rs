//! Matrix approximations of Neumann-to-Dirichlet operators in the
//! trigonometric basis.
//!
//! Entry `(row n, col ℓ)` is `⟨R φ_ℓ, φ_n⟩`, so applying the matrix to the
//! coefficient vector of a current gives the coefficients of the voltage.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryGrid, FourierIndexSet};
use crate::error::{Error, Result};
use crate::partial::GammaArc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    Full,
    PartialCutoff,
    PartialScaling,
    Difference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NDMatrix {
    index_set: FourierIndexSet,
    entries: Vec<C64>,
    kind: MatrixKind,
    gamma: Option<GammaArc>,
}

/// On-disk layout of an [`NDMatrix`].
#[derive(Debug, Serialize, Deserialize)]
struct NDMatrixFile {
    index_set: Vec<i64>,
    kind: MatrixKind,
    gamma: Option<GammaArc>,
    entries: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

impl NDMatrix {
    pub fn new(
        index_set: FourierIndexSet,
        entries: Vec<C64>,
        kind: MatrixKind,
        gamma: Option<GammaArc>,
    ) -> Result<Self> {
        let n = index_set.len();
        if entries.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {n}x{n} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            index_set,
            entries,
            kind,
            gamma,
        })
    }

    pub fn zeros(index_set: FourierIndexSet, kind: MatrixKind) -> Self {
        let n = index_set.len();
        Self {
            index_set,
            entries: vec![C64::new(0.0, 0.0); n * n],
            kind,
            gamma: None,
        }
    }

    pub fn index_set(&self) -> FourierIndexSet {
        self.index_set
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn gamma(&self) -> Option<GammaArc> {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// Entry at matrix position `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim() + col]
    }

    /// Entry `⟨R φ_l, φ_n⟩` addressed by basis orders.
    pub fn get(&self, n: i64, l: i64) -> Option<C64> {
        let r = self.index_set.position(n)?;
        let c = self.index_set.position(l)?;
        Some(self.at(r, c))
    }

    /// Matrix-vector product on basis coefficients.
    pub fn apply(&self, coeffs: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(coeffs.len(), n, "coefficient vector has the wrong length");
        self.entries
            .chunks_exact(n)
            .map(|row| row.iter().zip(coeffs).map(|(a, c)| a * c).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A_{nl} - conj(A_{ln})|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                worst = worst.max((self.at(r, c) - self.at(c, r).conj()).norm());
            }
        }
        worst
    }

    /// `max |A_{-n,-l} - conj(A_{nl})|`; zero when the operator maps real
    /// functions to real functions.
    pub fn reality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                worst = worst.max((self.at(n - 1 - r, n - 1 - c) - self.at(r, c).conj()).norm());
            }
        }
        worst
    }

    pub fn with_kind(mut self, kind: MatrixKind, gamma: Option<GammaArc>) -> Self {
        self.kind = kind;
        self.gamma = gamma;
        self
    }

    fn check_same_set(&self, other: &Self) -> Result<()> {
        if self.index_set != other.index_set {
            return Err(Error::IndexSetMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W, provenance: Option<serde_json::Value>) -> Result<()> {
        let file = NDMatrixFile {
            index_set: self.index_set.indices(),
            kind: self.kind,
            gamma: self.gamma,
            entries: self.entries.iter().map(|e| [e.re, e.im]).collect(),
            provenance,
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: NDMatrixFile = serde_json::from_reader(input)?;
        let index_set = FourierIndexSet::from_indices(&file.index_set)?;
        let entries = file.entries.iter().map(|p| C64::new(p[0], p[1])).collect();
        Self::new(index_set, entries, file.kind, file.gamma)
    }
}

/// Entrywise `a - b`, tagged as difference data.
pub fn difference_matrix(a: &NDMatrix, b: &NDMatrix) -> Result<NDMatrix> {
    a.check_same_set(b)?;
    let entries = a.entries.iter().zip(&b.entries).map(|(x, y)| x - y).collect();
    NDMatrix::new(a.index_set, entries, MatrixKind::Difference, a.gamma.or(b.gamma))
}

/// Entrywise `a + b`. Adding difference data to a plain matrix yields the
/// plain kind.
pub fn add_matrices(a: &NDMatrix, b: &NDMatrix) -> Result<NDMatrix> {
    a.check_same_set(b)?;
    let kind = if a.kind == MatrixKind::Difference {
        b.kind
    } else {
        a.kind
    };
    let entries = a.entries.iter().zip(&b.entries).map(|(x, y)| x + y).collect();
    NDMatrix::new(a.index_set, entries, kind, a.gamma.or(b.gamma))
}

/// Entrywise average of two difference matrices.
pub fn combine_matrices(a: &NDMatrix, b: &NDMatrix) -> Result<NDMatrix> {
    a.check_same_set(b)?;
    if a.kind != MatrixKind::Difference || b.kind != MatrixKind::Difference {
        return Err(Error::InvalidArgument(
            "only difference matrices can be combined".into(),
        ));
    }
    let entries = a.entries.iter().zip(&b.entries).map(|(x, y)| 0.5 * (x + y)).collect();
    NDMatrix::new(a.index_set, entries, MatrixKind::Difference, a.gamma.or(b.gamma))
}

/// Adds complex Gaussian noise whose expected Frobenius norm is
/// `level * ‖a‖_F`: every entry gets standard deviation `level ‖a‖_F / (2N)`,
/// split evenly between real and imaginary parts.
pub fn add_noise(a: &NDMatrix, level: f64, seed: u64) -> Result<NDMatrix> {
    if !(level >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be non-negative, got {level}"
        )));
    }
    if level == 0.0 {
        return Ok(a.clone());
    }
    let std = level * a.frobenius_norm() / a.dim() as f64 / std::f64::consts::SQRT_2;
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = a
        .entries
        .iter()
        .map(|e| e + C64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    NDMatrix::new(a.index_set, entries, a.kind, a.gamma)
}

/// ND matrix of σ ≡ 1 on the unit disk: `diag(1/|n|)`.
pub fn analytic_nd_laplace(index_set: FourierIndexSet, grid: &BoundaryGrid) -> Result<NDMatrix> {
    if !grid.is_unit_disk() {
        return Err(Error::UnsupportedDomain(
            "the analytic ND map is only known on the unit disk".into(),
        ));
    }
    let mut m = NDMatrix::zeros(index_set, MatrixKind::Full);
    let dim = m.dim();
    for (p, n) in index_set.indices().into_iter().enumerate() {
        m.entries[p * dim + p] = C64::new(1.0 / n.unsigned_abs() as f64, 0.0);
    }
    Ok(m)
}
