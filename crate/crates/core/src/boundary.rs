//! Boundary geometry, the trigonometric basis and quadrature on the boundary.
//!
//! Every boundary quantity lives on a [`BoundaryGrid`]: `M` samples at uniform
//! (normalised) arclength `s_j = 2πj/M`. On the unit disk `s` is the polar
//! angle; on a parametrised domain it is the cumulative chord length rescaled
//! to total `2π`, so the same trapezoidal weights `2π/M` apply on both.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Default number of boundary samples on the unit disk.
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 256;

/// Relative tolerance of the zero-mean invariant.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    UnitDisk,
    /// Boundary samples of a closed polygon, placed at uniform arclength and
    /// ordered counter-clockwise. `length` is the physical perimeter.
    Parametrized {
        points: Vec<[f64; 2]>,
        length: f64,
    },
}

/// Uniform sampling of the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    samples: usize,
    kind: DomainKind,
}

impl BoundaryGrid {
    pub fn unit_disk(samples: usize) -> Result<Arc<Self>> {
        if samples < 4 {
            return Err(Error::InvalidArgument(format!(
                "boundary grid needs at least 4 samples, got {samples}"
            )));
        }
        Ok(Arc::new(Self {
            samples,
            kind: DomainKind::UnitDisk,
        }))
    }

    /// Samples a closed polygon at uniform arclength.
    ///
    /// The first sample sits on `vertices[0]`. Clockwise input is reversed so
    /// that the boundary is always traversed counter-clockwise.
    pub fn from_polygon(vertices: &[[f64; 2]], samples: usize) -> Result<Arc<Self>> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("polygon needs at least three vertices".into()));
        }
        if samples < 4 {
            return Err(Error::InvalidArgument(format!(
                "boundary grid needs at least 4 samples, got {samples}"
            )));
        }
        let mut verts = vertices.to_vec();
        if signed_area(&verts) < 0.0 {
            verts[1..].reverse();
        }
        let n = verts.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if len == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "polygon has a repeated vertex at index {i}"
                )));
            }
            cumulative.push(cumulative[i] + len);
        }
        let length = cumulative[n];
        let mut points = Vec::with_capacity(samples);
        let mut seg = 0;
        for j in 0..samples {
            let target = length * j as f64 / samples as f64;
            while cumulative[seg + 1] < target {
                seg += 1;
            }
            let t = (target - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
            let a = verts[seg];
            let b = verts[(seg + 1) % n];
            points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
        Ok(Arc::new(Self {
            samples,
            kind: DomainKind::Parametrized { points, length },
        }))
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn is_unit_disk(&self) -> bool {
        matches!(self.kind, DomainKind::UnitDisk)
    }

    /// Arclength angle of sample `j` (the polar angle on the disk).
    pub fn angle(&self, j: usize) -> f64 {
        TAU * j as f64 / self.samples as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.samples).map(|j| self.angle(j)).collect()
    }

    /// Trapezoidal weight of every node.
    pub fn weight(&self) -> f64 {
        TAU / self.samples as f64
    }

    /// Largest basis order supported with the 4x Nyquist margin.
    pub fn max_order(&self) -> usize {
        self.samples / 4
    }

    pub fn point(&self, j: usize) -> [f64; 2] {
        match &self.kind {
            DomainKind::UnitDisk => {
                let t = self.angle(j);
                [t.cos(), t.sin()]
            }
            DomainKind::Parametrized { points, .. } => points[j],
        }
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.samples).map(|j| self.point(j)).collect()
    }

    /// Physical perimeter.
    pub fn perimeter(&self) -> f64 {
        match &self.kind {
            DomainKind::UnitDisk => TAU,
            DomainKind::Parametrized { length, .. } => *length,
        }
    }

    /// Point-in-polygon test against the boundary polyline; points within
    /// `tol` of the polyline count as inside.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let n = self.samples;
        let mut inside = false;
        let mut min_dist = f64::INFINITY;
        for i in 0..n {
            let a = self.point(i);
            let b = self.point((i + 1) % n);
            min_dist = min_dist.min(segment_distance(p, a, b));
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside || min_dist <= tol
    }

    /// Distance from `p` to the boundary polyline.
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let n = self.samples;
        (0..n)
            .map(|i| segment_distance(p, self.point(i), self.point((i + 1) % n)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Axis-aligned bounding box `[xmin, xmax, ymin, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        match &self.kind {
            DomainKind::UnitDisk => [-1.0, 1.0, -1.0, 1.0],
            DomainKind::Parametrized { points, .. } => {
                let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                for p in points {
                    bb[0] = bb[0].min(p[0]);
                    bb[1] = bb[1].max(p[0]);
                    bb[2] = bb[2].min(p[1]);
                    bb[3] = bb[3].max(p[1]);
                }
                bb
            }
        }
    }
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

pub(crate) fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// The basis orders `-N..=-1, 1..=N`; the constant mode is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierIndexSet {
    order: usize,
}

impl FourierIndexSet {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("index set order must be positive".into()));
        }
        Ok(Self { order })
    }

    /// Rebuilds an index set from its serialized order list.
    pub fn from_indices(indices: &[i64]) -> Result<Self> {
        let order = indices.len() / 2;
        let set = Self::new(order)?;
        if set.indices() != indices {
            return Err(Error::Parse(format!(
                "index list is not of the form -N..-1,1..N: {indices:?}"
            )));
        }
        Ok(set)
    }

    /// The order `N`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions, `2N`.
    pub fn len(&self) -> usize {
        2 * self.order
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> Vec<i64> {
        let n = self.order as i64;
        (-n..=-1).chain(1..=n).collect()
    }

    /// Position of order `n` in [`indices`](Self::indices).
    pub fn position(&self, n: i64) -> Option<usize> {
        let order = self.order as i64;
        match n {
            0 => None,
            n if n < -order || n > order => None,
            n if n < 0 => Some((n + order) as usize),
            n => Some((n + order - 1) as usize),
        }
    }
}

/// Complex samples on a boundary grid. NaN marks a missing sample.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    grid: Arc<BoundaryGrid>,
    values: Vec<C64>,
}

impl BoundaryTrace {
    pub fn new(grid: Arc<BoundaryGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "trace has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<BoundaryGrid>) -> Self {
        let values = vec![C64::new(0.0, 0.0); grid.len()];
        Self { grid, values }
    }

    /// Builds a trace from a function of the arclength angle.
    pub fn from_fn(grid: Arc<BoundaryGrid>, f: impl Fn(f64) -> C64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.angle(j))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<BoundaryGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.values[j].re.is_nan() || self.values[j].im.is_nan()
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&j| self.is_missing(j)).count()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("traces live on different boundary grids".into()))
        }
    }

    /// Quadrature of the samples, `Σ v_j w_j`.
    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.grid.weight()
    }

    /// Mean value with respect to the normalised arclength measure.
    pub fn mean(&self) -> C64 {
        self.integral() / TAU
    }

    pub fn is_zero_mean(&self) -> bool {
        let scale: f64 = self.values.iter().map(|v| v.norm()).sum::<f64>() * self.grid.weight();
        self.integral().norm() <= ZERO_MEAN_TOL * scale
    }

    /// Discrete L² norm.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.weight()).sqrt()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    /// Non-conjugating pairing `∫ f g ds`.
    pub fn bilinear(&self, other: &Self) -> Result<C64> {
        self.check_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<C64>() * self.grid.weight())
    }

    /// Writes `theta,re,im` rows; missing samples are written as `nan`.
    pub fn write_csv<W: Write>(&self, mut out: W, header: Option<&str>) -> Result<()> {
        if let Some(h) = header {
            writeln!(out, "# {h}")?;
        }
        writeln!(out, "theta,re,im")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(
                out,
                "{:.14e},{},{}",
                self.grid.angle(j),
                fmt_float(v.re),
                fmt_float(v.im)
            )?;
        }
        Ok(())
    }

    /// Reads the CSV produced by [`write_csv`](Self::write_csv). Without an
    /// explicit grid the trace is placed on the unit disk.
    pub fn read_csv<R: BufRead>(input: R, grid: Option<Arc<BoundaryGrid>>) -> Result<Self> {
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "theta,re,im" {
                    return Err(Error::Parse(format!(
                        "line {}: expected header `theta,re,im`, found `{line}`",
                        lineno + 1
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut nums = [0.0; 3];
            for (k, f) in fields.iter().enumerate() {
                nums[k] =
                    parse_float(f).ok_or_else(|| Error::Parse(format!("line {}: bad number `{f}`", lineno + 1)))?;
            }
            rows.push(nums);
        }
        let grid = match grid {
            Some(g) => g,
            None => BoundaryGrid::unit_disk(rows.len())?,
        };
        if rows.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "trace file has {} rows, grid has {} nodes",
                rows.len(),
                grid.len()
            )));
        }
        for (j, r) in rows.iter().enumerate() {
            if (r[0] - grid.angle(j)).abs() > 1e-12 * (1.0 + grid.angle(j)) {
                return Err(Error::Parse(format!(
                    "row {j}: theta {} does not match grid node {}",
                    r[0],
                    grid.angle(j)
                )));
            }
        }
        let values = rows.iter().map(|r| C64::new(r[1], r[2])).collect();
        Self::new(grid, values)
    }
}

/// Shortest round-trip float formatting used by all CSV writers.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:e}")
    }
}

pub(crate) fn parse_float(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

/// Samples of `φ_n = e^{inθ}/√(2π)` on the grid (θ is the arclength angle).
pub fn fourier_basis(n: i64, grid: &Arc<BoundaryGrid>) -> Result<BoundaryTrace> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "the basis excludes the constant order n = 0".into(),
        ));
    }
    if 4 * n.unsigned_abs() as usize > grid.len() {
        return Err(Error::InvalidArgument(format!(
            "order {n} violates the Nyquist margin of a {}-sample grid",
            grid.len()
        )));
    }
    let scale = 1.0 / (2.0 * PI).sqrt();
    Ok(BoundaryTrace::from_fn(grid.clone(), |t| {
        C64::from_polar(scale, n as f64 * t)
    }))
}

/// `⟨f, g⟩ = ∫ f ḡ ds` by the trapezoidal rule.
pub fn inner_product(f: &BoundaryTrace, g: &BoundaryTrace) -> Result<C64> {
    f.check_grid(g)?;
    Ok(f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum::<C64>() * f.grid.weight())
}

/// Removes the quadrature mean.
pub fn zero_mean_project(f: &BoundaryTrace) -> BoundaryTrace {
    let mean = f.values.iter().sum::<C64>() / f.len() as f64;
    BoundaryTrace {
        grid: f.grid.clone(),
        values: f.values.iter().map(|v| v - mean).collect(),
    }
}
