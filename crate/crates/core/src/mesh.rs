//! Triangulations of the domain.
//!
//! Meshes are built from concentric rings scaled by the radial boundary
//! function, so any domain that is star-shaped about the origin is supported.
//! The outermost ring is exactly the boundary grid, which ties FEM boundary
//! nodes one-to-one to trace samples.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::boundary::{BoundaryGrid, DomainKind};
use crate::error::{Error, Result};

/// Default target edge length of interior elements.
pub const DEFAULT_EDGE_LENGTH: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Mesh {
    grid: Arc<BoundaryGrid>,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Vertex index of boundary grid node `j`.
    boundary: Vec<usize>,
}

impl Mesh {
    /// Ring mesh whose boundary vertices are the nodes of `grid`.
    pub fn for_grid(grid: &Arc<BoundaryGrid>, target_edge: f64) -> Result<Self> {
        if !(target_edge > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "target edge length must be positive, got {target_edge}"
            )));
        }
        let boundary_pts = grid.points();
        let radial = RadialBoundary::new(grid)?;
        let rmax = boundary_pts.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        let rings = ((rmax / target_edge).round() as usize).max(2);

        let mut vertices = vec![[0.0, 0.0]];
        let mut triangles = Vec::new();
        let mut previous: Vec<(usize, f64)> = vec![(0, 0.0)];
        for ring in 1..rings {
            let frac = ring as f64 / rings as f64;
            let count = ((frac * grid.perimeter() / target_edge).round() as usize).max(6);
            let stagger = if ring % 2 == 0 { 0.5 } else { 0.0 };
            let mut current = Vec::with_capacity(count);
            for k in 0..count {
                let alpha = TAU * (k as f64 + stagger) / count as f64;
                let r = frac * radial.radius(alpha);
                current.push((vertices.len(), alpha));
                vertices.push([r * alpha.cos(), r * alpha.sin()]);
            }
            if ring == 1 {
                fan(0, &current, &mut triangles);
            } else {
                stitch(&previous, &current, &mut triangles);
            }
            previous = current;
        }
        let start = vertices.len();
        let mut outer = Vec::with_capacity(grid.len());
        for (j, p) in boundary_pts.iter().enumerate() {
            outer.push((start + j, p[1].atan2(p[0]).rem_euclid(TAU)));
            vertices.push(*p);
        }
        stitch(&previous, &outer, &mut triangles);
        let boundary = (start..start + grid.len()).collect();

        for t in triangles.iter_mut() {
            if signed_area(&vertices, t) < 0.0 {
                t.swap(1, 2);
            }
        }
        let mesh = Self {
            grid: grid.clone(),
            vertices,
            triangles,
            boundary,
        };
        mesh.check()?;
        Ok(mesh)
    }

    fn check(&self) -> Result<()> {
        for (i, t) in self.triangles.iter().enumerate() {
            if signed_area(&self.vertices, t) <= 0.0 {
                return Err(Error::UnsupportedDomain(format!(
                    "degenerate triangle {i}; the domain may not be star-shaped about the origin"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<BoundaryGrid> {
        &self.grid
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| signed_area(&self.vertices, t)).sum()
    }

    /// Lumped boundary weights, half the length of the two adjacent boundary edges.
    pub fn boundary_weights(&self) -> Vec<f64> {
        let n = self.boundary.len();
        let len = |a: usize, b: usize| {
            let p = self.vertices[self.boundary[a]];
            let q = self.vertices[self.boundary[b]];
            (q[0] - p[0]).hypot(q[1] - p[1])
        };
        (0..n)
            .map(|j| 0.5 * (len((j + n - 1) % n, j) + len(j, (j + 1) % n)))
            .collect()
    }

    /// Flags vertices that share a triangle with a boundary vertex.
    pub fn boundary_adjacent(&self) -> Vec<bool> {
        let mut on_boundary = vec![false; self.vertices.len()];
        for &b in &self.boundary {
            on_boundary[b] = true;
        }
        let mut adjacent = on_boundary.clone();
        for t in &self.triangles {
            if t.iter().any(|&v| on_boundary[v]) {
                for &v in t {
                    adjacent[v] = true;
                }
            }
        }
        adjacent
    }

    /// Plain-text mesh file:
    ///
    /// ```text
    /// # partial-eit mesh v1
    /// vertices <count>
    /// <x> <y>            (one line per vertex)
    /// triangles <count>
    /// <a> <b> <c>        (zero-based, counter-clockwise)
    /// boundary <count>
    /// <vertex index>     (one line per boundary grid node, in grid order)
    /// ```
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# partial-eit mesh v1")?;
        writeln!(out, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(out, "{:e} {:e}", v[0], v[1])?;
        }
        writeln!(out, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(out, "boundary {}", self.boundary.len())?;
        for b in &self.boundary {
            writeln!(out, "{b}")?;
        }
        Ok(())
    }

    /// Reads a mesh file. The boundary vertices must coincide with the
    /// nodes of `grid`.
    pub fn read<R: BufRead>(input: R, grid: &Arc<BoundaryGrid>) -> Result<Self> {
        let mut lines = Vec::new();
        for line in input.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                lines.push(t.to_string());
            }
        }
        let mut cursor = lines.iter();
        let mut section = |name: &str, width: usize| -> Result<Vec<Vec<f64>>> {
            let head = cursor
                .next()
                .ok_or_else(|| Error::Parse(format!("missing `{name}` section")))?;
            let mut parts = head.split_whitespace();
            if parts.next() != Some(name) {
                return Err(Error::Parse(format!("expected `{name}`, found `{head}`")));
            }
            let count: usize = parts
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad count in `{head}`")))?;
            let mut rows = Vec::with_capacity(count);
            for _ in 0..count {
                let line = cursor
                    .next()
                    .ok_or_else(|| Error::Parse(format!("truncated `{name}` section")))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse(format!("`{line}`: {e}")))?;
                if row.len() != width {
                    return Err(Error::Parse(format!("expected {width} fields in `{line}`")));
                }
                rows.push(row);
            }
            Ok(rows)
        };
        let vertices: Vec<[f64; 2]> = section("vertices", 2)?.iter().map(|r| [r[0], r[1]]).collect();
        let nv = vertices.len();
        let index = |x: f64| -> Result<usize> {
            if x >= 0.0 && x.fract() == 0.0 && (x as usize) < nv {
                Ok(x as usize)
            } else {
                Err(Error::Parse(format!("vertex index {x} out of range")))
            }
        };
        let triangles = section("triangles", 3)?
            .iter()
            .map(|r| Ok([index(r[0])?, index(r[1])?, index(r[2])?]))
            .collect::<Result<Vec<_>>>()?;
        let boundary = section("boundary", 1)?
            .iter()
            .map(|r| index(r[0]))
            .collect::<Result<Vec<_>>>()?;
        if boundary.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "mesh has {} boundary vertices, grid has {} nodes",
                boundary.len(),
                grid.len()
            )));
        }
        for (j, &b) in boundary.iter().enumerate() {
            let p = grid.point(j);
            let v = vertices[b];
            if (p[0] - v[0]).hypot(p[1] - v[1]) > 1e-9 {
                return Err(Error::GridMismatch(format!(
                    "boundary vertex {b} does not sit on grid node {j}"
                )));
            }
        }
        let mesh = Self {
            grid: grid.clone(),
            vertices,
            triangles,
            boundary,
        };
        mesh.check()?;
        Ok(mesh)
    }
}

fn signed_area(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let a = v[t[0]];
    let b = v[t[1]];
    let c = v[t[2]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn fan(center: usize, ring: &[(usize, f64)], tris: &mut Vec<[usize; 3]>) {
    let n = ring.len();
    for k in 0..n {
        tris.push([center, ring[k].0, ring[(k + 1) % n].0]);
    }
}

/// Zips two closed rings into a strip of triangles, always advancing the
/// ring whose next node has the smaller polar angle.
fn stitch(inner: &[(usize, f64)], outer: &[(usize, f64)], tris: &mut Vec<[usize; 3]>) {
    let sorted = |ring: &[(usize, f64)]| {
        let mut r: Vec<(usize, f64)> = ring.iter().map(|&(i, a)| (i, a.rem_euclid(TAU))).collect();
        r.sort_by(|a, b| a.1.total_cmp(&b.1));
        r
    };
    let a = sorted(inner);
    let b = sorted(outer);
    let (p, q) = (a.len(), b.len());
    let ang = |r: &[(usize, f64)], i: usize| r[i % r.len()].1 + TAU * (i / r.len()) as f64;
    let (mut i, mut j) = (0, 0);
    while i < p || j < q {
        let advance_inner = j == q || (i < p && ang(&a, i + 1) <= ang(&b, j + 1));
        if advance_inner {
            tris.push([a[i % p].0, a[(i + 1) % p].0, b[j % q].0]);
            i += 1;
        } else {
            tris.push([a[i % p].0, b[(j + 1) % q].0, b[j % q].0]);
            j += 1;
        }
    }
}

/// Distance from the origin to the boundary along a ray.
struct RadialBoundary {
    /// Boundary samples as (polar angle, radius), sorted by angle.
    samples: Vec<(f64, f64)>,
    disk: bool,
}

impl RadialBoundary {
    fn new(grid: &BoundaryGrid) -> Result<Self> {
        if let DomainKind::UnitDisk = grid.kind() {
            return Ok(Self {
                samples: Vec::new(),
                disk: true,
            });
        }
        let pts = grid.points();
        let n = pts.len();
        let mut total_turn = 0.0;
        for j in 0..n {
            let a = pts[j];
            let b = pts[(j + 1) % n];
            let cross = a[0] * b[1] - a[1] * b[0];
            if cross <= 0.0 {
                return Err(Error::UnsupportedDomain(format!(
                    "boundary is not star-shaped about the origin near sample {j}"
                )));
            }
            let dot = a[0] * b[0] + a[1] * b[1];
            total_turn += cross.atan2(dot);
        }
        if (total_turn - TAU).abs() > 1e-6 {
            return Err(Error::UnsupportedDomain(
                "boundary does not wind once around the origin".into(),
            ));
        }
        let mut samples: Vec<(f64, f64)> = pts
            .iter()
            .map(|p| (p[1].atan2(p[0]).rem_euclid(TAU), p[0].hypot(p[1])))
            .collect();
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { samples, disk: false })
    }

    fn radius(&self, alpha: f64) -> f64 {
        if self.disk {
            return 1.0;
        }
        let alpha = alpha.rem_euclid(TAU);
        let s = &self.samples;
        let n = s.len();
        let hi = s.partition_point(|x| x.0 <= alpha);
        let (a, b) = if hi == 0 || hi == n {
            ((s[n - 1].0 - TAU, s[n - 1].1), (s[0].0, s[0].1))
        } else {
            (s[hi - 1], s[hi])
        };
        // intersect the ray with the chord between the two bracketing samples
        let pa = [a.1 * a.0.cos(), a.1 * a.0.sin()];
        let pb = [b.1 * b.0.cos(), b.1 * b.0.sin()];
        let d = [alpha.cos(), alpha.sin()];
        let e = [pb[0] - pa[0], pb[1] - pa[1]];
        let denom = d[0] * e[1] - d[1] * e[0];
        (pa[0] * e[1] - pa[1] * e[0]) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_mesh_fills_the_inscribed_polygon() {
        let grid = BoundaryGrid::unit_disk(64).unwrap();
        let mesh = Mesh::for_grid(&grid, 0.1).unwrap();
        let polygon = 32.0 * (TAU / 64.0).sin();
        assert!((mesh.area() - polygon).abs() < 1e-12);
        assert!(mesh.triangles().iter().all(|t| signed_area(mesh.vertices(), t) > 0.0));
    }

    #[test]
    fn boundary_vertices_are_grid_nodes() {
        let grid = BoundaryGrid::unit_disk(48).unwrap();
        let mesh = Mesh::for_grid(&grid, 0.15).unwrap();
        assert_eq!(mesh.boundary().len(), 48);
        for (j, &b) in mesh.boundary().iter().enumerate() {
            let (p, v) = (grid.point(j), mesh.vertices()[b]);
            assert!((p[0] - v[0]).abs() < 1e-15 && (p[1] - v[1]).abs() < 1e-15);
        }
        let w: f64 = mesh.boundary_weights().iter().sum();
        assert!((w - 48.0 * 2.0 * (TAU / 96.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn square_domain_is_meshed() {
        let grid = BoundaryGrid::from_polygon(&[[-0.8, -0.8], [0.8, -0.8], [0.8, 0.8], [-0.8, 0.8]], 64).unwrap();
        let mesh = Mesh::for_grid(&grid, 0.1).unwrap();
        assert!((mesh.area() - 2.56).abs() < 1e-9);
    }

    #[test]
    fn file_round_trip() {
        let grid = BoundaryGrid::unit_disk(32).unwrap();
        let mesh = Mesh::for_grid(&grid, 0.2).unwrap();
        let mut buf = Vec::new();
        mesh.write(&mut buf).unwrap();
        let back = Mesh::read(buf.as_slice(), &grid).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.boundary(), mesh.boundary());
        let other = BoundaryGrid::unit_disk(16).unwrap();
        assert!(matches!(
            Mesh::read(buf.as_slice(), &other),
            Err(Error::GridMismatch(_))
        ));
        assert!(Mesh::read("vertices 1\n0 0\n".as_bytes(), &grid).is_err());
    }
}
