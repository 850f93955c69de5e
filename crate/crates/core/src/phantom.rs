//! Conductivity phantoms and their sampling onto a mesh.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryGrid;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Width of the band next to the boundary where σ must equal the background.
pub const DEFAULT_CLEARANCE: f64 = 0.1;

/// Width of the radial transition at the edge of smoothed disk inclusions.
pub const DEFAULT_SMOOTHING: f64 = 0.05;

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

/// A single inclusion on a unit background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Inclusion {
    /// Disk with a C² radial transition of width `smoothing` centred on `radius`.
    Disk {
        center: [f64; 2],
        radius: f64,
        value: f64,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// Sharp ellipse, rotated counter-clockwise by `rotation_deg`.
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        rotation_deg: f64,
        value: f64,
    },
}

impl Inclusion {
    /// Fraction of the inclusion present at `p`, in `[0, 1]`.
    pub fn weight(&self, p: [f64; 2]) -> f64 {
        match *self {
            Inclusion::Disk {
                center,
                radius,
                smoothing,
                ..
            } => {
                let d = (p[0] - center[0]).hypot(p[1] - center[1]);
                if smoothing <= 0.0 {
                    return if d < radius { 1.0 } else { 0.0 };
                }
                let x = ((radius + 0.5 * smoothing - d) / smoothing).clamp(0.0, 1.0);
                x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
            }
            Inclusion::Ellipse {
                center,
                semi_axes,
                rotation_deg,
                ..
            } => {
                let (s, c) = rotation_deg.to_radians().sin_cos();
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if (u / semi_axes[0]).powi(2) + (v / semi_axes[1]).powi(2) < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Inclusion::Disk { value, .. } | Inclusion::Ellipse { value, .. } => value,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Inclusion::Disk { center, .. } | Inclusion::Ellipse { center, .. } => center,
        }
    }

    /// Points on the outer edge of the support.
    fn outline(&self, count: usize) -> Vec<[f64; 2]> {
        (0..count)
            .map(|i| {
                let t = TAU * i as f64 / count as f64;
                match *self {
                    Inclusion::Disk {
                        center,
                        radius,
                        smoothing,
                        ..
                    } => {
                        let r = radius + 0.5 * smoothing.max(0.0);
                        [center[0] + r * t.cos(), center[1] + r * t.sin()]
                    }
                    Inclusion::Ellipse {
                        center,
                        semi_axes,
                        rotation_deg,
                        ..
                    } => {
                        let (s, c) = rotation_deg.to_radians().sin_cos();
                        let x = semi_axes[0] * t.cos();
                        let y = semi_axes[1] * t.sin();
                        [center[0] + c * x - s * y, center[1] + s * x + c * y]
                    }
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Inclusion::Disk {
                radius,
                value,
                smoothing,
                ..
            } => radius > 0.0 && value > 0.0 && smoothing >= 0.0 && smoothing < 2.0 * radius,
            Inclusion::Ellipse { semi_axes, value, .. } => semi_axes[0] > 0.0 && semi_axes[1] > 0.0 && value > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Phantom(format!("invalid inclusion parameters: {self:?}")))
        }
    }
}

/// Heart (σ = 2) and two lungs (σ = 0.5) on the unit disk.
pub fn heart_and_lungs() -> Vec<Inclusion> {
    vec![
        Inclusion::Ellipse {
            center: [0.1, 0.5],
            semi_axes: [0.25, 0.18],
            rotation_deg: -35.0,
            value: 2.0,
        },
        Inclusion::Ellipse {
            center: [-0.45, -0.15],
            semi_axes: [0.25, 0.45],
            rotation_deg: -20.0,
            value: 0.5,
        },
        Inclusion::Ellipse {
            center: [0.45, -0.15],
            semi_axes: [0.25, 0.45],
            rotation_deg: 20.0,
            value: 0.5,
        },
    ]
}

/// Named phantom families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhantomSpec {
    /// σ ≡ 1.
    Unit,
    /// One smoothed disk inclusion.
    Circle {
        #[serde(default = "circle_center")]
        center: [f64; 2],
        #[serde(default = "circle_radius")]
        radius: f64,
        #[serde(default = "circle_value")]
        value: f64,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    HeartAndLungs,
    Custom {
        inclusions: Vec<Inclusion>,
    },
}

fn circle_center() -> [f64; 2] {
    [-0.6, 0.0]
}
fn circle_radius() -> f64 {
    0.15
}
fn circle_value() -> f64 {
    2.0
}

impl PhantomSpec {
    /// Circle phantom with the default geometry: centre (-0.6, 0), radius 0.15, σ = 2.
    pub fn circle() -> Self {
        PhantomSpec::Circle {
            center: circle_center(),
            radius: circle_radius(),
            value: circle_value(),
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn circle_with_value(value: f64) -> Self {
        PhantomSpec::Circle {
            center: circle_center(),
            radius: circle_radius(),
            value,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn inclusions(&self) -> Vec<Inclusion> {
        match self {
            PhantomSpec::Unit => Vec::new(),
            PhantomSpec::Circle {
                center,
                radius,
                value,
                smoothing,
            } => vec![Inclusion::Disk {
                center: *center,
                radius: *radius,
                value: *value,
                smoothing: *smoothing,
            }],
            PhantomSpec::HeartAndLungs => heart_and_lungs(),
            PhantomSpec::Custom { inclusions } => inclusions.clone(),
        }
    }

    pub fn phantom(&self) -> Phantom {
        Phantom {
            inclusions: self.inclusions(),
            background: 1.0,
        }
    }
}

/// Continuous conductivity: background plus inclusions.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub inclusions: Vec<Inclusion>,
    pub background: f64,
}

impl Phantom {
    pub fn sigma_at(&self, p: [f64; 2]) -> f64 {
        self.inclusions.iter().fold(self.background, |s, inc| {
            s + (inc.value() - self.background) * inc.weight(p)
        })
    }

    /// Rejects inclusions that reach into the clearance band next to the boundary.
    pub fn check_clearance(&self, grid: &BoundaryGrid, clearance: f64) -> Result<()> {
        for inc in &self.inclusions {
            inc.validate()?;
            for p in inc.outline(720) {
                if !grid.contains(p, 0.0) || grid.distance_to_boundary(p) < clearance {
                    return Err(Error::Phantom(format!(
                        "inclusion centred at ({}, {}) reaches within {clearance} of the boundary",
                        inc.center()[0],
                        inc.center()[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-vertex conductivity on a mesh.
#[derive(Debug, Clone)]
pub struct ConductivityField {
    mesh: Arc<Mesh>,
    sigma: Vec<f64>,
    background: f64,
}

impl ConductivityField {
    pub fn new(mesh: Arc<Mesh>, sigma: Vec<f64>, background: f64) -> Result<Self> {
        if sigma.len() != mesh.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "{} conductivity values for {} vertices",
                sigma.len(),
                mesh.vertex_count()
            )));
        }
        if !(background > 0.0) {
            return Err(Error::InvalidArgument("background must be positive".into()));
        }
        if let Some((i, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
            return Err(Error::Phantom(format!(
                "conductivity {s} at vertex {i} is not positive"
            )));
        }
        for (i, adjacent) in mesh.boundary_adjacent().into_iter().enumerate() {
            if adjacent && (sigma[i] - background).abs() > 1e-12 {
                return Err(Error::Phantom(format!(
                    "conductivity {} differs from the background next to the boundary (vertex {i})",
                    sigma[i]
                )));
            }
        }
        Ok(Self {
            mesh,
            sigma,
            background,
        })
    }

    pub fn uniform(mesh: Arc<Mesh>, value: f64) -> Result<Self> {
        let n = mesh.vertex_count();
        Self::new(mesh, vec![value; n], value)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn min(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        self.sigma.iter().all(|&s| s == self.background)
    }
}

/// Samples a phantom onto the vertices of `mesh`.
pub fn build_phantom(spec: &PhantomSpec, mesh: Arc<Mesh>, clearance: f64) -> Result<ConductivityField> {
    let phantom = spec.phantom();
    phantom.check_clearance(mesh.grid(), clearance)?;
    let sigma = mesh.vertices().iter().map(|&p| phantom.sigma_at(p)).collect();
    ConductivityField::new(mesh, sigma, phantom.background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryGrid;

    fn mesh() -> Arc<Mesh> {
        let grid = BoundaryGrid::unit_disk(128).unwrap();
        Arc::new(Mesh::for_grid(&grid, 0.04).unwrap())
    }

    #[test]
    fn circle_phantom_range_and_boundary_value() {
        let m = mesh();
        let f = build_phantom(&PhantomSpec::circle(), m.clone(), DEFAULT_CLEARANCE).unwrap();
        assert!((f.max() - 2.0).abs() < 1e-12, "max {}", f.max());
        assert!((f.min() - 1.0).abs() < 1e-12);
        for &b in m.boundary() {
            assert_eq!(f.sigma()[b], 1.0);
        }
        // continuous profile: plateau, transition, background
        let p = PhantomSpec::circle().phantom();
        assert_eq!(p.sigma_at([-0.6, 0.0]), 2.0);
        assert_eq!(p.sigma_at([-0.6 + 0.12, 0.0]), 2.0);
        let mid = p.sigma_at([-0.6 + 0.15, 0.0]);
        assert!((mid - 1.5).abs() < 1e-12, "{mid}");
        assert_eq!(p.sigma_at([-0.6 + 0.18, 0.0]), 1.0);
    }

    #[test]
    fn heart_and_lungs_values() {
        let f = build_phantom(&PhantomSpec::HeartAndLungs, mesh(), DEFAULT_CLEARANCE).unwrap();
        assert_eq!(f.min(), 0.5);
        assert_eq!(f.max(), 2.0);
    }

    #[test]
    fn empty_phantom_is_unit() {
        let f = build_phantom(&PhantomSpec::Custom { inclusions: vec![] }, mesh(), DEFAULT_CLEARANCE).unwrap();
        assert!(f.is_uniform());
        assert!(f.sigma().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn inclusion_touching_boundary_is_rejected() {
        let spec = PhantomSpec::Circle {
            center: [0.85, 0.0],
            radius: 0.15,
            value: 2.0,
            smoothing: 0.05,
        };
        assert!(matches!(
            build_phantom(&spec, mesh(), DEFAULT_CLEARANCE),
            Err(Error::Phantom(_))
        ));
    }

    #[test]
    fn field_rejects_nonpositive_or_boundary_contrast() {
        let m = mesh();
        let mut s = vec![1.0; m.vertex_count()];
        s[0] = -1.0;
        assert!(ConductivityField::new(m.clone(), s, 1.0).is_err());
        let mut s = vec![1.0; m.vertex_count()];
        s[m.boundary()[3]] = 1.5;
        assert!(ConductivityField::new(m, s, 1.0).is_err());
    }

    #[test]
    fn phantom_spec_json_shape() {
        let json = serde_json::to_string(&PhantomSpec::circle()).unwrap();
        assert!(json.contains("\"kind\":\"circle\""));
        let back: PhantomSpec = serde_json::from_str(r#"{"kind":"circle"}"#).unwrap();
        assert_eq!(back, PhantomSpec::circle());
        let hl: PhantomSpec = serde_json::from_str(r#"{"kind":"heart-and-lungs"}"#).unwrap();
        assert_eq!(hl, PhantomSpec::HeartAndLungs);
    }
}
