//! Synthetic shape datasets: a desk-scale stand-in for the large CAD
//! corpora, with deterministic content per seed.
//!
//! Six shape families sample points uniformly on parametric surfaces.
//! Tables and chairs carry two part labels (top/legs, seat/back); the other
//! families are single-part. Every instance gets a random overall scale,
//! per-axis aspect stretch, and a small tilt — small, so clouds keep a
//! global sense of orientation — and is then normalized to the unit cube,
//! the convention the ingestion paths follow as well.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::jigsaw::scale_to_unit_cube;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Sphere,
    Cube,
    Cylinder,
    Torus,
    Table,
    Chair,
}

/// `(center, half-extents, part label)` of an axis-aligned box.
type BoxPart = ([f64; 3], [f64; 3], usize);

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 6] = [
        ShapeFamily::Sphere,
        ShapeFamily::Cube,
        ShapeFamily::Cylinder,
        ShapeFamily::Torus,
        ShapeFamily::Table,
        ShapeFamily::Chair,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Cube => "cube",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Torus => "torus",
            ShapeFamily::Table => "table",
            ShapeFamily::Chair => "chair",
        }
    }

    pub fn parse(name: &str) -> Result<ShapeFamily> {
        Self::ALL
            .iter()
            .find(|f| f.name() == name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown shape family '{name}'")))
    }

    pub fn part_count(&self) -> usize {
        match self {
            ShapeFamily::Table | ShapeFamily::Chair => 2,
            _ => 1,
        }
    }

    fn boxes(&self) -> Vec<BoxPart> {
        match self {
            // top slab over a pedestal
            ShapeFamily::Table => vec![
                ([0.0, 0.0, 0.425], [0.5, 0.5, 0.075], 0),
                ([0.0, 0.0, -0.075], [0.12, 0.12, 0.425], 1),
            ],
            // seat slab with a back rest
            ShapeFamily::Chair => vec![
                ([0.0, 0.0, 0.0], [0.4, 0.4, 0.08], 0),
                ([0.0, -0.35, 0.43], [0.4, 0.05, 0.35], 1),
            ],
            _ => vec![],
        }
    }

    /// One point uniform on the nominal surface (centered at the origin,
    /// extent about one unit), with its part label.
    pub fn sample_surface(&self, rng: &mut Rng) -> (Point3, usize) {
        match self {
            ShapeFamily::Sphere => {
                let radius = 0.5;
                let p = loop {
                    let g = Point3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
                    let n = g.norm();
                    if n > 1e-9 {
                        break g * (radius / n);
                    }
                };
                (p, 0)
            }
            ShapeFamily::Cube => (sample_box_surface([0.0; 3], [0.5; 3], rng), 0),
            ShapeFamily::Cylinder => {
                let (radius, half_height) = (0.35, 0.5);
                let lateral = 2.0 * std::f64::consts::PI * radius * (2.0 * half_height);
                let caps = 2.0 * std::f64::consts::PI * radius * radius;
                let theta = 2.0 * std::f64::consts::PI * rng.uniform();
                let p = if rng.uniform() * (lateral + caps) < lateral {
                    Point3::new(
                        radius * theta.cos(),
                        radius * theta.sin(),
                        (2.0 * rng.uniform() - 1.0) * half_height,
                    )
                } else {
                    let r = radius * rng.uniform().sqrt();
                    let z = if rng.index(2) == 0 { half_height } else { -half_height };
                    Point3::new(r * theta.cos(), r * theta.sin(), z)
                };
                (p, 0)
            }
            ShapeFamily::Torus => {
                let (major, minor) = (0.35, 0.15);
                let u = 2.0 * std::f64::consts::PI * rng.uniform();
                // rejection keeps surface-area weighting in the tube angle
                let v = loop {
                    let v = 2.0 * std::f64::consts::PI * rng.uniform();
                    if rng.uniform() * (major + minor) < major + minor * v.cos() {
                        break v;
                    }
                };
                let ring = major + minor * v.cos();
                (
                    Point3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()),
                    0,
                )
            }
            ShapeFamily::Table | ShapeFamily::Chair => {
                let boxes = self.boxes();
                let areas: Vec<f64> = boxes
                    .iter()
                    .map(|(_, half, _)| box_surface_area(*half))
                    .collect();
                let total: f64 = areas.iter().sum();
                let mut pick = rng.uniform() * total;
                let mut chosen = boxes.len() - 1;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        chosen = i;
                        break;
                    }
                    pick -= a;
                }
                let (center, half, part) = boxes[chosen];
                (sample_box_surface(center, half, rng), part)
            }
        }
    }
}

fn box_surface_area(half: [f64; 3]) -> f64 {
    8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2])
}

/// Uniform point on the surface of an axis-aligned box: face chosen
/// proportional to area, position uniform within the face.
fn sample_box_surface(center: [f64; 3], half: [f64; 3], rng: &mut Rng) -> Point3 {
    let face_areas = [
        4.0 * half[1] * half[2], // +-x
        4.0 * half[0] * half[2], // +-y
        4.0 * half[0] * half[1], // +-z
    ];
    let total = 2.0 * (face_areas[0] + face_areas[1] + face_areas[2]);
    let mut pick = rng.uniform() * total;
    let mut axis = 2;
    let mut sign = 1.0;
    'outer: for a in 0..3 {
        for s in [1.0, -1.0] {
            if pick < face_areas[a] {
                axis = a;
                sign = s;
                break 'outer;
            }
            pick -= face_areas[a];
        }
    }
    let mut coords = [0.0; 3];
    for a in 0..3 {
        coords[a] = if a == axis {
            sign * half[a]
        } else {
            (2.0 * rng.uniform() - 1.0) * half[a]
        };
    }
    Point3::new(
        center[0] + coords[0],
        center[1] + coords[1],
        center[2] + coords[2],
    )
}

/// Rotation by `angle` about `axis` (Rodrigues).
fn axis_angle_rotate(p: Point3, axis: Point3, angle: f64) -> Point3 {
    let (sin, cos) = angle.sin_cos();
    let k = axis;
    let dot = k.x * p.x + k.y * p.y + k.z * p.z;
    let cross = Point3::new(
        k.y * p.z - k.z * p.y,
        k.z * p.x - k.x * p.z,
        k.x * p.y - k.y * p.x,
    );
    p * cos + cross * sin + k * (dot * (1.0 - cos))
}

/// Builds a class-labeled, part-labeled dataset of `per_class_count`
/// instances per family, `points_per_cloud` points each, deterministic in
/// the rng. Clouds are normalized to the unit cube.
pub fn synthesize_dataset(
    families: &[ShapeFamily],
    per_class_count: usize,
    points_per_cloud: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    if families.len() < 2 {
        return Err(Error::Config(
            "synthesize: need at least two shape families".into(),
        ));
    }
    if per_class_count < 1 || points_per_cloud < 1 {
        return Err(Error::Config(
            "synthesize: per_class_count and points_per_cloud must be >= 1".into(),
        ));
    }

    let mut clouds = Vec::new();
    let mut class_labels = Vec::new();
    let mut point_labels = Vec::new();
    for (class, family) in families.iter().enumerate() {
        for _ in 0..per_class_count {
            // instance perturbation: aspect stretch, overall scale, small tilt
            let aspect = [
                0.8 + 0.4 * rng.uniform(),
                0.8 + 0.4 * rng.uniform(),
                0.8 + 0.4 * rng.uniform(),
            ];
            let scale = 0.7 + 0.6 * rng.uniform();
            let axis = loop {
                let g = Point3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
                let n = g.norm();
                if n > 1e-9 {
                    break g * (1.0 / n);
                }
            };
            let angle = (2.0 * rng.uniform() - 1.0) * std::f64::consts::PI / 12.0;

            let mut points = Vec::with_capacity(points_per_cloud);
            let mut labels = Vec::with_capacity(points_per_cloud);
            for _ in 0..points_per_cloud {
                let (p, part) = family.sample_surface(rng);
                let stretched =
                    Point3::new(p.x * aspect[0], p.y * aspect[1], p.z * aspect[2]) * scale;
                points.push(axis_angle_rotate(stretched, axis, angle));
                labels.push(part);
            }
            clouds.push(scale_to_unit_cube(&PointCloud::new(points)?));
            class_labels.push(class);
            point_labels.push(labels);
        }
    }

    let name = families
        .iter()
        .map(|f| f.name())
        .collect::<Vec<_>>()
        .join("+");
    Dataset::new(name, clouds)?
        .with_class_labels(class_labels, families.len())?
        .with_point_labels(point_labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_sit_on_the_nominal_radius() {
        let mut rng = Rng::new(1);
        for _ in 0..500 {
            let (p, part) = ShapeFamily::Sphere.sample_surface(&mut rng);
            assert!((p.norm() - 0.5).abs() < 1e-9);
            assert_eq!(part, 0);
        }
    }

    #[test]
    fn box_families_emit_both_parts() {
        let mut rng = Rng::new(2);
        for family in [ShapeFamily::Table, ShapeFamily::Chair] {
            let mut seen = [false; 2];
            for _ in 0..200 {
                let (_, part) = family.sample_surface(&mut rng);
                seen[part] = true;
            }
            assert!(seen[0] && seen[1], "{} needs both parts", family.name());
        }
    }

    #[test]
    fn cube_points_lie_on_the_surface() {
        let mut rng = Rng::new(3);
        for _ in 0..500 {
            let (p, _) = ShapeFamily::Cube.sample_surface(&mut rng);
            let c = p.to_array();
            let on_face = c.iter().any(|&v| (v.abs() - 0.5).abs() < 1e-12);
            assert!(on_face, "{c:?} not on a face");
            assert!(c.iter().all(|&v| v.abs() <= 0.5 + 1e-12));
        }
    }

    #[test]
    fn dataset_counts_and_balance() {
        let mut rng = Rng::new(4);
        let families = [
            ShapeFamily::Sphere,
            ShapeFamily::Cube,
            ShapeFamily::Table,
            ShapeFamily::Chair,
        ];
        let ds = synthesize_dataset(&families, 10, 32, &mut rng).unwrap();
        assert_eq!(ds.len(), 40);
        let labels = ds.class_labels().unwrap();
        for class in 0..4 {
            assert_eq!(labels.iter().filter(|&&c| c == class).count(), 10);
        }
        for cloud in ds.clouds() {
            assert_eq!(cloud.len(), 32);
            let (min, max) = cloud.bounding_box();
            for v in min.to_array().into_iter().chain(max.to_array()) {
                assert!((0.0..=1.0).contains(&v), "clouds arrive normalized");
            }
        }
    }

    #[test]
    fn dataset_is_deterministic_per_seed() {
        let families = [ShapeFamily::Sphere, ShapeFamily::Torus];
        let a = synthesize_dataset(&families, 3, 16, &mut Rng::new(9)).unwrap();
        let b = synthesize_dataset(&families, 3, 16, &mut Rng::new(9)).unwrap();
        for (ca, cb) in a.clouds().iter().zip(b.clouds()) {
            for (p, q) in ca.iter().zip(cb.iter()) {
                assert_eq!(p.x.to_bits(), q.x.to_bits());
                assert_eq!(p.y.to_bits(), q.y.to_bits());
                assert_eq!(p.z.to_bits(), q.z.to_bits());
            }
        }
        assert_eq!(a.point_labels(), b.point_labels());
    }

    #[test]
    fn rejects_single_family() {
        let err = synthesize_dataset(&[ShapeFamily::Cube], 2, 8, &mut Rng::new(1));
        assert!(err.is_err());
    }

    #[test]
    fn family_names_roundtrip() {
        for f in ShapeFamily::ALL {
            assert_eq!(ShapeFamily::parse(f.name()).unwrap(), f);
        }
        assert!(ShapeFamily::parse("pyramid").is_err());
    }

    #[test]
    fn stratified_split_is_balanced() {
        let mut rng = Rng::new(5);
        let families = [ShapeFamily::Sphere, ShapeFamily::Cube];
        let ds = synthesize_dataset(&families, 10, 8, &mut rng)
            .unwrap()
            .with_stratified_split("train", "test", 0.5)
            .unwrap();
        let train = ds.split("train").unwrap();
        let test = ds.split("test").unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 10);
        let labels = ds.class_labels().unwrap();
        for class in 0..2 {
            assert_eq!(train.iter().filter(|&&i| labels[i] == class).count(), 5);
            assert_eq!(test.iter().filter(|&&i| labels[i] == class).count(), 5);
        }
    }
}
