//! Point and point-cloud types.
//!
//! A [`PointCloud`] is an ordered list of 3D points whose order carries no
//! semantics. Construction validates the two invariants every downstream
//! stage relies on: at least one point, and all coordinates finite.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// A 3D point. Coordinates are unitless; normalized space is `[0,1]^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// An ordered, finite, non-empty list of 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    /// Validates the cloud invariants: `n >= 1` and all coordinates finite.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        for (index, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinitePoint { index });
            }
        }
        Ok(PointCloud { points })
    }

    /// Builds a cloud from `(x, y, z)` triples.
    pub fn from_coords(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(
            coords
                .iter()
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: the empty cloud is rejected at construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Componentwise min/max over all points.
    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut min = self.points[0];
        let mut max = self.points[0];
        for p in &self.points[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        (min, max)
    }
}
