//! OFF mesh reader with optional uniform surface sampling.
//!
//! Accepts the standard layout (`OFF`, then a `V F E` counts line, `V`
//! vertex lines, `F` polygon lines) with `#` comments; the counts may share
//! the header line. Faces are fan-triangulated; surface sampling picks
//! triangles area-weighted and draws uniform barycentric coordinates.

use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// How to turn a mesh into a point cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffMode {
    /// Return the raw vertices.
    Vertices,
    /// Sample `points` uniformly on the surface, deterministically per seed.
    SurfaceSample { points: usize, seed: u64 },
}

struct Tokens<'a> {
    items: Vec<(&'a str, usize)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                items.push((tok, i + 1));
            }
        }
        Tokens { items, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |&(_, l)| l)
    }

    fn next(&mut self, what: &str) -> Result<(&'a str, usize)> {
        let item = self.items.get(self.pos).copied().ok_or_else(|| {
            Error::parse(self.last_line(), format!("file truncated, expected {what}"))
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let (tok, line) = self.next(what)?;
        tok.parse()
            .map_err(|_| Error::parse(line, format!("'{tok}' is not a count ({what})")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let (tok, line) = self.next(what)?;
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::parse(line, format!("'{tok}' is not a number ({what})")))?;
        if !v.is_finite() {
            return Err(Error::parse(line, format!("non-finite value '{tok}'")));
        }
        Ok(v)
    }
}

pub fn parse_off(text: &str, mode: OffMode) -> Result<PointCloud> {
    let mut tokens = Tokens::new(text);
    let (magic, line) = tokens.next("OFF header")?;
    if magic != "OFF" {
        return Err(Error::parse(line, format!("expected OFF header, found '{magic}'")));
    }
    let num_vertices = tokens.next_usize("vertex count")?;
    let num_faces = tokens.next_usize("face count")?;
    let _num_edges = tokens.next_usize("edge count")?;

    let mut vertices = Vec::with_capacity(num_vertices);
    for _ in 0..num_vertices {
        let x = tokens.next_f64("vertex x")?;
        let y = tokens.next_f64("vertex y")?;
        let z = tokens.next_f64("vertex z")?;
        vertices.push(Point3::new(x, y, z));
    }

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for _ in 0..num_faces {
        let arity = tokens.next_usize("face vertex count")?;
        if arity < 3 {
            return Err(Error::parse(
                tokens.last_line(),
                format!("face with {arity} vertices"),
            ));
        }
        let mut face = Vec::with_capacity(arity);
        for _ in 0..arity {
            let (tok, line) = tokens.next("face vertex index")?;
            let idx: usize = tok
                .parse()
                .map_err(|_| Error::parse(line, format!("'{tok}' is not a vertex index")))?;
            if idx >= num_vertices {
                return Err(Error::parse(
                    line,
                    format!("vertex index {idx} out of range ({num_vertices} vertices)"),
                ));
            }
            face.push(idx);
        }
        for i in 1..arity - 1 {
            triangles.push([face[0], face[i], face[i + 1]]);
        }
    }

    match mode {
        OffMode::Vertices => {
            if vertices.is_empty() {
                return Err(Error::EmptyCloud);
            }
            PointCloud::new(vertices)
        }
        OffMode::SurfaceSample { points, seed } => {
            if points == 0 {
                return Err(Error::Config("surface sample of zero points".into()));
            }
            sample_surface(&vertices, &triangles, points, seed)
        }
    }
}

fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    let u = b - a;
    let v = c - a;
    let cx = u.y * v.z - u.z * v.y;
    let cy = u.z * v.x - u.x * v.z;
    let cz = u.x * v.y - u.y * v.x;
    0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
}

fn sample_surface(
    vertices: &[Point3],
    triangles: &[[usize; 3]],
    count: usize,
    seed: u64,
) -> Result<PointCloud> {
    let mut cumulative = Vec::with_capacity(triangles.len());
    let mut total = 0.0;
    for t in triangles {
        total += triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Dataset(
            "mesh has zero total surface area, nothing to sample".into(),
        ));
    }
    let mut rng = Rng::new(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.uniform() * total;
        let idx = cumulative.partition_point(|&c| c <= r).min(triangles.len() - 1);
        let [ia, ib, ic] = triangles[idx];
        let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
        let mut u = rng.uniform();
        let mut v = rng.uniform();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push(a + (b - a) * u + (c - a) * v);
    }
    PointCloud::new(points)
}

pub fn load_off(path: impl AsRef<Path>, mode: OffMode) -> Result<PointCloud> {
    parse_off(&std::fs::read_to_string(path)?, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT_CUBE: &str = "OFF
8 6 12
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
4 0 1 2 3
4 4 5 6 7
4 0 1 5 4
4 2 3 7 6
4 0 3 7 4
4 1 2 6 5
";

    #[test]
    fn vertex_mode_returns_vertices() {
        let cloud = parse_off(UNIT_CUBE, OffMode::Vertices).unwrap();
        assert_eq!(cloud.len(), 8);
        assert_eq!(cloud.points()[6], Point3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn header_and_counts_may_share_a_line() {
        let text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let cloud = parse_off(text, OffMode::Vertices).unwrap();
        assert_eq!(cloud.len(), 3);
    }

    #[test]
    fn bad_header_is_rejected() {
        match parse_off("NOFF\n1 0 0\n0 0 0\n", OffMode::Vertices) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_never_yields_a_cloud() {
        let truncated = "OFF\n8 6 12\n0 0 0\n1 0 0\n";
        assert!(matches!(
            parse_off(truncated, OffMode::Vertices),
            Err(Error::Parse { .. })
        ));
        // mid-face truncation
        let text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1\n";
        assert!(matches!(
            parse_off(text, OffMode::Vertices),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn out_of_range_face_index_is_rejected() {
        let text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n";
        assert!(matches!(
            parse_off(text, OffMode::Vertices),
            Err(Error::Parse { .. })
        ));
    }

    /// Geometric oracle: samples stay in the triangle plane and the
    /// empirical centroid approaches the true centroid.
    #[test]
    fn surface_samples_lie_in_the_triangle() {
        let text = "OFF\n3 1 3\n0 0 0\n2 0 0\n0 2 0\n3 0 1 2\n";
        let cloud = parse_off(
            text,
            OffMode::SurfaceSample {
                points: 1000,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(cloud.len(), 1000);
        let mut centroid = Point3::new(0.0, 0.0, 0.0);
        for p in cloud.iter() {
            assert!(p.z.abs() < 1e-9, "in plane");
            assert!(p.x >= -1e-9 && p.y >= -1e-9 && p.x + p.y <= 2.0 + 1e-9);
            centroid = centroid + *p;
        }
        centroid = centroid * (1.0 / 1000.0);
        // true centroid (2/3, 2/3, 0); n=1000 keeps the error well under 0.1
        assert!((centroid.x - 2.0 / 3.0).abs() < 0.06);
        assert!((centroid.y - 2.0 / 3.0).abs() < 0.06);
    }

    #[test]
    fn surface_sampling_is_area_weighted_and_deterministic() {
        // two triangles: the big one has 4x the area of the small one
        let text = "OFF\n6 2 0
0 0 0
2 0 0
0 2 0
5 0 1
6 0 1
5 1 1
3 0 1 2
3 3 4 5
";
        let mode = OffMode::SurfaceSample {
            points: 2000,
            seed: 11,
        };
        let a = parse_off(text, mode).unwrap();
        let b = parse_off(text, mode).unwrap();
        assert_eq!(a, b);
        let near_big = a.iter().filter(|p| p.x < 3.0).count() as f64 / 2000.0;
        assert!((near_big - 0.8).abs() < 0.05, "big triangle share {near_big}");
    }

    #[test]
    fn degenerate_mesh_cannot_be_sampled() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n";
        assert!(parse_off(
            text,
            OffMode::SurfaceSample {
                points: 10,
                seed: 0
            }
        )
        .is_err());
    }
}
