//! Whitespace-separated XYZ text format.
//!
//! Each non-empty, non-`#` line holds at least three numeric fields; extra
//! fields (colors, labels) are ignored on read. Written files may carry one
//! integer label as a fourth column, which round-trips as `ignored extra`.

use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                line_no,
                format!("expected at least 3 fields, found {}", fields.len()),
            ));
        }
        let mut coords = [0.0; 3];
        for (axis, field) in fields[..3].iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(line_no, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value '{field}'")));
            }
            coords[axis] = v;
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud::new(points)
}

/// Formats a cloud, optionally with one integer label column.
pub fn format_xyz(cloud: &PointCloud, labels: Option<&[usize]>) -> String {
    if let Some(l) = labels {
        assert_eq!(l.len(), cloud.len(), "one label per point");
    }
    let mut out = String::new();
    for (i, p) in cloud.iter().enumerate() {
        match labels {
            Some(l) => out.push_str(&format!("{} {} {} {}\n", p.x, p.y, p.z, l[i])),
            None => out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z)),
        }
    }
    out
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_xyz(&std::fs::read_to_string(path)?)
}

pub fn save_xyz(
    path: impl AsRef<Path>,
    cloud: &PointCloud,
    labels: Option<&[usize]>,
) -> Result<()> {
    super::atomic_write(path, format_xyz(cloud, labels).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_points() {
        let cloud = parse_xyz("0 0 0\n1 1 1").unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], Point3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn ignores_extra_fields_and_comments() {
        let cloud = parse_xyz("# header\n0 0 0 255 255 255\n\n").unwrap();
        assert_eq!(cloud.len(), 1);
    }

    #[test]
    fn reports_line_numbers() {
        match parse_xyz("a b c") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_xyz("0 0 0\n1 2") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_xyz("0 0 0\n1 2 inf") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_xyz("# only comments\n"), Err(Error::EmptyCloud)));
    }

    #[test]
    fn label_column_roundtrips_as_ignored_extra() {
        let cloud = PointCloud::from_coords(&[[0.5, 0.25, 0.125]]).unwrap();
        let text = format_xyz(&cloud, Some(&[7]));
        let back = parse_xyz(&text).unwrap();
        assert_eq!(back, cloud);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    proptest! {
        /// format -> parse recovers every coordinate exactly (shortest
        /// round-trip float formatting).
        #[test]
        fn format_parse_roundtrip(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = Rng::new(seed);
            let cloud = PointCloud::new(
                (0..n)
                    .map(|_| crate::cloud::Point3::new(
                        rng.gaussian() * 100.0,
                        rng.gaussian() * 1e-3,
                        rng.uniform(),
                    ))
                    .collect(),
            ).unwrap();
            let back = parse_xyz(&format_xyz(&cloud, None)).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}
