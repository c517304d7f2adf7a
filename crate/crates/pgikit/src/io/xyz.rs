//! Whitespace-separated `x y z [r g b]` text format. Numbers are printed
//! with Rust's shortest round-trip formatting, so write-then-read is
//! lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::PointCloud;

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let file = File::open(path)?;
    parse_xyz(BufReader::new(file))
}

pub(crate) fn parse_xyz(reader: impl BufRead) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut attrs: Option<Vec<[f64; 3]>> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected 3 or 6 columns, found {}", fields.len()),
            });
        }
        let mut values = [0.0f64; 6];
        for (i, f) in fields.iter().enumerate() {
            values[i] = f.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("invalid number '{f}'"),
            })?;
        }
        if points.is_empty() {
            attrs = (fields.len() == 6).then(Vec::new);
        } else if attrs.is_some() != (fields.len() == 6) {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "inconsistent column count".into(),
            });
        }
        points.push([values[0], values[1], values[2]]);
        if let Some(a) = &mut attrs {
            a.push([values[3], values[4], values[5]]);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("xyz file holds no points".into()));
    }
    let n = points.len();
    PointCloud::with_attrs(points, attrs, (0..n as u32).collect())
}

pub fn write_xyz(path: &Path, pc: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, p) in pc.points().iter().enumerate() {
        match pc.attrs() {
            Some(a) => writeln!(
                w,
                "{} {} {} {} {} {}",
                p[0], p[1], p[2], a[i][0], a[i][1], a[i][2]
            )?,
            None => writeln!(w, "{} {} {}", p[0], p[1], p[2])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    #[test]
    fn parses_minimal_file() {
        let pc = parse_xyz(Cursor::new("0 0 0\n1 1 1\n")).unwrap();
        assert_eq!(pc.len(), 2);
        assert_eq!(pc.point(1), [1.0, 1.0, 1.0]);
        assert_eq!(pc.source_ids(), &[0, 1]);
    }

    #[test]
    fn rejects_malformed_rows_with_line_numbers() {
        let err = parse_xyz(Cursor::new("0 0 0\n1 2\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(
            parse_xyz(Cursor::new("")).unwrap_err(),
            Error::EmptyInput(_)
        ));
        assert!(parse_xyz(Cursor::new("0 0 zebra\n")).is_err());
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let points: Vec<[f64; 3]> = (0..50)
            .map(|_| {
                [
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ]
            })
            .collect();
        let attrs: Vec<[f64; 3]> = (0..50)
            .map(|_| {
                [
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                ]
            })
            .collect();
        let pc =
            PointCloud::with_attrs(points, Some(attrs), (0..50).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        write_xyz(&path, &pc).unwrap();
        let back = read_xyz(&path).unwrap();
        assert_eq!(back.points(), pc.points());
        assert_eq!(back.attrs(), pc.attrs());
    }
}
