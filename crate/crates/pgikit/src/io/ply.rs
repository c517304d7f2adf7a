//! ASCII PLY subset: one vertex element with float x/y/z and optional uchar
//! red/green/blue. Color bytes map to `[0,1]` attribute triples on read and
//! are re-quantized on write.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::PointCloud;

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let file = File::open(path)?;
    parse_ply(BufReader::new(file))
}

pub(crate) fn parse_ply(reader: impl BufRead) -> Result<PointCloud> {
    let mut lines = reader.lines().enumerate();

    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        for (n, line) in lines.by_ref() {
            let line = line?;
            let trimmed = line.trim().to_string();
            if trimmed.is_empty() || trimmed.starts_with("comment") {
                continue;
            }
            return Ok((n + 1, trimmed));
        }
        Err(Error::format(format!("unexpected end of header ({expect})")))
    };

    let (line_no, magic) = next_line("magic")?;
    if magic != "ply" {
        return Err(Error::Parse {
            line: line_no,
            msg: "missing 'ply' magic".into(),
        });
    }
    let (line_no, format) = next_line("format")?;
    if format != "format ascii 1.0" {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("unsupported format '{format}'"),
        });
    }

    let (line_no, element) = next_line("element")?;
    let count: usize = element
        .strip_prefix("element vertex ")
        .and_then(|c| c.parse().ok())
        .ok_or(Error::Parse {
            line: line_no,
            msg: format!("expected 'element vertex <n>', found '{element}'"),
        })?;
    if count == 0 {
        return Err(Error::EmptyInput("ply file declares zero vertices".into()));
    }

    // Property list: x y z as float/double, optionally red green blue uchar.
    let mut props = Vec::new();
    let mut header_done = false;
    while !header_done {
        let (line_no, line) = next_line("property or end_header")?;
        if line == "end_header" {
            header_done = true;
        } else if let Some(rest) = line.strip_prefix("property ") {
            props.push((line_no, rest.to_string()));
        } else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unsupported header line '{line}'"),
            });
        }
    }
    let names: Vec<String> = props
        .iter()
        .map(|(_, p)| p.split_whitespace().last().unwrap_or("").to_string())
        .collect();
    let has_color = match names.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "red", "green", "blue"] => true,
        _ => {
            return Err(Error::format(format!(
                "unsupported property layout {names:?}"
            )))
        }
    };
    for (line_no, p) in &props {
        let ty = p.split_whitespace().next().unwrap_or("");
        let name = p.split_whitespace().last().unwrap_or("");
        let ok = match name {
            "x" | "y" | "z" => ty == "float" || ty == "double" || ty == "float32" || ty == "float64",
            _ => ty == "uchar" || ty == "uint8",
        };
        if !ok {
            return Err(Error::Parse {
                line: *line_no,
                msg: format!("unsupported property type '{p}'"),
            });
        }
    }

    let mut points = Vec::with_capacity(count);
    let mut attrs = has_color.then(|| Vec::with_capacity(count));
    for _ in 0..count {
        let (line_no, line) = next_line("vertex row")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = if has_color { 6 } else { 3 };
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {expected} columns, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid number '{}'", fields[i]),
            })
        };
        points.push([num(0)?, num(1)?, num(2)?]);
        if let Some(a) = &mut attrs {
            let byte = |i: usize| -> Result<f64> {
                let v: u16 = fields[i].parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid color byte '{}'", fields[i]),
                })?;
                if v > 255 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("color byte {v} out of range"),
                    });
                }
                Ok(v as f64 / 255.0)
            };
            a.push([byte(3)?, byte(4)?, byte(5)?]);
        }
    }
    PointCloud::with_attrs(points, attrs, (0..count as u32).collect())
}

pub fn write_ply(path: &Path, pc: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", pc.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if pc.attrs().is_some() {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in pc.points().iter().enumerate() {
        match pc.attrs() {
            Some(a) => {
                let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
                writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    p[0],
                    p[1],
                    p[2],
                    q(a[i][0]),
                    q(a[i][1]),
                    q(a[i][2])
                )?
            }
            None => writeln!(w, "{} {} {}", p[0], p[1], p[2])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_colored_vertices() {
        let text = "ply\nformat ascii 1.0\ncomment tiny\nelement vertex 3\n\
                    property float x\nproperty float y\nproperty float z\n\
                    property uchar red\nproperty uchar green\nproperty uchar blue\n\
                    end_header\n0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 255\n";
        let pc = parse_ply(Cursor::new(text)).unwrap();
        assert_eq!(pc.len(), 3);
        let attrs = pc.attrs().unwrap();
        assert_eq!(attrs[0], [1.0, 0.0, 0.0]);
        assert_eq!(attrs[2][2], 1.0);
    }

    #[test]
    fn rejects_unsupported_layouts() {
        let bad = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n\
                   property float y\nproperty float nz\nend_header\n0 0 0\n";
        assert!(parse_ply(Cursor::new(bad)).is_err());
        let binary = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(parse_ply(Cursor::new(binary)).is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\n\
                    property float x\nproperty float y\nproperty float z\n\
                    property uchar red\nproperty uchar green\nproperty uchar blue\n\
                    end_header\n0.125 -3.5 0.0078125 12 200 255\n1 2 3 0 5 9\n";
        let pc = parse_ply(Cursor::new(text)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        write_ply(&path, &pc).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.points(), pc.points());
        assert_eq!(back.attrs(), pc.attrs());
    }
}
