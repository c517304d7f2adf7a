//! Lossless binary container for point geometry images.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "PGI1"                      4 bytes
//! n_g: u16, k: u16, flags: u16      6 bytes   (flags bit 0: transform)
//! pixels: f32 triples, row-major    3 * m^2 * 4 bytes
//! source ids: u32, row-major        m^2 * 4 bytes
//! duplicate mask, bit-packed        ceil(m^2 / 8) bytes (LSB first)
//! block map: u32 per block cell     n_g^2 * 4 bytes
//! [center: 3 x f32, scale: f32]     16 bytes when flags bit 0 is set
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::resample::{Pgi, PgiTransform};

const MAGIC: &[u8; 4] = b"PGI1";
const FLAG_TRANSFORM: u16 = 1;

pub fn write_pgi(path: &Path, pgi: &Pgi) -> Result<()> {
    let m = pgi.m();
    let pixel_count = m * m;
    let mask_len = pixel_count.div_ceil(8);
    let mut buf = Vec::with_capacity(10 + pixel_count * 16 + mask_len + 16);

    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(pgi.n_g() as u16).to_le_bytes());
    buf.extend_from_slice(&(pgi.k() as u16).to_le_bytes());
    let flags = if pgi.transform().is_some() {
        FLAG_TRANSFORM
    } else {
        0
    };
    buf.extend_from_slice(&flags.to_le_bytes());

    for p in pgi.pixels() {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for id in pgi.source_ids() {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    let mut mask = vec![0u8; mask_len];
    for (i, &dup) in pgi.duplicate().iter().enumerate() {
        if dup {
            mask[i / 8] |= 1 << (i % 8);
        }
    }
    buf.extend_from_slice(&mask);
    for b in pgi.block_of() {
        buf.extend_from_slice(&b.to_le_bytes());
    }
    if let Some(t) = pgi.transform() {
        for c in t.center {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&t.scale.to_le_bytes());
    }

    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format("truncated image file"));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_pgi(path: &Path) -> Result<Pgi> {
    let data = fs::read(path)?;
    let mut cur = Cursor {
        data: &data,
        pos: 0,
    };

    if cur.take(4)? != MAGIC {
        return Err(Error::format("bad magic, not a PGI1 file"));
    }
    let n_g = cur.u16()? as usize;
    let k = cur.u16()? as usize;
    let flags = cur.u16()?;
    if n_g == 0 || k == 0 {
        return Err(Error::format("image header declares a zero dimension"));
    }
    if flags & !FLAG_TRANSFORM != 0 {
        return Err(Error::format(format!("unknown flags {flags:#06x}")));
    }

    let m = n_g * k;
    let pixel_count = m * m;
    let mut pixels = Vec::with_capacity(pixel_count);
    for _ in 0..pixel_count {
        pixels.push([cur.f32()?, cur.f32()?, cur.f32()?]);
    }
    let mut source_ids = Vec::with_capacity(pixel_count);
    for _ in 0..pixel_count {
        source_ids.push(cur.u32()?);
    }
    let mask = cur.take(pixel_count.div_ceil(8))?;
    let duplicate: Vec<bool> = (0..pixel_count)
        .map(|i| mask[i / 8] & (1 << (i % 8)) != 0)
        .collect();
    let mut block_of = Vec::with_capacity(n_g * n_g);
    for _ in 0..n_g * n_g {
        block_of.push(cur.u32()?);
    }
    let transform = if flags & FLAG_TRANSFORM != 0 {
        Some(PgiTransform {
            center: [cur.f32()?, cur.f32()?, cur.f32()?],
            scale: cur.f32()?,
        })
    } else {
        None
    };
    if cur.pos != data.len() {
        return Err(Error::format(format!(
            "trailing bytes: file holds {} bytes, layout needs {}",
            data.len(),
            cur.pos
        )));
    }

    Pgi::from_parts(n_g, k, pixels, source_ids, duplicate, block_of, transform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded_pgi(n_g: usize, k: usize, seed: u64, transform: bool) -> Pgi {
        let m = n_g * k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..m * m)
            .map(|_| {
                [
                    rng.random_range(-1.0f32..1.0),
                    rng.random_range(-1.0f32..1.0),
                    rng.random_range(-1.0f32..1.0),
                ]
            })
            .collect();
        let source_ids = (0..(m * m) as u32).map(|i| i % 97).collect();
        let duplicate = (0..m * m).map(|i| i % 3 == 0).collect();
        let mut block_of: Vec<u32> = (0..(n_g * n_g) as u32).collect();
        block_of.reverse();
        let t = transform.then_some(PgiTransform {
            center: [0.5, -1.25, 3.0],
            scale: 2.5,
        });
        Pgi::from_parts(n_g, k, pixels, source_ids, duplicate, block_of, t).unwrap()
    }

    #[test]
    fn round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        for (n_g, k, transform) in [(2, 3, false), (4, 5, true), (16, 1, false)] {
            let pgi = seeded_pgi(n_g, k, 42, transform);
            let path = dir.path().join(format!("img_{n_g}_{k}.pgi"));
            write_pgi(&path, &pgi).unwrap();
            let back = read_pgi(&path).unwrap();
            assert_eq!(back, pgi);
            // Writing the reread image reproduces the same bytes.
            let path2 = dir.path().join("again.pgi");
            write_pgi(&path2, &back).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn minimal_file_size_matches_layout() {
        let dir = tempfile::tempdir().unwrap();
        let pgi = seeded_pgi(16, 1, 1, false);
        let path = dir.path().join("minimal.pgi");
        write_pgi(&path, &pgi).unwrap();
        let header = 4 + 6;
        let expected = header + 3 * 256 * 4 + 256 * 4 + 32 + 256 * 4;
        assert_eq!(std::fs::read(&path).unwrap().len(), expected);
    }

    #[test]
    fn flags_bit_set_iff_transform_present() {
        let dir = tempfile::tempdir().unwrap();
        for transform in [false, true] {
            let pgi = seeded_pgi(2, 2, 7, transform);
            let path = dir.path().join("t.pgi");
            write_pgi(&path, &pgi).unwrap();
            let bytes = std::fs::read(&path).unwrap();
            let flags = u16::from_le_bytes([bytes[8], bytes[9]]);
            assert_eq!(flags & 1 != 0, transform);
            assert_eq!(read_pgi(&path).unwrap().transform().is_some(), transform);
        }
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let pgi = seeded_pgi(2, 2, 9, false);
        let path = dir.path().join("ok.pgi");
        write_pgi(&path, &pgi).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let bad_magic = {
            let mut b = bytes.clone();
            b[0] = b'X';
            b
        };
        let truncated = bytes[..bytes.len() - 3].to_vec();
        let mut trailing = bytes.clone();
        trailing.push(0);

        for (name, data) in [
            ("magic", bad_magic),
            ("truncated", truncated),
            ("trailing", trailing),
        ] {
            let bad_path = dir.path().join("bad.pgi");
            std::fs::write(&bad_path, data).unwrap();
            assert!(read_pgi(&bad_path).is_err(), "{name} accepted");
        }
    }
}
