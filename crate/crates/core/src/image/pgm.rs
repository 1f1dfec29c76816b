//! Binary PGM (P5) interchange. 8-bit and 16-bit files map linearly onto
//! `[0, 1]`; 16-bit samples are big-endian as the format requires.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

fn encode(img: &Image, maxval: u32, to_level: impl Fn(f64) -> u32) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    let wide = maxval > 255;
    out.reserve(w * h * if wide { 2 } else { 1 });
    for &p in img.pixels() {
        let level = to_level(p).min(maxval);
        if wide {
            out.extend_from_slice(&(level as u16).to_be_bytes());
        } else {
            out.push(level as u8);
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit PGM; values are clamped to `[0, 1]` and rounded.
pub fn write_pgm8(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let bytes = encode(img, 255, |p| (p.clamp(0.0, 1.0) * 255.0).round() as u32);
    write_bytes(path.as_ref(), &bytes)
}

/// Writes a 16-bit PGM; values are clamped to `[0, 1]` and rounded.
pub fn write_pgm16(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let bytes = encode(img, 65535, |p| (p.clamp(0.0, 1.0) * 65535.0).round() as u32);
    write_bytes(path.as_ref(), &bytes)
}

/// Writes a 16-bit PGM covering the image's own value range and returns that
/// `(min, max)` range so the float values can be recovered.
pub fn write_pgm_scaled(path: impl AsRef<Path>, img: &Image) -> Result<(f64, f64)> {
    let (lo, hi) = img.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes = encode(img, 65535, |p| (((p - lo) / span) * 65535.0).round() as u32);
    write_bytes(path.as_ref(), &bytes)?;
    Ok((lo, hi))
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(format!("expected a number at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("bad header number: {e}"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_offset: pos,
    })
}

pub(crate) fn decode(bytes: &[u8]) -> std::result::Result<Image, String> {
    let hdr = parse_header(bytes)?;
    let n = hdr.width * hdr.height;
    let data = &bytes[hdr.data_offset..];
    // divide rather than multiply by the reciprocal so levels match k / maxval exactly
    let maxval = hdr.maxval as f64;
    let pixels: Vec<f64> = if hdr.maxval > 255 {
        if data.len() < 2 * n {
            return Err(format!("raster truncated: {} < {}", data.len(), 2 * n));
        }
        data.chunks_exact(2)
            .take(n)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval)
            .collect()
    } else {
        if data.len() < n {
            return Err(format!("raster truncated: {} < {}", data.len(), n));
        }
        data[..n].iter().map(|&b| b as f64 / maxval).collect()
    };
    Image::new(hdr.width, hdr.height, pixels).map_err(|e| e.to_string())
}

/// Reads an 8- or 16-bit binary PGM into `[0, 1]` intensities.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::parse(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip() {
        let img = Image::from_fn(5, 3, |u, v| ((u * 3 + v * 50) as f64) / 255.0);
        let bytes = encode(&img, 255, |p| (p * 255.0).round() as u32);
        let back = decode(&bytes).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sixteen_bit_round_trip_and_comments() {
        let img = Image::from_fn(4, 2, |u, v| ((u * 1000 + v * 20000) as f64) / 65535.0);
        let mut bytes = encode(&img, 65535, |p| (p * 65535.0).round() as u32);
        // splice a comment after the magic
        bytes.splice(2..2, b"\n# made by test".iter().copied());
        let back = decode(&bytes).unwrap();
        assert_eq!(back.dims(), (4, 2));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"P6\n1 1\n255\n\0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\0\0").is_err());
    }
}
