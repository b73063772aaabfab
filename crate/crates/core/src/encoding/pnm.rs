//! Netpbm persistence. Depth and delta images are 16-bit big-endian `P5`
//! files, action images 8-bit `P6`. Every header is exactly
//!
//! ```text
//! P5|P6
//! # meters_per_pixel <cell in m>
//! <width> <height>
//! <maxval>
//! ```
//!
//! Depth values map `[-1, 1]` and deltas `[-2, 2]` linearly onto `0..=65535`.

use std::io::{Read, Write};

use super::{ActionImage, DeltaImage, DepthImage, EncodingError, Result};

const MAX16: f64 = 65535.0;

fn header(magic: &str, w: usize, h: usize, cell_cm: f64, maxval: u32) -> String {
    format!("{magic}\n# meters_per_pixel {}\n{w} {h}\n{maxval}\n", cell_cm / 100.0)
}

struct Parsed {
    width: usize,
    height: usize,
    cell_cm: f64,
    maxval: u32,
    data: Vec<u8>,
}

fn parse(bytes: &[u8], magic: &str) -> Result<Parsed> {
    let bad = |m: &str| EncodingError::Format(m.to_string());
    let mut pos = 0usize;
    let mut cell_cm = None;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|b| *b == b'\n')
                .map_or(bytes.len(), |e| pos + e);
            let line = std::str::from_utf8(&bytes[pos + 1..end]).map_err(|_| bad("comment is not utf-8"))?;
            let mut it = line.split_whitespace();
            if it.next() == Some("meters_per_pixel") {
                let m: f64 = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad meters_per_pixel"))?;
                cell_cm = Some(m * 100.0);
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| bad("header is not ascii"))?
                .to_string(),
        );
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != magic {
        return Err(bad(&format!("expected {magic}, found {}", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad number {s}")));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])? as u32);
    Ok(Parsed {
        width,
        height,
        cell_cm: cell_cm.ok_or_else(|| bad("missing meters_per_pixel comment"))?,
        maxval,
        data: bytes.get(pos..).unwrap_or(&[]).to_vec(),
    })
}

fn write16(
    out: &mut impl Write,
    magic: &str,
    w: usize,
    h: usize,
    cell: f64,
    q: impl Iterator<Item = u16>,
) -> Result<()> {
    let mut buf = header(magic, w, h, cell, 65535).into_bytes();
    for v in q {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read16(inp: &mut impl Read) -> Result<(Parsed, Vec<u16>)> {
    let mut bytes = Vec::new();
    inp.read_to_end(&mut bytes)?;
    let p = parse(&bytes, "P5")?;
    if p.maxval != 65535 || p.data.len() != 2 * p.width * p.height {
        return Err(EncodingError::Format(
            "expected 16-bit raster of the declared size".into(),
        ));
    }
    let q = p
        .data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((p, q))
}

fn quantize(v: f64, lo: f64, hi: f64) -> u16 {
    ((v - lo) / (hi - lo) * MAX16).round().clamp(0.0, MAX16) as u16
}

pub fn write_depth_pgm(img: &DepthImage, out: &mut impl Write) -> Result<()> {
    write16(
        out,
        "P5",
        img.width(),
        img.height(),
        img.cell(),
        img.values().iter().map(|v| quantize(*v, -1.0, 1.0)),
    )
}

pub fn read_depth_pgm(inp: &mut impl Read) -> Result<DepthImage> {
    let (p, q) = read16(inp)?;
    let values = q.iter().map(|v| *v as f64 / MAX16 * 2.0 - 1.0).collect();
    DepthImage::new(p.width, p.height, p.cell_cm, values)
}

pub fn write_delta_pgm(img: &DeltaImage, out: &mut impl Write) -> Result<()> {
    write16(
        out,
        "P5",
        img.width(),
        img.height(),
        img.cell(),
        img.values().iter().map(|v| quantize(*v, -2.0, 2.0)),
    )
}

pub fn read_delta_pgm(inp: &mut impl Read) -> Result<DeltaImage> {
    let (p, q) = read16(inp)?;
    let values = q.iter().map(|v| *v as f64 / MAX16 * 4.0 - 2.0).collect();
    DeltaImage::new(p.width, p.height, p.cell_cm, values)
}

pub fn write_action_ppm(img: &ActionImage, out: &mut impl Write) -> Result<()> {
    let mut buf = header("P6", img.width(), img.height(), img.cell, 255).into_bytes();
    for p in img.pixels() {
        for c in p {
            buf.push((c * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_action_ppm(inp: &mut impl Read) -> Result<ActionImage> {
    let mut bytes = Vec::new();
    inp.read_to_end(&mut bytes)?;
    let p = parse(&bytes, "P6")?;
    if p.maxval != 255 || p.data.len() != 3 * p.width * p.height {
        return Err(EncodingError::Format(
            "expected 8-bit RGB raster of the declared size".into(),
        ));
    }
    let pixels = p
        .data
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
        .collect();
    ActionImage::new(p.width, p.height, p.cell_cm, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Frame;

    const F: Frame = Frame {
        width: 4,
        height: 3,
        cell: 0.9375,
    };

    #[test]
    fn depth_header_is_exact() {
        let img = DepthImage::constant(F, 0.25);
        let mut buf = Vec::new();
        write_depth_pgm(&img, &mut buf).unwrap();
        let head = b"P5\n# meters_per_pixel 0.009375\n4 3\n65535\n";
        assert_eq!(&buf[..head.len()], head);
        assert_eq!(buf.len(), head.len() + 24);
    }

    #[test]
    fn depth_and_delta_round_trip_within_quantum() {
        let img = DepthImage::from_clamped(F, (0..12).map(|i| i as f64 / 6.0 - 1.0));
        let mut buf = Vec::new();
        write_depth_pgm(&img, &mut buf).unwrap();
        let back = read_depth_pgm(&mut buf.as_slice()).unwrap();
        assert_eq!(back.cell(), img.cell());
        for (a, b) in back.values().iter().zip(img.values()) {
            assert!((a - b).abs() <= 1.0 / MAX16);
        }
        let d = DeltaImage::from_clamped(F, (0..12).map(|i| i as f64 / 3.0 - 2.0));
        let mut buf = Vec::new();
        write_delta_pgm(&d, &mut buf).unwrap();
        let back = read_delta_pgm(&mut buf.as_slice()).unwrap();
        for (a, b) in back.values().iter().zip(d.values()) {
            assert!((a - b).abs() <= 2.0 / MAX16);
        }
    }

    #[test]
    fn action_round_trip() {
        let mut img = ActionImage::blank(F);
        img.pixels[5] = [0.2, 0.0, 0.8];
        let mut buf = Vec::new();
        write_action_ppm(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n# meters_per_pixel 0.009375\n4 3\n255\n"));
        let back = read_action_ppm(&mut buf.as_slice()).unwrap();
        assert!((back.pixels()[5][2] - 0.8).abs() < 1.0 / 255.0);
    }

    #[test]
    fn rejects_wrong_magic_and_size() {
        assert!(read_depth_pgm(&mut &b"P6\n# meters_per_pixel 0.01\n1 1\n65535\n\0\0"[..]).is_err());
        assert!(read_depth_pgm(&mut &b"P5\n# meters_per_pixel 0.01\n2 2\n65535\n\0\0"[..]).is_err());
        assert!(read_depth_pgm(&mut &b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
