//! File formats: 8-bit binary PGM (P5) and the raw little-endian formats
//! IMF1 (scalar grid), SFV1 (spectral field) and DGF1 (deformation grid).
//!
//! SFV1 layout: magic `SFV1`, then nx, ny, trunc as u32, then for each signed
//! frequency in row-major ascending order and each component the real and
//! imaginary parts as f64. DGF1 and IMF1 carry the same style of header with
//! row-major f64 payloads.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::FourierVelocity;
use crate::flow::DeformationGrid;
use crate::grid::GridSpec;
use crate::image::Image;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expect {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expect)
            )));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn done(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

pub fn write_image_raw(img: &Image, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(12 + img.nx() * img.ny() * 8);
    out.extend_from_slice(b"IMF1");
    out.extend_from_slice(&(img.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(img.ny() as u32).to_le_bytes());
    for v in img.pixels().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_image_raw(path: &Path) -> Result<Image> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(b"IMF1")?;
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let mut pixels = Array2::zeros((nx, ny));
    for ix in 0..nx {
        for iy in 0..ny {
            pixels[[ix, iy]] = r.f64()?;
        }
    }
    r.done()?;
    Ok(Image::from_pixels(pixels))
}

/// 8-bit binary PGM; intensities clamp to [0,1] and quantize to 255 levels.
/// Raster rows run along y with x as the column, so width = nx, height = ny.
pub fn write_image_pgm(img: &Image, path: &Path) -> Result<()> {
    let (nx, ny) = (img.nx(), img.ny());
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = (img.pixels()[[ix, iy]].clamp(0.0, 1.0) * 255.0).round() as u8;
            out.push(v);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn pgm_token(buf: &[u8], pos: usize) -> Result<(usize, String)> {
    let mut p = pos;
    while p < buf.len() && (buf[p] as char).is_whitespace() {
        p += 1;
    }
    if p < buf.len() && buf[p] == b'#' {
        while p < buf.len() && buf[p] != b'\n' {
            p += 1;
        }
    }
    while p < buf.len() && (buf[p] as char).is_whitespace() {
        p += 1;
    }
    let start = p;
    while p < buf.len() && !(buf[p] as char).is_whitespace() {
        p += 1;
    }
    if start == p {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok((p, String::from_utf8_lossy(&buf[start..p]).into_owned()))
}

pub fn read_image_pgm(path: &Path) -> Result<Image> {
    let buf = fs::read(path)?;
    // header: "P5" whitespace width whitespace height whitespace maxval single-whitespace raster
    let (p, magic) = pgm_token(&buf, 0)?;
    if magic != "P5" {
        return Err(Error::Format(format!("unsupported PNM magic {magic}")));
    }
    let (p, w) = pgm_token(&buf, p)?;
    let (p, h) = pgm_token(&buf, p)?;
    let (p, maxval) = pgm_token(&buf, p)?;
    let pos = p + 1; // single whitespace after maxval
    let nx: usize = w.parse().map_err(|_| Error::Format("bad width".into()))?;
    let ny: usize = h.parse().map_err(|_| Error::Format("bad height".into()))?;
    let maxval: u32 = maxval.parse().map_err(|_| Error::Format("bad maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format(format!("only maxval 255 supported, got {maxval}")));
    }
    if buf.len() < pos + nx * ny {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    let mut pixels = Array2::zeros((nx, ny));
    for iy in 0..ny {
        for ix in 0..nx {
            pixels[[ix, iy]] = buf[pos + iy * nx + ix] as f64 / 255.0;
        }
    }
    Ok(Image::from_pixels(pixels))
}

pub fn write_spectral(v: &FourierVelocity, path: &Path) -> Result<()> {
    let g = v.grid();
    let t = g.trunc;
    let mut out = Vec::with_capacity(16 + t * t * 2 * 16);
    out.extend_from_slice(b"SFV1");
    out.extend_from_slice(&(g.nx as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    for a1 in 0..t {
        for a2 in 0..t {
            for comp in 0..2 {
                let c = v.coeffs()[[a1, a2, comp]];
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_spectral(path: &Path) -> Result<FourierVelocity> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(b"SFV1")?;
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let t = r.u32()? as usize;
    let grid = GridSpec::new(nx, ny, t)?;
    let mut coeffs = Array3::zeros((t, t, 2));
    for a1 in 0..t {
        for a2 in 0..t {
            for comp in 0..2 {
                let re = r.f64()?;
                let im = r.f64()?;
                coeffs[[a1, a2, comp]] = Complex64::new(re, im);
            }
        }
    }
    r.done()?;
    FourierVelocity::from_coeffs(grid, coeffs)
}

pub fn write_deformation(d: &DeformationGrid, path: &Path) -> Result<()> {
    let g = d.grid();
    let mut out = Vec::with_capacity(12 + g.nx * g.ny * 16);
    out.extend_from_slice(b"DGF1");
    out.extend_from_slice(&(g.nx as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny as u32).to_le_bytes());
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            out.extend_from_slice(&d.map()[[ix, iy, 0]].to_le_bytes());
            out.extend_from_slice(&d.map()[[ix, iy, 1]].to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_deformation(path: &Path, trunc: usize) -> Result<DeformationGrid> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(b"DGF1")?;
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let grid = GridSpec::new(nx, ny, trunc)?;
    let mut map = Array3::zeros((nx, ny, 2));
    for ix in 0..nx {
        for iy in 0..ny {
            map[[ix, iy, 0]] = r.f64()?;
            map[[ix, iy, 1]] = r.f64()?;
        }
    }
    r.done()?;
    DeformationGrid::from_map(grid, map)
}
