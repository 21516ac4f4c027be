use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image with intensities in `[0, 1]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty {width}x{height} image")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidImage("non-finite pixel".into()));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::BoundsError {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(GrayImage::from_fn(w, h, |cx, cy| self.get(x + cx, y + cy)))
    }

    /// Bilinear resample to `width x height`, pixel centers aligned.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let tx = fx - x0 as f64;
            let ty = fy - y0 as f64;
            let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
            let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
            top * (1.0 - ty) + bottom * ty
        })
    }

    /// Parses an 8-bit binary (P5) or ASCII (P2) PGM, scaling samples by 1/maxval.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<GrayImage> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        let binary = match magic.as_str() {
            "P5" => true,
            "P2" => false,
            other => return Err(Error::InvalidImage(format!("unsupported PGM magic {other:?}"))),
        };
        let width = parse_header_int(bytes, &mut pos)?;
        let height = parse_header_int(bytes, &mut pos)?;
        let maxval = parse_header_int(bytes, &mut pos)?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::InvalidImage(format!("unsupported maxval {maxval}")));
        }
        let maxval = maxval as f64;
        let count = width * height;
        let pixels: Vec<f64> = if binary {
            // Exactly one whitespace byte separates the header from the raster.
            pos += 1;
            let raster = bytes
                .get(pos..pos + count)
                .ok_or_else(|| Error::InvalidImage("truncated P5 raster".into()))?;
            raster.iter().map(|&b| b as f64 / maxval).collect()
        } else {
            (0..count)
                .map(|_| parse_header_int(bytes, &mut pos).map(|v| v as f64 / maxval))
                .collect::<Result<_>>()?
        };
        if pixels.iter().any(|&p| p > 1.0) {
            return Err(Error::InvalidImage("sample exceeds maxval".into()));
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        GrayImage::from_pgm_bytes(&fs::read(path)?)
    }

    /// Binary P5 encoding, quantized to 8 bits.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_pgm_bytes())?;
        Ok(())
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::InvalidImage("unexpected end of PGM data".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::InvalidImage(format!("bad PGM integer {tok:?}")))
}
