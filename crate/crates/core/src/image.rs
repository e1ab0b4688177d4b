//! RGB float images and boolean masks with binary PPM (P6) / PGM (P5) I/O.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {kind} file: {message}")]
    Format { kind: &'static str, message: String },
    #[error("image dimensions {0}x{1} do not match {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
}

/// Row-major RGB image with components in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image { width, height, data: vec![0.0; width * height * 3] }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// 8-bit quantization, round to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Image {
        Image { width, height, data: bytes.iter().map(|&b| b as f64 / 255.0).collect() }
    }

    /// The image after an 8-bit round trip.
    pub fn quantized(&self) -> Image {
        Image::from_rgb8(self.width, self.height, &self.to_rgb8())
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64, ImageError> {
        self.check_dims(other.width, other.height)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<(), ImageError> {
        if self.width != width || self.height != height {
            return Err(ImageError::DimMismatch(self.width, self.height, width, height));
        }
        Ok(())
    }

    pub fn write_ppm(&self, out: &mut impl Write) -> Result<(), ImageError> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.to_rgb8())?;
        Ok(())
    }

    pub fn save_ppm(&self, path: &Path) -> Result<(), ImageError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_ppm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_ppm(input: &mut impl BufRead) -> Result<Image, ImageError> {
        let (w, h, bytes) = read_netpbm(input, "P6", 3)?;
        Ok(Image::from_rgb8(w, h, &bytes))
    }

    pub fn load_ppm(path: &Path) -> Result<Image, ImageError> {
        Image::read_ppm(&mut BufReader::new(File::open(path)?))
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Mask {
        Mask { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Mask {
        Mask { width, height, data: vec![true; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn write_pgm(&self, out: &mut impl Write) -> Result<(), ImageError> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: &Path) -> Result<(), ImageError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_pgm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a PGM; nonzero pixels are set.
    pub fn read_pgm(input: &mut impl BufRead) -> Result<Mask, ImageError> {
        let (width, height, bytes) = read_netpbm(input, "P5", 1)?;
        Ok(Mask { width, height, data: bytes.into_iter().map(|b| b != 0).collect() })
    }

    pub fn load_pgm(path: &Path) -> Result<Mask, ImageError> {
        Mask::read_pgm(&mut BufReader::new(File::open(path)?))
    }
}

fn read_netpbm(
    input: &mut impl BufRead,
    magic: &'static str,
    channels: usize,
) -> Result<(usize, usize, Vec<u8>), ImageError> {
    let kind = if channels == 3 { "PPM" } else { "PGM" };
    let err = |m: &str| ImageError::Format { kind, message: m.to_string() };
    // header: magic, width, height, maxval separated by whitespace, comments allowed
    let mut tokens: Vec<String> = Vec::with_capacity(4);
    let mut cur = String::new();
    let mut byte = [0u8; 1];
    while tokens.len() < 4 {
        if input.read(&mut byte)? == 0 {
            return Err(err("unexpected end of header"));
        }
        let c = byte[0];
        if c == b'#' && cur.is_empty() {
            let mut skip = Vec::new();
            input.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(c as char);
        }
    }
    if tokens[0] != magic {
        return Err(err(&format!("expected magic {magic}, found {}", tokens[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("bad header number '{s}'")));
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(err("only 8-bit (maxval 255) files are supported"));
    }
    let mut bytes = vec![0u8; w * h * channels];
    input.read_exact(&mut bytes).map_err(|_| err("truncated pixel data"))?;
    Ok((w, h, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_is_quantized() {
        let mut img = Image::new(3, 2);
        img.set_pixel(0, 0, [1.0, 0.5, 0.0]);
        img.set_pixel(2, 1, [0.2, 0.9, 1.0]);
        let mut bytes = Vec::new();
        img.write_ppm(&mut bytes).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 18);
        let back = Image::read_ppm(&mut &bytes[..]).unwrap();
        assert_eq!(back, img.quantized());
        assert!(back.max_abs_diff(&img).unwrap() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn pgm_roundtrip_with_comment() {
        let mut m = Mask::new(4, 3);
        m.set(1, 2, true);
        m.set(3, 0, true);
        let mut bytes = Vec::new();
        m.write_pgm(&mut bytes).unwrap();
        assert_eq!(Mask::read_pgm(&mut &bytes[..]).unwrap(), m);
        let commented = b"P5\n# hello\n2 1\n255\n\x00\x07";
        let m2 = Mask::read_pgm(&mut &commented[..]).unwrap();
        assert_eq!(m2.data, vec![false, true]);
    }

    #[test]
    fn malformed_headers() {
        assert!(Image::read_ppm(&mut &b"P5\n1 1\n255\n\x00"[..]).is_err());
        assert!(Image::read_ppm(&mut &b"P6\n2 2\n255\n\x00"[..]).is_err());
        assert!(Image::read_ppm(&mut &b"P6\n1 1\n65535\n\x00\x00"[..]).is_err());
    }
}
