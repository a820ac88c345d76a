//! 8-bit raster images and binary PNM (P5/P6) codecs.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    /// 1 (gray) or 3 (RGB).
    pub channels: u8,
    /// Row-major, interleaved channels.
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::Format(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, channels, pixels })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![value; width as usize * height as usize * channels as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        self.pixels[(y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize]
    }

    /// Luminance plane as f64 (0.299 R + 0.587 G + 0.114 B for color input).
    pub fn luminance(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| f64::from(p)).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|c| 0.299 * f64::from(c[0]) + 0.587 * f64::from(c[1]) + 0.114 * f64::from(c[2]))
                .collect(),
        }
    }

    /// Bilinear sample of channel `c` with edge clamping.
    pub fn sample(&self, x: f64, y: f64, c: u8) -> f64 {
        let ch = self.channels as usize;
        bilinear_clamped(self.width as usize, self.height as usize, x, y, |idx| {
            f64::from(self.pixels[idx * ch + c as usize])
        })
    }

    pub fn read_pnm<R: Read>(mut reader: R) -> Result<Self> {
        let mut data = Vec::new();
        reader.read_to_end(&mut data)?;
        decode_pnm(&data)
    }

    pub fn write_pnm<W: Write>(&self, mut writer: W) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(writer, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        writer.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_pnm(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_pnm(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Bilinear interpolation over a `width x height` grid, coordinates clamped
/// to `[0, width-1] x [0, height-1]`. `at` maps a flat pixel index to its value.
pub(crate) fn bilinear_clamped(
    width: usize,
    height: usize,
    x: f64,
    y: f64,
    at: impl Fn(usize) -> f64,
) -> f64 {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let top = at(y0 * width + x0) * (1.0 - fx) + at(y0 * width + x1) * fx;
    let bot = at(y1 * width + x0) * (1.0 - fx) + at(y1 * width + x1) * fx;
    top * (1.0 - fy) + bot * fy
}

fn decode_pnm(data: &[u8]) -> Result<RasterImage> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PNM header".into()));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic {other:?}"))),
    };
    let parse = |s: String, what: &str| -> Result<u32> {
        s.parse::<u32>()
            .map_err(|_| Error::Format(format!("bad PNM {what}: {s:?}")))
    };
    let width = parse(token()?, "width")?;
    let height = parse(token()?, "height")?;
    let maxval = parse(token()?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit PNM supported, maxval={maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width as usize * height as usize * channels as usize;
    if data.len() < pos + n {
        return Err(Error::Format("truncated PNM raster".into()));
    }
    RasterImage::new(width, height, channels, data[pos..pos + n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip() {
        let img = RasterImage::new(3, 2, 3, (0..18).collect()).unwrap();
        let mut buf = Vec::new();
        img.write_pnm(&mut buf).unwrap();
        assert_eq!(RasterImage::read_pnm(&buf[..]).unwrap(), img);

        let gray = RasterImage::new(4, 1, 1, vec![1, 2, 3, 250]).unwrap();
        let mut buf = Vec::new();
        gray.write_pnm(&mut buf).unwrap();
        assert_eq!(RasterImage::read_pnm(&buf[..]).unwrap(), gray);
    }

    #[test]
    fn pnm_header_comments() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[9, 10]);
        let img = RasterImage::read_pnm(&data[..]).unwrap();
        assert_eq!(img.pixels, vec![9, 10]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RasterImage::read_pnm(&b"P3\n1 1\n255\n"[..]).is_err());
        assert!(RasterImage::read_pnm(&b"P5\n2 2\n255\n\x01"[..]).is_err());
        assert!(RasterImage::new(2, 2, 1, vec![0; 3]).is_err());
    }

    #[test]
    fn bilinear_sampling() {
        let img = RasterImage::new(2, 2, 1, vec![0, 100, 200, 250]).unwrap();
        assert_eq!(img.sample(0.5, 0.0, 0), 50.0);
        assert_eq!(img.sample(0.5, 0.5, 0), 137.5);
        assert_eq!(img.sample(-3.0, 9.0, 0), 200.0);
    }

    #[test]
    fn luminance_weights() {
        let img = RasterImage::new(1, 1, 3, vec![100, 200, 50]).unwrap();
        let l = img.luminance()[0];
        assert!((l - (29.9 + 117.4 + 5.7)).abs() < 1e-9);
    }
}
