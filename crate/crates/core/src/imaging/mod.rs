//! Synthetic absorption images and the mask-sweep bimodal fit.
//!
//! Fits work in pixel units with coordinates measured from an integer
//! reference pixel near the cloud centroid, so results do not depend on where
//! the cloud sits on the grid.
//!
//! ## File format
//!
//! Binary (little-endian): the 8-byte magic `EVTIMG01`, then `nx: u32`,
//! `ny: u32`, `pixel_size_um: f64`, `sigma_abs_um2: f64`, then `nx·ny` `f64`
//! optical depths in row-major order (x fastest).
//!
//! Text: a first line `# evaptwin-image v1`, a header line
//! `nx ny pixel_size_um sigma_abs_um2`, then `ny` lines of `nx`
//! whitespace-separated optical depths.

mod fit;
pub mod lm;
mod synth;

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{
    fit_bimodal, fit_thermal_masked, mask_sweep, select_mask_size, select_mask_size_with, sweep_csv, BimodalFitResult, FitConfig,
    GaussianFit, MaskSpec, SweepPoint, ThomasFermiFit, subtract, DEFAULT_S_GRID, TF_COLUMN_INTEGRAL,
};
pub use synth::{synthesize, ImageTruth, ImagingParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("only {available} usable pixels, need at least {required}")]
    TooFewPixels { available: usize, required: usize },
    #[error("fit did not converge in {iterations} iterations (last iterate {last:?})")]
    NoConvergence { iterations: usize, last: Vec<f64> },
    #[error("fit produced non-finite values")]
    NonFinite,
    #[error("thermal width never stopped changing with the mask size; image is unfit for a bimodal fit")]
    Plateau { sweep: Vec<(f64, f64)> },
    #[error("image geometry: {0}")]
    Geometry(String),
    #[error("invalid fit input: {0}")]
    Invalid(String),
}

/// Optical-depth grid, row-major with x varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionImage {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size_um: f64,
    pub sigma_abs_um2: f64,
    pub data: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"EVTIMG01";
const TEXT_MAGIC: &str = "# evaptwin-image v1";

impl AbsorptionImage {
    pub fn new(nx: usize, ny: usize, pixel_size_um: f64, sigma_abs_um2: f64, data: Vec<f64>) -> Result<Self, FitError> {
        let img = Self {
            nx,
            ny,
            pixel_size_um,
            sigma_abs_um2,
            data,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn zeros(nx: usize, ny: usize, pixel_size_um: f64, sigma_abs_um2: f64) -> Self {
        Self {
            nx,
            ny,
            pixel_size_um,
            sigma_abs_um2,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.nx == 0 || self.ny == 0 || self.data.len() != self.nx * self.ny {
            return Err(FitError::Geometry(format!(
                "{}×{} grid with {} values",
                self.nx,
                self.ny,
                self.data.len()
            )));
        }
        if !(self.pixel_size_um > 0.0 && self.pixel_size_um.is_finite()) {
            return Err(FitError::Invalid(format!("pixel size {}", self.pixel_size_um)));
        }
        if !(self.sigma_abs_um2 > 0.0 && self.sigma_abs_um2.is_finite()) {
            return Err(FitError::Invalid(format!("absorption cross-section {}", self.sigma_abs_um2)));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        Ok(())
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.nx + ix]
    }

    /// Atoms per unit optical depth in one pixel.
    pub fn pixel_to_atoms(&self) -> f64 {
        self.pixel_size_um * self.pixel_size_um / self.sigma_abs_um2
    }

    pub fn total_atoms(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.pixel_to_atoms()
    }

    /// Shifts the content by whole pixels, filling vacated pixels with `fill`.
    pub fn translated(&self, dx: isize, dy: isize, fill: f64) -> Self {
        let mut out = Self {
            data: vec![fill; self.data.len()],
            ..self.clone()
        };
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let (sx, sy) = (ix as isize - dx, iy as isize - dy);
                if sx >= 0 && sy >= 0 && (sx as usize) < self.nx && (sy as usize) < self.ny {
                    out.data[iy * self.nx + ix] = self.get(sx as usize, sy as usize);
                }
            }
        }
        out
    }

    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.nx as u32).to_le_bytes())?;
        w.write_all(&(self.ny as u32).to_le_bytes())?;
        w.write_all(&self.pixel_size_um.to_le_bytes())?;
        w.write_all(&self.sigma_abs_um2.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{TEXT_MAGIC}")?;
        writeln!(w, "{} {} {:?} {:?}", self.nx, self.ny, self.pixel_size_um, self.sigma_abs_um2)?;
        for row in self.data.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads either format, detected from the leading bytes.
    pub fn read(r: &mut impl Read) -> Result<Self, ImageFormatError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.starts_with(MAGIC) {
            Self::parse_binary(&bytes)
        } else if bytes.starts_with(TEXT_MAGIC.as_bytes()) {
            Self::parse_text(&bytes)
        } else {
            Err(ImageFormatError::Format("unrecognised image header".into()))
        }
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| crate::Error::io(path, e))?;
        Self::read(&mut f).map_err(|e| match e {
            ImageFormatError::Io(source) => crate::Error::io(path, source),
            other => crate::Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, other.to_string()),
            ),
        })
    }

    /// Writes binary unless the extension is `.txt`.
    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let mut buf = Vec::new();
        if path.extension().is_some_and(|e| e == "txt") {
            self.write_text(&mut buf)
        } else {
            self.write_binary(&mut buf)
        }
        .map_err(|e| crate::Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| crate::Error::io(path, e))
    }

    fn parse_binary(bytes: &[u8]) -> Result<Self, ImageFormatError> {
        let short = || ImageFormatError::Format("truncated binary image".into());
        let u32_at = |o: usize| -> Result<u32, ImageFormatError> {
            Ok(u32::from_le_bytes(bytes.get(o..o + 4).ok_or_else(short)?.try_into().unwrap()))
        };
        let f64_at = |o: usize| -> Result<f64, ImageFormatError> {
            Ok(f64::from_le_bytes(bytes.get(o..o + 8).ok_or_else(short)?.try_into().unwrap()))
        };
        let nx = u32_at(8)? as usize;
        let ny = u32_at(12)? as usize;
        let pixel = f64_at(16)?;
        let sigma = f64_at(24)?;
        let n = nx.checked_mul(ny).ok_or_else(short)?;
        if bytes.len() != 32 + 8 * n {
            return Err(ImageFormatError::Format(format!(
                "expected {} bytes for a {nx}×{ny} image, found {}",
                32 + 8 * n,
                bytes.len()
            )));
        }
        let data = (0..n).map(|i| f64_at(32 + 8 * i)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(nx, ny, pixel, sigma, data)?)
    }

    fn parse_text(bytes: &[u8]) -> Result<Self, ImageFormatError> {
        let mut lines = bytes.lines().enumerate().skip(1);
        let (_, header) = lines
            .next()
            .ok_or_else(|| ImageFormatError::Format("missing header line".into()))?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || ImageFormatError::Format(format!("line 2: bad header {header:?}"));
        if fields.len() != 4 {
            return Err(bad_header());
        }
        let nx: usize = fields[0].parse().map_err(|_| bad_header())?;
        let ny: usize = fields[1].parse().map_err(|_| bad_header())?;
        let pixel: f64 = fields[2].parse().map_err(|_| bad_header())?;
        let sigma: f64 = fields[3].parse().map_err(|_| bad_header())?;
        let mut data = Vec::with_capacity(nx * ny);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| ImageFormatError::Format(format!("line {}: bad value {tok:?}", i + 1)))?;
                data.push(v);
            }
        }
        Ok(Self::new(nx, ny, pixel, sigma, data)?)
    }
}

#[derive(Debug, Error)]
pub enum ImageFormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Invalid(#[from] FitError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AbsorptionImage {
        let data = (0..12).map(|i| (i as f64 * 0.37).sin() * 1e-3 + 0.1 / 3.0).collect();
        AbsorptionImage::new(4, 3, 2.5, 0.0123, data).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let img = sample();
        let mut buf = Vec::new();
        img.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"EVTIMG01");
        assert_eq!(buf.len(), 32 + 8 * 12);
        assert_eq!(AbsorptionImage::read(&mut buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let img = sample();
        let mut buf = Vec::new();
        img.write_text(&mut buf).unwrap();
        assert_eq!(AbsorptionImage::read(&mut buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn malformed_files() {
        assert!(AbsorptionImage::read(&mut &b"hello"[..]).is_err());
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        buf.pop();
        assert!(AbsorptionImage::read(&mut buf.as_slice()).is_err());
        let text = "# evaptwin-image v1\n2 2 1.0 1.0\n1 2\n3 x\n";
        let err = AbsorptionImage::read(&mut text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(AbsorptionImage::new(1, 1, 1.0, 1.0, vec![f64::NAN]).is_err());
        assert!(AbsorptionImage::new(2, 1, 1.0, 1.0, vec![0.0]).is_err());
    }

    #[test]
    fn translation_moves_content() {
        let img = sample();
        let t = img.translated(1, 1, 0.0);
        assert_eq!(t.get(1, 1), img.get(0, 0));
        assert_eq!(t.get(0, 0), 0.0);
    }
}
