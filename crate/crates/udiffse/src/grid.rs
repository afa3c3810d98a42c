//! Flat binary grid dumps.
//!
//! An 8-byte header holds `F` and `T` as little-endian `u32`, followed by
//! `F * T` interleaved `(re, im)` pairs of little-endian `f32` in F-major
//! order. Real grids are written with zero imaginary parts.

use std::fs;
use std::path::Path;

use udiffse_core::{Complex64, ComplexSpectrogram, RealGrid};

use crate::error::{Error, Result};

pub fn encode_grid(spec: &ComplexSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * spec.len());
    out.extend_from_slice(&(spec.f_bins() as u32).to_le_bytes());
    out.extend_from_slice(&(spec.t_frames() as u32).to_le_bytes());
    for c in spec.iter() {
        out.extend_from_slice(&(c.re as f32).to_le_bytes());
        out.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> std::result::Result<ComplexSpectrogram, String> {
    let word = |i: usize| -> std::result::Result<[u8; 4], String> {
        bytes
            .get(i..i + 4)
            .map(|s| s.try_into().expect("four bytes"))
            .ok_or_else(|| "truncated grid".to_string())
    };
    let f = u32::from_le_bytes(word(0)?) as usize;
    let t = u32::from_le_bytes(word(4)?) as usize;
    if bytes.len() != 8 + 8 * f * t {
        return Err(format!("{f}x{t} grid needs {} bytes, file has {}", 8 + 8 * f * t, bytes.len()));
    }
    let data = (0..f * t)
        .map(|k| {
            let re = f32::from_le_bytes(word(8 + 8 * k)?);
            let im = f32::from_le_bytes(word(12 + 8 * k)?);
            Ok(Complex64::new(re as f64, im as f64))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    ComplexSpectrogram::from_vec(f, t, data).map_err(|e| e.to_string())
}

pub fn real_as_complex(grid: &RealGrid) -> ComplexSpectrogram {
    ComplexSpectrogram::from_fn(grid.f_bins(), grid.t_frames(), |f, t| Complex64::new(grid.get(f, t), 0.0))
}

pub fn write_grid(path: impl AsRef<Path>, spec: &ComplexSpectrogram) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<ComplexSpectrogram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes).map_err(|reason| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, reason)))
}
