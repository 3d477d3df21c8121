//! Binary PGM (P5) writers for frames, average maps and heatmaps.

use std::fs;
use std::path::Path;

use super::Result;

/// 16-bit PGM, big-endian samples as the format requires.
pub fn encode_pgm16(width: usize, height: usize, maxval: u16, data: &[u16]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pgm data size mismatch");
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.reserve(data.len() * 2);
    for &v in data {
        out.extend_from_slice(&v.min(maxval).to_be_bytes());
    }
    out
}

pub fn encode_pgm8(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pgm data size mismatch");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn write_pgm16(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    maxval: u16,
    data: &[u16],
) -> Result<()> {
    fs::write(path, encode_pgm16(width, height, maxval, data))?;
    Ok(())
}

/// Real-valued map rescaled linearly so that its maximum maps to 65535.
pub fn write_pgm16_scaled(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    data: &[f64],
) -> Result<()> {
    let max = data.iter().copied().fold(0.0_f64, f64::max);
    let scaled: Vec<u16> = data
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v.max(0.0) / max * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    write_pgm16(path, width, height, u16::MAX, &scaled)
}
