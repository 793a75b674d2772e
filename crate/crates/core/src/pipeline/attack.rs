//! Substitution-attack simulation.

use serde::Serialize;

use super::Scheme;
use crate::error::{Error, Result};
use crate::integrity::{verify, Verdict};
use crate::raster::PixelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    pub verdict: Verdict,
    /// The receiver refused the replacement.
    pub detected: bool,
    pub changed_pixels: usize,
}

/// Delivers `replacement` in place of `stego` and records what the receiver
/// concludes about it.
pub fn substitution_attack(stego: &PixelGrid, replacement: &PixelGrid, scheme: &Scheme) -> Result<AttackReport> {
    if !stego.same_dims(replacement) {
        return Err(Error::Shape {
            expected: vec![stego.height(), stego.width()],
            actual: vec![replacement.height(), replacement.width()],
        });
    }
    let changed_pixels = stego
        .pixels()
        .iter()
        .zip(replacement.pixels())
        .filter(|(a, b)| a != b)
        .count();
    let verdict = verify(replacement, scheme);
    Ok(AttackReport {
        verdict,
        detected: !verdict.is_authentic(),
        changed_pixels,
    })
}

/// Copy of `grid` with one pixel moved by one gray level (down at 255).
pub fn single_pixel_tamper(grid: &PixelGrid, row: usize, col: usize) -> PixelGrid {
    let mut out = grid.clone();
    let v = out.get(row, col);
    out.set(row, col, if v == 255 { 254 } else { v + 1 });
    out
}
