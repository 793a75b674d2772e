//! 8-bit grayscale rasters, 3×3 block partitioning and center-value prediction.
//!
//! A grid is split into non-overlapping 3×3 blocks covering the largest
//! `⌊h/3⌋·3 × ⌊w/3⌋·3` sub-rectangle. Every non-center pixel of a block is
//! predicted by the block center, giving eight signed prediction errors per
//! block. Pixels outside full blocks (the residual) and the centers are never
//! modified by anything in this crate.

pub mod io;

use std::fmt;

use crate::error::{Error, Result};

/// Offsets of the eight predicted pixels inside a block, raster order
/// skipping the center.
pub const NEIGHBOR_OFFSETS: [(usize, usize); 8] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (1, 0),
    (1, 2),
    (2, 0),
    (2, 1),
    (2, 2),
];

/// Row-major 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        let expected = width * height;
        if pixels.len() != expected {
            return Err(Error::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    /// Width and height as 32-bit little-endian followed by the raw pixels.
    /// This is the byte string that gets hashed, independent of file format.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.pixels.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn same_dims(&self, other: &PixelGrid) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl fmt::Debug for PixelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PixelGrid")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// Tiling of a grid into full 3×3 blocks, in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPartition {
    width: usize,
    height: usize,
    blocks_x: usize,
    blocks_y: usize,
}

impl BlockPartition {
    pub fn for_dims(width: usize, height: usize) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::DimensionTooSmall { width, height });
        }
        Ok(Self {
            width,
            height,
            blocks_x: width / 3,
            blocks_y: height / 3,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn block_count(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    /// Number of predicted (non-center) pixels, i.e. the error-map length.
    pub fn predicted_count(&self) -> usize {
        self.block_count() * 8
    }

    /// Top-left corners of all blocks in raster order.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        (0..self.block_count()).map(|b| self.block_origin(b)).collect()
    }

    #[inline]
    pub fn block_origin(&self, block: usize) -> (usize, usize) {
        ((block / self.blocks_x) * 3, (block % self.blocks_x) * 3)
    }

    #[inline]
    pub fn center(&self, block: usize) -> (usize, usize) {
        let (r, c) = self.block_origin(block);
        (r + 1, c + 1)
    }

    /// Pixel coordinate of an error-map index.
    #[inline]
    pub fn position(&self, index: usize) -> (usize, usize) {
        let (r, c) = self.block_origin(index / 8);
        let (dr, dc) = NEIGHBOR_OFFSETS[index % 8];
        (r + dr, c + dc)
    }

    pub fn in_block(&self, row: usize, col: usize) -> bool {
        row < self.blocks_y * 3 && col < self.blocks_x * 3
    }

    /// Error-map index of a predicted pixel, `None` for centers and residual pixels.
    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        if !self.in_block(row, col) {
            return None;
        }
        let block = (row / 3) * self.blocks_x + col / 3;
        let k = NEIGHBOR_OFFSETS
            .iter()
            .position(|&o| o == (row % 3, col % 3))?;
        Some(block * 8 + k)
    }

    /// Coordinates outside every full block, raster order.
    pub fn residual(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                if !self.in_block(row, col) {
                    out.push((row, col));
                }
            }
        }
        out
    }
}

pub fn partition(grid: &PixelGrid) -> Result<BlockPartition> {
    BlockPartition::for_dims(grid.width(), grid.height())
}

/// Prediction-error frequency counts over `[-255, 255]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u32>,
}

impl Histogram {
    pub fn from_errors(errors: &[i16]) -> Self {
        let mut counts = vec![0u32; 511];
        for &e in errors {
            counts[(e + 255) as usize] += 1;
        }
        Self { counts }
    }

    pub fn count(&self, value: i16) -> u32 {
        if !(-255..=255).contains(&value) {
            return 0;
        }
        self.counts[(value + 255) as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// First empty bin strictly right of the peak at 0.
    pub fn zero_bin(&self) -> Option<i16> {
        (1..=255).find(|&v| self.count(v) == 0)
    }

    /// `(value, count)` for every non-empty bin, ascending by value.
    pub fn nonzero(&self) -> impl Iterator<Item = (i16, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as i16 - 255, c))
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (v, c) in self.nonzero() {
            out.push_str(&format!("{v},{c}\n"));
        }
        out
    }
}

impl fmt::Debug for Histogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.nonzero()).finish()
    }
}

/// Per-block prediction errors plus the untouched centers.
///
/// `errors` holds eight entries per block in [`NEIGHBOR_OFFSETS`] order.
/// `zero_bin` is the shift bound `a` the map was built with; it travels with
/// the map through shifting and embedding so recovery knows what to undo.
#[derive(Clone, PartialEq, Eq)]
pub struct PredictionErrorMap {
    partition: BlockPartition,
    errors: Vec<i16>,
    centers: Vec<u8>,
    zero_bin: Option<i16>,
}

impl PredictionErrorMap {
    pub fn from_parts(partition: BlockPartition, errors: Vec<i16>, centers: Vec<u8>) -> Result<Self> {
        if errors.len() != partition.predicted_count() {
            return Err(Error::BufferSize {
                expected: partition.predicted_count(),
                actual: errors.len(),
            });
        }
        if centers.len() != partition.block_count() {
            return Err(Error::BufferSize {
                expected: partition.block_count(),
                actual: centers.len(),
            });
        }
        if let Some(&e) = errors.iter().find(|e| !(-255..=255).contains(*e)) {
            return Err(Error::Malformed(format!("prediction error {e} outside [-255, 255]")));
        }
        let zero_bin = Histogram::from_errors(&errors).zero_bin();
        Ok(Self {
            partition,
            errors,
            centers,
            zero_bin,
        })
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn errors(&self) -> &[i16] {
        &self.errors
    }

    pub(crate) fn errors_mut(&mut self) -> &mut [i16] {
        &mut self.errors
    }

    pub fn centers(&self) -> &[u8] {
        &self.centers
    }

    pub fn zero_bin(&self) -> Option<i16> {
        self.zero_bin
    }

    /// Replaces the recorded shift bound, used by a receiver that learned `a`
    /// from the embedded header rather than from the (already shifted) map.
    pub fn with_zero_bin(mut self, zero_bin: i16) -> Self {
        self.zero_bin = Some(zero_bin);
        self
    }

    pub fn histogram(&self) -> Histogram {
        Histogram::from_errors(&self.errors)
    }
}

impl fmt::Debug for PredictionErrorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredictionErrorMap")
            .field("partition", &self.partition)
            .field("zero_bin", &self.zero_bin)
            .finish_non_exhaustive()
    }
}

pub fn predict_errors(grid: &PixelGrid, part: &BlockPartition) -> Result<PredictionErrorMap> {
    if part.width() != grid.width() || part.height() != grid.height() {
        return Err(Error::Shape {
            expected: vec![part.height(), part.width()],
            actual: vec![grid.height(), grid.width()],
        });
    }
    let mut errors = Vec::with_capacity(part.predicted_count());
    let mut centers = Vec::with_capacity(part.block_count());
    for block in 0..part.block_count() {
        let (r, c) = part.block_origin(block);
        let center = grid.get(r + 1, c + 1);
        centers.push(center);
        for (dr, dc) in NEIGHBOR_OFFSETS {
            errors.push(grid.get(r + dr, c + dc) as i16 - center as i16);
        }
    }
    PredictionErrorMap::from_parts(*part, errors, centers)
}

/// Adds the errors back onto the block centers. Residual pixels come from `base`.
pub fn reconstruct_pixels(map: &PredictionErrorMap, base: &PixelGrid) -> Result<PixelGrid> {
    let part = map.partition();
    if part.width() != base.width() || part.height() != base.height() {
        return Err(Error::Shape {
            expected: vec![part.height(), part.width()],
            actual: vec![base.height(), base.width()],
        });
    }
    let mut out = base.clone();
    for block in 0..part.block_count() {
        let (r, c) = part.block_origin(block);
        let center = map.centers()[block];
        out.set(r + 1, c + 1, center);
        for (k, (dr, dc)) in NEIGHBOR_OFFSETS.into_iter().enumerate() {
            let value = center as i32 + map.errors()[block * 8 + k] as i32;
            if !(0..=255).contains(&value) {
                return Err(Error::OutOfRange {
                    row: r + dr,
                    col: c + dc,
                    value,
                });
            }
            out.set(r + dr, c + dc, value as u8);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_3x3(rows: [[u8; 3]; 3]) -> PixelGrid {
        PixelGrid::new(3, 3, rows.concat()).unwrap()
    }

    #[test]
    fn partition_counts() {
        let p = BlockPartition::for_dims(3, 3).unwrap();
        assert_eq!(p.block_count(), 1);
        assert!(p.residual().is_empty());

        // 7 rows by 8 columns
        let p = BlockPartition::for_dims(8, 7).unwrap();
        assert_eq!(p.block_count(), 4);
        assert_eq!(p.residual().len(), 20);

        assert!(matches!(
            BlockPartition::for_dims(2, 9),
            Err(Error::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn partition_256_matches_enumeration() {
        let p = BlockPartition::for_dims(256, 256).unwrap();
        let mut full = 0;
        for r in (0..256).step_by(3) {
            for c in (0..256).step_by(3) {
                if r + 3 <= 256 && c + 3 <= 256 {
                    full += 1;
                }
            }
        }
        assert_eq!(full, 7225);
        assert_eq!(p.block_count(), full);
        assert_eq!(p.blocks().len(), full);
    }

    #[test]
    fn constant_block_has_zero_errors() {
        let g = PixelGrid::filled(3, 3, 12);
        let m = predict_errors(&g, &partition(&g).unwrap()).unwrap();
        assert_eq!(m.errors(), &[0; 8]);
        assert_eq!(m.centers(), &[12]);
        assert_eq!(m.zero_bin(), Some(1));
    }

    #[test]
    fn worked_block_errors() {
        let g = grid_3x3([[10, 12, 11], [13, 12, 14], [11, 10, 12]]);
        let m = predict_errors(&g, &partition(&g).unwrap()).unwrap();
        assert_eq!(m.errors(), &[-2, 0, -1, 1, 2, -1, -2, 0]);
        assert_eq!(m.centers(), &[12]);
        // H(1) = 1, H(2) = 1, H(3) = 0
        assert_eq!(m.zero_bin(), Some(3));
    }

    #[test]
    fn reconstruct_constant_blocks() {
        let part = BlockPartition::for_dims(6, 3).unwrap();
        let m = PredictionErrorMap::from_parts(part, vec![0; 16], vec![40, 200]).unwrap();
        let base = PixelGrid::filled(6, 3, 0);
        let g = reconstruct_pixels(&m, &base).unwrap();
        assert_eq!(g.pixels(), &[40, 40, 40, 200, 200, 200, 40, 40, 40, 200, 200, 200, 40, 40, 40, 200, 200, 200]);
    }

    #[test]
    fn reconstruct_rejects_overflow() {
        let part = BlockPartition::for_dims(3, 3).unwrap();
        let mut errors = vec![0; 8];
        errors[3] = 1;
        let m = PredictionErrorMap::from_parts(part, errors, vec![255]).unwrap();
        let err = reconstruct_pixels(&m, &PixelGrid::filled(3, 3, 255)).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { row: 1, col: 0, value: 256 }));
    }

    #[test]
    fn index_and_position_agree() {
        let p = BlockPartition::for_dims(10, 7).unwrap();
        for i in 0..p.predicted_count() {
            let (r, c) = p.position(i);
            assert_eq!(p.index_of(r, c), Some(i));
        }
        assert_eq!(p.index_of(1, 1), None);
        assert_eq!(p.index_of(6, 0), None);
    }

    #[test]
    fn histogram_sums_to_eight_per_block() {
        let g = PixelGrid::from_fn(20, 14, |r, c| ((r * 7 + c * 13) % 256) as u8);
        let m = predict_errors(&g, &partition(&g).unwrap()).unwrap();
        assert_eq!(m.histogram().total(), 8 * m.partition().block_count() as u64);
    }

    #[test]
    fn no_zero_bin_when_every_positive_error_occurs() {
        // 255 blocks; block k has one pixel with error k+1, so bins 1..=255 are all hit.
        let part = BlockPartition::for_dims(3 * 255, 3).unwrap();
        let mut errors = vec![0i16; part.predicted_count()];
        for k in 0..255 {
            errors[k * 8] = k as i16 + 1;
        }
        let m = PredictionErrorMap::from_parts(part, errors, vec![0; 255]).unwrap();
        assert_eq!(m.zero_bin(), None);
    }
}
