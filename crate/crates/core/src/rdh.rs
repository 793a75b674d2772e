//! Reversible data hiding by prediction-error histogram shifting.
//!
//! Errors in `(0, a)` move right by one, which empties bin 1. Each selected
//! zero-error position then carries one bit: it stays 0 for a `0` and becomes
//! 1 for a `1`. Which zero-error positions get selected depends on the
//! [`Strategy`]: all of them in order, or one per window of five picked by a
//! chaotic sequence.

use crate::chaos::{JumpPositions, RealKey, JUMP_STRIDE};
use crate::error::{Error, Result};
use crate::raster::{BlockPartition, PixelGrid, PredictionErrorMap};

/// Ordered bit sequence; byte conversions are MSB first.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitPayload {
    bits: Vec<bool>,
}

impl BitPayload {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        let bits = bytes
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
            .collect();
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    /// Packs into bytes; fails unless the length is a whole number of bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.bits.len().is_multiple_of(8) {
            return Err(Error::Malformed(format!(
                "{} bits is not a whole number of bytes",
                self.bits.len()
            )));
        }
        Ok(self
            .bits
            .chunks(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
            .collect())
    }
}

impl std::fmt::Debug for BitPayload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: String = self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        write!(f, "BitPayload({s})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Cdjb,
}

impl Mode {
    /// Eligible positions consumed per payload bit.
    pub fn window(self) -> usize {
        match self {
            Mode::Sequential => 1,
            Mode::Cdjb => JUMP_STRIDE,
        }
    }
}

/// How payload bits are assigned to eligible positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    Jump(RealKey),
}

impl Strategy {
    pub fn mode(&self) -> Mode {
        match self {
            Strategy::Sequential => Mode::Sequential,
            Strategy::Jump(_) => Mode::Cdjb,
        }
    }
}

/// Non-center positions with `e == 0`, as error-map indices in map order.
pub fn eligible_positions(map: &PredictionErrorMap) -> Vec<usize> {
    positions_where(map, |e| e == 0)
}

/// Eligible positions as seen by a receiver: after shifting, bin 1 only holds
/// embedded ones, so `e ∈ {0, 1}` identifies the sender's zero set.
pub fn stego_eligible_positions(map: &PredictionErrorMap) -> Vec<usize> {
    positions_where(map, |e| e == 0 || e == 1)
}

fn positions_where(map: &PredictionErrorMap, pred: impl Fn(i16) -> bool) -> Vec<usize> {
    map.errors()
        .iter()
        .enumerate()
        .filter(|(_, &e)| pred(e))
        .map(|(i, _)| i)
        .collect()
}

/// Eligible and selected positions for one embedding or extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionPlan {
    eligible: Vec<usize>,
    selected: Vec<usize>,
    window: usize,
}

impl PositionPlan {
    /// Selects `count` positions out of `eligible` (error-map indices in order).
    pub fn new(eligible: Vec<usize>, strategy: &Strategy, count: usize) -> Result<Self> {
        let window = strategy.mode().window();
        let required = count * window;
        if required > eligible.len() {
            return Err(Error::CapacityExceeded {
                required,
                available: eligible.len(),
            });
        }
        let selected = match strategy {
            Strategy::Sequential => eligible[..count].to_vec(),
            Strategy::Jump(key) => JumpPositions::new(key)
                .take(count)
                .map(|p| eligible[p - 1])
                .collect(),
        };
        Ok(Self {
            eligible,
            selected,
            window,
        })
    }

    /// Plan over a cover map's zero-error positions.
    pub fn for_cover(map: &PredictionErrorMap, strategy: &Strategy, count: usize) -> Result<Self> {
        Self::new(eligible_positions(map), strategy, count)
    }

    /// Plan over a stego map, eligible meaning `e ∈ {0, 1}`.
    pub fn for_stego(map: &PredictionErrorMap, strategy: &Strategy, count: usize) -> Result<Self> {
        Self::new(stego_eligible_positions(map), strategy, count)
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Eligible positions this plan consumes, `window × bits`.
    pub fn required(&self) -> usize {
        self.selected.len() * self.window
    }

    /// Indices into `eligible` of the selected positions.
    pub fn selected_ranks(&self) -> Vec<usize> {
        let mut ranks = Vec::with_capacity(self.selected.len());
        let mut j = 0;
        for &s in &self.selected {
            while self.eligible[j] != s {
                j += 1;
            }
            ranks.push(j);
        }
        ranks
    }
}

/// Payload bits a map can carry in the given mode.
pub fn capacity(map: &PredictionErrorMap, mode: Mode) -> usize {
    eligible_positions(map).len() / mode.window()
}

/// Moves every error in `(0, a)` to `e + 1`.
pub fn shift_histogram(map: &PredictionErrorMap) -> Result<PredictionErrorMap> {
    let a = map.zero_bin().ok_or(Error::NoZeroBin)?;
    let mut out = map.clone();
    for e in out.errors_mut().iter_mut() {
        if *e > 0 && *e < a {
            *e += 1;
        }
    }
    Ok(out)
}

/// Writes payload bit `i` at selected position `i` of a shifted map.
pub fn embed(map: &PredictionErrorMap, payload: &BitPayload, plan: &PositionPlan) -> Result<PredictionErrorMap> {
    if payload.len() > plan.selected().len() {
        return Err(Error::CapacityExceeded {
            required: payload.len() * plan.window(),
            available: plan.eligible().len(),
        });
    }
    let mut out = map.clone();
    let errors = out.errors_mut();
    for (&pos, &bit) in plan.selected().iter().zip(payload.bits()) {
        if errors[pos] != 0 {
            return Err(Error::Malformed(format!(
                "position {pos} holds error {} instead of 0",
                errors[pos]
            )));
        }
        errors[pos] = bit as i16;
    }
    Ok(out)
}

/// Reads one bit per selected position and resets those positions to 0.
pub fn extract(map: &PredictionErrorMap, plan: &PositionPlan) -> Result<(BitPayload, PredictionErrorMap)> {
    let mut out = map.clone();
    let errors = out.errors_mut();
    let mut bits = Vec::with_capacity(plan.selected().len());
    for &pos in plan.selected() {
        match errors[pos] {
            0 => bits.push(false),
            1 => {
                bits.push(true);
                errors[pos] = 0;
            }
            e => {
                return Err(Error::Malformed(format!(
                    "selected position {pos} holds error {e}, expected 0 or 1"
                )))
            }
        }
    }
    Ok((BitPayload::from_bits(bits), out))
}

/// Undoes [`shift_histogram`] once data bits are gone: `e' ∈ [2, a]` maps to `e' − 1`.
pub fn unshift_histogram(map: &PredictionErrorMap) -> Result<PredictionErrorMap> {
    let a = map.zero_bin().ok_or(Error::NoZeroBin)?;
    let mut out = map.clone();
    for e in out.errors_mut().iter_mut() {
        if *e >= 2 && *e <= a {
            *e -= 1;
        }
    }
    Ok(out)
}

/// Pixels that were lowered from 255 to 254 before embedding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocationMap {
    saturated: Vec<(usize, usize)>,
}

impl LocationMap {
    pub fn saturated(&self) -> &[(usize, usize)] {
        &self.saturated
    }

    pub fn len(&self) -> usize {
        self.saturated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.saturated.is_empty()
    }

    /// LEB128 count followed by LEB128 gaps between raster indices.
    pub fn encode(&self, width: usize) -> Vec<u8> {
        let mut out = Vec::new();
        write_varint(&mut out, self.saturated.len() as u64);
        let mut prev: Option<usize> = None;
        for &(r, c) in &self.saturated {
            let idx = r * width + c;
            let gap = match prev {
                None => idx,
                Some(p) => idx - p - 1,
            };
            write_varint(&mut out, gap as u64);
            prev = Some(idx);
        }
        out
    }

    /// Decodes from the front of `bytes`, returning the map and bytes consumed.
    pub fn decode(bytes: &[u8], width: usize, height: usize) -> Result<(Self, usize)> {
        let mut pos = 0;
        let count = read_varint(bytes, &mut pos)? as usize;
        if count > width * height {
            return Err(Error::Malformed(format!("location map claims {count} entries")));
        }
        let mut saturated = Vec::with_capacity(count);
        let mut next = 0usize;
        for _ in 0..count {
            let gap = read_varint(bytes, &mut pos)? as usize;
            let idx = next
                .checked_add(gap)
                .filter(|&i| i < width * height)
                .ok_or_else(|| Error::Malformed("location map index out of bounds".into()))?;
            saturated.push((idx / width, idx % width));
            next = idx + 1;
        }
        Ok((Self { saturated }, pos))
    }
}

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let byte = *bytes
            .get(*pos)
            .ok_or_else(|| Error::Malformed("truncated location map".into()))?;
        *pos += 1;
        v |= ((byte & 0x7f) as u64) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::Malformed("location map varint too long".into()))
}

/// Lowers every predicted (non-center block) pixel equal to 255 to 254, so
/// that the +1 of shifting or embedding can never overflow. Centers and
/// residual pixels are never changed and need no flattening.
pub fn flatten_saturated(grid: &PixelGrid) -> Result<(PixelGrid, LocationMap)> {
    let part = BlockPartition::for_dims(grid.width(), grid.height())?;
    let mut out = grid.clone();
    let mut saturated = Vec::new();
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            if grid.get(row, col) == 255 && part.index_of(row, col).is_some() {
                out.set(row, col, 254);
                saturated.push((row, col));
            }
        }
    }
    Ok((out, LocationMap { saturated }))
}

pub fn unflatten(grid: &PixelGrid, map: &LocationMap) -> Result<PixelGrid> {
    let mut out = grid.clone();
    for &(row, col) in map.saturated() {
        if row >= grid.height() || col >= grid.width() || grid.get(row, col) != 254 {
            return Err(Error::Malformed(format!(
                "location map entry ({row}, {col}) does not hold 254"
            )));
        }
        out.set(row, col, 255);
    }
    Ok(out)
}
