//! Piecewise logistic map, keyed jump positions and the 102-bit real-key codec.
//!
//! The map is iterated in decimal fixed point (16 fractional digits, every
//! product rounded half-to-even) so that sender and receiver derive identical
//! sequences regardless of platform floating-point behavior.
//!
//! ```text
//! a' = 4μ·a·(0.5 − a)                   0 < a < 0.5
//! a' = 1 − 4μ·a·(a − 0.5)·(1 − a)       0.5 ≤ a < 1
//! ```
//!
//! Embedding position `i` (1-based) is `5(i−1) + ⌈5·a_i⌉`, so exactly one
//! position lands in each disjoint window of five eligible slots.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// 10^16, the fixed-point denominator.
pub const SCALE: u64 = 10_000_000_000_000_000;
const HALF: u64 = SCALE / 2;

/// Eligible positions consumed per embedded bit in jump mode.
pub const JUMP_STRIDE: usize = 5;

/// Bits in a real-key codeword, `⌈log2(4·10^30)⌉`.
pub const KEY_BITS: u32 = 102;

/// Number of distinct real keys: 4 choices for μ's first decimal, 14 free μ
/// digits and 16 a₀ digits.
pub const KEY_SPACE: u128 = 4 * 10u128.pow(30);

const MU_FRAC_DIGITS: u32 = 15;
const A0_FRAC_DIGITS: u32 = 16;
const MU_FRAC_MIN: u64 = 600_000_000_000_000;
const MU_FRAC_END: u64 = 1_000_000_000_000_000;

/// Non-negative decimal fixed-point number with 16 fractional digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed16(u64);

impl Fixed16 {
    pub const ONE: Fixed16 = Fixed16(SCALE);
    pub const HALF: Fixed16 = Fixed16(HALF);

    pub const fn from_raw(raw: u64) -> Self {
        Fixed16(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        (self.0 / SCALE) as f64 + (self.0 % SCALE) as f64 / SCALE as f64
    }

    /// Product rounded half-to-even to 16 fractional digits.
    pub fn mul_round(self, rhs: Fixed16) -> Fixed16 {
        let p = self.0 as u128 * rhs.0 as u128;
        let s = SCALE as u128;
        let (q, r) = (p / s, p % s);
        let q = match (2 * r).cmp(&s) {
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal if q % 2 == 1 => q + 1,
            _ => q,
        };
        Fixed16(q as u64)
    }

    /// `⌈k·self⌉` for a value in the unit interval.
    pub fn ceil_times(self, k: u64) -> u64 {
        (k * self.0).div_ceil(SCALE)
    }
}

impl fmt::Display for Fixed16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:016}", self.0 / SCALE, self.0 % SCALE)
    }
}

impl fmt::Debug for Fixed16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Fixed16 {
    type Err = Error;

    /// Parses `I.FFFF` with at most 16 fractional digits.
    fn from_str(s: &str) -> Result<Self> {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let bad = || Error::InvalidKey(format!("not a decimal with ≤16 fractional digits: {s:?}"));
        if int.is_empty()
            || frac.len() > 16
            || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let int: u64 = int.parse().map_err(|_| bad())?;
        let mut f: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        f *= 10u64.pow(16 - frac.len() as u32);
        int.checked_mul(SCALE)
            .and_then(|v| v.checked_add(f))
            .map(Fixed16)
            .ok_or_else(bad)
    }
}

/// Which form of the second map branch to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapVariant {
    /// `1 − 4μ·a·(a − 0.5)·(1 − a)`, stays inside the unit interval.
    #[default]
    Corrected,
    /// `1 − 4μ·a·(0.5 − a)·(1 − a)` as printed; any value that leaves
    /// `(0, 1)` is reported as an error.
    Verbatim,
}

fn check_mu(mu: Fixed16) -> Result<()> {
    // [3.6, 4)
    if mu.raw() < 36 * SCALE / 10 || mu.raw() >= 4 * SCALE {
        return Err(Error::ChaosDomain(format!("μ = {mu} outside [3.6, 4)")));
    }
    Ok(())
}

fn unit_step(a: Fixed16, four_mu: Fixed16, variant: MapVariant) -> Result<Fixed16> {
    let a_raw = a.raw();
    if a_raw < HALF {
        let v = four_mu.mul_round(a).mul_round(Fixed16(HALF - a_raw)).raw();
        return Ok(Fixed16(v.clamp(1, SCALE - 1)));
    }
    let g = four_mu.mul_round(a);
    match variant {
        MapVariant::Corrected => {
            let g = g.mul_round(Fixed16(a_raw - HALF)).mul_round(Fixed16(SCALE - a_raw)).raw();
            Ok(Fixed16((SCALE - g.min(SCALE)).clamp(1, SCALE - 1)))
        }
        MapVariant::Verbatim => {
            // 0.5 − a ≤ 0 here, so 1 − 4μa(0.5 − a)(1 − a) = 1 + 4μa(a − 0.5)(1 − a) ≥ 1.
            let g = g.mul_round(Fixed16(a_raw - HALF)).mul_round(Fixed16(SCALE - a_raw)).raw();
            Err(Error::ChaosDomain(format!(
                "verbatim branch maps a = {a} to {} (≥ 1)",
                Fixed16(SCALE + g)
            )))
        }
    }
}

/// One iteration of the piecewise logistic map.
pub fn next_value(a: Fixed16, mu: Fixed16, variant: MapVariant) -> Result<Fixed16> {
    if a.raw() == 0 || a.raw() >= SCALE {
        return Err(Error::ChaosDomain(format!("a = {a} outside (0, 1)")));
    }
    check_mu(mu)?;
    unit_step(a, Fixed16(4 * mu.raw()), variant)
}

/// `a_1, a_2, …` for a real key. No burn-in: `a_1 = f(a_0)`.
#[derive(Debug, Clone)]
pub struct ChaoticSequence {
    state: Fixed16,
    four_mu: Fixed16,
}

impl ChaoticSequence {
    pub fn new(key: &RealKey) -> Self {
        Self {
            state: key.a0(),
            four_mu: Fixed16(4 * key.mu().raw()),
        }
    }
}

impl Iterator for ChaoticSequence {
    type Item = Fixed16;

    fn next(&mut self) -> Option<Fixed16> {
        // Corrected branch never fails for a state inside (0, 1).
        self.state = unit_step(self.state, self.four_mu, MapVariant::Corrected)
            .expect("corrected map is closed on the unit interval");
        Some(self.state)
    }
}

/// Iterates `n` values from `a0` with the chosen variant, failing on the first
/// value that escapes the unit interval.
pub fn iterate(a0: Fixed16, mu: Fixed16, variant: MapVariant, n: usize) -> Result<Vec<Fixed16>> {
    let mut out = Vec::with_capacity(n);
    let mut a = a0;
    for _ in 0..n {
        a = next_value(a, mu, variant)?;
        out.push(a);
    }
    Ok(out)
}

/// Endless stream of 1-based jump positions `p_i = 5(i−1) + ⌈5·a_i⌉`.
#[derive(Debug, Clone)]
pub struct JumpPositions {
    seq: ChaoticSequence,
    index: usize,
}

impl JumpPositions {
    pub fn new(key: &RealKey) -> Self {
        Self {
            seq: ChaoticSequence::new(key),
            index: 0,
        }
    }
}

impl Iterator for JumpPositions {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let a = self.seq.next()?;
        let p = JUMP_STRIDE * self.index + a.ceil_times(JUMP_STRIDE as u64) as usize;
        self.index += 1;
        Some(p)
    }
}

pub fn jump_positions(key: &RealKey, count: usize) -> Vec<usize> {
    JumpPositions::new(key).take(count).collect()
}

/// The shared secret `(μ, a₀)`: μ with 15 decimals and first decimal in
/// 6..=9, a₀ in (0, 1) with 16 decimals.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RealKey {
    mu_frac: u64,
    a0_frac: u64,
}

impl RealKey {
    /// `mu_frac` are the 15 decimals after "3.", `a0_frac` the 16 after "0.".
    pub fn from_digits(mu_frac: u64, a0_frac: u64) -> Result<Self> {
        if !(MU_FRAC_MIN..MU_FRAC_END).contains(&mu_frac) {
            return Err(Error::InvalidKey(format!(
                "μ = 3.{mu_frac:015}: first decimal must be 6..=9"
            )));
        }
        if a0_frac == 0 || a0_frac >= SCALE {
            return Err(Error::InvalidKey(format!("a₀ = 0.{a0_frac:016} outside (0, 1)")));
        }
        Ok(Self { mu_frac, a0_frac })
    }

    /// Parses decimal strings such as `"3.799200023214331"` and `"0.8888564633215454"`.
    /// Shorter fractions are zero-padded; longer ones are rejected.
    pub fn parse(mu: &str, a0: &str) -> Result<Self> {
        let mu_frac = parse_fraction(mu, "3", MU_FRAC_DIGITS)?;
        let a0_frac = parse_fraction(a0, "0", A0_FRAC_DIGITS)?;
        Self::from_digits(mu_frac, a0_frac)
    }

    pub fn mu(&self) -> Fixed16 {
        Fixed16(3 * SCALE + self.mu_frac * 10)
    }

    pub fn a0(&self) -> Fixed16 {
        Fixed16(self.a0_frac)
    }

    pub fn mu_string(&self) -> String {
        format!("3.{:015}", self.mu_frac)
    }

    pub fn a0_string(&self) -> String {
        format!("0.{:016}", self.a0_frac)
    }

    pub fn encode(&self) -> KeyCodeword {
        let mu_index = (self.mu_frac - MU_FRAC_MIN) as u128;
        KeyCodeword(mu_index * SCALE as u128 + (self.a0_frac - 1) as u128)
    }

    pub fn decode(word: &KeyCodeword) -> Result<Self> {
        word.key()
    }

    /// Key-file line: `mu=<15 decimals>;a0=<16 decimals>`.
    pub fn to_line(&self) -> String {
        format!("mu={};a0={}", self.mu_string(), self.a0_string())
    }
}

fn parse_fraction(s: &str, int: &str, digits: u32) -> Result<u64> {
    let s = s.trim();
    let frac = s
        .strip_prefix(int)
        .and_then(|r| r.strip_prefix('.'))
        .ok_or_else(|| Error::InvalidKey(format!("expected {int}.<digits>, got {s:?}")))?;
    if frac.is_empty() || frac.len() > digits as usize || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::InvalidKey(format!(
            "expected at most {digits} decimal digits, got {s:?}"
        )));
    }
    let v: u64 = frac
        .parse()
        .map_err(|_| Error::InvalidKey(format!("bad digits in {s:?}")))?;
    Ok(v * 10u64.pow(digits - frac.len() as u32))
}

impl fmt::Debug for RealKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealKey(μ={}, a₀={})", self.mu_string(), self.a0_string())
    }
}

impl fmt::Display for RealKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

impl FromStr for RealKey {
    type Err = Error;

    /// Accepts the key-file line or a 26-character hex codeword.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('=') {
            let mut mu = None;
            let mut a0 = None;
            for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                match part.split_once('=') {
                    Some(("mu", v)) => mu = Some(v),
                    Some(("a0", v)) => a0 = Some(v),
                    _ => return Err(Error::InvalidKey(format!("unexpected field {part:?}"))),
                }
            }
            match (mu, a0) {
                (Some(mu), Some(a0)) => RealKey::parse(mu, a0),
                _ => Err(Error::InvalidKey("key line needs both mu= and a0=".into())),
            }
        } else {
            KeyCodeword::from_hex(s)?.key()
        }
    }
}

/// Mixed-radix index of a real key, always below `4·10^30 < 2^102`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyCodeword(u128);

impl KeyCodeword {
    pub fn from_value(value: u128) -> Result<Self> {
        if value >> KEY_BITS != 0 {
            return Err(Error::InvalidKey(format!("codeword wider than {KEY_BITS} bits")));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> u128 {
        self.0
    }

    /// The 102 bits, most significant first.
    pub fn bits(&self) -> Vec<bool> {
        (0..KEY_BITS).rev().map(|i| (self.0 >> i) & 1 == 1).collect()
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() != KEY_BITS as usize {
            return Err(Error::InvalidKey(format!(
                "codeword must have {KEY_BITS} bits, got {}",
                bits.len()
            )));
        }
        Ok(Self(bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128)))
    }

    /// 26 hex digits; the top two of the 104 bits are zero.
    pub fn to_hex(&self) -> String {
        format!("{:026x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != 26 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::InvalidKey(format!("expected 26 hex digits, got {s:?}")));
        }
        let v = u128::from_str_radix(s, 16).map_err(|e| Error::InvalidKey(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn key(&self) -> Result<RealKey> {
        if self.0 >= KEY_SPACE {
            return Err(Error::InvalidKey(format!(
                "codeword value {} is outside the key space (≥ 4·10^30)",
                self.0
            )));
        }
        let mu_index = (self.0 / SCALE as u128) as u64;
        let a0_index = (self.0 % SCALE as u128) as u64;
        RealKey::from_digits(MU_FRAC_MIN + mu_index, a0_index + 1)
    }
}

impl fmt::Debug for KeyCodeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyCodeword({})", self.to_hex())
    }
}
