//! Sender and receiver flows.
//!
//! Sender: secret → `ode_invert(K_pri)` → `ode_reverse(K_pub)` → container,
//! then the auxiliary payload is hidden in the container by histogram
//! shifting. Receiver: extract, restore the container, verify, then run the
//! two ODE legs backwards to get the secret.
//!
//! The on-image bitstream is
//!
//! ```text
//! body_len u32 BE | zero_bin u8 | location map | K_pri # K_pub # digest
//! ```
//!
//! packed MSB first. The length prefix tells the receiver where to stop; the
//! zero bin is needed to undo the shift and cannot be read back off the
//! shifted histogram.

mod attack;
mod ledger;

pub use attack::{single_pixel_tamper, substitution_attack, AttackReport};
pub use ledger::{SessionLedger, SessionRecord, PSEUDO_KEY_BITS_PER_UNIT};

use serde::Serialize;

use crate::chaos::RealKey;
use crate::ddim::{dequantize, ode_invert, ode_reverse, quantize, DiffusionSchedule, NoiseEstimator};
use crate::error::{Error, Result};
use crate::integrity::{container_digest, AuxPayload, Verdict};
use crate::raster::{partition, predict_errors, reconstruct_pixels, PixelGrid};
use crate::rdh::{
    embed, extract, flatten_saturated, shift_histogram, stego_eligible_positions, unflatten,
    unshift_histogram, BitPayload, LocationMap, PositionPlan, Strategy,
};

const LENGTH_BITS: usize = 32;

/// Without a key, bits go to zero-error positions in order; with a real key,
/// one position per window of five is chosen by the chaotic sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    WithoutKey,
    RealKey(RealKey),
}

impl Scheme {
    pub fn strategy(&self) -> Strategy {
        match self {
            Scheme::WithoutKey => Strategy::Sequential,
            Scheme::RealKey(k) => Strategy::Jump(*k),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::WithoutKey => "without-key",
            Scheme::RealKey(_) => "real-key",
        }
    }
}

pub struct HideRequest<'a> {
    pub secret: &'a PixelGrid,
    pub k_pri: &'a str,
    pub k_pub: &'a str,
    pub scheme: Scheme,
    pub schedule: &'a DiffusionSchedule,
    pub estimator: &'a dyn NoiseEstimator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbedStats {
    pub zero_bin: i16,
    pub payload_bits: usize,
    pub required_positions: usize,
    pub available_positions: usize,
    pub saturated_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct Embedded {
    pub stego: PixelGrid,
    pub stats: EmbedStats,
}

#[derive(Debug, Clone)]
pub struct HideOutput {
    pub stego: PixelGrid,
    pub container: PixelGrid,
    /// Container latent entries clamped into `[-1, 1]` on quantization.
    pub clamped: usize,
    pub stats: EmbedStats,
}

/// Secret → noise under `K_pri` → container under `K_pub`.
pub fn generate_container(
    secret: &PixelGrid,
    k_pri: &str,
    k_pub: &str,
    schedule: &DiffusionSchedule,
    estimator: &dyn NoiseEstimator,
) -> Result<(PixelGrid, usize)> {
    let noise = ode_invert(&dequantize(secret), estimator, k_pri, schedule)?;
    let q = quantize(&ode_reverse(&noise, estimator, k_pub, schedule)?);
    Ok((q.grid, q.clamped))
}

pub fn hide(req: &HideRequest<'_>) -> Result<HideOutput> {
    partition(req.secret)?;
    let (container, clamped) =
        generate_container(req.secret, req.k_pri, req.k_pub, req.schedule, req.estimator)?;
    let Embedded { stego, stats } = embed_aux(&container, req.k_pri, req.k_pub, &req.scheme)?;
    Ok(HideOutput {
        stego,
        container,
        clamped,
        stats,
    })
}

fn build_stream(zero_bin: u8, location: &LocationMap, width: usize, aux: &AuxPayload) -> BitPayload {
    let mut body = vec![zero_bin];
    body.extend(location.encode(width));
    body.extend(aux.serialize());
    let mut bytes = (body.len() as u32).to_be_bytes().to_vec();
    bytes.extend(body);
    BitPayload::from_bytes(&bytes)
}

/// Hides `K_pri # K_pub # digest(container)` in the container.
pub fn embed_aux(container: &PixelGrid, k_pri: &str, k_pub: &str, scheme: &Scheme) -> Result<Embedded> {
    let aux = AuxPayload::new(k_pri, k_pub, container_digest(container, k_pri, k_pub))?;
    let (flat, location) = flatten_saturated(container)?;
    let map = predict_errors(&flat, &partition(&flat)?)?;
    let zero_bin = map.zero_bin().ok_or(Error::NoZeroBin)?;
    let stream = build_stream(zero_bin as u8, &location, flat.width(), &aux);
    let shifted = shift_histogram(&map)?;
    let plan = PositionPlan::for_cover(&shifted, &scheme.strategy(), stream.len())?;
    let stego = reconstruct_pixels(&embed(&shifted, &stream, &plan)?, &flat)?;
    Ok(Embedded {
        stego,
        stats: EmbedStats {
            zero_bin,
            payload_bits: stream.len(),
            required_positions: plan.required(),
            available_positions: plan.eligible().len(),
            saturated_pixels: location.len(),
        },
    })
}

/// Result of extracting and checking the auxiliary payload.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub container: PixelGrid,
    pub aux: AuxPayload,
    pub verdict: Verdict,
}

fn malformed(e: Error) -> Error {
    match e {
        Error::Malformed(_) => e,
        Error::CapacityExceeded { required, available } => Error::Malformed(format!(
            "announced payload needs {required} positions, only {available} present"
        )),
        other => Error::Malformed(other.to_string()),
    }
}

/// Extracts the payload and restores the container. Structural failures are
/// `Err(Malformed)`; a well-formed stream whose digest or re-embedding does
/// not match yields `Ok` with a tampered verdict.
pub fn recover(stego: &PixelGrid, scheme: &Scheme) -> Result<Recovered> {
    let strategy = scheme.strategy();
    let map = predict_errors(stego, &partition(stego).map_err(malformed)?)?;
    let eligible = stego_eligible_positions(&map);

    let head = PositionPlan::new(eligible.clone(), &strategy, LENGTH_BITS).map_err(malformed)?;
    let (len_bits, _) = extract(&map, &head)?;
    let body_len = u32::from_be_bytes(len_bits.to_bytes()?.try_into().unwrap()) as usize;
    let total = body_len
        .checked_mul(8)
        .and_then(|b| b.checked_add(LENGTH_BITS))
        .ok_or_else(|| Error::Malformed("absurd payload length".into()))?;
    let plan = PositionPlan::new(eligible, &strategy, total).map_err(malformed)?;
    let (bits, cleared) = extract(&map, &plan)?;
    let bytes = bits.to_bytes()?;
    let body = &bytes[LENGTH_BITS / 8..];

    let (&zero_bin, rest) = body
        .split_first()
        .ok_or_else(|| Error::Malformed("empty payload".into()))?;
    if zero_bin == 0 {
        return Err(Error::Malformed("zero bin of 0".into()));
    }
    let (location, used) = LocationMap::decode(rest, stego.width(), stego.height()).map_err(malformed)?;
    let aux = AuxPayload::parse(&rest[used..]).map_err(malformed)?;

    let restored = unshift_histogram(&cleared.with_zero_bin(zero_bin as i16))?;
    let flat = reconstruct_pixels(&restored, stego).map_err(malformed)?;
    let container = unflatten(&flat, &location).map_err(malformed)?;

    // Digest match alone would accept a flip in an unselected shifted bin,
    // so the stego must also be exactly what the sender would have produced.
    let digest_ok = container_digest(&container, aux.k_pri(), aux.k_pub()) == *aux.digest();
    let verdict = if digest_ok
        && embed_aux(&container, aux.k_pri(), aux.k_pub(), scheme)
            .map(|e| e.stego == *stego)
            .unwrap_or(false)
    {
        Verdict::Authentic
    } else {
        Verdict::Tampered
    };
    Ok(Recovered {
        container,
        aux,
        verdict,
    })
}

#[derive(Debug, Clone)]
pub struct RevealResult {
    /// Absent when strict verification stopped before the ODE legs.
    pub secret: Option<PixelGrid>,
    pub container: PixelGrid,
    pub k_pri: String,
    pub k_pub: String,
    pub verdict: Verdict,
}

/// Receiver side. In strict mode a non-authentic verdict is returned as
/// `Err(Tampered)` before any DDIM work; permissive mode recovers anyway.
pub fn reveal(
    stego: &PixelGrid,
    scheme: &Scheme,
    schedule: &DiffusionSchedule,
    estimator: &dyn NoiseEstimator,
    strict: bool,
) -> Result<RevealResult> {
    let rec = recover(stego, scheme)?;
    if strict && !rec.verdict.is_authentic() {
        return Err(Error::Tampered("container digest or embedding mismatch".into()));
    }
    let noise = ode_invert(&dequantize(&rec.container), estimator, rec.aux.k_pub(), schedule)?;
    let secret = quantize(&ode_reverse(&noise, estimator, rec.aux.k_pri(), schedule)?).grid;
    Ok(RevealResult {
        secret: Some(secret),
        container: rec.container,
        k_pri: rec.aux.k_pri().to_owned(),
        k_pub: rec.aux.k_pub().to_owned(),
        verdict: rec.verdict,
    })
}

/// Peak signal-to-noise ratio in dB; infinite for identical grids.
pub fn psnr(a: &PixelGrid, b: &PixelGrid) -> f64 {
    assert!(a.same_dims(b), "psnr of differently sized grids");
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.pixels().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}
