//! SM3 digests, the `K_pri # K_pub # digest` auxiliary payload and stego
//! verification.

use std::fmt;

use serde::Serialize;
use sm3::{Digest, Sm3};

use crate::error::{Error, Result};
use crate::pipeline::{recover, Scheme};
use crate::raster::PixelGrid;
use crate::rdh::BitPayload;

pub const SEPARATOR: u8 = b'#';

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sm3Digest(pub [u8; 32]);

impl Sm3Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Sm3Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sm3Digest({})", self.to_hex())
    }
}

/// GB/T 32905-2016 SM3.
pub fn sm3(message: &[u8]) -> Sm3Digest {
    Sm3Digest(Sm3::digest(message).into())
}

/// Digest embedded with a container: SM3 over the container's canonical bytes
/// followed by `K_pri # K_pub`, so the extracted conditions are covered too.
pub fn container_digest(container: &PixelGrid, k_pri: &str, k_pub: &str) -> Sm3Digest {
    let mut h = Sm3::new();
    h.update(container.canonical_bytes());
    h.update(k_pri.as_bytes());
    h.update([SEPARATOR]);
    h.update(k_pub.as_bytes());
    Sm3Digest(h.finalize().into())
}

/// `K_pri # K_pub # digest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxPayload {
    k_pri: String,
    k_pub: String,
    digest: Sm3Digest,
}

fn check_condition(s: &str) -> Result<()> {
    if s.as_bytes().contains(&SEPARATOR) {
        return Err(Error::SeparatorCollision);
    }
    Ok(())
}

impl AuxPayload {
    pub fn new(k_pri: impl Into<String>, k_pub: impl Into<String>, digest: Sm3Digest) -> Result<Self> {
        let (k_pri, k_pub) = (k_pri.into(), k_pub.into());
        check_condition(&k_pri)?;
        check_condition(&k_pub)?;
        Ok(Self { k_pri, k_pub, digest })
    }

    pub fn k_pri(&self) -> &str {
        &self.k_pri
    }

    pub fn k_pub(&self) -> &str {
        &self.k_pub
    }

    pub fn digest(&self) -> &Sm3Digest {
        &self.digest
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(self.k_pri.as_bytes());
        out.push(SEPARATOR);
        out.extend_from_slice(self.k_pub.as_bytes());
        out.push(SEPARATOR);
        out.extend_from_slice(&self.digest.0);
        out
    }

    pub fn byte_len(&self) -> usize {
        self.k_pri.len() + self.k_pub.len() + 2 + 32
    }

    /// Splits at the first two separators; the remainder must be exactly the
    /// 32 digest bytes (which may themselves contain `#`).
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let malformed = |m: &str| Error::Malformed(format!("auxiliary payload: {m}"));
        let first = bytes
            .iter()
            .position(|&b| b == SEPARATOR)
            .ok_or_else(|| malformed("missing first separator"))?;
        let rest = &bytes[first + 1..];
        let second = rest
            .iter()
            .position(|&b| b == SEPARATOR)
            .ok_or_else(|| malformed("missing second separator"))?;
        let digest: [u8; 32] = rest[second + 1..]
            .try_into()
            .map_err(|_| malformed("digest is not 32 bytes"))?;
        let k_pri = std::str::from_utf8(&bytes[..first]).map_err(|_| malformed("K_pri is not UTF-8"))?;
        let k_pub = std::str::from_utf8(&rest[..second]).map_err(|_| malformed("K_pub is not UTF-8"))?;
        Self::new(k_pri, k_pub, Sm3Digest(digest))
    }
}

/// Frames the conditions and the container digest as a bit payload of
/// `8·(|K_pri| + |K_pub| + 2) + 256` bits.
pub fn frame_payload(k_pri: &str, k_pub: &str, container: &PixelGrid) -> Result<BitPayload> {
    let aux = AuxPayload::new(k_pri, k_pub, container_digest(container, k_pri, k_pub))?;
    Ok(BitPayload::from_bytes(&aux.serialize()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Authentic,
    Tampered,
    Malformed,
}

impl Verdict {
    pub fn is_authentic(self) -> bool {
        self == Verdict::Authentic
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Authentic => "authentic",
            Verdict::Tampered => "tampered",
            Verdict::Malformed => "malformed",
        })
    }
}

/// Extracts the auxiliary payload, restores the container and checks the
/// digest. Every failure maps to a verdict.
pub fn verify(stego: &PixelGrid, scheme: &Scheme) -> Verdict {
    match recover(stego, scheme) {
        Ok(r) => r.verdict,
        Err(Error::Tampered(_)) => Verdict::Tampered,
        Err(_) => Verdict::Malformed,
    }
}
