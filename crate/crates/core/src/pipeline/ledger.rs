//! Key-exchange accounting across hide sessions.
//!
//! The real-key scheme shares one 102-bit codeword per distinct key no matter
//! how many images follow. The pseudo-key baseline has to send each
//! session's `K_pub` over the secure channel, at 16 bits per UTF-16 unit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::chaos::KEY_BITS;
use crate::integrity::sm3;

pub const PSEUDO_KEY_BITS_PER_UNIT: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub scheme: String,
    /// SM3 of the key codeword; absent without a key.
    pub key_fingerprint: Option<String>,
    pub k_pub_utf16_units: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLedger {
    sessions: Vec<SessionRecord>,
}

impl SessionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, scheme: &Scheme, k_pub: &str) {
        let key_fingerprint = match scheme {
            Scheme::WithoutKey => None,
            Scheme::RealKey(k) => Some(sm3(k.encode().to_hex().as_bytes()).to_hex()),
        };
        self.sessions.push(SessionRecord {
            scheme: scheme.name().to_owned(),
            key_fingerprint,
            k_pub_utf16_units: k_pub.encode_utf16().count() as u64,
        });
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn distinct_keys(&self) -> usize {
        self.sessions
            .iter()
            .filter_map(|s| s.key_fingerprint.as_deref())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Bits sent over the secure channel under the real-key scheme.
    pub fn key_exchange_bits(&self) -> u64 {
        self.distinct_keys() as u64 * KEY_BITS as u64
    }

    /// Bits the pseudo-key baseline would send for the same sessions.
    pub fn pseudo_key_baseline_bits(&self) -> u64 {
        self.sessions
            .iter()
            .map(|s| s.k_pub_utf16_units * PSEUDO_KEY_BITS_PER_UNIT)
            .sum()
    }
}
