//! Small shared utilities: stable hashing and duration parsing.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Stable 64-bit mix (splitmix64 finalizer). Identical on every platform and
/// every run, which is what routing and key generation need.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded stable hash of a single value.
#[inline]
pub fn stable_hash(x: u64, seed: u64) -> u64 {
    mix64(x ^ mix64(seed))
}

/// Seeded stable hash of a pair.
#[inline]
pub fn stable_hash2(a: u64, b: u64, seed: u64) -> u64 {
    mix64(a ^ mix64(b ^ mix64(seed)))
}

pub const NS_PER_SEC: u64 = 1_000_000_000;

pub fn secs(s: f64) -> u64 {
    (s * NS_PER_SEC as f64).round() as u64
}

pub fn millis(ms: u64) -> u64 {
    ms * 1_000_000
}

/// Virtual duration in nanoseconds. Serializes as a string with a unit
/// suffix; deserializes from either a bare number (nanoseconds) or a string
/// like "500ms", "30s", "15m", "2h".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct VDuration(pub u64);

impl VDuration {
    pub fn ns(self) -> u64 {
        self.0
    }

    pub fn parse(s: &str) -> Result<VDuration, String> {
        let s = s.trim();
        let (num, mult) = if let Some(n) = s.strip_suffix("ms") {
            (n, 1_000_000u64)
        } else if let Some(n) = s.strip_suffix("ns") {
            (n, 1)
        } else if let Some(n) = s.strip_suffix("us") {
            (n, 1_000)
        } else if let Some(n) = s.strip_suffix('s') {
            (n, NS_PER_SEC)
        } else if let Some(n) = s.strip_suffix('m') {
            (n, 60 * NS_PER_SEC)
        } else if let Some(n) = s.strip_suffix('h') {
            (n, 3600 * NS_PER_SEC)
        } else {
            (s, 1)
        };
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("invalid duration {s:?}"))?;
        if v < 0.0 {
            return Err(format!("negative duration {s:?}"));
        }
        Ok(VDuration((v * mult as f64).round() as u64))
    }
}

impl fmt::Display for VDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.0;
        if ns == 0 {
            write!(f, "0s")
        } else if ns % NS_PER_SEC == 0 {
            write!(f, "{}s", ns / NS_PER_SEC)
        } else if ns % 1_000_000 == 0 {
            write!(f, "{}ms", ns / 1_000_000)
        } else {
            write!(f, "{ns}ns")
        }
    }
}

impl Serialize for VDuration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VDuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => {
                if n < 0.0 {
                    Err(serde::de::Error::custom("negative duration"))
                } else {
                    Ok(VDuration(n.round() as u64))
                }
            }
            Raw::Str(s) => VDuration::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}
