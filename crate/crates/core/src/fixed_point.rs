//! Signed decimal values at `sigma` fraction digits, carried as residues mod p.
//!
//! Encoding keeps the first `sigma` fraction digits (truncation toward zero)
//! and maps negatives to the upper half of `[0, p)`. Decoding reads
//! `z <= (p - 1) / 2` as non-negative and `z >= (p + 1) / 2` as `z - p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeModulus};

/// Largest supported `sigma`; keeps `10^sigma * |x|` exactly representable.
pub const MAX_SIGMA: u32 = 9;

/// Distance to an integer below which a scaled value snaps to it.
const SNAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Precision {
    sigma: u32,
}

impl Precision {
    pub fn new(sigma: u32) -> Result<Self> {
        if sigma > MAX_SIGMA {
            return Err(Error::BadParameters(format!(
                "sigma {sigma} exceeds the supported maximum {MAX_SIGMA}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(self) -> u32 {
        self.sigma
    }

    pub fn scale(self) -> i64 {
        10i64.pow(self.sigma)
    }

    /// `trunc(10^sigma * x)` toward zero, snapping values within `1e-6` of an
    /// integer so that decimals such as `1.23` are not lost to binary
    /// representation (`1.23 * 100 = 122.99999999999999`).
    pub fn quantize(self, x: f64) -> i64 {
        let y = x * self.scale() as f64;
        let r = y.round();
        if (y - r).abs() < SNAP {
            r as i64
        } else {
            y.trunc() as i64
        }
    }

    /// `x` truncated to `sigma` fraction digits.
    pub fn truncate(self, x: f64) -> f64 {
        self.quantize(x) as f64 / self.scale() as f64
    }
}

impl TryFrom<u32> for Precision {
    type Error = Error;
    fn try_from(s: u32) -> Result<Self> {
        Precision::new(s)
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedValue {
    pub z: FieldElement,
}

/// Largest `|x|` that [`encode_fixed`] accepts: `(p - 1) / (2 * 10^sigma)`, exclusive.
pub fn encode_limit(prec: Precision, p: PrimeModulus) -> f64 {
    (p.get() - 1) as f64 / (2.0 * prec.scale() as f64)
}

pub fn encode_fixed(x: f64, prec: Precision, p: PrimeModulus) -> Result<EncodedValue> {
    let limit = encode_limit(prec, p);
    if !x.is_finite() || x.abs() >= limit {
        return Err(Error::OutOfRange { value: x, limit });
    }
    Ok(EncodedValue {
        z: p.from_i64(prec.quantize(x)),
    })
}

/// Signed integer represented by a residue.
pub fn decode_integer(z: FieldElement) -> i64 {
    let p = z.modulus().get();
    let v = z.value();
    if v <= (p - 1) / 2 {
        v as i64
    } else {
        v as i64 - p as i64
    }
}

pub fn decode_signed(z: EncodedValue, prec: Precision) -> f64 {
    decode_integer(z.z) as f64 / prec.scale() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimeBoundReport {
    /// `p > max{N, 1 + 2 * 10^sigma * N * theta_max}`.
    pub ok: bool,
    /// `(p - 1) / (2 * 10^sigma * N)`.
    pub max_admissible: f64,
    /// Right-hand side of the inequality.
    pub required: f64,
}

pub fn check_p_bound(p: u64, n_learners: usize, prec: Precision, theta_max: f64) -> PrimeBoundReport {
    let scale = prec.scale() as f64;
    let n = n_learners as f64;
    let required = n.max(1.0 + 2.0 * scale * n * theta_max);
    PrimeBoundReport {
        ok: theta_max >= 0.0 && (p as f64) > required,
        max_admissible: (p.saturating_sub(1)) as f64 / (2.0 * scale * n),
        required,
    }
}
