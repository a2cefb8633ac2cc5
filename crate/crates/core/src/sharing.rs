//! Shamir secret sharing over GF(p) with Lagrange-weighted shares.
//!
//! A secret `s` is hidden as the constant term of a random polynomial `H` of
//! degree `tau`; holder `j` receives `H(j)`. Any `tau + 1` holders `C'`
//! recover `s = sum_{i in C'} H(i) * delta(C', i)`, and pre-multiplying each
//! share by `delta(C, j)` turns reconstruction over the full set into a plain
//! sum, which is what lets masked shares be aggregated by averaging.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeModulus};

/// Evaluation points of a sharing: distinct nonzero ids below `p`, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShareholderSet {
    ids: Vec<u64>,
}

impl ShareholderSet {
    pub fn new(ids: impl IntoIterator<Item = u64>, p: PrimeModulus) -> Result<Self> {
        let mut ids: Vec<u64> = ids.into_iter().collect();
        if ids.is_empty() {
            return Err(Error::BadShareholders("empty set".into()));
        }
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::BadShareholders(format!("duplicate id {}", w[0])));
        }
        if ids[0] == 0 {
            return Err(Error::BadShareholders("id 0 is the secret's point".into()));
        }
        let last = *ids.last().unwrap();
        if last >= p.get() {
            return Err(Error::BadShareholders(format!(
                "id {last} is not below the modulus {p}"
            )));
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.binary_search(&id).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawShare {
    pub holder_id: u64,
    pub value: FieldElement,
}

/// A raw share pre-multiplied by its Lagrange coefficient for the full set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightedShare {
    pub holder_id: u64,
    pub value: FieldElement,
}

/// `delta(C, i) = prod_{j in C, j != i} j / (j - i) mod p`.
pub fn lagrange_delta(set: &ShareholderSet, i: u64, p: PrimeModulus) -> Result<FieldElement> {
    if !set.contains(i) {
        return Err(Error::NotMember(i));
    }
    lagrange_delta_ids(set.ids(), i, p)
}

fn lagrange_delta_ids(ids: &[u64], i: u64, p: PrimeModulus) -> Result<FieldElement> {
    let xi = p.elem(i);
    let mut num = p.one();
    let mut den = p.one();
    for &j in ids.iter().filter(|&&j| j != i) {
        let xj = p.elem(j);
        num *= xj;
        den *= xj - xi;
    }
    Ok(num * den.inverse()?)
}

/// Coefficients `[s, c_1, .., c_tau]` of a sharing polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<FieldElement>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<FieldElement>) -> Self {
        assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    /// Samples `c_1..c_{tau-1}` uniformly from `[0, p)` and `c_tau` from `[1, p)`.
    pub fn random<R: Rng + ?Sized>(secret: FieldElement, tau: usize, rng: &mut R) -> Self {
        let p = secret.modulus();
        let mut coeffs = Vec::with_capacity(tau + 1);
        coeffs.push(secret);
        for m in 1..=tau {
            let lo = if m == tau { 1 } else { 0 };
            coeffs.push(p.elem(rng.gen_range(lo..p.get())));
        }
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn eval(&self, x: u64) -> FieldElement {
        let p = self.coeffs[0].modulus();
        let x = p.elem(x);
        self.coeffs
            .iter()
            .rev()
            .fold(p.zero(), |acc, &c| acc * x + c)
    }
}

fn check_degree(tau: usize, holders: usize) -> Result<()> {
    let ok = if holders == 1 { tau == 0 } else { tau >= 1 && tau < holders };
    if ok {
        Ok(())
    } else {
        Err(Error::BadDegree { tau, holders })
    }
}

/// Evaluates `poly` at every holder id.
pub fn shares_from_polynomial(
    poly: &Polynomial,
    set: &ShareholderSet,
) -> Result<BTreeMap<u64, RawShare>> {
    check_degree(poly.degree(), set.len())?;
    Ok(set
        .ids()
        .iter()
        .map(|&j| {
            (
                j,
                RawShare {
                    holder_id: j,
                    value: poly.eval(j),
                },
            )
        })
        .collect())
}

/// Splits `secret` into one share per holder with a fresh degree-`tau` polynomial.
pub fn generate_shares<R: Rng + ?Sized>(
    secret: FieldElement,
    tau: usize,
    set: &ShareholderSet,
    rng: &mut R,
) -> Result<BTreeMap<u64, RawShare>> {
    check_degree(tau, set.len())?;
    let poly = Polynomial::random(secret, tau, rng);
    shares_from_polynomial(&poly, set)
}

pub fn weight_shares(
    raw: &BTreeMap<u64, RawShare>,
    set: &ShareholderSet,
) -> Result<BTreeMap<u64, WeightedShare>> {
    if raw.len() != set.len() || !raw.keys().copied().eq(set.ids().iter().copied()) {
        return Err(Error::KeySetMismatch);
    }
    let Some(first) = raw.values().next() else {
        return Err(Error::KeySetMismatch);
    };
    let p = first.value.modulus();
    raw.iter()
        .map(|(&j, share)| {
            let d = lagrange_delta(set, j, p)?;
            Ok((
                j,
                WeightedShare {
                    holder_id: j,
                    value: share.value * d,
                },
            ))
        })
        .collect()
}

/// Lagrange interpolation at zero over the holders present in `shares`.
pub fn reconstruct(shares: &[RawShare], set: &ShareholderSet, tau: usize) -> Result<FieldElement> {
    if shares.len() < tau + 1 || shares.is_empty() {
        return Err(Error::TooFewShares {
            got: shares.len(),
            tau,
        });
    }
    let p = shares[0].value.modulus();
    let mut ids: Vec<u64> = shares.iter().map(|s| s.holder_id).collect();
    for &id in &ids {
        if !set.contains(id) {
            return Err(Error::NotMember(id));
        }
    }
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::BadShareholders("duplicate share holder".into()));
    }
    let mut acc = p.zero();
    for s in shares {
        acc += s.value * lagrange_delta_ids(&ids, s.holder_id, p)?;
    }
    Ok(acc)
}
