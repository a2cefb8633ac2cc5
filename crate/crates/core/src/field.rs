//! Arithmetic modulo a public prime and exact linear algebra over GF(p).
//!
//! Moduli are limited to `p < 2^31` so that every product of two residues
//! fits a `u64` without overflow.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest modulus accepted (exclusive).
pub const MAX_MODULUS: u64 = 1 << 31;

/// A prime modulus `p` with `2 <= p < 2^31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "u64")]
pub struct PrimeModulus(u64);

impl PrimeModulus {
    pub fn new(p: u64) -> Result<Self> {
        if p >= MAX_MODULUS {
            return Err(Error::ModulusTooLarge(p));
        }
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(Self(p))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    /// Embeds a residue that is already reduced or reduces it.
    #[inline]
    pub fn elem(self, v: u64) -> FieldElement {
        FieldElement {
            value: v % self.0,
            modulus: self,
        }
    }

    /// Maps a signed integer into `[0, p)` by Euclidean remainder.
    #[inline]
    pub fn from_i64(self, v: i64) -> FieldElement {
        let r = v.rem_euclid(self.0 as i64) as u64;
        FieldElement {
            value: r,
            modulus: self,
        }
    }

    #[inline]
    pub fn zero(self) -> FieldElement {
        self.elem(0)
    }

    #[inline]
    pub fn one(self) -> FieldElement {
        self.elem(1)
    }
}

impl From<PrimeModulus> for u64 {
    fn from(p: PrimeModulus) -> u64 {
        p.0
    }
}

impl<'de> Deserialize<'de> for PrimeModulus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = u64::deserialize(d)?;
        PrimeModulus::new(p).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for PrimeModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Deterministic trial division; adequate for `p < 2^31`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 || n % 3 == 0 {
        return false;
    }
    let mut d = 5u64;
    while d * d <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// A residue in `[0, p)` tagged with its modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: PrimeModulus,
}

impl FieldElement {
    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> PrimeModulus {
        self.modulus
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = self.modulus.one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    pub fn inverse(self) -> Result<Self> {
        if self.value == 0 {
            return Err(Error::ZeroInverse);
        }
        let p = self.modulus.0 as i64;
        let (mut old_r, mut r) = (self.value as i64, p);
        let (mut old_s, mut s) = (1i64, 0i64);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        debug_assert_eq!(old_r, 1);
        Ok(self.modulus.from_i64(old_s))
    }

    #[inline]
    fn check(self, other: Self) {
        debug_assert_eq!(self.modulus, other.modulus, "mixed moduli");
    }
}

/// Free-function form of [`FieldElement::inverse`].
pub fn mod_inverse(a: FieldElement) -> Result<FieldElement> {
    a.inverse()
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.value.fmt(f)
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.check(rhs);
        let p = self.modulus.0;
        let s = self.value + rhs.value;
        FieldElement {
            value: if s >= p { s - p } else { s },
            modulus: self.modulus,
        }
    }
}

impl Sub for FieldElement {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.check(rhs);
        let p = self.modulus.0;
        FieldElement {
            value: if self.value >= rhs.value {
                self.value - rhs.value
            } else {
                self.value + p - rhs.value
            },
            modulus: self.modulus,
        }
    }
}

impl Mul for FieldElement {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.check(rhs);
        FieldElement {
            value: (self.value * rhs.value) % self.modulus.0,
            modulus: self.modulus,
        }
    }
}

impl Neg for FieldElement {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.modulus.zero() - self
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

/// Dense row-major matrix over GF(p).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfpMatrix {
    rows: usize,
    cols: usize,
    modulus: PrimeModulus,
    data: Vec<FieldElement>,
}

/// Result of [`GfpMatrix::row_reduce`].
#[derive(Debug, Clone)]
pub struct RowEchelon {
    /// Reduced row-echelon form; zero rows are kept at the bottom.
    pub reduced: GfpMatrix,
    pub rank: usize,
    pub pivots: Vec<usize>,
}

impl GfpMatrix {
    pub fn zeros(rows: usize, cols: usize, modulus: PrimeModulus) -> Self {
        Self {
            rows,
            cols,
            modulus,
            data: vec![modulus.zero(); rows * cols],
        }
    }

    pub fn from_rows(modulus: PrimeModulus, rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols, modulus);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                m[(r, c)] = modulus.elem(v);
            }
        }
        Ok(m)
    }

    pub fn identity(n: usize, modulus: PrimeModulus) -> Self {
        let mut m = Self::zeros(n, n, modulus);
        for i in 0..n {
            m[(i, i)] = modulus.one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn row(&self, r: usize) -> &[FieldElement] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn push_row(&mut self, row: &[FieldElement]) -> Result<()> {
        if self.rows > 0 && row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: row.len(),
            });
        }
        if self.rows == 0 {
            self.cols = row.len();
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Gauss-Jordan elimination to reduced row-echelon form.
    pub fn row_reduce(&self) -> RowEchelon {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut lead = 0usize;
        for col in 0..m.cols {
            if lead == m.rows {
                break;
            }
            let Some(pr) = (lead..m.rows).find(|&r| !m[(r, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(lead, pr);
            let inv = m[(lead, col)].inverse().expect("nonzero pivot");
            for c in col..m.cols {
                let v = m[(lead, c)] * inv;
                m[(lead, c)] = v;
            }
            for r in 0..m.rows {
                if r == lead {
                    continue;
                }
                let f = m[(r, col)];
                if f.is_zero() {
                    continue;
                }
                for c in col..m.cols {
                    let v = m[(r, c)] - f * m[(lead, c)];
                    m[(r, c)] = v;
                }
            }
            pivots.push(col);
            lead += 1;
        }
        RowEchelon {
            reduced: m,
            rank: pivots.len(),
            pivots,
        }
    }

    pub fn rank(&self) -> usize {
        self.row_reduce().rank
    }

    /// True iff `v` is a GF(p)-linear combination of the rows.
    pub fn in_row_space(&self, v: &[FieldElement]) -> Result<bool> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.row_reduce().express(v).is_some())
    }
}

impl RowEchelon {
    /// Coefficients `c` over the nonzero reduced rows such that
    /// `sum_r c[r] * reduced.row(r) == v`, or `None` when `v` is outside the
    /// row space.
    pub fn express(&self, v: &[FieldElement]) -> Option<Vec<FieldElement>> {
        let m = &self.reduced;
        let mut residual = v.to_vec();
        let mut coeffs = Vec::with_capacity(self.rank);
        for (r, &pc) in self.pivots.iter().enumerate() {
            let f = residual[pc];
            coeffs.push(f);
            if f.is_zero() {
                continue;
            }
            for (c, slot) in residual.iter_mut().enumerate().skip(pc) {
                *slot -= f * m[(r, c)];
            }
        }
        residual.iter().all(|x| x.is_zero()).then_some(coeffs)
    }
}

impl std::ops::Index<(usize, usize)> for GfpMatrix {
    type Output = FieldElement;
    fn index(&self, (r, c): (usize, usize)) -> &FieldElement {
        assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for GfpMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut FieldElement {
        assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}
