//! Finite-K average consensus `s(k+1) = A s(k)` and the iteration bound
//! that makes `round(N * s_i(K))` exact.
//!
//! # Error budget
//!
//! States are `f64`. Initial states are residues below `p < 2^31`, so
//! `N * s_i(k) <= N * p`; for `N * p < 2^40` the integer part uses at most
//! 40 of the 53 mantissa bits and each multiply-add contributes a relative
//! error near `2^-53`. After `K` steps the accumulated absolute error on
//! `N * s_i(K)` is on the order of `K * N * p * 2^-53`, which stays far below
//! the `0.5 - 2 p sqrt(N) ||N A^K - 1 1^T||` rounding margin for the sizes
//! this crate targets (`N * p` up to ~1e9, `K` up to ~1e5).

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PrimeModulus;
use crate::fixed_point::Precision;
use crate::topology::{contraction_radius, symmetric_spectral_radius, WeightMatrix};

/// Per-learner `n`-dimensional states at iteration `k`, row-major by learner.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub k: usize,
    n_learners: usize,
    dim: usize,
    data: Vec<f64>,
}

impl StateVector {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_learners = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_learners * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(Self {
            k: 0,
            n_learners,
            dim,
            data,
        })
    }

    pub fn n_learners(&self) -> usize {
        self.n_learners
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// State of learner `i` (1-based).
    pub fn learner(&self, i: usize) -> &[f64] {
        &self.data[(i - 1) * self.dim..i * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.n_learners)
    }

    /// Sum over learners of coordinate `l` (0-based).
    pub fn column_sum(&self, l: usize) -> f64 {
        self.rows().map(|r| r[l]).sum()
    }
}

/// Nonzero entries of each row of `A`, ascending by column.
#[derive(Debug, Clone)]
pub struct SparseWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseWeights {
    pub fn new(a: &WeightMatrix) -> Self {
        let m = a.matrix();
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// One step of `s <- A s`; each learner accumulates its nonzero weights in
    /// ascending column order, so the result does not depend on thread count.
    pub fn step(&self, states: &StateVector) -> Result<StateVector> {
        if states.n_learners != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: states.n_learners,
            });
        }
        let dim = states.dim;
        let mut next = vec![0.0; states.data.len()];
        next.par_chunks_mut(dim.max(1))
            .zip(self.rows.par_iter())
            .for_each(|(out, row)| {
                for &(j, w) in row {
                    let src = &states.data[j * dim..(j + 1) * dim];
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            });
        Ok(StateVector {
            k: states.k + 1,
            n_learners: states.n_learners,
            dim,
            data: next,
        })
    }
}

pub fn consensus_step(states: &StateVector, a: &WeightMatrix) -> Result<StateVector> {
    SparseWeights::new(a).step(states)
}

/// Snapshots for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<StateVector>,
}

impl Trajectory {
    pub fn last(&self) -> &StateVector {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    /// CSV rows `round,iteration,learner_id,coordinate,value`; coordinates are 1-based.
    pub fn write_csv<W: Write>(&self, round: usize, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "round,iteration,learner_id,coordinate,value")?;
        }
        for snap in &self.snapshots {
            for (i, row) in snap.rows().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    writeln!(w, "{round},{},{},{},{v}", snap.k, i + 1, l + 1)?;
                }
            }
        }
        Ok(())
    }
}

pub fn run_consensus(initial: StateVector, a: &WeightMatrix, k: usize) -> Result<Trajectory> {
    let sparse = SparseWeights::new(a);
    let mut snapshots = Vec::with_capacity(k + 1);
    let mut cur = initial;
    for _ in 0..k {
        let next = sparse.step(&cur)?;
        snapshots.push(std::mem::replace(&mut cur, next));
    }
    if snapshots.is_empty() && cur.n_learners != sparse.n() {
        return Err(Error::DimensionMismatch {
            expected: sparse.n(),
            found: cur.n_learners,
        });
    }
    snapshots.push(cur);
    Ok(Trajectory { snapshots })
}

fn mat_pow(base: &DMatrix<f64>, mut exp: usize) -> DMatrix<f64> {
    let n = base.nrows();
    let mut acc = DMatrix::<f64>::identity(n, n);
    let mut b = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            acc = &acc * &b;
        }
        exp >>= 1;
        if exp > 0 {
            b = &b * &b;
        }
    }
    acc
}

/// `||N A^k - 1 1^T||_2`, evaluated from the matrix power itself.
///
/// Uses `A^k - (1/N) 1 1^T = (A - (1/N) 1 1^T)^k` for `k >= 1`, which holds
/// for any doubly stochastic `A` and avoids cancellation against the
/// all-ones component.
pub fn deviation_norm(a: &WeightMatrix, k: usize) -> f64 {
    let n = a.n();
    let dev = if k == 0 {
        let mut m = DMatrix::<f64>::identity(n, n);
        m.add_scalar_mut(-1.0 / n as f64);
        m
    } else {
        mat_pow(&a.deviation(), k)
    };
    let scaled = dev * n as f64;
    if a.is_symmetric() {
        symmetric_spectral_radius(scaled)
    } else {
        scaled.singular_values().max()
    }
}

/// `2 p sqrt(N) ||N A^K - 1 1^T|| < 1`.
pub fn iteration_bound_holds(a: &WeightMatrix, p: PrimeModulus, k: usize) -> bool {
    let n = a.n() as f64;
    2.0 * p.get() as f64 * n.sqrt() * deviation_norm(a, k) < 1.0
}

/// Smallest `K` with `2 p sqrt(N) ||N A^K - 1 1^T|| < 1`.
///
/// Starts from the closed form `||N A^K - 1 1^T|| = N lambda^K`, with
/// `lambda` the contraction radius, then confirms against the direct matrix
/// power and steps until `K` holds and `K - 1` does not.
pub fn min_iterations(a: &WeightMatrix, p: PrimeModulus) -> Result<usize> {
    let lambda = contraction_radius(a);
    if !(lambda < 1.0) {
        return Err(Error::NoFiniteK(lambda));
    }
    let n = a.n() as f64;
    let target = (2.0 * p.get() as f64 * n * n.sqrt()).ln();
    let mut k = if lambda <= f64::MIN_POSITIVE {
        1
    } else {
        ((target / -lambda.ln()).floor() as usize).saturating_add(1).max(1)
    };
    let mut guard = 0;
    while !iteration_bound_holds(a, p, k) {
        k += 1;
        guard += 1;
        if guard > 10_000 {
            return Err(Error::NoFiniteK(lambda));
        }
    }
    while k > 1 && iteration_bound_holds(a, p, k - 1) {
        k -= 1;
    }
    Ok(k)
}

/// Smallest `K` valid for every matrix in `family`.
pub fn min_iterations_global(family: &[WeightMatrix], p: PrimeModulus) -> Result<usize> {
    family
        .iter()
        .map(|a| min_iterations(a, p))
        .try_fold(0usize, |acc, k| Ok(acc.max(k?)))
}

pub fn check_weights(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::BadWeights(sum));
    }
    Ok(())
}

/// `sum_i w_i theta_i`.
pub fn plain_weighted_aggregate(models: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    check_weights(weights)?;
    if models.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: models.len(),
        });
    }
    let dim = models.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (m, &w) in models.iter().zip(weights) {
        if m.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(m) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// `sum_i trunc(10^sigma * w_i * theta_il)` per coordinate, as exact integers.
pub fn quantized_weighted_aggregate(
    models: &[Vec<f64>],
    weights: &[f64],
    prec: Precision,
) -> Result<Vec<i64>> {
    check_weights(weights)?;
    let dim = models.first().map_or(0, Vec::len);
    let mut out = vec![0i64; dim];
    for (m, &w) in models.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(m) {
            *o += prec.quantize(w * x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub k: usize,
    pub norm: f64,
}

/// `||N A^k - 1 1^T||` for `k = 0..=k_max`.
pub fn decay_table(a: &WeightMatrix, k_max: usize) -> Vec<DecayRow> {
    (0..=k_max)
        .map(|k| DecayRow {
            k,
            norm: deviation_norm(a, k),
        })
        .collect()
}
