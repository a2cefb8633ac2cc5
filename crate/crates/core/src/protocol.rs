//! Round driver: share masking, consensus on masked states, and decoding.
//!
//! Per round `t`, with `N_i` the neighbors of learner `i` and
//! `N̄_i = N_i ∪ {i}`:
//!
//! 1. Metropolis-Hastings weights `A` for the round's graph.
//! 2. Learner `i` encodes `trunc(10^sigma * w_i * theta_il)` and, per
//!    coordinate, shares it with a fresh polynomial of degree `|N_i|` over
//!    the holders `N̄_i`; each share is multiplied by its Lagrange
//!    coefficient for `N̄_i`.
//! 3. Learner `i` sums the bundles it holds into `s_i(0)` (mod p).
//! 4. `K` consensus steps `s(k+1) = A s(k)`.
//! 5. `z_i = round(N s_i(K)) mod p`, decoded back to a signed decimal.
//!
//! Phases are barrier-separated. All randomness comes from substreams keyed
//! by `(seed, round, learner, coordinate)`, so output does not depend on the
//! thread count.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::{
    check_weights, iteration_bound_holds, min_iterations, quantized_weighted_aggregate,
    SparseWeights, StateVector, Trajectory,
};
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeModulus};
use crate::fixed_point::{check_p_bound, decode_integer, encode_fixed, Precision};
use crate::rng::substream;
use crate::sharing::{lagrange_delta, Polynomial, ShareholderSet};
use crate::topology::{contraction_radius, mh_weights, RoundTopology, TopologySchedule, WeightMatrix};
use crate::transcript::{RoundTranscript, ShareBundle, Transcript};

const TAG_SHARE: u64 = 0x5348;
const TAG_TRAIN: u64 = 0x5452;
const TAG_INIT: u64 = 0x494e;

/// How many consensus iterations each round runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KPolicy {
    /// Smallest `K` satisfying the iteration bound for the round's matrix.
    Auto,
    /// Fixed `K`; a round whose matrix needs more fails with `IterationBound`.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub n_learners: usize,
    pub model_dim: usize,
    pub precision: Precision,
    pub prime: PrimeModulus,
    pub rounds: usize,
    pub k_policy: KPolicy,
    /// Aggregation weights `w_i`, index `i - 1`.
    pub weights: Vec<f64>,
    pub theta_max: f64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn uniform(
        n_learners: usize,
        model_dim: usize,
        sigma: u32,
        prime: u64,
        theta_max: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            n_learners,
            model_dim,
            precision: Precision::new(sigma)?,
            prime: PrimeModulus::new(prime)?,
            rounds: 1,
            k_policy: KPolicy::Auto,
            weights: vec![1.0 / n_learners.max(1) as f64; n_learners],
            theta_max,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks learner count, weights and the prime bound.
    pub fn validate(&self) -> Result<()> {
        if self.n_learners < 2 {
            return Err(Error::Config(format!(
                "need at least 2 learners, got {}",
                self.n_learners
            )));
        }
        if self.model_dim == 0 {
            return Err(Error::Config("model_dim must be positive".into()));
        }
        if self.weights.len() != self.n_learners {
            return Err(Error::Config(format!(
                "{} weights for {} learners",
                self.weights.len(),
                self.n_learners
            )));
        }
        check_weights(&self.weights)?;
        if !(self.theta_max >= 0.0) || !self.theta_max.is_finite() {
            return Err(Error::Config(format!("bad theta_max {}", self.theta_max)));
        }
        let bound = check_p_bound(self.prime.get(), self.n_learners, self.precision, self.theta_max);
        if !bound.ok {
            return Err(Error::PrimeBound(format!(
                "p = {} must exceed max{{N, 1 + 2 * 10^sigma * N * theta_max}} = {}; \
                 largest admissible |theta| is {}",
                self.prime, bound.required, bound.max_admissible
            )));
        }
        Ok(())
    }

    pub fn scale(&self) -> i64 {
        self.precision.scale()
    }
}

/// Everything a learner holds during one round.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub id: usize,
    pub initial_model: Vec<f64>,
    pub local_model: Vec<f64>,
    /// `trunc(10^sigma * w_i * theta_il) mod p` per coordinate.
    pub encoded: Vec<FieldElement>,
    pub received: Vec<ShareBundle>,
    pub state: Vec<f64>,
}

/// Per-phase wall-clock time for one round.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseTimings {
    pub shares: Duration,
    pub initial_state: Duration,
    pub consensus: Duration,
    pub reconstruction: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.shares + self.initial_state + self.consensus + self.reconstruction
    }
}

/// What to keep while a round runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordLevel {
    /// Every message, including each consensus broadcast.
    Full,
    /// Shares, initial states and outputs only.
    NoConsensus,
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub round: usize,
    pub k_used: usize,
    pub lambda2: f64,
    pub local_models: Vec<Vec<f64>>,
    /// Encoded weighted models `trunc(10^sigma * w_i * theta_il) mod p`.
    pub secrets: Vec<Vec<u64>>,
    /// `z_il` per learner.
    pub z: Vec<Vec<u64>>,
    /// Decoded global model per learner.
    pub decoded: Vec<Vec<f64>>,
    /// `sum_i trunc(10^sigma * w_i * theta_il)` per coordinate.
    pub oracle: Vec<i64>,
    /// Largest `|decoded - oracle / 10^sigma|` over learners and coordinates.
    pub max_deviation: f64,
    /// Whether every decoded integer equals the oracle integer.
    pub exact: bool,
    /// Largest `|N s_i(K) - sum_j s_j(0)|`.
    pub rounding_margin: f64,
    pub timings: PhaseTimings,
    pub transcript: RoundTranscript,
}

impl RoundResult {
    /// Masked states `s(k)` for `k = 0..=K`; only `s(0)` unless consensus
    /// states were recorded.
    pub fn trajectory(&self) -> Result<Trajectory> {
        let mut s0 = StateVector::new(
            self.transcript
                .initial_states
                .iter()
                .map(|s| s.iter().map(|&x| x as f64).collect())
                .collect(),
        )?;
        s0.k = 0;
        let mut snapshots = vec![s0];
        snapshots.extend(self.transcript.states.iter().cloned());
        Ok(Trajectory { snapshots })
    }

    /// Each learner's running estimate `decode(round(N s_i(k))) / 10^sigma`.
    pub fn decoded_trajectory(&self, cfg: &ProtocolConfig) -> Result<Trajectory> {
        let n = cfg.n_learners as f64;
        let scale = cfg.scale() as f64;
        let snapshots = self
            .trajectory()?
            .snapshots
            .into_iter()
            .map(|sv| {
                let rows = sv
                    .rows()
                    .map(|row| {
                        row.iter()
                            .map(|&v| decode_integer(cfg.prime.from_i64(round_half_up(n * v))) as f64 / scale)
                            .collect()
                    })
                    .collect();
                let mut out = StateVector::new(rows)?;
                out.k = sv.k;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory { snapshots })
    }
}

/// `sum_{j in N̄_i} values` mod p, one bundle required from each member of
/// `expected_senders`.
pub fn build_initial_state(
    receiver: usize,
    received: &[ShareBundle],
    expected_senders: &[usize],
    dim: usize,
    p: PrimeModulus,
) -> Result<Vec<FieldElement>> {
    let mut acc = vec![p.zero(); dim];
    for &sender in expected_senders {
        let bundle = received
            .iter()
            .find(|b| b.sender == sender && b.receiver == receiver)
            .ok_or(Error::MissingBundle { sender, receiver })?;
        if bundle.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bundle.values.len(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(&bundle.values) {
            *a += p.elem(v);
        }
    }
    Ok(acc)
}

/// Rounds to nearest, ties go up.
fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn check_range(cfg: &ProtocolConfig, round: usize, models: &[Vec<f64>]) -> Result<()> {
    if models.len() != cfg.n_learners {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_learners,
            found: models.len(),
        });
    }
    let limit = check_p_bound(cfg.prime.get(), cfg.n_learners, cfg.precision, 0.0).max_admissible;
    for (i, m) in models.iter().enumerate() {
        if m.len() != cfg.model_dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.model_dim,
                found: m.len(),
            });
        }
        for (l, &x) in m.iter().enumerate() {
            if !x.is_finite() || x.abs() > cfg.theta_max || x.abs() >= limit {
                return Err(Error::RangeViolation {
                    round,
                    learner: i + 1,
                    coord: l + 1,
                    value: x,
                    limit: cfg.theta_max.min(limit),
                });
            }
        }
    }
    Ok(())
}

fn resolve_k(cfg: &ProtocolConfig, a: &WeightMatrix, round: usize) -> Result<usize> {
    match cfg.k_policy {
        KPolicy::Auto => min_iterations(a, cfg.prime),
        KPolicy::Fixed(k) => {
            if iteration_bound_holds(a, cfg.prime, k) {
                Ok(k)
            } else {
                let needed = min_iterations(a, cfg.prime)
                    .map(|k| k.to_string())
                    .unwrap_or_else(|_| "no finite K".into());
                Err(Error::IterationBound(format!(
                    "round {round}: K = {k} violates 2 p sqrt(N) ||N A^K - 1 1^T|| < 1 (needs {needed})"
                )))
            }
        }
    }
}

/// Shares of every coordinate of one learner's encoded model, one bundle per
/// member of its closed neighborhood (self included).
fn share_model(
    cfg: &ProtocolConfig,
    round: usize,
    g: &RoundTopology,
    learner: usize,
    encoded: &[FieldElement],
) -> Result<Vec<ShareBundle>> {
    let p = cfg.prime;
    let holders = g.closed_neighborhood(learner);
    let set = ShareholderSet::new(holders.iter().map(|&j| j as u64), p)?;
    let deltas = holders
        .iter()
        .map(|&j| lagrange_delta(&set, j as u64, p))
        .collect::<Result<Vec<_>>>()?;
    let tau = g.degree(learner);
    let mut values = vec![Vec::with_capacity(encoded.len()); holders.len()];
    for (l, &secret) in encoded.iter().enumerate() {
        let mut rng = substream(cfg.seed, &[TAG_SHARE, round as u64, learner as u64, l as u64]);
        let poly = Polynomial::random(secret, tau, &mut rng);
        for (slot, (&j, &d)) in values.iter_mut().zip(holders.iter().zip(&deltas)) {
            slot.push((poly.eval(j as u64) * d).value());
        }
    }
    Ok(holders
        .into_iter()
        .zip(values)
        .map(|(receiver, values)| ShareBundle {
            sender: learner,
            receiver,
            round,
            values,
        })
        .collect())
}

/// Runs one aggregation round over `g` on the learners' local models.
pub fn execute_round(
    cfg: &ProtocolConfig,
    round: usize,
    g: &RoundTopology,
    local_models: &[Vec<f64>],
    record: RecordLevel,
) -> Result<RoundResult> {
    let n = cfg.n_learners;
    let dim = cfg.model_dim;
    let p = cfg.prime;
    if g.n_nodes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.n_nodes(),
        });
    }
    if let Some(i) = (1..=n).find(|&i| g.degree(i) == 0) {
        return Err(Error::IsolatedLearner(i));
    }
    if !g.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    check_range(cfg, round, local_models)?;

    let mut timings = PhaseTimings::default();
    let a = mh_weights(g)?;
    let k_used = resolve_k(cfg, &a, round)?;
    let lambda2 = contraction_radius(&a);

    // share generation and distribution
    let clock = Instant::now();
    let secrets: Vec<Vec<FieldElement>> = local_models
        .iter()
        .zip(&cfg.weights)
        .map(|(m, &w)| {
            m.iter()
                .map(|&x| Ok(encode_fixed(w * x, cfg.precision, p)?.z))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let outgoing: Vec<Vec<ShareBundle>> = (1..=n)
        .into_par_iter()
        .map(|i| share_model(cfg, round, g, i, &secrets[i - 1]))
        .collect::<Result<_>>()?;
    let mut inbox: Vec<Vec<ShareBundle>> = vec![Vec::new(); n];
    for b in outgoing.iter().flatten() {
        inbox[b.receiver - 1].push(b.clone());
    }
    timings.shares = clock.elapsed();

    // masked initial states
    let clock = Instant::now();
    let initial: Vec<Vec<FieldElement>> = (1..=n)
        .into_par_iter()
        .map(|i| build_initial_state(i, &inbox[i - 1], &g.closed_neighborhood(i), dim, p))
        .collect::<Result<_>>()?;
    let initial_u64: Vec<Vec<u64>> = initial
        .iter()
        .map(|s| s.iter().map(|x| x.value()).collect())
        .collect();
    timings.initial_state = clock.elapsed();

    // consensus
    let clock = Instant::now();
    let sparse = SparseWeights::new(&a);
    let mut state = StateVector::new(
        initial_u64
            .iter()
            .map(|s| s.iter().map(|&x| x as f64).collect())
            .collect(),
    )?;
    let mut kept = Vec::new();
    for _ in 0..k_used {
        state = sparse.step(&state)?;
        if record == RecordLevel::Full {
            kept.push(state.clone());
        }
    }
    timings.consensus = clock.elapsed();

    // reconstruction
    let clock = Instant::now();
    let nf = n as f64;
    let exact_sums: Vec<u64> = (0..dim)
        .map(|l| initial_u64.iter().map(|s| s[l]).sum())
        .collect();
    let mut rounding_margin = 0.0f64;
    let mut z = Vec::with_capacity(n);
    let mut decoded = Vec::with_capacity(n);
    for row in state.rows() {
        let mut zi = Vec::with_capacity(dim);
        let mut di = Vec::with_capacity(dim);
        for (l, &s) in row.iter().enumerate() {
            let scaled = nf * s;
            rounding_margin = rounding_margin.max((scaled - exact_sums[l] as f64).abs());
            let zl = p.from_i64(round_half_up(scaled));
            zi.push(zl.value());
            di.push(decode_integer(zl) as f64 / cfg.scale() as f64);
        }
        z.push(zi);
        decoded.push(di);
    }
    timings.reconstruction = clock.elapsed();

    let oracle = quantized_weighted_aggregate(local_models, &cfg.weights, cfg.precision)?;
    let scale = cfg.scale() as f64;
    let mut exact = true;
    let mut max_deviation = 0.0f64;
    for zi in &z {
        for (l, &zl) in zi.iter().enumerate() {
            let got = decode_integer(p.elem(zl));
            exact &= got == oracle[l];
            max_deviation = max_deviation.max((got as f64 / scale - oracle[l] as f64 / scale).abs());
        }
    }

    let transcript = RoundTranscript {
        round,
        topology: g.clone().with_round(round),
        bundles: outgoing.into_iter().flatten().collect(),
        initial_states: initial_u64,
        states: kept,
        outputs: decoded.clone(),
    };
    Ok(RoundResult {
        round,
        k_used,
        lambda2,
        local_models: local_models.to_vec(),
        secrets: secrets
            .iter()
            .map(|s| s.iter().map(|x| x.value()).collect())
            .collect(),
        z,
        decoded,
        oracle,
        max_deviation,
        exact,
        rounding_margin,
        timings,
        transcript,
    })
}

/// Local training step run by every learner at the start of a round.
pub trait Trainer: Sync {
    fn train(&self, learner: usize, round: usize, initial: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
}

impl<F> Trainer for F
where
    F: Fn(usize, usize, &[f64], &mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    fn train(&self, learner: usize, round: usize, initial: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self(learner, round, initial, rng)
    }
}

/// Returns the initial model unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantTrainer;

impl Trainer for ConstantTrainer {
    fn train(&self, _: usize, _: usize, initial: &[f64], _: &mut ChaCha8Rng) -> Vec<f64> {
        initial.to_vec()
    }
}

/// Initial model plus uniform noise in `[-noise, noise]`, clamped to `±theta_max`.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticTrainer {
    pub noise: f64,
    pub theta_max: f64,
}

impl Trainer for SyntheticTrainer {
    fn train(&self, _: usize, _: usize, initial: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        initial
            .iter()
            .map(|&x| {
                let e = if self.noise > 0.0 { rng.gen_range(-self.noise..=self.noise) } else { 0.0 };
                (x + e).clamp(-self.theta_max, self.theta_max)
            })
            .collect()
    }
}

/// Seeded initial models, uniform in `[-scale, scale]`.
pub fn initial_models(cfg: &ProtocolConfig, scale: f64) -> Vec<Vec<f64>> {
    (1..=cfg.n_learners)
        .map(|i| {
            let mut rng = substream(cfg.seed, &[TAG_INIT, i as u64]);
            (0..cfg.model_dim)
                .map(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub rounds: Vec<RoundResult>,
    pub transcript: Transcript,
}

impl TrainingOutcome {
    /// Decoded global model of each round, taken from learner 1.
    pub fn global_models(&self) -> Vec<Vec<f64>> {
        self.rounds.iter().map(|r| r.decoded[0].clone()).collect()
    }
}

/// Runs `cfg.rounds` rounds; each learner starts round `t + 1` from the
/// model it decoded in round `t`.
pub fn run_training(
    cfg: &ProtocolConfig,
    trainer: &dyn Trainer,
    schedule: &TopologySchedule,
    initial: Vec<Vec<f64>>,
    record: RecordLevel,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if let Some(len) = schedule.len() {
        if len < cfg.rounds {
            return Err(Error::Config(format!(
                "schedule has {len} rounds but {} were requested",
                cfg.rounds
            )));
        }
    }
    let mut start = initial;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut transcript = Transcript::default();
    for t in 1..=cfg.rounds {
        let g = schedule.round(t)?;
        let local: Vec<Vec<f64>> = start
            .iter()
            .enumerate()
            .map(|(idx, m)| {
                let mut rng = substream(cfg.seed, &[TAG_TRAIN, t as u64, idx as u64 + 1]);
                trainer.train(idx + 1, t, m, &mut rng)
            })
            .collect();
        let mut result = execute_round(cfg, t, &g, &local, record)?;
        start = result.decoded.clone();
        transcript.rounds.push(std::mem::replace(
            &mut result.transcript,
            empty_round(t, &g),
        ));
        rounds.push(result);
    }
    for (r, tr) in rounds.iter_mut().zip(&transcript.rounds) {
        r.transcript = tr.clone();
    }
    Ok(TrainingOutcome { rounds, transcript })
}

fn empty_round(round: usize, g: &RoundTopology) -> RoundTranscript {
    RoundTranscript {
        round,
        topology: g.clone(),
        bundles: Vec::new(),
        initial_states: Vec::new(),
        states: Vec::new(),
        outputs: Vec::new(),
    }
}

/// Recomputes each round's decoded models from its recorded shares and
/// checks them, along with any recorded consensus states, against the
/// transcript. Returns the recomputed outputs.
pub fn replay(transcript: &Transcript, cfg: &ProtocolConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    let p = cfg.prime;
    let mut all = Vec::with_capacity(transcript.rounds.len());
    for rt in &transcript.rounds {
        let g = &rt.topology;
        let n = g.n_nodes();
        if n != cfg.n_learners {
            return Err(Error::TranscriptIncomplete(format!(
                "round {}: {n} learners, config has {}",
                rt.round, cfg.n_learners
            )));
        }
        let dim = cfg.model_dim;
        let initial = (1..=n)
            .map(|i| build_initial_state(i, &rt.bundles, &g.closed_neighborhood(i), dim, p))
            .collect::<Result<Vec<_>>>()?;
        let initial_u64: Vec<Vec<u64>> = initial
            .iter()
            .map(|s| s.iter().map(|x| x.value()).collect())
            .collect();
        if initial_u64 != rt.initial_states {
            return Err(Error::TranscriptIncomplete(format!(
                "round {}: initial states disagree with shares",
                rt.round
            )));
        }
        let a = mh_weights(g)?;
        let sparse = SparseWeights::new(&a);
        let k = if rt.states.is_empty() {
            resolve_k(cfg, &a, rt.round)?
        } else {
            rt.states.len()
        };
        let mut state = StateVector::new(
            initial_u64
                .iter()
                .map(|s| s.iter().map(|&x| x as f64).collect())
                .collect(),
        )?;
        for step in 0..k {
            state = sparse.step(&state)?;
            if let Some(rec) = rt.states.get(step) {
                if *rec != state {
                    return Err(Error::TranscriptIncomplete(format!(
                        "round {}: consensus state at k = {} disagrees",
                        rt.round,
                        step + 1
                    )));
                }
            }
        }
        let decoded: Vec<Vec<f64>> = state
            .rows()
            .map(|row| {
                row.iter()
                    .map(|&s| {
                        let z = p.from_i64(round_half_up(n as f64 * s));
                        decode_integer(z) as f64 / cfg.scale() as f64
                    })
                    .collect()
            })
            .collect();
        if decoded != rt.outputs {
            return Err(Error::TranscriptIncomplete(format!(
                "round {}: replayed outputs differ from the recorded ones",
                rt.round
            )));
        }
        all.push(decoded);
    }
    Ok(all)
}
