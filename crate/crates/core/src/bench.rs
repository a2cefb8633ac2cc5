//! Timing sweeps for round cost against share count and consensus length.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::consensus::{run_consensus, StateVector};
use crate::error::Result;
use crate::protocol::{execute_round, initial_models, ProtocolConfig, RecordLevel};
use crate::topology::{generate_topology, mh_weights, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchPoint {
    pub x: f64,
    pub seconds: f64,
}

/// Least-squares line; all fields are `None` with fewer than two distinct `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
}

pub fn fit_line(points: &[BenchPoint]) -> LinearFit {
    let none = LinearFit {
        slope: None,
        intercept: None,
        r_squared: None,
    };
    let n = points.len() as f64;
    if points.len() < 2 {
        return none;
    }
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.seconds).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return none;
    }
    let sxy: f64 = points.iter().map(|p| (p.x - mx) * (p.seconds - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.seconds - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope: Some(slope),
        intercept: Some(my - slope * mx),
        r_squared: Some(r2),
    }
}

/// Median time per size over `reps` passes. Passes sweep every size in
/// turn so slow drift in machine speed hits all sizes alike.
fn median_of_interleaved(sizes: usize, reps: usize, mut f: impl FnMut(usize) -> Result<f64>) -> Result<Vec<f64>> {
    let mut samples = vec![Vec::with_capacity(reps); sizes];
    for _ in 0..reps.max(1) {
        for (i, slot) in samples.iter_mut().enumerate() {
            slot.push(f(i)?);
        }
    }
    Ok(samples
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 0 {
                (v[m - 1] + v[m]) / 2.0
            } else {
                v[m]
            }
        })
        .collect())
}

/// Round time against shares handled per learner, `avg |N̄_i| * n`, sweeping
/// the model dimension `n` on one fixed graph.
pub fn share_sweep(
    n_learners: usize,
    kind: TopologyKind,
    dims: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchPoint>> {
    let g = generate_topology(kind, n_learners, seed)?;
    let closed = g.average_degree() + 1.0;
    let setups = dims
        .iter()
        .map(|&dim| {
            let cfg = ProtocolConfig::uniform(n_learners, dim, 2, 1020431, 1.0, seed)?;
            let models = initial_models(&cfg, 1.0);
            Ok((cfg, models))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = median_of_interleaved(dims.len(), reps, |i| {
        let (cfg, models) = &setups[i];
        let r = execute_round(cfg, 1, &g, models, RecordLevel::NoConsensus)?;
        Ok(r.timings.total().as_secs_f64())
    })?;
    Ok(dims
        .iter()
        .zip(best)
        .map(|(&dim, seconds)| BenchPoint {
            x: closed * dim as f64,
            seconds,
        })
        .collect())
}

/// Consensus time against the iteration count.
pub fn k_sweep(
    n_learners: usize,
    kind: TopologyKind,
    dim: usize,
    ks: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchPoint>> {
    let g = generate_topology(kind, n_learners, seed)?;
    let a = mh_weights(&g)?;
    let rows: Vec<Vec<f64>> = (0..n_learners)
        .map(|i| (0..dim).map(|l| ((i * 31 + l * 7) % 1000) as f64).collect())
        .collect();
    let initial = StateVector::new(rows)?;
    let best = median_of_interleaved(ks.len(), reps, |i| {
        let start = Instant::now();
        let traj = run_consensus(initial.clone(), &a, ks[i])?;
        std::hint::black_box(traj.last());
        Ok(start.elapsed().as_secs_f64())
    })?;
    Ok(ks
        .iter()
        .zip(best)
        .map(|(&k, seconds)| BenchPoint { x: k as f64, seconds })
        .collect())
}

pub fn write_csv<W: Write>(points: &[BenchPoint], x_name: &str, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{x_name},seconds")?;
    for p in points {
        writeln!(w, "{},{:.9}", p.x, p.seconds)?;
    }
    Ok(())
}
