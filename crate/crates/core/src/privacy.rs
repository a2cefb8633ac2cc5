//! What a coalition of semi-honest learners can learn from a transcript.
//!
//! A benign set is *surrounded* when it is connected in the benign-induced
//! subgraph and every neighbor outside it is adversarial; these are exactly
//! the connected components of `G[B]`. The coalition learns the model sum of
//! each surrounded set and nothing finer, so a round is perfectly secret iff
//! `G[B]` is connected.
//!
//! [`adversary_infer`] checks this constructively. Per round and coordinate it
//! builds a GF(p) system whose unknowns are the benign secrets and every
//! benign polynomial coefficient, and whose equations are:
//!
//! - each weighted share a benign learner sent to a coalition member;
//! - each benign `s_i(0)`, minus the bundles the coalition itself sent to
//!   `i` (the coalition is credited with all of `s(0)`, a worst case since
//!   later states are public linear images of it);
//! - the decoded output, minus the coalition's own secrets.
//!
//! Coefficient columns come first, so after Gauss-Jordan elimination the rows
//! whose pivot falls on a secret column span every functional of the benign
//! secrets the coalition can evaluate.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::{FieldElement, GfpMatrix, PrimeModulus};
use crate::fixed_point::{decode_integer, Precision};
use crate::sharing::{lagrange_delta, ShareholderSet};
use crate::topology::RoundTopology;
use crate::transcript::{RoundTranscript, Transcript};

/// Coalition `A`; everyone else is benign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversarySet {
    n: usize,
    adversaries: Vec<usize>,
    benign: Vec<usize>,
}

impl AdversarySet {
    pub fn new(n: usize, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let adv: BTreeSet<usize> = ids.into_iter().collect();
        if let Some(&bad) = adv.iter().find(|&&i| i == 0 || i > n) {
            return Err(Error::BadParameters(format!("adversary id {bad} outside 1..={n}")));
        }
        if adv.len() >= n {
            return Err(Error::BadParameters("at least one learner must be benign".into()));
        }
        Ok(Self {
            n,
            benign: (1..=n).filter(|i| !adv.contains(i)).collect(),
            adversaries: adv.into_iter().collect(),
        })
    }

    /// Parses a comma-separated id list such as `"1,5,9"`; empty means no adversaries.
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        let ids = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| Error::BadParameters(format!("bad adversary id {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, ids)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adversaries(&self) -> &[usize] {
        &self.adversaries
    }

    pub fn benign(&self) -> &[usize] {
        &self.benign
    }

    pub fn is_adversary(&self, i: usize) -> bool {
        self.adversaries.binary_search(&i).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurroundedSet {
    pub members: Vec<usize>,
    /// Members with at least one adversarial neighbor.
    pub boundary: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurroundedDecomposition {
    /// Ordered by smallest member.
    pub sets: Vec<SurroundedSet>,
}

impl SurroundedDecomposition {
    /// True when the only surrounded set is all of `B`.
    pub fn is_whole(&self) -> bool {
        self.sets.len() == 1
    }

    pub fn member_lists(&self) -> Vec<Vec<usize>> {
        self.sets.iter().map(|s| s.members.clone()).collect()
    }
}

fn check_sizes(g: &RoundTopology, adv: &AdversarySet) -> Result<()> {
    if g.n_nodes() != adv.n() {
        return Err(Error::DimensionMismatch {
            expected: adv.n(),
            found: g.n_nodes(),
        });
    }
    Ok(())
}

/// Connected components of the benign-induced subgraph.
pub fn surrounded_components(g: &RoundTopology, adv: &AdversarySet) -> Result<SurroundedDecomposition> {
    check_sizes(g, adv)?;
    let n = g.n_nodes();
    let mut seen = vec![false; n + 1];
    let mut sets = Vec::new();
    for &start in adv.benign() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in g.neighbors(v) {
                if !seen[u] && !adv.is_adversary(u) {
                    seen[u] = true;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        let boundary = members
            .iter()
            .copied()
            .filter(|&v| g.neighbors(v).iter().any(|&u| adv.is_adversary(u)))
            .collect();
        sets.push(SurroundedSet { members, boundary });
    }
    Ok(SurroundedDecomposition { sets })
}

/// The definition taken literally: `set` is a nonempty subset of `B`,
/// connected on its own, and has no benign neighbor outside itself.
pub fn is_surrounded(g: &RoundTopology, adv: &AdversarySet, set: &[usize]) -> bool {
    if set.is_empty() || set.iter().any(|&v| v == 0 || v > g.n_nodes() || adv.is_adversary(v)) {
        return false;
    }
    let inside: BTreeSet<usize> = set.iter().copied().collect();
    let closed = inside.iter().all(|&v| {
        g.neighbors(v)
            .iter()
            .all(|&u| adv.is_adversary(u) || inside.contains(&u))
    });
    if !closed {
        return false;
    }
    let first = *inside.iter().next().expect("nonempty");
    let mut seen = BTreeSet::from([first]);
    let mut stack = vec![first];
    while let Some(v) = stack.pop() {
        for &u in g.neighbors(v) {
            if inside.contains(&u) && seen.insert(u) {
                stack.push(u);
            }
        }
    }
    seen.len() == inside.len()
}

/// Every surrounded set found by enumerating subsets of `B`; `|B| <= 20`.
pub fn literal_surrounded_sets(g: &RoundTopology, adv: &AdversarySet) -> Result<Vec<Vec<usize>>> {
    check_sizes(g, adv)?;
    let b = adv.benign();
    if b.len() > 20 {
        return Err(Error::BadParameters(format!("{} benign learners is too many to enumerate", b.len())));
    }
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << b.len()) {
        let set: Vec<usize> = (0..b.len()).filter(|k| mask >> k & 1 == 1).map(|k| b[k]).collect();
        if is_surrounded(g, adv, &set) {
            out.push(set);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecrecyVerdict {
    pub perfect: bool,
    pub failing_round: Option<usize>,
    /// Surrounded sets of the failing round; each one's sum leaks.
    pub witnesses: Vec<Vec<usize>>,
}

/// Perfect secrecy holds iff `B` is the only surrounded set in every round.
pub fn perfect_secrecy(rounds: &[RoundTopology], adv: &AdversarySet) -> Result<SecrecyVerdict> {
    if rounds.is_empty() {
        return Err(Error::BadParameters("empty schedule".into()));
    }
    for (t, g) in rounds.iter().enumerate() {
        let d = surrounded_components(g, adv)?;
        if !d.is_whole() {
            return Ok(SecrecyVerdict {
                perfect: false,
                failing_round: Some(t + 1),
                witnesses: d.member_lists(),
            });
        }
    }
    Ok(SecrecyVerdict {
        perfect: true,
        failing_round: None,
        witnesses: Vec::new(),
    })
}

/// For `N <= 8`: the component decomposition matches the literal definition
/// in every round, and the verdict matches connectivity of `G[B]`.
pub fn secrecy_cross_check(rounds: &[RoundTopology], adv: &AdversarySet) -> Result<bool> {
    if adv.n() > 8 {
        return Err(Error::BadParameters(format!("cross-check needs N <= 8, got {}", adv.n())));
    }
    let mut all_connected = true;
    for g in rounds {
        let mut fast = surrounded_components(g, adv)?.member_lists();
        fast.sort();
        if fast != literal_surrounded_sets(g, adv)? {
            return Ok(false);
        }
        all_connected &= is_surrounded(g, adv, adv.benign());
    }
    Ok(perfect_secrecy(rounds, adv)?.perfect == all_connected)
}

/// Which coordinates [`adversary_infer`] analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordMode {
    /// Coordinate 1 only; coordinates use independent polynomials, so the
    /// inferable span is the same for each.
    Representative,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentFlag {
    pub members: Vec<usize>,
    pub inferable: bool,
    pub value: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndividualFlag {
    pub learner: usize,
    pub inferable: bool,
    pub value: Option<u64>,
}

/// Inferable functionals of one coordinate, over the benign secrets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateInference {
    /// 1-based.
    pub coord: usize,
    benign: Vec<usize>,
    p: PrimeModulus,
    /// Basis rows in reduced echelon form over the benign secrets.
    basis: Vec<Vec<FieldElement>>,
    /// Column of each basis row's leading one.
    pivots: Vec<usize>,
    /// Observed value of each basis functional.
    values: Vec<FieldElement>,
    pub components: Vec<ComponentFlag>,
    pub individuals: Vec<IndividualFlag>,
}

impl CoordinateInference {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> Vec<Vec<u64>> {
        self.basis
            .iter()
            .map(|r| r.iter().map(|x| x.value()).collect())
            .collect()
    }

    /// Value of `sum_i coeffs[i] * x_{benign[i]}` when the coalition can
    /// compute it.
    pub fn evaluate(&self, coeffs: &[FieldElement]) -> Option<FieldElement> {
        if coeffs.len() != self.benign.len() {
            return None;
        }
        let mut residual = coeffs.to_vec();
        let mut value = self.p.zero();
        for ((row, &pc), &v) in self.basis.iter().zip(&self.pivots).zip(&self.values) {
            let f = residual[pc];
            if f.is_zero() {
                continue;
            }
            for (slot, &x) in residual.iter_mut().zip(row) {
                *slot -= f * x;
            }
            value += f * v;
        }
        residual.iter().all(|x| x.is_zero()).then_some(value)
    }

    /// Value of the sum of the secrets of `members` (all benign), if inferable.
    pub fn evaluate_sum(&self, members: &[usize]) -> Option<u64> {
        let mut coeffs = vec![self.p.zero(); self.benign.len()];
        for m in members {
            let idx = self.benign.binary_search(m).ok()?;
            coeffs[idx] = self.p.one();
        }
        self.evaluate(&coeffs).map(|v| v.value())
    }

    /// True iff the inferable span is exactly the span of the component
    /// indicator vectors.
    pub fn span_is_components(&self) -> bool {
        self.rank() == self.components.len() && self.components.iter().all(|c| c.inferable)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundInference {
    pub round: usize,
    pub decomposition: SurroundedDecomposition,
    pub coords: Vec<CoordinateInference>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceReport {
    pub adversaries: Vec<usize>,
    pub benign: Vec<usize>,
    pub precision: Precision,
    pub p: PrimeModulus,
    pub rounds: Vec<RoundInference>,
}

impl InferenceReport {
    pub fn perfect_secrecy(&self) -> bool {
        self.rounds.iter().all(|r| r.decomposition.is_whole())
    }

    fn decode(&self, v: u64) -> f64 {
        decode_integer(self.p.elem(v)) as f64 / self.precision.scale() as f64
    }

    /// One JSON object per round.
    pub fn to_json(&self) -> Value {
        let whole = self.benign.len();
        let rounds: Vec<Value> = self
            .rounds
            .iter()
            .map(|r| {
                let mut leaked = Vec::new();
                for c in &r.coords {
                    for comp in c.components.iter().filter(|f| f.inferable && f.members.len() < whole) {
                        leaked.push(json!({
                            "kind": "component_sum",
                            "members": comp.members,
                            "coordinate": c.coord,
                            "value": comp.value,
                            "decoded": comp.value.map(|v| self.decode(v)),
                        }));
                    }
                    if whole > 1 {
                        for ind in c.individuals.iter().filter(|f| f.inferable) {
                            leaked.push(json!({
                                "kind": "individual",
                                "members": [ind.learner],
                                "coordinate": c.coord,
                                "value": ind.value,
                                "decoded": ind.value.map(|v| self.decode(v)),
                            }));
                        }
                    }
                }
                json!({
                    "round": r.round,
                    "secrecy_verdict": r.decomposition.is_whole(),
                    "surrounded_sets": r.decomposition.member_lists(),
                    "leaked_functionals": leaked,
                })
            })
            .collect();
        json!({
            "adversaries": self.adversaries,
            "perfect_secrecy": self.perfect_secrecy(),
            "rounds": rounds,
        })
    }
}

/// Column layout of the per-coordinate system.
struct Layout {
    benign: Vec<usize>,
    /// First coefficient column of each benign learner; `None` for adversaries.
    coef_start: Vec<Option<usize>>,
    n_coef: usize,
    /// `delta(N̄_j, h)` for holder `h` in `N̄_j`, indexed `[j - 1]`.
    deltas: Vec<Vec<(usize, FieldElement)>>,
}

impl Layout {
    fn new(g: &RoundTopology, adv: &AdversarySet, p: PrimeModulus) -> Result<Self> {
        let n = g.n_nodes();
        let mut coef_start = vec![None; n];
        let mut n_coef = 0;
        for &j in adv.benign() {
            coef_start[j - 1] = Some(n_coef);
            n_coef += g.degree(j);
        }
        let deltas = (1..=n)
            .map(|j| {
                let holders = g.closed_neighborhood(j);
                let set = ShareholderSet::new(holders.iter().map(|&h| h as u64), p)?;
                holders
                    .iter()
                    .map(|&h| Ok((h, lagrange_delta(&set, h as u64, p)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            benign: adv.benign().to_vec(),
            coef_start,
            n_coef,
            deltas,
        })
    }

    fn width(&self) -> usize {
        self.n_coef + self.benign.len() + 1
    }

    fn secret_col(&self, j: usize) -> usize {
        self.n_coef + self.benign.binary_search(&j).expect("benign learner")
    }

    fn delta(&self, j: usize, h: usize) -> FieldElement {
        self.deltas[j - 1]
            .iter()
            .find(|(x, _)| *x == h)
            .map(|&(_, d)| d)
            .expect("holder in closed neighborhood")
    }

    /// Adds the weighted share `delta * H_j(h)` of benign `j` as a linear form.
    fn add_share(&self, row: &mut [FieldElement], g: &RoundTopology, j: usize, h: usize, p: PrimeModulus) {
        let d = self.delta(j, h);
        row[self.secret_col(j)] += d;
        let start = self.coef_start[j - 1].expect("benign learner");
        let x = p.elem(h as u64);
        let mut pow = x;
        for m in 0..g.degree(j) {
            row[start + m] += d * pow;
            pow *= x;
        }
    }
}

fn missing(round: usize, what: String) -> Error {
    Error::TranscriptIncomplete(format!("round {round}: {what}"))
}

fn infer_coordinate(
    rt: &RoundTranscript,
    adv: &AdversarySet,
    layout: &Layout,
    decomposition: &SurroundedDecomposition,
    p: PrimeModulus,
    prec: Precision,
    coord: usize,
) -> Result<CoordinateInference> {
    let g = &rt.topology;
    let t = rt.round;
    let width = layout.width();
    let rhs_col = width - 1;
    let share = |from: usize, to: usize| -> Result<FieldElement> {
        let b = rt
            .bundle(from, to)
            .ok_or_else(|| missing(t, format!("no share from {from} to {to}")))?;
        b.values
            .get(coord)
            .map(|&v| p.elem(v))
            .ok_or_else(|| missing(t, format!("share from {from} to {to} has no coordinate {}", coord + 1)))
    };
    let mut sys = GfpMatrix::zeros(0, width, p);

    for &j in adv.benign() {
        for &a in g.neighbors(j).iter().filter(|&&a| adv.is_adversary(a)) {
            let mut row = vec![p.zero(); width];
            layout.add_share(&mut row, g, j, a, p);
            row[rhs_col] = share(j, a)?;
            sys.push_row(&row)?;
        }
    }

    for &i in adv.benign() {
        let mut row = vec![p.zero(); width];
        let s0 = rt
            .initial_states
            .get(i - 1)
            .and_then(|s| s.get(coord))
            .ok_or_else(|| missing(t, format!("no initial state for learner {i}")))?;
        let mut rhs = p.elem(*s0);
        for j in g.closed_neighborhood(i) {
            if adv.is_adversary(j) {
                rhs -= share(j, i)?;
            } else {
                layout.add_share(&mut row, g, j, i, p);
            }
        }
        row[rhs_col] = rhs;
        sys.push_row(&row)?;
    }

    // public output
    let reader = adv.adversaries().first().copied().unwrap_or(1);
    let out = rt
        .outputs
        .get(reader - 1)
        .and_then(|o| o.get(coord))
        .ok_or_else(|| missing(t, format!("no output for learner {reader}")))?;
    let mut rhs = p.from_i64((out * prec.scale() as f64).round() as i64);
    for &a in adv.adversaries() {
        for h in g.closed_neighborhood(a) {
            rhs -= share(a, h)?;
        }
    }
    let mut row = vec![p.zero(); width];
    for &i in adv.benign() {
        row[layout.secret_col(i)] = p.one();
    }
    row[rhs_col] = rhs;
    sys.push_row(&row)?;

    let ech = sys.row_reduce();
    if ech.pivots.last() == Some(&rhs_col) {
        return Err(missing(t, "observations are inconsistent".into()));
    }
    let mut basis = Vec::new();
    let mut pivots = Vec::new();
    let mut values = Vec::new();
    for (r, &pc) in ech.pivots.iter().enumerate() {
        if pc < layout.n_coef {
            continue;
        }
        let row = ech.reduced.row(r);
        basis.push(row[layout.n_coef..rhs_col].to_vec());
        pivots.push(pc - layout.n_coef);
        values.push(row[rhs_col]);
    }
    let mut ci = CoordinateInference {
        coord: coord + 1,
        benign: layout.benign.clone(),
        p,
        basis,
        pivots,
        values,
        components: Vec::new(),
        individuals: Vec::new(),
    };
    ci.components = decomposition
        .sets
        .iter()
        .map(|s| {
            let value = ci.evaluate_sum(&s.members);
            ComponentFlag {
                members: s.members.clone(),
                inferable: value.is_some(),
                value,
            }
        })
        .collect();
    ci.individuals = layout
        .benign
        .iter()
        .map(|&i| {
            let value = ci.evaluate_sum(&[i]);
            IndividualFlag {
                learner: i,
                inferable: value.is_some(),
                value,
            }
        })
        .collect();
    Ok(ci)
}

/// Everything the coalition `adv` can compute about benign secrets, per round.
pub fn adversary_infer(
    transcript: &Transcript,
    adv: &AdversarySet,
    p: PrimeModulus,
    prec: Precision,
    mode: CoordMode,
) -> Result<InferenceReport> {
    let rounds = transcript
        .rounds
        .iter()
        .map(|rt| {
            let g = &rt.topology;
            let decomposition = surrounded_components(g, adv)?;
            let layout = Layout::new(g, adv, p)?;
            let dim = rt.initial_states.first().map_or(0, Vec::len);
            if dim == 0 {
                return Err(missing(rt.round, "empty model".into()));
            }
            let n_coords = match mode {
                CoordMode::Representative => 1,
                CoordMode::All => dim,
            };
            let coords = (0..n_coords)
                .into_par_iter()
                .map(|l| infer_coordinate(rt, adv, &layout, &decomposition, p, prec, l))
                .collect::<Result<Vec<_>>>()?;
            Ok(RoundInference {
                round: rt.round,
                decomposition,
                coords,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InferenceReport {
        adversaries: adv.adversaries().to_vec(),
        benign: adv.benign().to_vec(),
        precision: prec,
        p,
        rounds,
    })
}
