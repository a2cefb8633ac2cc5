//! Every message exchanged in a run, and its JSON-lines encoding.
//!
//! One record per message:
//!
//! ```text
//! {"round":1,"phase":"share","from":2,"to":3,"payload":[17,5]}
//! {"round":1,"phase":"initial_state","from":2,"to":3,"payload":[411,90]}
//! {"round":1,"phase":"state","k":1,"from":2,"to":3,"payload":[380.25,77.5]}
//! {"round":1,"phase":"output","from":2,"to":2,"payload":[0.25,-1.5]}
//! ```
//!
//! `share` records include the bundle a learner keeps for itself
//! (`from == to`). `output` records carry each learner's decoded model.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::consensus::StateVector;
use crate::error::{Error, Result};
use crate::topology::RoundTopology;

/// Upper bound on learner ids accepted when reading a transcript.
pub const MAX_LEARNERS: usize = 1 << 16;

/// Weighted shares of every coordinate sent from one learner to one holder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareBundle {
    pub sender: usize,
    pub receiver: usize,
    pub round: usize,
    /// Residues mod p, one per model coordinate.
    pub values: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTranscript {
    pub round: usize,
    pub topology: RoundTopology,
    pub bundles: Vec<ShareBundle>,
    /// `s_i(0)` per learner (index `i - 1`).
    pub initial_states: Vec<Vec<u64>>,
    /// `s(k)` for `k = 1..=K`; empty when consensus messages were not kept.
    pub states: Vec<StateVector>,
    /// Decoded global model per learner.
    pub outputs: Vec<Vec<f64>>,
}

impl RoundTranscript {
    pub fn bundle(&self, sender: usize, receiver: usize) -> Option<&ShareBundle> {
        self.bundles
            .iter()
            .find(|b| b.sender == sender && b.receiver == receiver)
    }

    pub fn n_messages(&self) -> usize {
        let directed = 2 * self.topology.n_edges();
        self.bundles.len() + directed * (1 + self.states.len()) + self.outputs.len()
    }

    fn records(&self) -> impl Iterator<Item = Record> + '_ {
        let t = self.round;
        let g = &self.topology;
        let shares = self.bundles.iter().map(move |b| Record {
            round: t,
            phase: Phase::Share,
            k: None,
            from: b.sender,
            to: b.receiver,
            payload: Payload::Residues(b.values.clone()),
        });
        let initial = self.initial_states.iter().enumerate().flat_map(move |(idx, s)| {
            g.neighbors(idx + 1).iter().map(move |&j| Record {
                round: t,
                phase: Phase::InitialState,
                k: None,
                from: idx + 1,
                to: j,
                payload: Payload::Residues(s.clone()),
            })
        });
        let states = self.states.iter().flat_map(move |sv| {
            sv.rows().enumerate().flat_map(move |(idx, row)| {
                g.neighbors(idx + 1).iter().map(move |&j| Record {
                    round: t,
                    phase: Phase::State,
                    k: Some(sv.k),
                    from: idx + 1,
                    to: j,
                    payload: Payload::Reals(row.to_vec()),
                })
            })
        });
        let outputs = self.outputs.iter().enumerate().map(move |(idx, o)| Record {
            round: t,
            phase: Phase::Output,
            k: None,
            from: idx + 1,
            to: idx + 1,
            payload: Payload::Reals(o.clone()),
        });
        shares.chain(initial).chain(states).chain(outputs)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub rounds: Vec<RoundTranscript>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Share,
    InitialState,
    State,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Residues(Vec<u64>),
    Reals(Vec<f64>),
}

impl Payload {
    fn reals(&self) -> Vec<f64> {
        match self {
            Payload::Residues(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::Reals(v) => v.clone(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::Residues(v) => v.len(),
            Payload::Reals(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub round: usize,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub from: usize,
    pub to: usize,
    pub payload: Payload,
}

impl Transcript {
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        self.rounds.iter().flat_map(RoundTranscript::records)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes())
    }

    /// Rebuilds per-round transcripts. Topology is recovered from the share
    /// records, the learner count from the largest id seen.
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let incomplete = |m: String| Error::TranscriptIncomplete(m);
        let mut by_round: BTreeMap<usize, Vec<Record>> = BTreeMap::new();
        let mut n = 0usize;
        for r in records {
            if r.from == 0 || r.to == 0 {
                return Err(incomplete("learner ids start at 1".into()));
            }
            if r.from.max(r.to) > MAX_LEARNERS {
                return Err(incomplete(format!("learner id above {MAX_LEARNERS}")));
            }
            n = n.max(r.from).max(r.to);
            by_round.entry(r.round).or_default().push(r);
        }
        let mut rounds = Vec::with_capacity(by_round.len());
        for (round, recs) in by_round {
            let dim = recs.first().map_or(0, |r| r.payload.len());
            if recs.iter().any(|r| r.payload.len() != dim) {
                return Err(incomplete(format!("round {round}: payload lengths differ")));
            }
            let mut edges = Vec::new();
            let mut bundles = Vec::new();
            let mut initial: Vec<Option<Vec<u64>>> = vec![None; n];
            let mut states: BTreeMap<usize, Vec<Option<Vec<f64>>>> = BTreeMap::new();
            let mut outputs: Vec<Option<Vec<f64>>> = vec![None; n];
            for r in recs {
                match r.phase {
                    Phase::Share => {
                        let Payload::Residues(values) = r.payload else {
                            return Err(incomplete(format!("round {round}: share payload must be residues")));
                        };
                        if r.from != r.to {
                            edges.push((r.from, r.to));
                        }
                        bundles.push(ShareBundle {
                            sender: r.from,
                            receiver: r.to,
                            round,
                            values,
                        });
                    }
                    Phase::InitialState => {
                        let Payload::Residues(values) = r.payload else {
                            return Err(incomplete(format!("round {round}: initial state must be residues")));
                        };
                        let slot = &mut initial[r.from - 1];
                        match slot {
                            Some(prev) if *prev != values => {
                                return Err(incomplete(format!(
                                    "round {round}: learner {} broadcast inconsistent initial states",
                                    r.from
                                )))
                            }
                            _ => *slot = Some(values),
                        }
                    }
                    Phase::State => {
                        let k = r.k.ok_or_else(|| incomplete(format!("round {round}: state record without k")))?;
                        if k == 0 {
                            return Err(incomplete(format!("round {round}: state records start at k = 1")));
                        }
                        let slot = &mut states.entry(k).or_insert_with(|| vec![None; n])[r.from - 1];
                        let values = r.payload.reals();
                        match slot {
                            Some(prev) if *prev != values => {
                                return Err(incomplete(format!(
                                    "round {round}: learner {} broadcast inconsistent states at k = {k}",
                                    r.from
                                )))
                            }
                            _ => *slot = Some(values),
                        }
                    }
                    Phase::Output => {
                        outputs[r.from - 1] = Some(r.payload.reals());
                    }
                }
            }
            let topology = RoundTopology::new(n, edges, round)?;
            let collect = |v: Vec<Option<Vec<u64>>>, what: &str| -> Result<Vec<Vec<u64>>> {
                v.into_iter()
                    .enumerate()
                    .map(|(i, s)| s.ok_or_else(|| incomplete(format!("round {round}: no {what} for learner {}", i + 1))))
                    .collect()
            };
            let initial_states = collect(initial, "initial state")?;
            let mut state_vecs = Vec::with_capacity(states.len());
            for (idx, (k, rows)) in states.into_iter().enumerate() {
                if k != idx + 1 {
                    return Err(incomplete(format!("round {round}: missing states for k = {}", idx + 1)));
                }
                let rows = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| s.ok_or_else(|| incomplete(format!("round {round}: no state at k = {k} for learner {}", i + 1))))
                    .collect::<Result<Vec<_>>>()?;
                let mut sv = StateVector::new(rows)?;
                sv.k = k;
                state_vecs.push(sv);
            }
            let outputs = outputs
                .into_iter()
                .enumerate()
                .map(|(i, s)| s.ok_or_else(|| incomplete(format!("round {round}: no output for learner {}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            rounds.push(RoundTranscript {
                round,
                topology,
                bundles,
                initial_states,
                states: state_vecs,
                outputs,
            });
        }
        Ok(Self { rounds })
    }
}
