//! Matching queries and the sources that answer them anonymously.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid, UtaModel};
use crate::rational::{cmp_none_last, Rational};

/// `(i: q_i, j: q_j) ~ (i: p_i, j: ?)`: the answer is a value on criterion `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub i: usize,
    pub j: usize,
    pub q_i: Rational,
    pub q_j: Rational,
    pub p_i: Rational,
}

impl Query {
    pub fn new(i: usize, j: usize, q_i: Rational, q_j: Rational, p_i: Rational) -> Self {
        Query { i, j, q_i, q_j, p_i }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        grid.check_criterion(self.i)?;
        grid.check_criterion(self.j)?;
        if self.i == self.j {
            return Err(Error::MalformedQuery("query criteria must differ".into()));
        }
        for (c, v) in [(self.i, &self.q_i), (self.j, &self.q_j), (self.i, &self.p_i)] {
            if !grid.scale(c).contains(v) {
                return Err(Error::OutOfScale { criterion: c, value: v.clone() });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(c{}: {}, c{}: {}) ~ (c{}: {}, c{}: ?)",
            self.i, self.q_i, self.j, self.q_j, self.i, self.p_i, self.j
        )
    }
}

/// The two anonymous answers to one query, sorted with `None` last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnswerPair {
    pub low: Option<Rational>,
    pub high: Option<Rational>,
}

impl AnswerPair {
    /// Sorts two answers; the order they were given in is discarded.
    pub fn new(a: Option<Rational>, b: Option<Rational>) -> Self {
        if cmp_none_last(&a, &b).is_le() {
            AnswerPair { low: a, high: b }
        } else {
            AnswerPair { low: b, high: a }
        }
    }

    pub fn is_unanimous(&self) -> bool {
        self.low == self.high
    }
}

impl fmt::Display for AnswerPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |a: &Option<Rational>| a.as_ref().map_or("None".to_string(), |v| v.to_string());
        write!(f, "({}, {})", show(&self.low), show(&self.high))
    }
}

impl Serialize for AnswerPair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [&self.low, &self.high].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AnswerPair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [a, b] = <[Option<Rational>; 2]>::deserialize(deserializer)?;
        Ok(AnswerPair::new(a, b))
    }
}

/// Anything that can answer matching queries with two anonymous values.
///
/// Answers are noise-free: asking the same query twice must give the same pair.
pub trait AnswerSource {
    fn answer(&mut self, query: &Query) -> Result<AnswerPair>;
}

impl<T: AnswerSource + ?Sized> AnswerSource for &mut T {
    fn answer(&mut self, query: &Query) -> Result<AnswerPair> {
        (**self).answer(query)
    }
}

impl<T: AnswerSource + ?Sized> AnswerSource for Box<T> {
    fn answer(&mut self, query: &Query) -> Result<AnswerPair> {
        (**self).answer(query)
    }
}

/// Value `a_j` on criterion `j` making `(q_i, q_j) ~ (p_i, a_j)` for `model`,
/// or `None` when no value of the scale compensates.
pub fn answer_indifference(model: &UtaModel, query: &Query) -> Result<Option<Rational>> {
    query.validate(model.grid())?;
    let target = model.eval_marginal(query.i, &query.q_i)? + model.eval_marginal(query.j, &query.q_j)?
        - model.eval_marginal(query.i, &query.p_i)?;
    Ok(model.invert_marginal(query.j, &target))
}

/// Two hidden ground-truth models answering every query.
#[derive(Debug, Clone)]
pub struct SimulatedPair {
    models: [UtaModel; 2],
}

impl SimulatedPair {
    pub fn new(first: UtaModel, second: UtaModel) -> Result<Self> {
        if first.grid() != second.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(SimulatedPair { models: [first, second] })
    }

    pub fn models(&self) -> &[UtaModel; 2] {
        &self.models
    }

    pub fn grid(&self) -> &Grid {
        self.models[0].grid()
    }

    pub fn simulated_answer(&self, query: &Query) -> Result<AnswerPair> {
        let a = answer_indifference(&self.models[0], query)?;
        let b = answer_indifference(&self.models[1], query)?;
        Ok(AnswerPair::new(a, b))
    }
}

impl AnswerSource for SimulatedPair {
    fn answer(&mut self, query: &Query) -> Result<AnswerPair> {
        self.simulated_answer(query)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub query: Query,
    pub answers: AnswerPair,
}

/// Ordered log of every query and its answers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, query: Query, answers: AnswerPair) {
        self.records.push(TranscriptRecord { query, answers });
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("transcript line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        Ok(Transcript { records })
    }
}

impl From<Vec<TranscriptRecord>> for Transcript {
    fn from(records: Vec<TranscriptRecord>) -> Self {
        Transcript { records }
    }
}

/// Answers queries from a recorded transcript, in order.
///
/// Each incoming query must equal the recorded one at the same position. When
/// the recording runs out the source reports [`Error::AwaitingAnswers`] with
/// the query it could not answer, which lets a caller suspend a run and resume
/// it once the answers are known.
#[derive(Debug, Clone)]
pub struct ReplayTranscript {
    records: Vec<TranscriptRecord>,
    cursor: usize,
}

impl ReplayTranscript {
    pub fn new(transcript: Transcript) -> Self {
        ReplayTranscript { records: transcript.records, cursor: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }
}

impl AnswerSource for ReplayTranscript {
    fn answer(&mut self, query: &Query) -> Result<AnswerPair> {
        let Some(rec) = self.records.get(self.cursor) else {
            return Err(Error::AwaitingAnswers(Box::new(query.clone())));
        };
        if &rec.query != query {
            return Err(Error::ReplayDivergence {
                index: self.cursor,
                expected: Box::new(rec.query.clone()),
                found: Box::new(query.clone()),
            });
        }
        self.cursor += 1;
        Ok(rec.answers.clone())
    }
}
