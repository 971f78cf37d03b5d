//! The full identification strategy: scan for a rectangle where the two DMs
//! disagree, anchor both models there, then identify every remaining interval
//! of every criterion from pattern information and the algebra solvers.
//!
//! Each target interval is identified by the first strategy that applies:
//! upward from a known lower neighbor (single rectangle + neighboring
//! rectangles), downward from a known upper neighbor, or from two single
//! rectangles against two known references with distinct cross-DM ratios.
//! Pattern results are cached per oriented rectangle, so retrying a target
//! after more intervals become known only queries what is new.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{
    nr_coefficients, solve_downward, solve_sr_nr, solve_two_sr, sr_coefficients, NrCoefficients,
    SlopePair, SlopePairResult, SrCoefficients, Tolerance,
};
use crate::error::{Error, Rect, Result};
use crate::model::{Grid, UtaModel};
use crate::oracle::{AnswerPair, AnswerSource, Query, Transcript};
use crate::patterns::{neighboring_rectangles, single_rectangle, SrInfo, DEFAULT_PROBE_BUDGET};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElicitationConfig {
    pub tolerance: Tolerance,
    /// Query budget of one neighboring-rectangles run.
    pub probe_budget: usize,
}

impl Default for ElicitationConfig {
    fn default() -> Self {
        ElicitationConfig { tolerance: Tolerance::exact(), probe_budget: DEFAULT_PROBE_BUDGET }
    }
}

/// Queries spent per pattern. `scan` counts the single-rectangle runs of the
/// initialization scan, `single_rectangle` the later ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternQueries {
    pub scan: usize,
    pub single_rectangle: usize,
    pub neighboring_rectangles: usize,
}

impl PatternQueries {
    pub fn total(&self) -> usize {
        self.scan + self.single_rectangle + self.neighboring_rectangles
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Scan,
    Single,
    Neighboring,
}

/// Logs every query that reaches the wrapped source.
struct Recorder<'a> {
    inner: &'a mut dyn AnswerSource,
    transcript: &'a mut Transcript,
    counts: &'a mut PatternQueries,
    phase: Phase,
}

impl AnswerSource for Recorder<'_> {
    fn answer(&mut self, query: &Query) -> Result<AnswerPair> {
        let answers = self.inner.answer(query)?;
        self.transcript.push(query.clone(), answers.clone());
        match self.phase {
            Phase::Scan => self.counts.scan += 1,
            Phase::Single => self.counts.single_rectangle += 1,
            Phase::Neighboring => self.counts.neighboring_rectangles += 1,
        }
        Ok(answers)
    }
}

/// A scanned rectangle where both DMs gave the same answer, with the common
/// ratio `gamma_{j,lj} / gamma_{i,li}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnanimityRecord {
    pub i: usize,
    pub li: usize,
    pub j: usize,
    pub lj: usize,
    pub lambda: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanResult {
    Found(Box<SrInfo>),
    AllUnanimous(Vec<UnanimityRecord>),
}

type Key = (usize, usize);
type PatternKey = (usize, usize, usize, usize);

#[derive(Debug, Clone)]
pub struct ElicitationState {
    grid: Arc<Grid>,
    config: ElicitationConfig,
    known: BTreeMap<Key, SlopePair>,
    anchor: Option<Key>,
    /// Interval on the second criterion fixed at initialization.
    init: Option<Key>,
    transcript: Transcript,
    counts: PatternQueries,
    records: Vec<UnanimityRecord>,
    sr_cache: HashMap<PatternKey, SrCoefficients>,
    nr_cache: HashMap<PatternKey, NrCoefficients>,
    scanned: BTreeSet<Rect>,
    exploited: BTreeSet<Rect>,
    deferred: BTreeMap<Key, Error>,
}

/// Errors after which another reference may still succeed.
fn retryable(e: &Error) -> bool {
    matches!(e.root(), Error::Degenerate { .. } | Error::PhiZero | Error::NoValidReferencePair { .. })
}

impl ElicitationState {
    pub fn new(grid: Arc<Grid>, config: ElicitationConfig) -> Self {
        ElicitationState {
            grid,
            config,
            known: BTreeMap::new(),
            anchor: None,
            init: None,
            transcript: Transcript::new(),
            counts: PatternQueries::default(),
            records: Vec::new(),
            sr_cache: HashMap::new(),
            nr_cache: HashMap::new(),
            scanned: BTreeSet::new(),
            exploited: BTreeSet::new(),
            deferred: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn known(&self) -> &BTreeMap<(usize, usize), SlopePair> {
        &self.known
    }

    pub fn anchor(&self) -> Option<(usize, usize)> {
        self.anchor
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn pattern_queries(&self) -> PatternQueries {
        self.counts
    }

    pub fn query_count(&self) -> usize {
        self.transcript.len()
    }

    pub fn unanimity_records(&self) -> &[UnanimityRecord] {
        &self.records
    }

    pub fn scanned_rectangles(&self) -> &BTreeSet<Rect> {
        &self.scanned
    }

    /// Rectangles whose pattern information entered an accepted solution.
    pub fn exploited_rectangles(&self) -> &BTreeSet<Rect> {
        &self.exploited
    }

    fn recorder<'a>(&'a mut self, src: &'a mut dyn AnswerSource, phase: Phase) -> Recorder<'a> {
        Recorder { inner: src, transcript: &mut self.transcript, counts: &mut self.counts, phase }
    }

    /// Scans planes `(0, j)` for `j = 1..n`, each in growing squares, and
    /// stops at the first rectangle where the DMs disagree.
    pub fn find_initial_rectangle(&mut self, src: &mut dyn AnswerSource) -> Result<ScanResult> {
        let grid = self.grid.clone();
        let l0 = grid.scale(0).intervals();
        for j in 1..grid.len() {
            let lj = grid.scale(j).intervals();
            for t in 1..=l0.max(lj) {
                for a in 1..=l0.min(t) {
                    for b in 1..=lj.min(t) {
                        if a.max(b) != t {
                            continue;
                        }
                        let info = {
                            let mut rec = self.recorder(src, Phase::Scan);
                            single_rectangle(&mut rec, &grid, 0, j, a, b)?
                        };
                        let coefficients = sr_coefficients(&info)?;
                        self.scanned.insert(Rect::new(0, a, j, b));
                        if !info.is_unanimous() {
                            self.sr_cache.insert((0, a, j, b), coefficients);
                            return Ok(ScanResult::Found(Box::new(info)));
                        }
                        self.records.push(UnanimityRecord { i: 0, li: a, j, lj: b, lambda: coefficients.kappa.clone() });
                        self.sr_cache.insert((0, a, j, b), coefficients);
                    }
                }
            }
        }
        Ok(ScanResult::AllUnanimous(self.records.clone()))
    }

    /// Anchors both DMs at `gamma = 1` on `(i, li)` and labels the DM that
    /// answered `B` as alpha.
    pub fn initialize(&mut self, found: &SrInfo) -> Result<()> {
        if self.anchor.is_some() {
            return Err(Error::AlreadyInitialized);
        }
        if found.is_unanimous() {
            return Err(Error::Inconsistent("initialization needs a rectangle where the DMs disagree".into()));
        }
        let c = sr_coefficients(found)?;
        self.insert((found.i, found.li), SlopePair::new(Rational::one(), Rational::one()))?;
        self.insert((found.j, found.lj), SlopePair::new(c.kappa.clone(), c.kappa_prime.clone()))?;
        self.sr_cache.insert((found.i, found.li, found.j, found.lj), c);
        self.anchor = Some((found.i, found.li));
        self.init = Some((found.j, found.lj));
        self.exploited.insert(Rect::new(found.i, found.li, found.j, found.lj));
        Ok(())
    }

    fn insert(&mut self, key: Key, slopes: SlopePair) -> Result<()> {
        if !slopes.alpha.is_positive() || !slopes.beta.is_positive() {
            return Err(Error::Inconsistent(format!(
                "non-positive slopes ({}, {}) for interval {} of criterion {}",
                slopes.alpha, slopes.beta, key.1, key.0
            )));
        }
        if let Some(old) = self.known.get(&key) {
            if old != &slopes {
                return Err(Error::Inconsistent(format!(
                    "interval {} of criterion {} already known as ({}, {}), got ({}, {})",
                    key.1, key.0, old.alpha, old.beta, slopes.alpha, slopes.beta
                )));
            }
            return Ok(());
        }
        self.known.insert(key, slopes);
        self.deferred.remove(&key);
        Ok(())
    }

    fn sr(&mut self, src: &mut dyn AnswerSource, i: usize, li: usize, j: usize, lj: usize) -> Result<SrCoefficients> {
        if let Some(c) = self.sr_cache.get(&(i, li, j, lj)) {
            return Ok(c.clone());
        }
        if let Some(c) = self.sr_cache.get(&(j, lj, i, li)) {
            return Ok(SrCoefficients { kappa: c.kappa.recip(), kappa_prime: c.kappa_prime.recip() });
        }
        let grid = self.grid.clone();
        let info = {
            let mut rec = self.recorder(src, Phase::Single);
            single_rectangle(&mut rec, &grid, i, j, li, lj)?
        };
        let c = sr_coefficients(&info)?;
        self.sr_cache.insert((i, li, j, lj), c.clone());
        Ok(c)
    }

    fn nr(&mut self, src: &mut dyn AnswerSource, i: usize, li: usize, j: usize, lj: usize) -> Result<NrCoefficients> {
        if let Some(c) = self.nr_cache.get(&(i, li, j, lj)) {
            return Ok(c.clone());
        }
        let grid = self.grid.clone();
        let budget = self.config.probe_budget;
        let info = {
            let mut rec = self.recorder(src, Phase::Neighboring);
            neighboring_rectangles(&mut rec, &grid, i, li, j, lj, budget)?
        };
        let c = nr_coefficients(&info, grid.scale(j).x(lj))?;
        self.nr_cache.insert((i, li, j, lj), c.clone());
        Ok(c)
    }

    /// Known intervals off `criterion`: the anchor, then the initialization
    /// interval, then the rest in (criterion, interval) order.
    fn references(&self, criterion: usize) -> Vec<Key> {
        let mut out: Vec<Key> = self.anchor.into_iter().chain(self.init).collect();
        let rest: Vec<Key> = self.known.keys().copied().filter(|k| !out.contains(k)).collect();
        out.extend(rest);
        out.retain(|k| k.0 != criterion);
        out
    }

    fn accept(&mut self, key: Key, result: SlopePairResult, rects: &[Rect]) -> Result<SlopePair> {
        self.insert(key, result.slopes.clone())?;
        self.exploited.extend(rects.iter().copied());
        Ok(result.slopes)
    }

    /// Identifies interval `l` of criterion `c` for both DMs.
    ///
    /// References whose cross-DM ratio differs from the other known interval
    /// of the system are tried first. The remaining ones are tried last: the
    /// solver still succeeds when the outcome does not depend on the
    /// assignment (unanimous answers) and reports `Degenerate` otherwise.
    pub fn identify_interval(&mut self, src: &mut dyn AnswerSource, c: usize, l: usize) -> Result<SlopePair> {
        self.grid.check_interval(c, l)?;
        if let Some(s) = self.known.get(&(c, l)) {
            return Ok(s.clone());
        }
        let mut last = None;
        for distinct in [true, false] {
            if let Some(found) = self.try_strategies(src, c, l, distinct, &mut last)? {
                return Ok(found);
            }
        }
        let rects = self.references(c).iter().map(|r| Rect::new(r.0, r.1, c, l)).collect();
        Err(last.unwrap_or(Error::AtTarget {
            criterion: c,
            interval: l,
            rects,
            source: Box::new(Error::NoValidReferencePair { criterion: c, interval: l }),
        }))
    }

    fn try_strategies(
        &mut self,
        src: &mut dyn AnswerSource,
        c: usize,
        l: usize,
        distinct: bool,
        last: &mut Option<Error>,
    ) -> Result<Option<SlopePair>> {
        let tol = self.config.tolerance.clone();
        let at = |e: Error, rects: Vec<Rect>| Error::AtTarget { criterion: c, interval: l, rects, source: Box::new(e) };
        let usable = |a: &SlopePair, b: &SlopePair| (a.ratio() != b.ratio()) == distinct;

        if let Some(prev) = self.known.get(&(c, l.wrapping_sub(1))).cloned() {
            for r in self.references(c) {
                let reference = self.known[&r].clone();
                if !usable(&reference, &prev) {
                    continue;
                }
                let sr = self.sr(src, r.0, r.1, c, l)?;
                let nr = self.nr(src, r.0, r.1, c, l - 1)?;
                let rects = vec![Rect::new(r.0, r.1, c, l), Rect::new(r.0, r.1, c, l - 1)];
                match solve_sr_nr(&sr, &nr, &reference, &prev, &tol) {
                    Ok(res) => return self.accept((c, l), res, &rects).map(Some),
                    Err(e) if retryable(&e) => *last = Some(at(e, rects)),
                    Err(e) => return Err(at(e, rects)),
                }
            }
        }

        if let Some(next) = self.known.get(&(c, l + 1)).cloned() {
            for r in self.references(c) {
                let reference = self.known[&r].clone();
                if !usable(&reference, &next) {
                    continue;
                }
                let sr = self.sr(src, r.0, r.1, c, l)?;
                let nr = self.nr(src, r.0, r.1, c, l)?;
                let rects = vec![Rect::new(r.0, r.1, c, l), Rect::new(r.0, r.1, c, l + 1)];
                match solve_downward(&sr, &nr, &reference, &next, &tol) {
                    Ok(res) => return self.accept((c, l), res, &rects).map(Some),
                    Err(e) if retryable(&e) => *last = Some(at(e, rects)),
                    Err(e) => return Err(at(e, rects)),
                }
            }
        }

        let refs = self.references(c);
        for (n, r1) in refs.iter().enumerate() {
            for r2 in &refs[n + 1..] {
                let (p1, p2) = (self.known[r1].clone(), self.known[r2].clone());
                if !usable(&p1, &p2) {
                    continue;
                }
                let s1 = self.sr(src, r1.0, r1.1, c, l)?;
                let s2 = self.sr(src, r2.0, r2.1, c, l)?;
                let rects = vec![Rect::new(r1.0, r1.1, c, l), Rect::new(r2.0, r2.1, c, l)];
                match solve_two_sr(&s1, &s2, &p1, &p2, &tol) {
                    Ok(res) => return self.accept((c, l), res, &rects).map(Some),
                    Err(e) if retryable(&e) => *last = Some(at(e, rects)),
                    Err(e) => return Err(at(e, rects)),
                }
            }
        }
        Ok(None)
    }

    /// Repeated passes over `targets` until a pass makes no progress.
    /// Targets that fail with a retryable error are deferred.
    fn sweep(&mut self, src: &mut dyn AnswerSource, targets: &[Key]) -> Result<()> {
        loop {
            let mut progress = false;
            for &(c, l) in targets {
                if self.known.contains_key(&(c, l)) {
                    continue;
                }
                match self.identify_interval(src, c, l) {
                    Ok(_) => progress = true,
                    Err(e) if retryable(&e) => {
                        self.deferred.insert((c, l), e);
                    }
                    Err(e) => return Err(e),
                }
            }
            if !progress {
                return Ok(());
            }
        }
    }

    fn require_init(&self) -> Result<(Key, Key)> {
        match (self.anchor, self.init) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Inconsistent("elicitation state is not initialized".into())),
        }
    }

    /// Identifies every interval of the two initialization criteria: upward
    /// on `j`, upward on `i`, then downward on `j` and on `i`.
    pub fn elicit_pair(&mut self, src: &mut dyn AnswerSource) -> Result<()> {
        let ((i, li), (j, lj)) = self.require_init()?;
        let (ni, nj) = (self.grid.scale(i).intervals(), self.grid.scale(j).intervals());
        let mut targets: Vec<Key> = (lj + 1..=nj).map(|l| (j, l)).collect();
        targets.extend((li + 1..=ni).map(|l| (i, l)));
        targets.extend((1..lj).rev().map(|l| (j, l)));
        targets.extend((1..li).rev().map(|l| (i, l)));
        self.sweep(src, &targets)
    }

    /// Identifies every interval of criterion `c`, bottom up.
    pub fn elicit_remaining(&mut self, src: &mut dyn AnswerSource, c: usize) -> Result<()> {
        self.require_init()?;
        self.grid.check_criterion(c)?;
        let targets: Vec<Key> = (1..=self.grid.scale(c).intervals()).map(|l| (c, l)).collect();
        self.sweep(src, &targets)
    }

    /// Retries deferred targets, then checks completeness and the unanimity
    /// records, and builds the two models.
    fn finish(&mut self, src: &mut dyn AnswerSource) -> Result<(UtaModel, UtaModel)> {
        let all: Vec<Key> = (0..self.grid.len())
            .flat_map(|c| (1..=self.grid.scale(c).intervals()).map(move |l| (c, l)))
            .collect();
        self.sweep(src, &all)?;
        if let Some(&(c, l)) = all.iter().find(|k| !self.known.contains_key(k)) {
            return Err(self
                .deferred
                .remove(&(c, l))
                .unwrap_or(Error::NoValidReferencePair { criterion: c, interval: l }));
        }
        let tol = &self.config.tolerance;
        for r in &self.records {
            let (si, sj) = (&self.known[&(r.i, r.li)], &self.known[&(r.j, r.lj)]);
            let ok_a = tol.close(&(&sj.alpha / &si.alpha), &r.lambda);
            let ok_b = tol.close(&(&sj.beta / &si.beta), &r.lambda);
            if !(ok_a && ok_b) {
                return Err(Error::Inconsistent(format!(
                    "unanimous ratio {} on {} contradicts the identified slopes",
                    r.lambda,
                    Rect::new(r.i, r.li, r.j, r.lj)
                )));
            }
        }
        let table = |pick: fn(&SlopePair) -> &Rational| -> Vec<Vec<Rational>> {
            (0..self.grid.len())
                .map(|c| (1..=self.grid.scale(c).intervals()).map(|l| pick(&self.known[&(c, l)]).clone()).collect())
                .collect()
        };
        let a = UtaModel::new(self.grid.clone(), table(|s| &s.alpha))?;
        let b = UtaModel::new(self.grid.clone(), table(|s| &s.beta))?;
        if a.equivalent(&b)? {
            return Err(Error::Inconsistent("identified models are equivalent although the DMs disagreed".into()));
        }
        Ok((a, b))
    }

    /// Common model from unanimity records when every scanned rectangle was
    /// unanimous, anchored at `gamma_{0,1} = 1`.
    fn reconstruct_identical(&self) -> Result<UtaModel> {
        let lambda: HashMap<PatternKey, &Rational> =
            self.records.iter().map(|r| ((r.i, r.li, r.j, r.lj), &r.lambda)).collect();
        let get = |k: PatternKey| {
            lambda.get(&k).copied().ok_or_else(|| {
                Error::Inconsistent(format!("no unanimity record for {}", Rect::new(k.0, k.1, k.2, k.3)))
            })
        };
        let n = self.grid.len();
        let mut slopes: Vec<Vec<Rational>> = vec![Vec::new(); n];
        for (j, row) in slopes.iter_mut().enumerate().skip(1) {
            for lj in 1..=self.grid.scale(j).intervals() {
                row.push(get((0, 1, j, lj))?.clone());
            }
        }
        slopes[0].push(Rational::one());
        for li in 2..=self.grid.scale(0).intervals() {
            let next = &slopes[1][0] / get((0, li, 1, 1))?;
            slopes[0].push(next);
        }
        let tol = &self.config.tolerance;
        for r in &self.records {
            if !tol.close(&(&slopes[r.j][r.lj - 1] / &slopes[r.i][r.li - 1]), &r.lambda) {
                return Err(Error::Inconsistent(format!(
                    "unanimous ratio {} on {} contradicts the chained slopes",
                    r.lambda,
                    Rect::new(r.i, r.li, r.j, r.lj)
                )));
            }
        }
        UtaModel::new(self.grid.clone(), slopes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecoveredModels {
    /// Models labeled by the initialization: the first one answered `B` there.
    TwoModels(UtaModel, UtaModel),
    IdenticalModels(UtaModel),
}

#[derive(Debug, Clone)]
pub struct ElicitationOutcome {
    pub models: RecoveredModels,
    pub transcript: Transcript,
    pub pattern_queries: PatternQueries,
    /// Interval anchored at slope 1, and the interval of the other criterion
    /// fixed with it; both absent when every scanned rectangle was unanimous.
    pub anchor: Option<(usize, usize)>,
    pub initial: Option<(usize, usize)>,
    pub scanned_rectangles: BTreeSet<Rect>,
    pub exploited_rectangles: BTreeSet<Rect>,
    pub unanimity_records: Vec<UnanimityRecord>,
}

impl ElicitationOutcome {
    pub fn query_count(&self) -> usize {
        self.transcript.len()
    }
}

/// A failed run, with everything asked so far.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct ElicitationFailure {
    pub error: Error,
    pub transcript: Transcript,
    pub pattern_queries: PatternQueries,
}

fn drive(state: &mut ElicitationState, src: &mut dyn AnswerSource) -> Result<RecoveredModels> {
    match state.find_initial_rectangle(src)? {
        ScanResult::AllUnanimous(_) => Ok(RecoveredModels::IdenticalModels(state.reconstruct_identical()?)),
        ScanResult::Found(info) => {
            state.initialize(&info)?;
            state.elicit_pair(src)?;
            for c in 0..state.grid.len() {
                if c != info.i && c != info.j {
                    state.elicit_remaining(src, c)?;
                }
            }
            let (a, b) = state.finish(src)?;
            Ok(RecoveredModels::TwoModels(a, b))
        }
    }
}

/// Runs the whole elicitation against `src`.
pub fn run(
    src: &mut dyn AnswerSource,
    grid: Arc<Grid>,
    config: ElicitationConfig,
) -> std::result::Result<ElicitationOutcome, Box<ElicitationFailure>> {
    let mut state = ElicitationState::new(grid, config);
    match drive(&mut state, src) {
        Ok(models) => {
            debug_assert_eq!(state.transcript.len(), state.counts.total());
            Ok(ElicitationOutcome {
                models,
                anchor: state.anchor,
                initial: state.init,
                transcript: state.transcript,
                pattern_queries: state.counts,
                scanned_rectangles: state.scanned,
                exploited_rectangles: state.exploited,
                unanimity_records: state.records,
            })
        }
        Err(error) => Err(Box::new(ElicitationFailure {
            error,
            transcript: state.transcript,
            pattern_queries: state.counts,
        })),
    }
}
