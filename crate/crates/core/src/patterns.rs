//! Query sequences that collect anonymous indifference information inside one
//! rectangle of a criteria plane, or across two vertically adjacent rectangles.
//!
//! Both patterns work in the plane `X_i x X_j` with answers read on `j`
//! (or on `i` for the follow-up queries of the single-rectangle pattern).
//! Rectangle `R(li, lj)` is interval `li` of `i` times interval `lj` of `j`,
//! with 1-based interval labels: its corners are `(x_{i,li-1}, x_{j,lj-1})`
//! and `(x_{i,li}, x_{j,lj})`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Grid;
use crate::oracle::{AnswerPair, AnswerSource, Query};
use crate::rational::Rational;

/// Upper bound on queries spent by one neighboring-rectangles run.
pub const DEFAULT_PROBE_BUDGET: usize = 256;

/// A point `(v_i, v_j)` of the plane of the pattern that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanePoint {
    pub vi: Rational,
    pub vj: Rational,
}

impl PlanePoint {
    pub fn new(vi: Rational, vj: Rational) -> Self {
        PlanePoint { vi, vj }
    }
}

/// Which branch of the single-rectangle pattern fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SrCase {
    /// Both curves leave through the left side.
    BothLeft,
    /// One curve leaves through the top; second query from the other answer.
    Split,
    /// Both curves leave through the top; second query from the top-left corner.
    BothTop,
}

/// Three points of one rectangle: one DM is indifferent between `a` and `b`,
/// the other between `a` and `c`. `b == c` means both DMs agree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SrInfo {
    pub i: usize,
    pub j: usize,
    pub li: usize,
    pub lj: usize,
    pub a: PlanePoint,
    pub b: PlanePoint,
    pub c: PlanePoint,
    pub case: SrCase,
    pub queries: usize,
}

impl SrInfo {
    pub fn is_unanimous(&self) -> bool {
        self.b == self.c
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        let (ilo, ihi) = grid.scale(self.i).interval(self.li);
        let (jlo, jhi) = grid.scale(self.j).interval(self.lj);
        let inside = |p: &PlanePoint| ilo <= &p.vi && &p.vi <= ihi && jlo <= &p.vj && &p.vj <= jhi;
        for (name, p) in [("A", &self.a), ("B", &self.b), ("C", &self.c)] {
            if !inside(p) {
                return Err(Error::OracleFailure(format!(
                    "single-rectangle point {name} = ({}, {}) lies outside R({}, {})",
                    p.vi, p.vj, self.li, self.lj
                )));
            }
        }
        if self.b.vj == self.a.vj || self.c.vj == self.a.vj {
            return Err(Error::OracleFailure(
                "single-rectangle answer shares the j coordinate of A".into(),
            ));
        }
        Ok(())
    }
}

/// `a` lies in `R(li, lj)`, `b` and `c` in `R(li, lj + 1)` on its left edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NrInfo {
    pub i: usize,
    pub j: usize,
    pub li: usize,
    pub lj: usize,
    pub a: PlanePoint,
    pub b: PlanePoint,
    pub c: PlanePoint,
    pub queries: usize,
}

impl NrInfo {
    pub fn is_unanimous(&self) -> bool {
        self.b == self.c
    }
}

fn ask(src: &mut dyn AnswerSource, grid: &Grid, query: Query) -> Result<AnswerPair> {
    query.validate(grid)?;
    src.answer(&query)
}

fn le_none_inf(a: &Option<Rational>, bound: &Rational) -> bool {
    matches!(a, Some(v) if v <= bound)
}

fn required(a: Option<Rational>, what: &str) -> Result<Rational> {
    a.ok_or_else(|| Error::OracleFailure(format!("{what} answered None")))
}

/// Collects single-rectangle information on `R(li, lj)` in at most two queries.
///
/// The opening query goes from the bottom-right corner to the left side:
/// `(i: x_{i,li}, j: x_{j,lj-1}) ~ (i: x_{i,li-1}, j: ?)`, answers `a1 <= a2`
/// (`None` counts as above every value).
pub fn single_rectangle(
    src: &mut dyn AnswerSource,
    grid: &Grid,
    i: usize,
    j: usize,
    li: usize,
    lj: usize,
) -> Result<SrInfo> {
    grid.check_interval(i, li)?;
    grid.check_interval(j, lj)?;
    if i == j {
        return Err(Error::MalformedQuery("pattern criteria must differ".into()));
    }
    let (ilo, ihi) = grid.scale(i).interval(li);
    let (jlo, jhi) = grid.scale(j).interval(lj);
    let (ilo, ihi, jlo, jhi) = (ilo.clone(), ihi.clone(), jlo.clone(), jhi.clone());

    let first = ask(src, grid, Query::new(i, j, ihi.clone(), jlo.clone(), ilo.clone()))?;
    let info = |a, b, c, case, queries| SrInfo { i, j, li, lj, a, b, c, case, queries };

    let result = if le_none_inf(&first.high, &jhi) {
        let a1 = required(first.low, "opening query")?;
        let a2 = required(first.high, "opening query")?;
        info(
            PlanePoint::new(ihi, jlo),
            PlanePoint::new(ilo.clone(), a1),
            PlanePoint::new(ilo, a2),
            SrCase::BothLeft,
            1,
        )
    } else if le_none_inf(&first.low, &jhi) {
        let a1 = required(first.low, "opening query")?;
        // From (x_{i,li-1}, a1) down to the bottom side, answer on i.
        let follow = ask(src, grid, Query::new(j, i, a1.clone(), ilo.clone(), jlo.clone()))?;
        let b1 = required(follow.low, "split-case follow-up")?;
        let b2 = required(follow.high, "split-case follow-up")?;
        info(
            PlanePoint::new(ilo, a1),
            PlanePoint::new(b1, jlo.clone()),
            PlanePoint::new(b2, jlo),
            SrCase::Split,
            2,
        )
    } else {
        // From the top-left corner down to the bottom side, answer on i.
        let follow = ask(src, grid, Query::new(j, i, jhi.clone(), ilo.clone(), jlo.clone()))?;
        let b1 = required(follow.low, "top-left follow-up")?;
        let b2 = required(follow.high, "top-left follow-up")?;
        info(
            PlanePoint::new(ilo, jhi),
            PlanePoint::new(b1, jlo.clone()),
            PlanePoint::new(b2, jlo),
            SrCase::BothTop,
            2,
        )
    };
    result.validate(grid)?;
    Ok(result)
}

/// Collects information coupling `R(li, lj)` and `R(li, lj + 1)`.
///
/// Probes `(x_{i,li-1} + delta, x_{j,lj} - lambda * delta)` against the left
/// edge. `delta` starts at half the width of interval `li` and `lambda` so the
/// first probe is the center of `R(li, lj)`. While the answers are not both in
/// `(x_{j,lj}, x_{j,lj+1}]`: if the lower one is above `x_{j,lj}` halve `delta`,
/// otherwise set `lambda = (x_{j,lj} - a1) / (2 delta)`. When that update would
/// make `lambda` zero (`a1 == x_{j,lj}`) it is halved instead, which keeps the
/// returned `A` strictly below the shared breakpoint.
pub fn neighboring_rectangles(
    src: &mut dyn AnswerSource,
    grid: &Grid,
    i: usize,
    li: usize,
    j: usize,
    lj: usize,
    budget: usize,
) -> Result<NrInfo> {
    grid.check_interval(i, li)?;
    grid.check_interval(j, lj)?;
    if i == j {
        return Err(Error::MalformedQuery("pattern criteria must differ".into()));
    }
    if lj >= grid.scale(j).intervals() {
        return Err(Error::MalformedQuery(format!(
            "criterion {j} has no interval above {lj}"
        )));
    }
    let (ilo, ihi) = grid.scale(i).interval(li);
    let scale_j = grid.scale(j);
    let (jlo, jmid, jhi) = (scale_j.x(lj - 1), scale_j.x(lj), scale_j.x(lj + 1));

    let mut delta = (ihi - ilo).half();
    let mut lambda = (jmid - jlo) / (&delta + &delta);
    let mut queries = 0usize;
    loop {
        if queries == budget {
            return Err(Error::IterationBudgetExceeded(budget));
        }
        let probe = PlanePoint::new(ilo + &delta, jmid - &lambda * &delta);
        let answers = ask(src, grid, Query::new(i, j, probe.vi.clone(), probe.vj.clone(), ilo.clone()))?;
        queries += 1;
        if let Some(a1) = &answers.low {
            if a1 <= &probe.vj {
                return Err(Error::OracleFailure(format!(
                    "answer {a1} does not exceed the probe height {}",
                    probe.vj
                )));
            }
        }
        let low_above = !le_none_inf(&answers.low, jmid);
        if low_above && le_none_inf(&answers.high, jhi) {
            let (b, c) = (answers.low.expect("checked"), answers.high.expect("checked"));
            return Ok(NrInfo {
                i,
                j,
                li,
                lj,
                a: probe,
                b: PlanePoint::new(ilo.clone(), b),
                c: PlanePoint::new(ilo.clone(), c),
                queries,
            });
        }
        if low_above {
            delta = delta.half();
        } else {
            let a1 = answers.low.expect("below the breakpoint");
            let steeper = (jmid - &a1) / (&delta + &delta);
            lambda = if steeper.is_zero() { lambda.half() } else { steeper };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{f1, f1_grid, slopes};
    use crate::model::UtaModel;
    use crate::oracle::SimulatedPair;
    use crate::rational::q;

    fn pt(a: (i64, i64), b: (i64, i64)) -> PlanePoint {
        PlanePoint::new(q(a.0, a.1), q(b.0, b.1))
    }

    fn f1_source() -> SimulatedPair {
        let (a, b) = f1();
        SimulatedPair::new(a, b).unwrap()
    }

    /// True if the two points are indifferent for `m` in the pattern's plane.
    fn indifferent(m: &UtaModel, i: usize, j: usize, p: &PlanePoint, r: &PlanePoint) -> bool {
        let u = |x: &PlanePoint| m.eval_marginal(i, &x.vi).unwrap() + m.eval_marginal(j, &x.vj).unwrap();
        u(p) == u(r)
    }

    #[test]
    fn sr_case_both_left_f1() {
        let mut src = f1_source();
        let g = f1_grid();
        let info = single_rectangle(&mut src, &g, 0, 1, 1, 1).unwrap();
        assert_eq!(info.case, SrCase::BothLeft);
        assert_eq!(info.queries, 1);
        assert_eq!(info.a, pt((2, 1), (0, 1)));
        assert_eq!(info.b, pt((0, 1), (1, 1)));
        assert_eq!(info.c, pt((0, 1), (2, 1)));
    }

    #[test]
    fn sr_case_split_f1() {
        let mut src = f1_source();
        let g = f1_grid();
        let info = single_rectangle(&mut src, &g, 0, 1, 2, 1).unwrap();
        assert_eq!(info.case, SrCase::Split);
        assert_eq!(info.queries, 2);
        assert_eq!(info.a, pt((2, 1), (1, 1)));
        assert_eq!(info.b, pt((5, 2), (0, 1)));
        assert_eq!(info.c, pt((4, 1), (0, 1)));
    }

    #[test]
    fn sr_case_both_top() {
        // Both DMs value criterion 0 much more than criterion 1.
        let g = f1_grid();
        let a = UtaModel::new(g.clone(), slopes(&[&[5, 1], &[1, 1]])).unwrap();
        let b = UtaModel::new(g.clone(), slopes(&[&[3, 1], &[1, 1]])).unwrap();
        let mut src = SimulatedPair::new(a.clone(), b.clone()).unwrap();
        let info = single_rectangle(&mut src, &g, 0, 1, 1, 1).unwrap();
        assert_eq!(info.case, SrCase::BothTop);
        assert_eq!(info.a, pt((0, 1), (2, 1)));
        // 5 b = 2 and 3 b = 2 on the bottom side.
        assert_eq!(info.b, pt((2, 5), (0, 1)));
        assert_eq!(info.c, pt((2, 3), (0, 1)));
        assert!(indifferent(&a, 0, 1, &info.a, &info.b));
        assert!(indifferent(&b, 0, 1, &info.a, &info.c));
    }

    #[test]
    fn identical_dms_are_unanimous() {
        let (alpha, _) = f1();
        let mut src = SimulatedPair::new(alpha.clone(), alpha.scaled(&q(3, 1))).unwrap();
        let g = f1_grid();
        for li in 1..=2 {
            for lj in 1..=2 {
                assert!(single_rectangle(&mut src, &g, 0, 1, li, lj).unwrap().is_unanimous());
                assert!(single_rectangle(&mut src, &g, 1, 0, lj, li).unwrap().is_unanimous());
            }
        }
    }

    #[test]
    fn sr_rejects_bad_labels() {
        let mut src = f1_source();
        let g = f1_grid();
        assert!(single_rectangle(&mut src, &g, 0, 1, 0, 1).is_err());
        assert!(single_rectangle(&mut src, &g, 0, 1, 3, 1).is_err());
        assert!(single_rectangle(&mut src, &g, 0, 0, 1, 1).is_err());
    }

    struct Scripted(Vec<AnswerPair>);
    impl AnswerSource for Scripted {
        fn answer(&mut self, _: &Query) -> Result<AnswerPair> {
            Ok(self.0.remove(0))
        }
    }

    #[test]
    fn sr_follow_up_none_is_oracle_failure() {
        let g = f1_grid();
        let mut src = Scripted(vec![
            AnswerPair::new(None, None),
            AnswerPair::new(Some(q(1, 1)), None),
        ]);
        assert!(matches!(
            single_rectangle(&mut src, &g, 0, 1, 1, 1),
            Err(Error::OracleFailure(_))
        ));
    }

    #[test]
    fn nr_f1_two_queries() {
        let mut src = f1_source();
        let g = f1_grid();
        let info = neighboring_rectangles(&mut src, &g, 0, 1, 1, 1, DEFAULT_PROBE_BUDGET).unwrap();
        assert_eq!(info.queries, 2);
        assert_eq!(info.a, pt((1, 1), (7, 4)));
        assert_eq!(info.b, pt((0, 1), (9, 4)));
        assert_eq!(info.c, pt((0, 1), (5, 2)));
    }

    #[test]
    fn nr_shallow_curves_one_query() {
        let g = f1_grid();
        let a = UtaModel::new(g.clone(), slopes(&[&[2, 1], &[1, 1]])).unwrap();
        let b = UtaModel::new(g.clone(), slopes(&[&[2, 1], &[1, 2]])).unwrap();
        let mut src = SimulatedPair::new(a, b).unwrap();
        let info = neighboring_rectangles(&mut src, &g, 0, 1, 1, 1, DEFAULT_PROBE_BUDGET).unwrap();
        assert_eq!(info.queries, 1);
        assert_eq!(info.a, pt((1, 1), (1, 1)));
        assert_eq!((info.b.vj.clone(), info.c.vj.clone()), (q(5, 2), q(3, 1)));
    }

    /// Step-by-step re-simulation of the probe loop, written against the
    /// ground truth directly (closed-form answers, no `AnswerSource`).
    fn probe_trace(models: &[UtaModel; 2], li: usize, lj: usize) -> (usize, usize, usize) {
        let g = models[0].grid();
        let (ilo, ihi) = g.scale(0).interval(li);
        let s = g.scale(1);
        let (jlo, jmid, jhi) = (s.x(lj - 1).clone(), s.x(lj).clone(), s.x(lj + 1).clone());
        let mut delta = (ihi - ilo) / q(2, 1);
        let mut lambda = (&jmid - &jlo) / (q(2, 1) * &delta);
        let (mut halvings, mut steepenings, mut n) = (0, 0, 0);
        loop {
            n += 1;
            let pj = &jmid - &lambda * &delta;
            // Value to recover on j when moving left by delta on i.
            let ans: Vec<Option<Rational>> = models
                .iter()
                .map(|m| {
                    let need = m.slope(0, li) * &delta;
                    let to_mid = m.slope(1, lj) * (&jmid - &pj);
                    if need <= to_mid {
                        Some(&pj + need / m.slope(1, lj))
                    } else {
                        let rest = need - to_mid;
                        let up = rest / m.slope(1, lj + 1);
                        let v = &jmid + up;
                        if v <= jhi { Some(v) } else { Some(jhi.clone() + q(1, 1)) }
                    }
                })
                .collect();
            let lo = ans.iter().flatten().min().unwrap().clone();
            let hi = ans.iter().flatten().max().unwrap().clone();
            if lo > jmid && hi <= jhi {
                return (n, halvings, steepenings);
            }
            if lo > jmid {
                delta = delta / q(2, 1);
                halvings += 1;
            } else {
                let l = (&jmid - &lo) / (q(2, 1) * &delta);
                lambda = if l.is_zero() { lambda / q(2, 1) } else { l };
                steepenings += 1;
            }
        }
    }

    #[test]
    fn nr_forces_halvings() {
        let g = f1_grid();
        let a = UtaModel::new(g.clone(), slopes(&[&[1, 1], &[1, 3]])).unwrap();
        let b = UtaModel::new(g.clone(), vec![vec![q(1, 1), q(1, 1)], vec![q(2, 1), q(1, 100)]]).unwrap();
        let models = [a.clone(), b.clone()];
        let (expected, halvings, _) = probe_trace(&models, 1, 1);
        assert!(halvings >= 1);
        let mut src = SimulatedPair::new(a.clone(), b.clone()).unwrap();
        let info = neighboring_rectangles(&mut src, &g, 0, 1, 1, 1, DEFAULT_PROBE_BUDGET).unwrap();
        assert_eq!(info.queries, expected);
        let ok = |p: &PlanePoint| {
            (indifferent(&a, 0, 1, &info.a, p), indifferent(&b, 0, 1, &info.a, p))
        };
        let (ab, bb) = ok(&info.b);
        let (ac, bc) = ok(&info.c);
        assert!((ab && bc) || (bb && ac));
    }

    #[test]
    fn nr_budget_exhaustion() {
        let g = f1_grid();
        let a = UtaModel::new(g.clone(), slopes(&[&[1, 1], &[1, 3]])).unwrap();
        let b = UtaModel::new(g.clone(), vec![vec![q(1, 1), q(1, 1)], vec![q(2, 1), q(1, 1000)]]).unwrap();
        let mut src = SimulatedPair::new(a, b).unwrap();
        assert_eq!(
            neighboring_rectangles(&mut src, &g, 0, 1, 1, 1, 2),
            Err(Error::IterationBudgetExceeded(2))
        );
    }

    #[test]
    fn nr_rejects_top_interval() {
        let mut src = f1_source();
        let g = f1_grid();
        assert!(neighboring_rectangles(&mut src, &g, 0, 1, 1, 2, 10).is_err());
    }

    #[test]
    fn nr_answer_below_probe_is_oracle_failure() {
        let g = f1_grid();
        let mut src = Scripted(vec![AnswerPair::new(Some(q(1, 2)), Some(q(3, 1)))]);
        assert!(matches!(
            neighboring_rectangles(&mut src, &g, 0, 1, 1, 1, 10),
            Err(Error::OracleFailure(_))
        ));
    }
}
