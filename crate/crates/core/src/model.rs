//! Piecewise-linear additive value models on a fixed breakpoint grid.
//!
//! Interval labels are 1-based everywhere in this crate: interval `l` of a
//! criterion is `[x_{l-1}, x_l]` and carries slope `gamma_l`. Criteria are
//! 0-based indices into [`Grid::criteria`]. A marginal is anchored at 0 on the
//! lowest breakpoint; only value differences matter for indifference.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScale")]
pub struct CriterionScale {
    pub name: String,
    pub breakpoints: Vec<Rational>,
}

#[derive(Deserialize)]
struct RawScale {
    name: String,
    breakpoints: Vec<Rational>,
}

impl TryFrom<RawScale> for CriterionScale {
    type Error = Error;
    fn try_from(raw: RawScale) -> Result<Self> {
        CriterionScale::new(raw.name, raw.breakpoints)
    }
}

impl CriterionScale {
    pub fn new(name: impl Into<String>, breakpoints: Vec<Rational>) -> Result<Self> {
        let name = name.into();
        if breakpoints.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "criterion {name:?} needs at least two breakpoints"
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "breakpoints of criterion {name:?} are not strictly increasing"
            )));
        }
        Ok(CriterionScale { name, breakpoints })
    }

    /// Number of intervals `L`.
    pub fn intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn low(&self) -> &Rational {
        &self.breakpoints[0]
    }

    pub fn high(&self) -> &Rational {
        self.breakpoints.last().expect("non-empty scale")
    }

    /// Breakpoint `x_l`, `0 <= l <= L`.
    pub fn x(&self, l: usize) -> &Rational {
        &self.breakpoints[l]
    }

    /// Endpoints `(x_{l-1}, x_l)` of interval `l`.
    pub fn interval(&self, l: usize) -> (&Rational, &Rational) {
        (&self.breakpoints[l - 1], &self.breakpoints[l])
    }

    pub fn width(&self, l: usize) -> Rational {
        &self.breakpoints[l] - &self.breakpoints[l - 1]
    }

    pub fn contains(&self, v: &Rational) -> bool {
        self.low() <= v && v <= self.high()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    pub criteria: Vec<CriterionScale>,
}

#[derive(Deserialize)]
struct RawGrid {
    criteria: Vec<CriterionScale>,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        Grid::new(raw.criteria)
    }
}

impl Grid {
    pub fn new(criteria: Vec<CriterionScale>) -> Result<Self> {
        if criteria.len() < 2 {
            return Err(Error::InvalidGrid("at least two criteria are required".into()));
        }
        let mut names = HashSet::new();
        for c in &criteria {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidGrid(format!("duplicate criterion name {:?}", c.name)));
            }
        }
        Ok(Grid { criteria })
    }

    pub fn len(&self) -> usize {
        self.criteria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }

    pub fn scale(&self, i: usize) -> &CriterionScale {
        &self.criteria[i]
    }

    /// Interval counts `L_i` for every criterion.
    pub fn interval_counts(&self) -> Vec<usize> {
        self.criteria.iter().map(CriterionScale::intervals).collect()
    }

    pub(crate) fn check_criterion(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::MalformedQuery(format!("criterion {i} does not exist")))
        }
    }

    pub(crate) fn check_interval(&self, i: usize, l: usize) -> Result<()> {
        self.check_criterion(i)?;
        if (1..=self.scale(i).intervals()).contains(&l) {
            Ok(())
        } else {
            Err(Error::MalformedQuery(format!(
                "criterion {i} has no interval {l} (L = {})",
                self.scale(i).intervals()
            )))
        }
    }
}

/// Slopes of one decision-maker's marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtaModel {
    grid: Arc<Grid>,
    slopes: Vec<Vec<Rational>>,
}

impl UtaModel {
    pub fn new(grid: Arc<Grid>, slopes: Vec<Vec<Rational>>) -> Result<Self> {
        if slopes.len() != grid.len() {
            return Err(Error::InvalidModel(format!(
                "{} slope vectors for {} criteria",
                slopes.len(),
                grid.len()
            )));
        }
        for (i, (row, scale)) in slopes.iter().zip(&grid.criteria).enumerate() {
            if row.len() != scale.intervals() {
                return Err(Error::InvalidModel(format!(
                    "criterion {i} has {} slopes for {} intervals",
                    row.len(),
                    scale.intervals()
                )));
            }
            if let Some(bad) = row.iter().find(|g| !g.is_positive()) {
                return Err(Error::InvalidModel(format!(
                    "criterion {i} has non-positive slope {bad}"
                )));
            }
        }
        Ok(UtaModel { grid, slopes })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn slopes(&self) -> &[Vec<Rational>] {
        &self.slopes
    }

    /// Slope `gamma_{i,l}` (1-based interval).
    pub fn slope(&self, i: usize, l: usize) -> &Rational {
        &self.slopes[i][l - 1]
    }

    /// `u_i(x)` with `u_i(x_{i,0}) = 0`.
    pub fn eval_marginal(&self, i: usize, x: &Rational) -> Result<Rational> {
        let scale = self.grid.scale(i);
        if !scale.contains(x) {
            return Err(Error::OutOfScale { criterion: i, value: x.clone() });
        }
        let mut value = Rational::zero();
        for (l, gamma) in self.slopes[i].iter().enumerate() {
            let (lo, hi) = scale.interval(l + 1);
            if x <= lo {
                break;
            }
            let top = if x < hi { x } else { hi };
            value = value + gamma * (top - lo);
        }
        Ok(value)
    }

    /// `u_i(x_{i,L_i})`, the value range of criterion `i`.
    pub fn marginal_range(&self, i: usize) -> Rational {
        let scale = self.grid.scale(i);
        self.slopes[i]
            .iter()
            .enumerate()
            .map(|(l, g)| g * scale.width(l + 1))
            .sum()
    }

    /// The unique `x` with `u_i(x) = v`, or `None` when `v` is outside `[0, u_i(x_{i,L})]`.
    pub fn invert_marginal(&self, i: usize, v: &Rational) -> Option<Rational> {
        if v.is_negative() {
            return None;
        }
        let scale = self.grid.scale(i);
        let mut reached = Rational::zero();
        for (l, gamma) in self.slopes[i].iter().enumerate() {
            let (lo, _) = scale.interval(l + 1);
            let top = &reached + gamma * scale.width(l + 1);
            if v <= &top {
                return Some(lo + (v - &reached) / gamma);
            }
            reached = top;
        }
        None
    }

    /// Scales every slope so that `gamma_{i,l}` becomes 1.
    pub fn normalize_unit_slope(&self, i: usize, l: usize) -> UtaModel {
        let unit = self.slope(i, l).clone();
        self.scaled(&unit.recip())
    }

    /// Equivalent model whose marginal ranges sum to 1.
    pub fn renormalize_01(&self) -> UtaModel {
        let total: Rational = (0..self.grid.len()).map(|i| self.marginal_range(i)).sum();
        self.scaled(&total.recip())
    }

    /// `u_i(x_{i,L_i})` of the 0-1 normalized model, i.e. the criterion weights.
    pub fn criterion_weights(&self) -> Vec<Rational> {
        let unit = self.renormalize_01();
        (0..self.grid.len()).map(|i| unit.marginal_range(i)).collect()
    }

    pub fn scaled(&self, factor: &Rational) -> UtaModel {
        assert!(factor.is_positive(), "scaling factor must be positive");
        UtaModel {
            grid: self.grid.clone(),
            slopes: self
                .slopes
                .iter()
                .map(|row| row.iter().map(|g| g * factor).collect())
                .collect(),
        }
    }

    /// True iff `other` is a positive multiple of `self` (same preferences).
    pub fn equivalent(&self, other: &UtaModel) -> Result<bool> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let factor = other.slopes[0][0].clone() / &self.slopes[0][0];
        Ok(self
            .slopes
            .iter()
            .flatten()
            .zip(other.slopes.iter().flatten())
            .all(|(a, b)| &(a * &factor) == b))
    }
}

/// Free-function form of [`UtaModel::equivalent`].
pub fn models_equivalent(a: &UtaModel, b: &UtaModel) -> Result<bool> {
    a.equivalent(b)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rational::q;
    use proptest::prelude::*;

    /// Independent evaluation: value at each breakpoint by cumulative sums,
    /// then linear interpolation inside the bracketing interval.
    fn interpolation_oracle(m: &UtaModel, i: usize, x: &Rational) -> Rational {
        let scale = m.grid().scale(i);
        let mut at = vec![Rational::zero()];
        for l in 1..=scale.intervals() {
            let prev = at[l - 1].clone();
            at.push(prev + m.slope(i, l) * scale.width(l));
        }
        let l = (1..=scale.intervals())
            .find(|&l| x <= scale.x(l))
            .unwrap();
        let (lo, hi) = scale.interval(l);
        let t = (x - lo) / (hi - lo);
        &at[l - 1] + t * (&at[l] - &at[l - 1])
    }

    #[test]
    fn eval_marginal_f1() {
        let (alpha, beta) = f1();
        assert_eq!(alpha.eval_marginal(0, &q(0, 1)).unwrap(), q(0, 1));
        let expected = interpolation_oracle(&alpha, 0, &q(3, 1));
        assert_eq!(expected, q(4, 1));
        assert_eq!(alpha.eval_marginal(0, &q(3, 1)).unwrap(), expected);
        let expected = interpolation_oracle(&beta, 1, &q(3, 1));
        assert_eq!(expected, q(5, 1));
        assert_eq!(beta.eval_marginal(1, &q(3, 1)).unwrap(), expected);
    }

    #[test]
    fn eval_out_of_scale() {
        let (alpha, _) = f1();
        assert!(matches!(
            alpha.eval_marginal(0, &q(9, 2)),
            Err(Error::OutOfScale { criterion: 0, .. })
        ));
        assert!(alpha.eval_marginal(1, &q(-1, 1)).is_err());
    }

    #[test]
    fn invert_marginal_f1() {
        let (alpha, _) = f1();
        assert_eq!(alpha.invert_marginal(1, &q(0, 1)), Some(q(0, 1)));
        assert_eq!(alpha.invert_marginal(1, &q(4, 1)), Some(q(8, 3)));
        assert_eq!(alpha.invert_marginal(1, &q(9, 1)), None);
        assert_eq!(alpha.invert_marginal(1, &q(8, 1)), Some(q(4, 1)));
        assert_eq!(alpha.invert_marginal(1, &q(-1, 2)), None);
    }

    #[test]
    fn normalize_unit_slope_examples() {
        let (alpha, beta) = f1();
        assert_eq!(alpha.normalize_unit_slope(0, 1), alpha);
        let big = beta.scaled(&q(5, 1));
        assert_eq!(big.slopes(), &slopes(&[&[5, 5], &[10, 5]])[..]);
        assert_eq!(big.normalize_unit_slope(0, 1), beta);
        let n = alpha.normalize_unit_slope(1, 2);
        assert_eq!(n.slopes(), &[vec![q(1, 3), q(2, 3)], vec![q(1, 3), q(1, 1)]][..]);
    }

    #[test]
    fn renormalize_01_examples() {
        let g = Arc::new(
            Grid::new(vec![
                CriterionScale::new("a", vec![q(0, 1), q(1, 1)]).unwrap(),
                CriterionScale::new("b", vec![q(0, 1), q(1, 1)]).unwrap(),
            ])
            .unwrap(),
        );
        let tiny = UtaModel::new(g, vec![vec![q(1, 2)], vec![q(1, 2)]]).unwrap();
        assert_eq!(tiny.renormalize_01(), tiny);

        let (alpha, beta) = f1();
        // Segment value increments: alpha 2+4+2+6 = 14, beta 2+2+4+2 = 10.
        let a01 = alpha.renormalize_01();
        assert_eq!(a01, alpha.scaled(&q(1, 14)));
        let b_total: Rational = [2, 2, 4, 2].iter().map(|&v| q(v, 1)).sum();
        assert_eq!(b_total, q(10, 1));
        assert_eq!(beta.renormalize_01(), beta.scaled(&b_total.recip()));
        let weights = alpha.criterion_weights();
        assert_eq!(weights, vec![q(6, 14), q(8, 14)]);
    }

    #[test]
    fn equivalence_examples() {
        let (alpha, beta) = f1();
        assert!(alpha.equivalent(&alpha).unwrap());
        assert!(alpha.equivalent(&alpha.scaled(&q(7, 3))).unwrap());
        assert!(!alpha.equivalent(&beta).unwrap());
        let other_grid = Arc::new(
            Grid::new(vec![
                CriterionScale::new("c1", vec![q(0, 1), q(1, 1), q(4, 1)]).unwrap(),
                CriterionScale::new("c2", vec![q(0, 1), q(2, 1), q(4, 1)]).unwrap(),
            ])
            .unwrap(),
        );
        let m = UtaModel::new(other_grid, slopes(&[&[1, 2], &[1, 3]])).unwrap();
        assert_eq!(alpha.equivalent(&m), Err(Error::GridMismatch));
    }

    #[test]
    fn invalid_constructions() {
        assert!(CriterionScale::new("x", vec![q(0, 1)]).is_err());
        assert!(CriterionScale::new("x", vec![q(0, 1), q(0, 1)]).is_err());
        let s = CriterionScale::new("x", vec![q(0, 1), q(1, 1)]).unwrap();
        assert!(Grid::new(vec![s.clone()]).is_err());
        assert!(Grid::new(vec![s.clone(), s.clone()]).is_err());
        let g = f1_grid();
        assert!(UtaModel::new(g.clone(), slopes(&[&[1, 0], &[1, 3]])).is_err());
        assert!(UtaModel::new(g.clone(), slopes(&[&[1], &[1, 3]])).is_err());
        assert!(UtaModel::new(g, slopes(&[&[1, 1]])).is_err());
    }

    #[test]
    fn grid_json_validates() {
        let ok: Grid = serde_json::from_str(
            r#"{"criteria":[{"name":"a","breakpoints":["0","1"]},{"name":"b","breakpoints":[0,"1/2",2]}]}"#,
        )
        .unwrap();
        assert_eq!(ok.interval_counts(), vec![1, 2]);
        let bad = serde_json::from_str::<Grid>(
            r#"{"criteria":[{"name":"a","breakpoints":["1","0"]},{"name":"b","breakpoints":[0,1]}]}"#,
        );
        assert!(bad.is_err());
    }

    fn arb_model() -> impl Strategy<Value = (UtaModel, Vec<Rational>)> {
        (
            prop::collection::vec(1i64..5, 1..5),
            prop::collection::vec(1i64..12, 4),
            prop::collection::vec((0i64..=64, 1i64..9), 1..8),
        )
            .prop_map(|(widths, slope_nums, probes)| {
                let mut bp = vec![q(0, 1)];
                for w in &widths {
                    let last = bp.last().unwrap().clone();
                    bp.push(last + q(*w, 2));
                }
                let top = bp.last().unwrap().clone();
                let scale = CriterionScale::new("a", bp.clone()).unwrap();
                let other = CriterionScale::new("b", vec![q(0, 1), q(1, 1)]).unwrap();
                let grid = Arc::new(Grid::new(vec![scale, other]).unwrap());
                let row: Vec<Rational> = (0..widths.len())
                    .map(|l| q(slope_nums[l % 4], 1 + (l as i64 % 3)))
                    .collect();
                let model = UtaModel::new(grid, vec![row, vec![q(1, 1)]]).unwrap();
                let xs = probes
                    .into_iter()
                    .map(|(n, d)| (&top * q(n, 64)) * q(d, d))
                    .collect();
                (model, xs)
            })
    }

    proptest! {
        #[test]
        fn invert_eval_round_trip((m, xs) in arb_model()) {
            for x in &xs {
                let v = m.eval_marginal(0, x).unwrap();
                prop_assert_eq!(m.invert_marginal(0, &v), Some(x.clone()));
                prop_assert_eq!(&v, &interpolation_oracle(&m, 0, x));
            }
        }

        #[test]
        fn eval_strictly_increasing((m, xs) in arb_model()) {
            for w in xs.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let (ua, ub) = (m.eval_marginal(0, a).unwrap(), m.eval_marginal(0, b).unwrap());
                prop_assert_eq!(a.cmp(b), ua.cmp(&ub));
            }
        }

        #[test]
        fn normalizations_preserve_equivalence((m, _) in arb_model(), l in 1usize..5) {
            let l = 1 + (l - 1) % m.grid().scale(0).intervals();
            prop_assert!(m.equivalent(&m.normalize_unit_slope(0, l)).unwrap());
            let unit = m.normalize_unit_slope(0, l);
            prop_assert_eq!(unit.slope(0, l), &q(1, 1));
            prop_assert!(m.equivalent(&m.renormalize_01()).unwrap());
        }
    }
}
