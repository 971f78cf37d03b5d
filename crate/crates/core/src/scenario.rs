//! Ground-truth scenarios: a grid plus two slope tables, and a seeded
//! generator over rational lattices.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CriterionScale, Grid, UtaModel};
use crate::oracle::SimulatedPair;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSlopes {
    pub slopes: Vec<Vec<Rational>>,
}

impl From<&UtaModel> for ModelSlopes {
    fn from(m: &UtaModel) -> Self {
        ModelSlopes { slopes: m.slopes().to_vec() }
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub grid: Grid,
    pub models: Vec<ModelSlopes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: Arc<Grid>,
    pub models: [UtaModel; 2],
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn new(first: UtaModel, second: UtaModel, seed: Option<u64>) -> Result<Self> {
        if first.grid() != second.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Scenario { grid: first.grid().clone(), models: [first, second], seed })
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let [a, b]: [ModelSlopes; 2] = file
            .models
            .try_into()
            .map_err(|v: Vec<ModelSlopes>| Error::InvalidModel(format!("expected 2 models, got {}", v.len())))?;
        let grid = Arc::new(file.grid);
        Scenario::new(UtaModel::new(grid.clone(), a.slopes)?, UtaModel::new(grid, b.slopes)?, file.seed)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            grid: (*self.grid).clone(),
            models: self.models.iter().map(ModelSlopes::from).collect(),
            seed: self.seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Scenario::from_file(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn simulated_pair(&self) -> SimulatedPair {
        SimulatedPair::new(self.models[0].clone(), self.models[1].clone()).expect("same grid by construction")
    }

    /// The same scenario with the two models swapped.
    pub fn swapped(&self) -> Scenario {
        Scenario { grid: self.grid.clone(), models: [self.models[1].clone(), self.models[0].clone()], seed: self.seed }
    }

    pub fn models_equivalent(&self) -> bool {
        self.models[0].equivalent(&self.models[1]).expect("same grid")
    }
}

/// True when the cross-DM slope ratios `gamma^a / gamma^b` of intervals on
/// different criteria are pairwise distinct. Such pairs avoid every
/// degenerate configuration of the identification.
pub fn ratios_distinct_across_criteria(a: &UtaModel, b: &UtaModel) -> bool {
    let ratios: Vec<Vec<Rational>> = a
        .slopes()
        .iter()
        .zip(b.slopes())
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x / y).collect())
        .collect();
    for (c, row) in ratios.iter().enumerate() {
        for other in &ratios[c + 1..] {
            if row.iter().any(|r| other.contains(r)) {
                return false;
            }
        }
    }
    true
}

/// How the second model relates to the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMode {
    /// Independent models, resampled while equivalent.
    #[default]
    Distinct,
    /// Independent models, equivalence allowed.
    AllowIdentical,
    /// The second model duplicates the first.
    Identical,
    /// Independent models with pairwise distinct cross-criterion ratios.
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorParams {
    /// Interval count per criterion.
    pub intervals: Vec<usize>,
    /// Slopes are `k / slope_denom` with `k` in `1..=slope_max`.
    pub slope_max: i64,
    pub slope_denom: i64,
    /// Breakpoint steps are `k / step_denom` with `k` in `1..=step_max`.
    pub step_max: i64,
    pub step_denom: i64,
    pub mode: PairMode,
}

impl GeneratorParams {
    pub fn new(intervals: Vec<usize>) -> Self {
        GeneratorParams { intervals, slope_max: 12, slope_denom: 4, step_max: 4, step_denom: 2, mode: PairMode::Distinct }
    }

    fn validate(&self) -> Result<()> {
        if self.intervals.len() < 2 {
            return Err(Error::InvalidGrid("at least two criteria are required".into()));
        }
        if self.intervals.contains(&0) {
            return Err(Error::InvalidGrid("every criterion needs at least one interval".into()));
        }
        if self.slope_max < 1 || self.slope_denom < 1 || self.step_max < 1 || self.step_denom < 1 {
            return Err(Error::InvalidModel("lattice parameters must be positive".into()));
        }
        if self.mode == PairMode::Distinct && self.slope_max < 2 {
            return Err(Error::InvalidModel("a one-point slope lattice cannot yield distinct models".into()));
        }
        Ok(())
    }
}

const MAX_RESAMPLES: usize = 10_000;

/// Deterministic for a given `(params, seed)`.
pub fn generate(params: &GeneratorParams, seed: u64) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let criteria = params
        .intervals
        .iter()
        .enumerate()
        .map(|(c, &l)| {
            let mut x = Rational::zero();
            let mut breakpoints = vec![x.clone()];
            for _ in 0..l {
                x = x + Rational::new(rng.gen_range(1..=params.step_max), params.step_denom);
                breakpoints.push(x.clone());
            }
            CriterionScale::new(format!("c{}", c + 1), breakpoints)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = Arc::new(Grid::new(criteria)?);
    let draw = |rng: &mut ChaCha8Rng| -> Result<UtaModel> {
        let slopes = params
            .intervals
            .iter()
            .map(|&l| (0..l).map(|_| Rational::new(rng.gen_range(1..=params.slope_max), params.slope_denom)).collect())
            .collect();
        UtaModel::new(grid.clone(), slopes)
    };
    let first = draw(&mut rng)?;
    if params.mode == PairMode::Identical {
        return Scenario::new(first.clone(), first, Some(seed));
    }
    for _ in 0..MAX_RESAMPLES {
        let second = draw(&mut rng)?;
        let accept = match params.mode {
            PairMode::AllowIdentical => true,
            PairMode::Distinct => !first.equivalent(&second)?,
            PairMode::Generic => ratios_distinct_across_criteria(&first, &second),
            PairMode::Identical => unreachable!(),
        };
        if accept {
            return Scenario::new(first, second, Some(seed));
        }
    }
    Err(Error::InvalidModel(format!("no acceptable model pair after {MAX_RESAMPLES} draws")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{f1, slopes};
    use crate::rational::q;

    #[test]
    fn deterministic() {
        let p = GeneratorParams::new(vec![2, 2]);
        assert_eq!(generate(&p, 7).unwrap().to_json(), generate(&p, 7).unwrap().to_json());
        assert_ne!(generate(&p, 7).unwrap().to_json(), generate(&p, 8).unwrap().to_json());
    }

    #[test]
    fn round_trip_large() {
        let s = generate(&GeneratorParams::new(vec![6; 5]), 3).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        assert!(!s.models_equivalent());
    }

    #[test]
    fn identical_mode() {
        let mut p = GeneratorParams::new(vec![3, 1, 2]);
        p.mode = PairMode::Identical;
        let s = generate(&p, 1).unwrap();
        assert_eq!(s.models[0], s.models[1]);
    }

    #[test]
    fn generic_mode() {
        let mut p = GeneratorParams::new(vec![4, 3, 2]);
        p.mode = PairMode::Generic;
        for seed in 0..20 {
            let s = generate(&p, seed).unwrap();
            assert!(ratios_distinct_across_criteria(&s.models[0], &s.models[1]));
        }
    }

    #[test]
    fn ratio_predicate() {
        let (a, b) = f1();
        assert!(ratios_distinct_across_criteria(&a, &b));
        let c = UtaModel::new(a.grid().clone(), slopes(&[&[2, 4], &[2, 6]])).unwrap();
        assert!(!ratios_distinct_across_criteria(&a, &c));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(generate(&GeneratorParams::new(vec![2]), 0).is_err());
        assert!(generate(&GeneratorParams::new(vec![2, 0]), 0).is_err());
        let bad = r#"{"grid":{"criteria":[{"name":"a","breakpoints":["0","1"]},{"name":"b","breakpoints":["0","1"]}]},"models":[{"slopes":[["1"],["1"]]}]}"#;
        assert!(matches!(Scenario::from_json(bad), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn f1_json() {
        let (a, b) = f1();
        let s = Scenario::new(a, b, None).unwrap();
        let text = s.to_json();
        assert!(text.contains(r#""breakpoints": ["#));
        assert!(!text.contains("seed"));
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back.models[1].slope(1, 1), &q(2, 1));
    }
}
