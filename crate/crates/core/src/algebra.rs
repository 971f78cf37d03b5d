//! Slope relations extracted from pattern outputs, and the binary
//! disambiguation systems that assign anonymous answers to decision-makers.
//!
//! Conventions. In every coefficient pair the `kappa` entry belongs to the DM
//! who produced point `B` (the lower answer) and `kappa_prime` to the DM who
//! produced `C`. An assignment bit is 1 when DM `alpha` is that `B` DM, so
//! `alpha` takes `kappa` coefficients when the bit is 1 and `kappa_prime`
//! coefficients when it is 0; `beta` takes the other one.
//!
//! Each solver enumerates the four assignments of the two bits, keeps those
//! whose equations hold within the tolerance, and reports the slopes implied
//! by the best one. With tolerance zero this is exact equality.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::patterns::{NrInfo, SrInfo};
use crate::rational::Rational;

/// Per-DM slopes on one interval, under the elicitation's labeling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlopePair {
    pub alpha: Rational,
    pub beta: Rational,
}

impl SlopePair {
    pub fn new(alpha: Rational, beta: Rational) -> Self {
        SlopePair { alpha, beta }
    }

    /// `alpha / beta`, the cross-DM ratio used by the non-degeneracy conditions.
    pub fn ratio(&self) -> Rational {
        &self.alpha / &self.beta
    }

    pub fn is_unanimous(&self) -> bool {
        self.alpha == self.beta
    }
}

/// `gamma_j = lambda * gamma_i` for the DM answering `B` (`kappa`) and `C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SrCoefficients {
    pub kappa: Rational,
    pub kappa_prime: Rational,
}

impl SrCoefficients {
    pub fn is_unanimous(&self) -> bool {
        self.kappa == self.kappa_prime
    }

    fn pick(&self, bit: u8) -> (&Rational, &Rational) {
        if bit == 1 {
            (&self.kappa, &self.kappa_prime)
        } else {
            (&self.kappa_prime, &self.kappa)
        }
    }
}

/// `gamma_{j,lj+1} = theta * gamma_{i,li} + phi * gamma_{j,lj}` per DM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NrCoefficients {
    pub theta_kappa: Rational,
    pub theta_kappa_prime: Rational,
    pub phi_kappa: Rational,
    pub phi_kappa_prime: Rational,
}

impl NrCoefficients {
    /// `(theta, phi)` for alpha, then for beta.
    fn pick(&self, bit: u8) -> ((&Rational, &Rational), (&Rational, &Rational)) {
        let k = (&self.theta_kappa, &self.phi_kappa);
        let kp = (&self.theta_kappa_prime, &self.phi_kappa_prime);
        if bit == 1 {
            (k, kp)
        } else {
            (kp, k)
        }
    }
}

/// `(first, second)` assignment bits; 1 means alpha produced `B` in that info.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Assignment {
    pub first: u8,
    pub second: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlopePairResult {
    pub slopes: SlopePair,
    pub assignment: Assignment,
    /// Every assignment that survived, best first.
    pub survivors: Vec<Assignment>,
    pub unanimous: bool,
}

/// Residual allowance for the disambiguation equations. Zero means exact.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Tolerance(Rational);

impl Tolerance {
    pub fn exact() -> Self {
        Tolerance(Rational::zero())
    }

    pub fn new(epsilon: Rational) -> Result<Self> {
        if epsilon.is_negative() {
            return Err(Error::Parse(format!("tolerance must be >= 0, got {epsilon}")));
        }
        Ok(Tolerance(epsilon))
    }

    pub fn epsilon(&self) -> &Rational {
        &self.0
    }

    pub fn is_exact(&self) -> bool {
        self.0.is_zero()
    }

    pub fn close(&self, a: &Rational, b: &Rational) -> bool {
        (a - b).abs() <= self.0
    }
}

pub fn sr_coefficients(info: &SrInfo) -> Result<SrCoefficients> {
    let lambda = |p: &crate::patterns::PlanePoint| -> Result<Rational> {
        let value = (&p.vi - &info.a.vi)
            .checked_div(&(&info.a.vj - &p.vj))
            .ok_or_else(|| Error::DegenerateGeometry("A and an answer share their j value".into()))?;
        if !value.is_positive() {
            return Err(Error::DegenerateGeometry(format!(
                "single-rectangle ratio {value} is not positive"
            )));
        }
        Ok(value)
    };
    Ok(SrCoefficients { kappa: lambda(&info.b)?, kappa_prime: lambda(&info.c)? })
}

pub fn nr_coefficients(info: &NrInfo, shared_breakpoint: &Rational) -> Result<NrCoefficients> {
    let coeffs = |p: &crate::patterns::PlanePoint| -> Result<(Rational, Rational)> {
        let above = &p.vj - shared_breakpoint;
        if !above.is_positive() {
            return Err(Error::DegenerateGeometry(format!(
                "neighboring answer {} is not above the shared breakpoint {shared_breakpoint}",
                p.vj
            )));
        }
        let theta = (&info.a.vi - &p.vi) / &above;
        let phi = (&info.a.vj - shared_breakpoint) / &above;
        if !theta.is_positive() {
            return Err(Error::DegenerateGeometry(format!("theta {theta} is not positive")));
        }
        Ok((theta, phi))
    };
    let (theta_kappa, phi_kappa) = coeffs(&info.b)?;
    let (theta_kappa_prime, phi_kappa_prime) = coeffs(&info.c)?;
    Ok(NrCoefficients { theta_kappa, theta_kappa_prime, phi_kappa, phi_kappa_prime })
}

struct Candidate {
    assignment: Assignment,
    residual: Rational,
    slopes: SlopePair,
}

const ASSIGNMENTS: [Assignment; 4] = [
    Assignment { first: 0, second: 0 },
    Assignment { first: 0, second: 1 },
    Assignment { first: 1, second: 0 },
    Assignment { first: 1, second: 1 },
];

/// Keeps the candidates within tolerance and picks the smallest residual.
/// Distinct slope outcomes at the best residual make the system degenerate.
fn decide(mut candidates: Vec<Candidate>, tol: &Tolerance, unanimous: bool, what: &str) -> Result<SlopePairResult> {
    candidates.retain(|c| &c.residual <= tol.epsilon());
    candidates.sort_by(|a, b| a.residual.cmp(&b.residual));
    let Some(best) = candidates.first() else {
        return Err(Error::NoConsistentAssignment { context: what.to_string() });
    };
    let tied: Vec<&Candidate> = candidates.iter().filter(|c| c.residual == best.residual).collect();
    if tied.iter().any(|c| c.slopes != best.slopes) {
        let outcomes: Vec<String> = tied
            .iter()
            .map(|c| format!("{:?} -> ({}, {})", c.assignment, c.slopes.alpha, c.slopes.beta))
            .collect();
        return Err(Error::Degenerate { context: format!("{what}: {}", outcomes.join("; ")) });
    }
    Ok(SlopePairResult {
        slopes: best.slopes.clone(),
        assignment: best.assignment,
        survivors: candidates.iter().map(|c| c.assignment).collect(),
        unanimous,
    })
}

/// Identifies a target interval from two single-rectangle infos taken against
/// two reference intervals whose per-DM slopes are known.
pub fn solve_two_sr(
    first: &SrCoefficients,
    second: &SrCoefficients,
    reference_first: &SlopePair,
    reference_second: &SlopePair,
    tol: &Tolerance,
) -> Result<SlopePairResult> {
    let candidates = ASSIGNMENTS
        .iter()
        .map(|&assignment| {
            let (la, lb) = first.pick(assignment.first);
            let (ma, mb) = second.pick(assignment.second);
            let alpha = la * &reference_first.alpha;
            let beta = lb * &reference_first.beta;
            let ra = (&alpha - ma * &reference_second.alpha).abs();
            let rb = (&beta - mb * &reference_second.beta).abs();
            Candidate { assignment, residual: ra.max(rb), slopes: SlopePair::new(alpha, beta) }
        })
        .collect();
    decide(candidates, tol, first.is_unanimous() && second.is_unanimous(), "two single rectangles")
}

/// Identifies interval `lj + 1` of `j` from a single-rectangle info on
/// `R(li, lj + 1)` and a neighboring info across `R(li, lj)`/`R(li, lj + 1)`.
pub fn solve_sr_nr(
    sr: &SrCoefficients,
    nr: &NrCoefficients,
    reference: &SlopePair,
    previous: &SlopePair,
    tol: &Tolerance,
) -> Result<SlopePairResult> {
    let candidates = ASSIGNMENTS
        .iter()
        .map(|&assignment| {
            let (la, lb) = sr.pick(assignment.first);
            let ((ta, pa), (tb, pb)) = nr.pick(assignment.second);
            let alpha = la * &reference.alpha;
            let beta = lb * &reference.beta;
            let ra = (&alpha - (ta * &reference.alpha + pa * &previous.alpha)).abs();
            let rb = (&beta - (tb * &reference.beta + pb * &previous.beta)).abs();
            Candidate { assignment, residual: ra.max(rb), slopes: SlopePair::new(alpha, beta) }
        })
        .collect();
    decide(candidates, tol, sr.is_unanimous(), "single rectangle + neighboring rectangles")
}

/// Identifies interval `lj` of `j` from a single-rectangle info on
/// `R(li, lj)` and a neighboring info across `R(li, lj)`/`R(li, lj + 1)`,
/// when interval `lj + 1` is already known.
pub fn solve_downward(
    sr: &SrCoefficients,
    nr: &NrCoefficients,
    reference: &SlopePair,
    next: &SlopePair,
    tol: &Tolerance,
) -> Result<SlopePairResult> {
    if nr.phi_kappa.is_zero() || nr.phi_kappa_prime.is_zero() {
        return Err(Error::PhiZero);
    }
    let candidates = ASSIGNMENTS
        .iter()
        .map(|&assignment| {
            let (la, lb) = sr.pick(assignment.first);
            let ((ta, pa), (tb, pb)) = nr.pick(assignment.second);
            let alpha = la * &reference.alpha;
            let beta = lb * &reference.beta;
            let ra = (&next.alpha - (ta * &reference.alpha + pa * &alpha)).abs();
            let rb = (&next.beta - (tb * &reference.beta + pb * &beta)).abs();
            Candidate { assignment, residual: ra.max(rb), slopes: SlopePair::new(alpha, beta) }
        })
        .collect();
    decide(candidates, tol, sr.is_unanimous(), "downward single rectangle + neighboring rectangles")
}
