//! Indifference curves of a model in one criteria plane, as polylines with a
//! vertex wherever the curve crosses a breakpoint of either criterion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UtaModel;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curve {
    /// Value of `u_i + u_j` along the curve.
    pub level: Rational,
    /// `(v_i, v_j)` vertices by increasing `v_i`.
    pub points: Vec<[Rational; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCurves {
    pub label: String,
    pub curves: Vec<Curve>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotData {
    pub plane: [usize; 2],
    pub criteria: [String; 2],
    pub models: Vec<ModelCurves>,
}

fn check_plane(m: &UtaModel, i: usize, j: usize) -> Result<()> {
    let n = m.grid().len();
    if i >= n || j >= n || i == j {
        return Err(Error::MalformedQuery(format!("invalid plane ({i}, {j}) for {n} criteria")));
    }
    Ok(())
}

/// The level set `u_i(v_i) + u_j(v_j) = level`, or `None` if it is empty.
pub fn level_curve(m: &UtaModel, i: usize, j: usize, level: &Rational) -> Result<Option<Curve>> {
    check_plane(m, i, j)?;
    let (si, sj) = (m.grid().scale(i), m.grid().scale(j));
    let mut points: Vec<[Rational; 2]> = Vec::new();
    for x in &si.breakpoints {
        if let Some(y) = m.invert_marginal(j, &(level - m.eval_marginal(i, x)?)) {
            points.push([x.clone(), y]);
        }
    }
    for y in &sj.breakpoints {
        if let Some(x) = m.invert_marginal(i, &(level - m.eval_marginal(j, y)?)) {
            points.push([x, y.clone()]);
        }
    }
    if points.is_empty() {
        return Ok(None);
    }
    points.sort();
    points.dedup();
    Ok(Some(Curve { level: level.clone(), points }))
}

/// `levels` curves at `U k / (levels + 1)` for `k = 1..=levels`, where `U` is
/// the largest value reachable in the plane.
pub fn plane_curves(m: &UtaModel, i: usize, j: usize, levels: usize) -> Result<Vec<Curve>> {
    check_plane(m, i, j)?;
    let top = m.marginal_range(i) + m.marginal_range(j);
    let steps = Rational::from_integer(levels as i64 + 1);
    let mut out = Vec::new();
    for k in 1..=levels {
        let level = &top * Rational::from_integer(k as i64) / &steps;
        out.extend(level_curve(m, i, j, &level)?);
    }
    Ok(out)
}

pub fn plot_data(models: &[(String, &UtaModel)], i: usize, j: usize, levels: usize) -> Result<PlotData> {
    let first = models.first().ok_or_else(|| Error::InvalidModel("nothing to plot".into()))?.1;
    check_plane(first, i, j)?;
    let grid = first.grid();
    Ok(PlotData {
        plane: [i, j],
        criteria: [grid.scale(i).name.clone(), grid.scale(j).name.clone()],
        models: models
            .iter()
            .map(|(label, m)| Ok(ModelCurves { label: label.clone(), curves: plane_curves(m, i, j, levels)? }))
            .collect::<Result<_>>()?,
    })
}
