//! Least-squares fits of `value(ε) ≈ c0 + c2·φ(ε) [+ c_rem·ε^p]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionModel {
    /// `φ(ε) = ε²`.
    Eps2,
    /// `φ(ε) = ε² log(1/ε²)`.
    Eps2Log,
}

impl ExpansionModel {
    pub fn shape(self, eps: f64) -> f64 {
        match self {
            ExpansionModel::Eps2 => eps * eps,
            ExpansionModel::Eps2Log => eps * eps * (1.0 / (eps * eps)).ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub c0: f64,
    pub c2: f64,
    /// Coefficient of the optional higher-order nuisance column.
    pub c_rem: Option<f64>,
    pub remainder_power: Option<f64>,
    pub model: ExpansionModel,
    /// Residual standard error `sqrt(SSR / (points − parameters))`.
    pub stderr: f64,
    pub eps_values: Vec<f64>,
}

/// Two-term fit over the displayed expansion shape.
pub fn fit_expansion(data: &[(f64, f64)], model: ExpansionModel) -> Result<ExpansionFit> {
    fit(data, model, None)
}

/// Fit with an additional `ε^power` column absorbing the next order.
pub fn fit_expansion_with_remainder(data: &[(f64, f64)], model: ExpansionModel, power: f64) -> Result<ExpansionFit> {
    fit(data, model, Some(power))
}

fn fit(data: &[(f64, f64)], model: ExpansionModel, power: Option<f64>) -> Result<ExpansionFit> {
    if data.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "an expansion fit needs at least 4 points (got {})",
            data.len()
        )));
    }
    if data.windows(2).any(|w| !(w[1].0 < w[0].0)) || data.iter().any(|d| !(d.0 > 0.0)) {
        return Err(Error::InvalidParameter(
            "eps values must be positive and strictly decreasing".into(),
        ));
    }
    let cols = 2 + power.is_some() as usize;
    let rows = data.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let b = DVector::from_iterator(rows, data.iter().map(|d| d.1));
    for (i, &(eps, _)) in data.iter().enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = model.shape(eps);
        if let Some(p) = power {
            a[(i, 2)] = eps.powf(p);
        }
    }
    // Column equilibration keeps the tiny ε-columns well conditioned.
    let scales: Vec<f64> = (0..cols)
        .map(|j| a.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    if scales.contains(&0.0) {
        return Err(Error::RankDeficient);
    }
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    let smin = sv.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(smin > 1e-13 * smax) {
        return Err(Error::RankDeficient);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| Error::RankDeficient)?;
    let resid = &a * &x - &b;
    let dof = rows.saturating_sub(cols);
    let stderr = if dof > 0 {
        (resid.norm_squared() / dof as f64).sqrt()
    } else {
        0.0
    };
    let coef: Vec<f64> = x.iter().zip(&scales).map(|(c, s)| c / s).collect();
    Ok(ExpansionFit {
        c0: coef[0],
        c2: coef[1],
        c_rem: power.map(|_| coef[2]),
        remainder_power: power,
        model,
        stderr,
        eps_values: data.iter().map(|d| d.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let data: Vec<_> = [0.1, 0.05, 0.02, 0.01].iter().map(|&e| (e, 3.0 + 5.0 * e * e)).collect();
        let f = fit_expansion(&data, ExpansionModel::Eps2).unwrap();
        assert!((f.c0 - 3.0).abs() < 1e-12 && (f.c2 - 5.0).abs() < 1e-8);
        assert!(f.stderr < 1e-12);
    }

    #[test]
    fn exact_log_model() {
        let data: Vec<_> = [0.1, 0.05, 0.02, 0.01]
            .iter()
            .map(|&e: &f64| (e, 1.0 - 2.0 * e * e * (1.0 / (e * e)).ln()))
            .collect();
        let f = fit_expansion(&data, ExpansionModel::Eps2Log).unwrap();
        assert!((f.c0 - 1.0).abs() < 1e-12 && (f.c2 + 2.0).abs() < 1e-8);
    }

    #[test]
    fn remainder_column_absorbs_next_order() {
        let data: Vec<_> = [0.1, 0.07, 0.05, 0.03, 0.02]
            .iter()
            .map(|&e: &f64| (e, 2.0 - 0.7 * e * e + 9.0 * e.powi(3)))
            .collect();
        let f = fit_expansion_with_remainder(&data, ExpansionModel::Eps2, 3.0).unwrap();
        assert!((f.c2 + 0.7).abs() < 1e-7 && (f.c_rem.unwrap() - 9.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let few = [(0.1, 1.0), (0.05, 1.0), (0.01, 1.0)];
        assert!(fit_expansion(&few, ExpansionModel::Eps2).is_err());
        let unordered = [(0.1, 1.0), (0.2, 1.0), (0.05, 1.0), (0.01, 1.0)];
        assert!(fit_expansion(&unordered, ExpansionModel::Eps2).is_err());
    }
}
