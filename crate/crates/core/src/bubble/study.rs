//! Sweep, fit and compare: the expansion coefficients of the bubble integrals
//! against their closed forms.

use serde::{Deserialize, Serialize};

use super::{
    k0_estimate, leading_coefficient, log_regime_prediction, sweep_integrals, BubbleIntegrals, BubbleParams,
    ExpansionPredictions,
};
use super::fit::{fit_expansion_with_remainder, ExpansionFit, ExpansionModel};
use crate::error::{Error, Result};

/// Power of the nuisance column in the `n ≠ 6` fits.
pub fn remainder_power(n: usize) -> f64 {
    ((n as f64) - 4.0).min(4.0)
}

/// One fitted subleading coefficient next to its prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCheck {
    pub fit: ExpansionFit,
    /// The normalised subleading coefficient extracted from `fit`.
    pub fitted: f64,
    pub predicted: Option<f64>,
    pub rel_deviation: Option<f64>,
}

impl CoefficientCheck {
    fn new(fit: ExpansionFit, fitted: f64, predicted: Option<f64>) -> Self {
        let rel_deviation = predicted.map(|p| (fitted - p).abs() / p.abs().max(f64::MIN_POSITIVE));
        Self {
            fit,
            fitted,
            predicted,
            rel_deviation,
        }
    }
}

/// `n = 6`: the quadratic form over `E` against `c0 + c2 ε²log(1/ε²) + c ε²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegimeCheck {
    pub fit: ExpansionFit,
    pub predicted: f64,
    /// `stderr / |c0|`.
    pub relative_stderr: f64,
    /// `sign(c2) == sign(predicted)`.
    pub sign_agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionStudy {
    pub n: usize,
    #[serde(rename = "K0")]
    pub k0: f64,
    /// `E = 1/(K₀^{n/4} f₀^{(n−4)/4})`.
    pub leading: f64,
    pub rows: Vec<BubbleIntegrals>,
    /// `−c2/c0` of `massN`.
    #[serde(rename = "massN")]
    pub mass_n: Option<CoefficientCheck>,
    /// `−c2/c0` of `bilapSq`.
    #[serde(rename = "bilapSq")]
    pub bilap_sq: Option<CoefficientCheck>,
    /// `c2/E` of `gradSq`.
    #[serde(rename = "gradSq")]
    pub grad_sq: Option<CoefficientCheck>,
    pub log_regime: Option<LogRegimeCheck>,
    #[serde(rename = "bTerm_over_eps2")]
    pub b_term_over_eps2: Vec<f64>,
    /// `bTerm/ε²` strictly decreasing along the (decreasing) sweep.
    pub b_term_decreasing: bool,
}

/// Run `params` over `sweep` and fit every integral.
///
/// For `n > 6` the `massN`, `bilapSq` and `gradSq` fits use `ε²` plus an
/// `ε^{min(n−4,4)}` nuisance column and carry predictions; for `n = 6` the
/// quadratic form is fitted in the log regime with an `ε²` nuisance column;
/// for `n = 5` only the raw fits are returned.
pub fn expansion_study(params: &BubbleParams, sweep: &[f64]) -> Result<ExpansionStudy> {
    params.validate()?;
    if sweep.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "an expansion sweep needs at least 4 values of eps (got {})",
            sweep.len()
        )));
    }
    let n = params.n;
    let k0 = k0_estimate(n)?;
    let leading = leading_coefficient(n, k0, params.f0);
    let rows = sweep_integrals(params, sweep)?;
    let series = |get: fn(&BubbleIntegrals) -> f64| -> Vec<(f64, f64)> { rows.iter().map(|r| (r.eps, get(r))).collect() };

    let mut study = ExpansionStudy {
        n,
        k0,
        leading,
        b_term_over_eps2: rows.iter().map(|r| r.b_term / (r.eps * r.eps)).collect(),
        b_term_decreasing: false,
        mass_n: None,
        bilap_sq: None,
        grad_sq: None,
        log_regime: None,
        rows: Vec::new(),
    };
    study.b_term_decreasing = study.b_term_over_eps2.windows(2).all(|w| w[1] < w[0]);

    if n == 6 {
        let data: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.quadratic_form() / leading)).collect();
        let fit = fit_expansion_with_remainder(&data, ExpansionModel::Eps2Log, 2.0)?;
        let predicted = log_regime_prediction(n, params.scalar_curvature, params.a0)?;
        study.log_regime = Some(LogRegimeCheck {
            relative_stderr: fit.stderr / fit.c0.abs(),
            sign_agrees: fit.c2.signum() == predicted.signum(),
            predicted,
            fit,
        });
    } else {
        let p = remainder_power(n);
        let pred = (n > 6).then(|| {
            ExpansionPredictions::new(n, params.scalar_curvature, params.a0, params.f0, params.laplacian_f0)
        });
        let mass = fit_expansion_with_remainder(&series(|r| r.mass_n), ExpansionModel::Eps2, p)?;
        let bilap = fit_expansion_with_remainder(&series(|r| r.bilap_sq), ExpansionModel::Eps2, p)?;
        study.mass_n = Some(CoefficientCheck::new(mass.clone(), -mass.c2 / mass.c0, pred.map(|p| p.mass_ratio)));
        study.bilap_sq = Some(CoefficientCheck::new(bilap.clone(), -bilap.c2 / bilap.c0, pred.map(|p| p.bilap_ratio)));
        if params.a0 != 0.0 {
            let grad = fit_expansion_with_remainder(&series(|r| r.grad_sq), ExpansionModel::Eps2, p)?;
            study.grad_sq = Some(CoefficientCheck::new(grad.clone(), grad.c2 / leading, pred.map(|p| p.grad_ratio)));
        }
    }
    study.rows = rows;
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::DEFAULT_VOLUME_FLOOR;

    fn params(n: usize, s: f64, a: f64) -> BubbleParams {
        BubbleParams {
            n,
            bubble_eps: 0.01,
            delta: 0.5,
            f0: 1.0,
            laplacian_f0: 0.0,
            scalar_curvature: s,
            a0: a,
            b0: 1.0,
            volume_floor: DEFAULT_VOLUME_FLOOR,
        }
    }

    #[test]
    fn flat_bilaplacian_has_no_eps_squared_term() {
        let s = expansion_study(&params(8, 0.0, 0.0), &[0.02, 0.015, 0.01, 0.0075, 0.005]).unwrap();
        let bilap = s.bilap_sq.unwrap();
        assert_eq!(bilap.predicted, Some(0.0));
        assert!(bilap.fitted.abs() < 1e-3, "{}", bilap.fitted);
        assert!(s.grad_sq.is_none() && s.log_regime.is_none());
        assert!(s.b_term_decreasing);
    }

    #[test]
    fn six_dimensions_use_the_log_model() {
        let s = expansion_study(&params(6, 1.0, 0.0), &[0.004, 0.003, 0.002, 0.0015, 0.001]).unwrap();
        let log = s.log_regime.unwrap();
        assert_eq!(log.fit.model, ExpansionModel::Eps2Log);
        assert!(log.sign_agrees);
        assert!(s.mass_n.is_none());
    }

    #[test]
    fn short_sweeps_are_rejected() {
        assert!(expansion_study(&params(7, 1.0, 1.0), &[0.02, 0.01]).is_err());
    }
}
