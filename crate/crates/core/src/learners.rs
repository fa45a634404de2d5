//! Decision learning algorithms: map a dataset of court observations to a
//! decision rule, and expose the error bound that individuals use to decide
//! whether litigating is worth it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CaseFeatures, Dataset};

/// Relative tolerance of the ridge-multiplier bisection.
const BISECTION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LearnerKind {
    /// Empirical mean of the outcomes; for constant decision rules.
    EmpiricalMean,
    /// Ordinary least squares on `[x, 1]`, minimum-norm when rank deficient.
    Ols,
    /// Least squares over coefficient vectors (offset included) of norm at
    /// most `radius`.
    NormConstrainedLinear { radius: f64 },
}

impl LearnerKind {
    pub fn is_linear(&self) -> bool {
        !matches!(self, LearnerKind::EmpiricalMean)
    }
}

/// A learner together with the constant in its `O(sigma / sqrt(m))` error
/// bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub kind: LearnerKind,
    pub err_constant: f64,
}

impl Learner {
    pub fn new(kind: LearnerKind) -> Self {
        Learner {
            kind,
            err_constant: 1.0,
        }
    }

    pub fn with_err_constant(mut self, c: f64) -> Self {
        self.err_constant = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.err_constant.is_finite() || self.err_constant <= 0.0 {
            return Err(Error::config(
                "learner.err_constant",
                format!("must be > 0, got {}", self.err_constant),
            ));
        }
        if let LearnerKind::NormConstrainedLinear { radius } = self.kind {
            if !radius.is_finite() || radius <= 0.0 {
                return Err(Error::config("learner.radius", format!("must be > 0, got {radius}")));
            }
        }
        Ok(())
    }

    /// Fits a rule to `data`. An empty dataset yields the zero rule.
    ///
    /// Linear learners need a dataset built for vector cases; fitting one on a
    /// singleton dataset yields an offset-only rule.
    pub fn fit(&self, data: &Dataset) -> FittedRule {
        let m = data.len();
        let params = match self.kind {
            LearnerKind::EmpiricalMean => {
                let mean = if m == 0 { 0.0 } else { data.outcome_sum() / m as f64 };
                RuleParams::Mean(mean)
            }
            LearnerKind::Ols => RuleParams::Linear(min_norm_solution(data)),
            LearnerKind::NormConstrainedLinear { radius } => {
                RuleParams::Linear(norm_constrained_solution(data, radius))
            }
        };
        FittedRule { params, fitted_on: m }
    }

    /// Error bound `err(L, D, x)` for a dataset of `m` observations. Depends
    /// on `m` only, never on the case.
    ///
    /// `m = 0` gives `alpha`; otherwise the bound is
    /// `err_constant * sigma / sqrt(m)` for the empirical mean and
    /// `err_constant * sigma * sqrt(n + 1) / sqrt(m)` for the linear learners,
    /// capped at `alpha`.
    pub fn err_bound(&self, m: usize, sigma: f64, alpha: f64, n: usize) -> f64 {
        if m == 0 {
            return alpha;
        }
        let width = match self.kind {
            LearnerKind::EmpiricalMean => 1.0,
            LearnerKind::Ols | LearnerKind::NormConstrainedLinear { .. } => ((n + 1) as f64).sqrt(),
        };
        (self.err_constant * sigma * width / (m as f64).sqrt()).min(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RuleParams {
    Mean(f64),
    /// Coefficients on `[x, 1]`; the last entry is the offset.
    Linear(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRule {
    pub params: RuleParams,
    pub fitted_on: usize,
}

impl FittedRule {
    /// Unclipped rule value at `case`.
    pub fn raw(&self, case: &CaseFeatures) -> f64 {
        match &self.params {
            RuleParams::Mean(mu) => *mu,
            RuleParams::Linear(beta) => {
                let x = case.coords();
                assert_eq!(x.len() + 1, beta.len(), "case dimension does not match the fitted rule");
                beta.iter().zip(x).map(|(b, x)| b * x).sum::<f64>() + beta[x.len()]
            }
        }
    }

    /// Predicted decision `L(D)(x)`, clipped into `[0, alpha]`.
    pub fn predict(&self, case: &CaseFeatures, alpha: f64) -> f64 {
        predict(self, case, alpha)
    }
}

pub fn predict(rule: &FittedRule, case: &CaseFeatures, alpha: f64) -> f64 {
    rule.raw(case).clamp(0.0, alpha)
}

struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    /// Eigenvalues at or below this are treated as zero.
    cutoff: f64,
}

fn spectrum(gram: &DMatrix<f64>) -> Spectrum {
    let eig = SymmetricEigen::new(gram.clone());
    let largest = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let cutoff = largest * gram.nrows() as f64 * f64::EPSILON;
    Spectrum {
        // Gram matrices are PSD; round-off can push tiny eigenvalues negative.
        values: eig.eigenvalues.map(|v| v.max(0.0)),
        vectors: eig.eigenvectors,
        cutoff,
    }
}

/// `sum_i (u_i . b) / (lambda_i + ridge) * u_i` over the non-null
/// eigenvectors of the Gram matrix.
fn spectral_solve(s: &Spectrum, b: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let coeffs = s.vectors.tr_mul(b);
    let mut beta = DVector::zeros(b.len());
    for (i, (&lambda, &c)) in s.values.iter().zip(coeffs.iter()).enumerate() {
        if lambda > s.cutoff {
            beta.axpy(c / (lambda + ridge), &s.vectors.column(i), 1.0);
        }
    }
    beta
}

fn min_norm_solution(data: &Dataset) -> DVector<f64> {
    let p = data.moment().len().max(1);
    if data.is_empty() || data.dim().is_none() {
        let mut beta = DVector::zeros(p);
        if data.dim().is_none() && !data.is_empty() {
            beta[p - 1] = data.outcome_sum() / data.len() as f64;
        }
        return beta;
    }
    spectral_solve(&spectrum(data.gram()), data.moment(), 0.0)
}

fn norm_constrained_solution(data: &Dataset, radius: f64) -> DVector<f64> {
    if data.is_empty() || data.dim().is_none() {
        let mut beta = min_norm_solution(data);
        let n = beta.norm();
        if n > radius {
            beta *= radius / n;
        }
        return beta;
    }
    let s = spectrum(data.gram());
    let b = data.moment();
    let unconstrained = spectral_solve(&s, b, 0.0);
    if unconstrained.norm() <= radius {
        return unconstrained;
    }
    // |beta(ridge)| decreases monotonically in the ridge multiplier and is at
    // most |X^T Y| / ridge, so the root lies in (0, |X^T Y| / radius].
    let mut lo = 0.0_f64;
    let mut hi = b.norm() / radius;
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if spectral_solve(&s, b, mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` always satisfies the constraint.
    spectral_solve(&s, b, hi)
}
