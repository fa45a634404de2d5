//! Domain types shared by the learners, policies and the simulator: cases,
//! the hidden decision rule, court observations, datasets, cost models and
//! per-step accounting records.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the unit-ball constraint for floating-point round-off.
const NORM_SLACK: f64 = 1e-9;

/// A case point in the feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CaseFeatures {
    /// The feature space has a single element.
    Singleton,
    /// A point in the closed unit ball of `R^n`.
    Vector(Vec<f64>),
}

impl CaseFeatures {
    pub fn vector(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::config("case", "dimension must be at least 1"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("case", "coordinates must be finite"));
        }
        let norm = l2_norm(&coords);
        if norm > 1.0 + NORM_SLACK {
            return Err(Error::config("case", format!("norm {norm} lies outside the unit ball")));
        }
        Ok(CaseFeatures::Vector(coords))
    }

    /// `None` for the singleton space.
    pub fn dim(&self) -> Option<usize> {
        match self {
            CaseFeatures::Singleton => None,
            CaseFeatures::Vector(c) => Some(c.len()),
        }
    }

    /// Coordinates, empty for a singleton case.
    pub fn coords(&self) -> &[f64] {
        match self {
            CaseFeatures::Singleton => &[],
            CaseFeatures::Vector(c) => c,
        }
    }

    /// The case with a trailing constant-1 coordinate, `[x, 1]`.
    pub fn augmented(&self) -> DVector<f64> {
        let coords = self.coords();
        DVector::from_fn(coords.len() + 1, |i, _| if i < coords.len() { coords[i] } else { 1.0 })
    }

    pub fn norm(&self) -> f64 {
        l2_norm(self.coords())
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distribution used for vector cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorDistribution {
    /// Uniform over the closed unit ball.
    #[default]
    UniformBall,
    /// Uniform over the unit sphere.
    UnitSphere,
}

/// Describes how cases arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CaseSpec {
    Singleton,
    Vector {
        dim: usize,
        distribution: VectorDistribution,
    },
}

impl CaseSpec {
    pub fn uniform_ball(dim: usize) -> Self {
        CaseSpec::Vector {
            dim,
            distribution: VectorDistribution::UniformBall,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            CaseSpec::Singleton => None,
            CaseSpec::Vector { dim, .. } => Some(*dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CaseSpec::Vector { dim: 0, .. } => Err(Error::config("cases.dim", "dimension must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Draws one case.
pub fn sample_case<R: Rng + ?Sized>(spec: &CaseSpec, rng: &mut R) -> Result<CaseFeatures> {
    spec.validate()?;
    let (dim, distribution) = match spec {
        CaseSpec::Singleton => return Ok(CaseFeatures::Singleton),
        CaseSpec::Vector { dim, distribution } => (*dim, *distribution),
    };
    // Isotropic Gaussian direction; a zero draw has probability zero but is
    // rejected anyway.
    let mut coords: Vec<f64>;
    let mut norm;
    loop {
        coords = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        norm = l2_norm(&coords);
        if norm > 0.0 {
            break;
        }
    }
    let radius = match distribution {
        VectorDistribution::UnitSphere => 1.0,
        VectorDistribution::UniformBall => rng.random::<f64>().powf(1.0 / dim as f64),
    };
    let scale = radius / norm;
    for c in coords.iter_mut() {
        *c *= scale;
    }
    let n = l2_norm(&coords);
    if n > 1.0 {
        for c in coords.iter_mut() {
            *c /= n;
        }
    }
    Ok(CaseFeatures::Vector(coords))
}

/// The hidden decision rule `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecisionRule {
    Constant { mu: f64 },
    Linear { beta: Vec<f64>, beta0: f64 },
}

/// Hidden decision rule together with the court noise level and the
/// decision cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    rule: DecisionRule,
    sigma: f64,
    alpha: f64,
}

impl GroundTruth {
    pub fn constant(mu: f64, sigma: f64, alpha: f64) -> Result<Self> {
        check_noise_and_cap(sigma, alpha)?;
        if !mu.is_finite() || mu < 0.0 || mu > alpha {
            return Err(Error::config(
                "truth.mu",
                format!("must lie in [0, alpha = {alpha}], got {mu}"),
            ));
        }
        Ok(GroundTruth {
            rule: DecisionRule::Constant { mu },
            sigma,
            alpha,
        })
    }

    /// A linear rule `beta . x + beta0`. Requires `|beta| <= beta0` and
    /// `beta0 + |beta| <= alpha` so that `f` maps the unit ball into
    /// `[0, alpha]` without clipping.
    pub fn linear(beta: Vec<f64>, beta0: f64, sigma: f64, alpha: f64) -> Result<Self> {
        check_noise_and_cap(sigma, alpha)?;
        if beta.is_empty() {
            return Err(Error::config("truth.beta", "dimension must be at least 1"));
        }
        if beta.iter().any(|b| !b.is_finite()) || !beta0.is_finite() {
            return Err(Error::config("truth.beta", "coefficients must be finite"));
        }
        let norm = l2_norm(&beta);
        if norm > beta0 + NORM_SLACK {
            return Err(Error::config(
                "truth.beta",
                format!("|beta| = {norm} exceeds beta0 = {beta0}; f would go negative"),
            ));
        }
        if beta0 + norm > alpha + NORM_SLACK {
            return Err(Error::config(
                "truth.beta0",
                format!("beta0 + |beta| = {} exceeds alpha = {alpha}", beta0 + norm),
            ));
        }
        Ok(GroundTruth {
            rule: DecisionRule::Linear { beta, beta0 },
            sigma,
            alpha,
        })
    }

    pub fn rule(&self) -> &DecisionRule {
        &self.rule
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Feature dimension required by the rule; `None` for constant rules,
    /// which accept any case.
    pub fn dim(&self) -> Option<usize> {
        match &self.rule {
            DecisionRule::Constant { .. } => None,
            DecisionRule::Linear { beta, .. } => Some(beta.len()),
        }
    }

    pub fn value(&self, case: &CaseFeatures) -> Result<f64> {
        match &self.rule {
            DecisionRule::Constant { mu } => Ok(*mu),
            DecisionRule::Linear { beta, beta0 } => {
                let x = case.coords();
                if x.len() != beta.len() {
                    return Err(Error::config(
                        "case",
                        format!(
                            "dimension {} does not match the decision rule's {}",
                            x.len(),
                            beta.len()
                        ),
                    ));
                }
                Ok(beta.iter().zip(x).map(|(b, x)| b * x).sum::<f64>() + beta0)
            }
        }
    }
}

fn check_noise_and_cap(sigma: f64, alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::config("truth.alpha", format!("must be > 0, got {alpha}")));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::config("truth.sigma", format!("must be >= 0, got {sigma}")));
    }
    if sigma > alpha {
        return Err(Error::config(
            "truth.sigma",
            format!("must not exceed alpha = {alpha}, got {sigma}"),
        ));
    }
    Ok(())
}

/// A courted case and the noisy information the court uncovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub case: CaseFeatures,
    pub outcome: f64,
}

/// Sends `case` to court: `y = f(x) + N(0, sigma^2)`. The noise is never
/// truncated.
pub fn court_outcome<R: Rng + ?Sized>(truth: &GroundTruth, case: &CaseFeatures, rng: &mut R) -> Result<Observation> {
    let value = truth.value(case)?;
    let noise: f64 = rng.sample(StandardNormal);
    Ok(Observation {
        case: case.clone(),
        outcome: value + truth.sigma * noise,
    })
}

/// Append-only collection of court observations.
///
/// Alongside the raw observations it keeps the sufficient statistics the
/// learners need (outcome sum, and for vector cases the Gram matrix and
/// moment vector of the augmented features), so fitting never has to
/// rescan the history.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    dim: Option<usize>,
    outcome_sum: f64,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
}

impl Dataset {
    /// An empty dataset for the given case dimension (`None` for singleton
    /// cases).
    pub fn new(dim: Option<usize>) -> Self {
        let p = dim.map_or(0, |n| n + 1);
        Dataset {
            observations: Vec::new(),
            dim,
            outcome_sum: 0.0,
            gram: DMatrix::zeros(p, p),
            moment: DVector::zeros(p),
        }
    }

    pub fn from_observations(dim: Option<usize>, obs: impl IntoIterator<Item = Observation>) -> Result<Self> {
        let mut d = Dataset::new(dim);
        for o in obs {
            d.push(o)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if let Some(n) = self.dim {
            if obs.case.dim() != Some(n) {
                return Err(Error::config(
                    "case",
                    format!(
                        "observation dimension {:?} does not match dataset dimension {n}",
                        obs.case.dim()
                    ),
                ));
            }
            let x = obs.case.augmented();
            self.gram.ger(1.0, &x, &x, 1.0);
            self.moment.axpy(obs.outcome, &x, 1.0);
        }
        self.outcome_sum += obs.outcome;
        self.observations.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn outcome_sum(&self) -> f64 {
        self.outcome_sum
    }

    /// `X^T X` over augmented features; 0x0 for singleton datasets.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `X^T Y` over augmented features; empty for singleton datasets.
    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }
}

/// How court costs are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostModel {
    /// Cost at step `t` is entry `t - 1`.
    FixedSequence(Vec<f64>),
    /// i.i.d. uniform on `[c_min, c_max]`.
    Uniform { c_min: f64, c_max: f64 },
    /// Every case costs exactly `c`.
    PointMass(f64),
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::config(path, msg));
        match self {
            CostModel::FixedSequence(costs) => {
                if costs.is_empty() {
                    return bad("cost.values", "must not be empty".into());
                }
                if let Some((i, c)) = costs.iter().enumerate().find(|(_, c)| !c.is_finite() || **c < 0.0) {
                    return bad(
                        &format!("cost.values[{i}]"),
                        format!("must be finite and >= 0, got {c}"),
                    );
                }
            }
            CostModel::Uniform { c_min, c_max } => {
                if !c_min.is_finite() || *c_min < 0.0 {
                    return bad("cost.c_min", format!("must be finite and >= 0, got {c_min}"));
                }
                if !c_max.is_finite() || c_max < c_min {
                    return bad("cost.c_max", format!("must be finite and >= c_min, got {c_max}"));
                }
            }
            CostModel::PointMass(c) => {
                if !c.is_finite() || *c < 0.0 {
                    return bad("cost.c", format!("must be finite and >= 0, got {c}"));
                }
            }
        }
        Ok(())
    }

    pub fn c_min(&self) -> f64 {
        match self {
            CostModel::FixedSequence(c) => c.iter().copied().fold(f64::INFINITY, f64::min),
            CostModel::Uniform { c_min, .. } => *c_min,
            CostModel::PointMass(c) => *c,
        }
    }

    pub fn c_max(&self) -> f64 {
        match self {
            CostModel::FixedSequence(c) => c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            CostModel::Uniform { c_max, .. } => *c_max,
            CostModel::PointMass(c) => *c,
        }
    }

    /// Distribution mean, or the arithmetic mean of a fixed sequence.
    pub fn mean(&self) -> f64 {
        match self {
            CostModel::FixedSequence(c) => c.iter().sum::<f64>() / c.len() as f64,
            CostModel::Uniform { c_min, c_max } => 0.5 * (c_min + c_max),
            CostModel::PointMass(c) => *c,
        }
    }

    /// Cost of the case at step `t` (1-based).
    pub fn draw<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> f64 {
        match self {
            CostModel::FixedSequence(c) => c[(t - 1) % c.len()],
            CostModel::Uniform { c_min, c_max } => {
                if c_min == c_max {
                    *c_min
                } else {
                    rng.random_range(*c_min..=*c_max)
                }
            }
            CostModel::PointMass(c) => *c,
        }
    }
}

/// Accounting for a single step of the online protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub case: CaseFeatures,
    pub cost: f64,
    pub subsidy: f64,
    pub compelled: bool,
    /// Whether the case went to court.
    pub d: bool,
    /// Decision applied to the case: the court's decision on the updated
    /// dataset when litigated, the settlement value otherwise.
    pub applied_decision: f64,
    /// Prediction from the dataset before this step, i.e. the settlement
    /// value the individual was offered.
    pub settlement_value: f64,
    pub true_value: f64,
    pub squared_error: f64,
    pub court_cost_incurred: f64,
    /// Error bound of the learner on the dataset before this step.
    pub pre_step_err_bound: f64,
    pub m_before: usize,
}

impl StepRecord {
    /// Per-step loss: squared error plus court cost if litigated.
    pub fn loss(&self) -> f64 {
        self.squared_error + self.court_cost_incurred
    }
}

/// Complete record of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub records: Vec<StepRecord>,
    pub total_loss: f64,
    pub court_count: usize,
    pub total_subsidy_paid: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl RunLedger {
    /// Sums the per-step losses again in step order.
    pub fn recomputed_total_loss(&self) -> f64 {
        self.records.iter().map(StepRecord::loss).sum()
    }

    /// Checks the per-step accounting identities and the ledger totals.
    /// Returns a description of the first inconsistency found.
    pub fn audit(&self) -> std::result::Result<(), String> {
        for r in &self.records {
            if r.squared_error != (r.applied_decision - r.true_value).powi(2) {
                return Err(format!("step {}: squared_error mismatch", r.t));
            }
            let expected_cost = if r.d { r.cost } else { 0.0 };
            if r.court_cost_incurred != expected_cost {
                return Err(format!("step {}: court cost mismatch", r.t));
            }
            if !r.d && r.applied_decision != r.settlement_value {
                return Err(format!("step {}: settled case not decided by settlement value", r.t));
            }
        }
        if self.recomputed_total_loss() != self.total_loss {
            return Err("total_loss differs from the per-step sum".into());
        }
        let courts = self.records.iter().filter(|r| r.d).count();
        if courts != self.court_count {
            return Err("court_count differs from the number of litigated steps".into());
        }
        for (prev, next) in self.records.iter().zip(self.records.iter().skip(1)) {
            if next.m_before != prev.m_before + usize::from(prev.d) {
                return Err(format!("step {}: dataset did not grow by d", next.t));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_spec_gives_singleton_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_case(&CaseSpec::Singleton, &mut rng).unwrap(),
            CaseFeatures::Singleton
        );
    }

    #[test]
    fn ball_samples_stay_in_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = CaseSpec::uniform_ball(3);
        for _ in 0..10_000 {
            let x = sample_case(&spec, &mut rng).unwrap();
            assert_eq!(x.dim(), Some(3));
            assert!(x.norm() <= 1.0);
        }
    }

    #[test]
    fn one_dimensional_ball_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = CaseSpec::uniform_ball(1);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_case(&spec, &mut rng).unwrap().coords()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let err = sample_case(&CaseSpec::uniform_ball(0), &mut rng).unwrap_err();
        assert!(err.to_string().contains("cases.dim"));
    }

    #[test]
    fn noiseless_outcomes_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = GroundTruth::constant(1.0, 0.0, 2.0).unwrap();
        assert_eq!(
            court_outcome(&t, &CaseFeatures::Singleton, &mut rng).unwrap().outcome,
            1.0
        );

        let t = GroundTruth::linear(vec![0.0, 0.0], 0.5, 0.0, 1.0).unwrap();
        let x = CaseFeatures::vector(vec![0.3, -0.6]).unwrap();
        assert_eq!(court_outcome(&t, &x, &mut rng).unwrap().outcome, 0.5);
    }

    #[test]
    fn outcome_noise_has_gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = GroundTruth::constant(2.0, 1.0, 4.0).unwrap();
        let ys: crate::stats::RunningStats = (0..100_000)
            .map(|_| court_outcome(&t, &CaseFeatures::Singleton, &mut rng).unwrap().outcome)
            .collect();
        assert!((ys.mean() - 2.0).abs() < 0.02, "mean {}", ys.mean());
        assert!((ys.variance() - 1.0).abs() < 0.05, "var {}", ys.variance());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = GroundTruth::linear(vec![0.1, 0.1], 0.5, 0.1, 1.0).unwrap();
        let x = CaseFeatures::vector(vec![0.3]).unwrap();
        assert!(court_outcome(&t, &x, &mut rng).is_err());
    }

    #[test]
    fn ground_truth_construction_checks() {
        assert!(GroundTruth::constant(3.0, 0.1, 2.0).is_err());
        assert!(GroundTruth::constant(1.0, 3.0, 2.0).is_err());
        assert!(GroundTruth::constant(1.0, 0.1, 0.0).is_err());
        // |beta| > beta0 lets f go negative on the ball
        assert!(GroundTruth::linear(vec![0.6, 0.0], 0.5, 0.1, 2.0).is_err());
        // beta0 + |beta| > alpha
        assert!(GroundTruth::linear(vec![0.5, 0.0], 0.6, 0.1, 1.0).is_err());
        assert!(GroundTruth::linear(vec![0.3, 0.4], 0.5, 0.1, 1.0).is_ok());
    }

    #[test]
    fn vector_case_rejects_points_outside_ball() {
        assert!(CaseFeatures::vector(vec![0.8, 0.8]).is_err());
        assert!(CaseFeatures::vector(vec![]).is_err());
        assert!(CaseFeatures::vector(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn dataset_tracks_sufficient_statistics() {
        let obs = vec![
            Observation {
                case: CaseFeatures::vector(vec![0.5]).unwrap(),
                outcome: 2.0,
            },
            Observation {
                case: CaseFeatures::vector(vec![-0.5]).unwrap(),
                outcome: 0.0,
            },
        ];
        let d = Dataset::from_observations(Some(1), obs).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.outcome_sum(), 2.0);
        assert_eq!(d.gram(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]));
        assert_eq!(d.moment(), &DVector::from_vec(vec![1.0, 2.0]));

        let mut d = Dataset::new(Some(2));
        let bad = Observation {
            case: CaseFeatures::Singleton,
            outcome: 1.0,
        };
        assert!(d.push(bad).is_err());
    }

    #[test]
    fn cost_models_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = CostModel::Uniform { c_min: 0.5, c_max: 1.0 };
        for t in 1..1000 {
            let c = m.draw(t, &mut rng);
            assert!((0.5..=1.0).contains(&c));
        }
        assert_eq!(m.mean(), 0.75);
        let f = CostModel::FixedSequence(vec![1.0, 3.0]);
        assert_eq!(f.draw(2, &mut rng), 3.0);
        assert_eq!((f.c_min(), f.c_max(), f.mean()), (1.0, 3.0, 2.0));
        assert!(CostModel::Uniform { c_min: 2.0, c_max: 1.0 }.validate().is_err());
    }
}
