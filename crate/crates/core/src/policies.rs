//! Selection policies: each step they compel the individual to go to
//! court, offer a subsidy, or leave the individual alone. Also holds the
//! individual's settle-or-litigate rule.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CaseFeatures;

/// Eigenvalues at or above this count as well-explored directions in the
/// KWIK gate.
pub const KWIK_EIGENVALUE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionAction {
    NoAction,
    Compel,
    Subsidy(f64),
}

/// Thresholds of the KWIK gate plus the accuracy target they were derived
/// from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwikParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl KwikParams {
    /// Default thresholds for accuracy `epsilon` with failure probability
    /// `delta` in dimension `n`:
    /// `alpha2 = epsilon / 4` and
    /// `alpha1 = constant * epsilon^2 / (n ln(n + 1) sqrt(ln(1 / (epsilon delta))))`.
    pub fn from_accuracy(epsilon: f64, delta: f64, n: usize, alpha1_constant: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config("policy.epsilon", format!("must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(
                "policy.delta",
                format!("must lie in (0, 1), got {delta}"),
            ));
        }
        if n == 0 {
            return Err(Error::config("cases.dim", "KWIK needs vector cases"));
        }
        let log_term = (1.0 / (epsilon * delta)).ln();
        if log_term <= 0.0 {
            return Err(Error::config(
                "policy.epsilon",
                "epsilon * delta must be below 1 for the default alpha1",
            ));
        }
        if !(alpha1_constant > 0.0 && alpha1_constant.is_finite()) {
            return Err(Error::config(
                "policy.alpha1_constant",
                format!("must be > 0, got {alpha1_constant}"),
            ));
        }
        let nf = n as f64;
        let alpha1 = alpha1_constant * epsilon * epsilon / (nf * (nf + 1.0).ln() * log_term.sqrt());
        Ok(KwikParams {
            alpha1,
            alpha2: epsilon / 4.0,
            epsilon,
            delta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyConfig {
    /// All subsidies are zero; individuals decide alone.
    NoSubsidy,
    /// Compel the first `ceil(alpha sqrt(horizon / c_max))` cases.
    ExploreThenCommit { horizon: usize, alpha: f64, c_max: f64 },
    /// Compel case `t` with probability `min(1, alpha / sqrt(t c_max))`.
    DynamicCompelling { alpha: f64, c_max: f64 },
    /// Draw a subsidy from a distribution whose tail at each cost level
    /// `c` is `alpha / sqrt(t c)`.
    SubsidySampling { alpha: f64, c_min: f64, c_max: f64 },
    /// Compel only cases the courted history does not yet cover.
    Kwik(KwikParams),
}

impl PolicyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::NoSubsidy => "no_subsidy",
            PolicyConfig::ExploreThenCommit { .. } => "explore_then_commit",
            PolicyConfig::DynamicCompelling { .. } => "dynamic_compelling",
            PolicyConfig::SubsidySampling { .. } => "subsidy_sampling",
            PolicyConfig::Kwik(_) => "kwik",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be > 0, got {v}")))
            }
        };
        let nonneg = |path: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be >= 0, got {v}")))
            }
        };
        match self {
            PolicyConfig::NoSubsidy => Ok(()),
            PolicyConfig::ExploreThenCommit { horizon, alpha, c_max } => {
                if *horizon == 0 {
                    return Err(Error::config("policy.horizon", "must be >= 1"));
                }
                positive("policy.alpha", *alpha)?;
                nonneg("policy.c_max", *c_max)
            }
            PolicyConfig::DynamicCompelling { alpha, c_max } => {
                positive("policy.alpha", *alpha)?;
                nonneg("policy.c_max", *c_max)
            }
            PolicyConfig::SubsidySampling { alpha, c_min, c_max } => {
                SubsidySchedule::new(*alpha, *c_min, *c_max).map(|_| ())
            }
            PolicyConfig::Kwik(p) => {
                positive("policy.alpha1", p.alpha1)?;
                positive("policy.alpha2", p.alpha2)?;
                positive("policy.epsilon", p.epsilon)?;
                positive("policy.delta", p.delta)
            }
        }
    }
}

/// The individual's response: litigate iff `cost - subsidy <= 2 err_before`.
/// Ties litigate.
pub fn agent_decision(cost: f64, subsidy: f64, err_before: f64) -> bool {
    cost - subsidy <= 2.0 * err_before
}

/// Number of cases explore-then-commit sends to court:
/// `ceil(alpha sqrt(horizon / c_max))`, capped at the horizon.
pub fn etc_compel_count(horizon: usize, alpha: f64, c_max: f64) -> usize {
    let raw = (alpha * (horizon as f64 / c_max).sqrt()).ceil();
    if raw.is_nan() || raw >= horizon as f64 {
        horizon
    } else {
        raw as usize
    }
}

/// `min(1, alpha / sqrt(t c_max))`.
pub fn dynamic_compel_probability(t: usize, alpha: f64, c_max: f64) -> f64 {
    let p = alpha / (t as f64 * c_max).sqrt();
    if p.is_nan() {
        1.0
    } else {
        p.min(1.0)
    }
}

/// Last step of the down-scaled first phase of subsidy sampling:
/// `max(floor(alpha^2), floor(alpha^2 / c_min))` when
/// `alpha / sqrt(c_min) > 1`, otherwise 0 (single phase).
pub fn subsidy_transition_step(alpha: f64, c_min: f64) -> usize {
    if alpha / c_min.sqrt() > 1.0 {
        let a2 = alpha * alpha;
        a2.floor().max((a2 / c_min).floor()) as usize
    } else {
        0
    }
}

/// `Pr[s_t >= c - e_t] = alpha / sqrt(t c)`, scaled by `1 / alpha` in the
/// first phase. Values above 1 mean the distribution does not exist.
pub fn subsidy_tail_probability(t: usize, c: f64, alpha: f64, phase1: bool) -> Result<f64> {
    let p = tail_scale(alpha, phase1) / (t as f64 * c).sqrt();
    if p > 1.0 {
        return Err(Error::config(
            "policy",
            format!("subsidy tail probability {p} exceeds 1 at t = {t}, c = {c}"),
        ));
    }
    Ok(p)
}

fn tail_scale(alpha: f64, phase1: bool) -> f64 {
    // Scaling alpha / sqrt(t c) by 1 / alpha leaves 1 / sqrt(t c).
    if phase1 {
        1.0
    } else {
        alpha
    }
}

/// Subsidy sampling parameters with the phase transition precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsidySchedule {
    alpha: f64,
    c_min: f64,
    c_max: f64,
    transition: usize,
}

impl SubsidySchedule {
    pub fn new(alpha: f64, c_min: f64, c_max: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config("policy.alpha", format!("must be > 0, got {alpha}")));
        }
        if !(c_min.is_finite() && c_min > 0.0) {
            return Err(Error::config(
                "policy.c_min",
                format!("subsidy sampling needs c_min > 0, got {c_min}"),
            ));
        }
        if !(c_max.is_finite() && c_max >= c_min) {
            return Err(Error::config("policy.c_max", format!("must be >= c_min, got {c_max}")));
        }
        Ok(SubsidySchedule {
            alpha,
            c_min,
            c_max,
            transition: subsidy_transition_step(alpha, c_min),
        })
    }

    pub fn transition(&self) -> usize {
        self.transition
    }

    pub fn is_phase1(&self, t: usize) -> bool {
        t <= self.transition
    }

    /// Checks that the distribution exists at every step up to `horizon`.
    /// The tail is largest at `c_min` on the first step of each phase.
    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        let mut starts = vec![1];
        if self.transition > 0 && self.transition < horizon {
            starts.push(self.transition + 1);
        }
        for t in starts {
            subsidy_tail_probability(t, self.c_min, self.alpha, self.is_phase1(t))?;
        }
        Ok(())
    }

    pub fn distribution(&self, t: usize, e_t: f64) -> Result<SubsidyDistribution> {
        let phase1 = self.is_phase1(t);
        subsidy_tail_probability(t, self.c_min, self.alpha, phase1)?;
        Ok(SubsidyDistribution {
            t,
            scale: tail_scale(self.alpha, phase1),
            c_min: self.c_min,
            c_max: self.c_max,
            e_t,
        })
    }
}

/// Subsidy distribution at one step: a point mass at `c_max - e_t`, density
/// `scale / (2 sqrt(t) (s + e_t)^{3/2})` on `[c_min - e_t, c_max - e_t]`, and
/// the remaining mass at 0. Support points below zero are floored at 0 when
/// sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsidyDistribution {
    t: usize,
    scale: f64,
    c_min: f64,
    c_max: f64,
    e_t: f64,
}

impl SubsidyDistribution {
    /// `Pr[s >= c - e_t]` for `c` in `[c_min, c_max]`, before flooring.
    pub fn tail(&self, c: f64) -> f64 {
        self.scale / (self.t as f64 * c).sqrt()
    }

    pub fn point_mass(&self) -> f64 {
        self.tail(self.c_max)
    }

    /// Mass assigned directly to zero (excludes flooring).
    pub fn zero_mass(&self) -> f64 {
        1.0 - self.tail(self.c_min)
    }

    /// Continuous density at subsidy level `s`; zero off the support.
    pub fn density(&self, s: f64) -> f64 {
        let c = s + self.e_t;
        if c < self.c_min || c > self.c_max {
            return 0.0;
        }
        self.scale / (2.0 * (self.t as f64).sqrt() * c.powf(1.5))
    }

    pub fn support(&self) -> (f64, f64) {
        (self.c_min - self.e_t, self.c_max - self.e_t)
    }

    /// Inverse-transform sample from a uniform draw `u` in `[0, 1]`.
    pub fn sample_with(&self, u: f64) -> f64 {
        let p_max = self.point_mass();
        let p_min = self.tail(self.c_min);
        if u <= p_max {
            (self.c_max - self.e_t).max(0.0)
        } else if u <= p_min {
            let c = (self.scale / (u * (self.t as f64).sqrt())).powi(2);
            (c.clamp(self.c_min, self.c_max) - self.e_t).max(0.0)
        } else {
            0.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_with(rng.random::<f64>())
    }
}

/// Draws the subsidy for step `t` given `e_t = 2 err(L, D_{t-1}, x_t)`.
pub fn sample_subsidy<R: Rng + ?Sized>(
    t: usize,
    e_t: f64,
    alpha: f64,
    c_min: f64,
    c_max: f64,
    phase1: bool,
    rng: &mut R,
) -> Result<f64> {
    subsidy_tail_probability(t, c_min, alpha, phase1)?;
    let dist = SubsidyDistribution {
        t,
        scale: tail_scale(alpha, phase1),
        c_min,
        c_max,
        e_t,
    };
    Ok(dist.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDecision {
    Predict,
    Compel,
}

/// Coverage of a query by the courted history: `q_norm` is `|q̄|` over the
/// directions with eigenvalue at least 1, `u_norm` is `|ū|`, the query's
/// component in the remaining directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateMeasure {
    pub q_norm: f64,
    pub u_norm: f64,
    pub rank: usize,
}

impl GateMeasure {
    pub fn decide(&self, alpha1: f64, alpha2: f64) -> GateDecision {
        if self.q_norm <= alpha1 && self.u_norm <= alpha2 {
            GateDecision::Predict
        } else {
            GateDecision::Compel
        }
    }
}

/// Incremental KWIK gate over augmented courted cases.
///
/// Only `X^T X` is stored: with `X^T X = U Λ U^T`,
/// `|X Ū Λ̄^{-1} Ū^T x|^2 = sum_{i <= r} (u_i . x)^2 / λ_i`.
#[derive(Debug, Clone)]
pub struct KwikGate {
    gram: DMatrix<f64>,
    rows: usize,
    eigen: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl KwikGate {
    /// A gate for augmented vectors of length `dim`.
    pub fn new(dim: usize) -> Self {
        KwikGate {
            gram: DMatrix::zeros(dim, dim),
            rows: 0,
            eigen: None,
        }
    }

    pub fn from_rows(dim: usize, rows: &[DVector<f64>]) -> Self {
        let mut gate = KwikGate::new(dim);
        for r in rows {
            gate.observe(r);
        }
        gate
    }

    pub fn observe(&mut self, row: &DVector<f64>) {
        assert_eq!(row.len(), self.gram.nrows(), "row dimension mismatch");
        self.gram.ger(1.0, row, row, 1.0);
        self.rows += 1;
        self.eigen = None;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn measure(&mut self, x: &DVector<f64>) -> GateMeasure {
        assert_eq!(x.len(), self.gram.nrows(), "query dimension mismatch");
        let gram = &self.gram;
        let eig = self.eigen.get_or_insert_with(|| SymmetricEigen::new(gram.clone()));
        let proj = eig.eigenvectors.tr_mul(x);
        let mut q2 = 0.0;
        let mut u2 = 0.0;
        let mut rank = 0;
        for (&lambda, &p) in eig.eigenvalues.iter().zip(proj.iter()) {
            if lambda >= KWIK_EIGENVALUE_THRESHOLD {
                q2 += p * p / lambda;
                rank += 1;
            } else {
                u2 += p * p;
            }
        }
        GateMeasure {
            q_norm: q2.sqrt(),
            u_norm: u2.sqrt(),
            rank,
        }
    }

    pub fn decide(&mut self, x: &DVector<f64>, alpha1: f64, alpha2: f64) -> GateDecision {
        self.measure(x).decide(alpha1, alpha2)
    }
}

/// Gate decision for `case` given the augmented courted cases in
/// `history`.
pub fn kwik_gate(history: &[DVector<f64>], case: &CaseFeatures, alpha1: f64, alpha2: f64) -> GateDecision {
    let x = case.augmented();
    KwikGate::from_rows(x.len(), history).decide(&x, alpha1, alpha2)
}

/// A policy instance with its per-run state.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    etc_count: usize,
    subsidy: Option<SubsidySchedule>,
    gate: Option<KwikGate>,
    last_gate: Option<GateDecision>,
}

impl Policy {
    /// `case_dim` is the feature dimension (`None` for singleton cases).
    pub fn new(config: PolicyConfig, case_dim: Option<usize>) -> Result<Self> {
        config.validate()?;
        let etc_count = match &config {
            PolicyConfig::ExploreThenCommit { horizon, alpha, c_max } => etc_compel_count(*horizon, *alpha, *c_max),
            _ => 0,
        };
        let subsidy = match &config {
            PolicyConfig::SubsidySampling { alpha, c_min, c_max } => {
                Some(SubsidySchedule::new(*alpha, *c_min, *c_max)?)
            }
            _ => None,
        };
        let gate = match &config {
            PolicyConfig::Kwik(_) => {
                let n = case_dim.ok_or_else(|| Error::config("cases.kind", "the KWIK policy needs vector cases"))?;
                Some(KwikGate::new(n + 1))
            }
            _ => None,
        };
        Ok(Policy {
            config,
            etc_count,
            subsidy,
            gate,
            last_gate: None,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn subsidy_schedule(&self) -> Option<&SubsidySchedule> {
        self.subsidy.as_ref()
    }

    /// Gate verdict of the most recent `select` call, for KWIK policies.
    pub fn last_gate(&self) -> Option<GateDecision> {
        self.last_gate
    }

    pub fn select<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        case: &CaseFeatures,
        err_before: f64,
        rng: &mut R,
    ) -> Result<SelectionAction> {
        debug_assert!(t >= 1);
        Ok(match &self.config {
            PolicyConfig::NoSubsidy => SelectionAction::NoAction,
            PolicyConfig::ExploreThenCommit { .. } => {
                if t <= self.etc_count {
                    SelectionAction::Compel
                } else {
                    SelectionAction::NoAction
                }
            }
            PolicyConfig::DynamicCompelling { alpha, c_max } => {
                let p = dynamic_compel_probability(t, *alpha, *c_max);
                if rng.random::<f64>() < p {
                    SelectionAction::Compel
                } else {
                    SelectionAction::NoAction
                }
            }
            PolicyConfig::SubsidySampling { .. } => {
                let schedule = self.subsidy.as_ref().expect("schedule built in Policy::new");
                let dist = schedule.distribution(t, 2.0 * err_before)?;
                SelectionAction::Subsidy(dist.sample(rng))
            }
            PolicyConfig::Kwik(p) => {
                let gate = self.gate.as_mut().expect("gate built in Policy::new");
                let verdict = gate.decide(&case.augmented(), p.alpha1, p.alpha2);
                self.last_gate = Some(verdict);
                match verdict {
                    GateDecision::Compel => SelectionAction::Compel,
                    GateDecision::Predict => SelectionAction::NoAction,
                }
            }
        })
    }

    /// Tells the policy that `case` went to court.
    pub fn record_court(&mut self, case: &CaseFeatures) {
        if let Some(gate) = self.gate.as_mut() {
            gate.observe(&case.augmented());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agent_litigates_on_ties() {
        assert!(agent_decision(1.0, 0.0, 0.5));
        assert!(!agent_decision(1.0, 0.0, 0.25));
        assert!(agent_decision(1.0, 0.6, 0.25));
    }

    #[test]
    fn etc_counts() {
        assert_eq!(etc_compel_count(10_000, 1.0, 1.0), 100);
        assert_eq!(etc_compel_count(100, 2.0, 4.0), 10);
        assert_eq!(etc_compel_count(4, 10.0, 1.0), 4);
        assert_eq!(etc_compel_count(7, 1.0, 0.0), 7);
    }

    #[test]
    fn dynamic_probabilities() {
        assert_eq!(dynamic_compel_probability(1, 1.0, 4.0), 0.5);
        assert_eq!(dynamic_compel_probability(1, 3.0, 1.0), 1.0);
        assert_eq!(dynamic_compel_probability(10_000, 1.0, 1.0), 0.01);
    }

    #[test]
    fn tail_probabilities() {
        assert_eq!(subsidy_tail_probability(4, 1.0, 1.0, false).unwrap(), 0.5);
        assert_eq!(subsidy_tail_probability(1, 4.0, 2.0, true).unwrap(), 0.5);
        assert_eq!(subsidy_tail_probability(100, 1.0, 1.0, false).unwrap(), 0.1);
        assert!(subsidy_tail_probability(1, 0.25, 1.0, false).is_err());
    }

    #[test]
    fn transition_step() {
        // alpha / sqrt(c_min) = 2 / sqrt(0.5) > 1
        assert_eq!(subsidy_transition_step(2.0, 0.5), 8);
        assert_eq!(subsidy_transition_step(3.0, 4.0), 9);
        assert_eq!(subsidy_transition_step(1.0, 4.0), 0);
    }

    #[test]
    fn schedule_rejects_ill_defined_first_phase() {
        // alpha = 1, c_min = 0.5: phase-one tail 1/sqrt(0.5) > 1 at t = 1
        let s = SubsidySchedule::new(1.0, 0.5, 1.0).unwrap();
        assert!(s.check_horizon(100).is_err());
        let s = SubsidySchedule::new(2.0, 1.0, 4.0).unwrap();
        assert_eq!(s.transition(), 4);
        assert!(s.check_horizon(100).is_ok());
        assert!(SubsidySchedule::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn sample_branches() {
        let d = SubsidySchedule::new(1.0, 0.25, 1.0)
            .unwrap()
            .distribution(4, 0.1)
            .unwrap();
        assert_eq!(d.point_mass(), 0.5);
        assert!((d.sample_with(0.3) - 0.9).abs() < 1e-15);
        // P_min = 1 / sqrt(4 * 0.25) = 1, so nothing is left at zero here.
        assert_eq!(d.zero_mass(), 0.0);
        let d = SubsidySchedule::new(1.0, 1.0, 4.0)
            .unwrap()
            .distribution(4, 0.1)
            .unwrap();
        assert_eq!(d.sample_with(0.75), 0.0);
        // u = 0.3 inverts to c = (1 / (0.3 * 2))^2
        let c = (1.0_f64 / 0.6).powi(2);
        assert!((d.sample_with(0.3) - (c - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn negative_support_is_floored() {
        let d = SubsidySchedule::new(1.0, 1.0, 4.0)
            .unwrap()
            .distribution(1, 3.0)
            .unwrap();
        assert_eq!(d.sample_with(0.9), 0.0);
        assert!(d.sample_with(0.1) > 0.0);
    }

    #[test]
    fn empirical_tail_matches_closed_form() {
        let d = SubsidySchedule::new(1.0, 0.25, 1.0)
            .unwrap()
            .distribution(4, 0.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut rng)).collect();
        for c in [0.25, 0.5, 1.0] {
            let freq = draws.iter().filter(|&&s| s >= c).count() as f64 / draws.len() as f64;
            let expected = 1.0 / (2.0 * f64::sqrt(c));
            assert!((freq - expected).abs() < 0.01, "c={c} freq={freq} expected={expected}");
        }
    }

    #[test]
    fn kwik_empty_history_compels() {
        let x = CaseFeatures::vector(vec![0.6, 0.8]).unwrap();
        assert_eq!(kwik_gate(&[], &x, 0.1, 0.05), GateDecision::Compel);
    }

    #[test]
    fn kwik_dense_history_predicts() {
        // 400 copies of each standard basis vector of the augmented space:
        // X^T X = 400 I, so |q̄| = |x̃| / 20.
        let p = 3;
        let history: Vec<DVector<f64>> = (0..p)
            .flat_map(|i| std::iter::repeat_n(DVector::from_fn(p, |j, _| if i == j { 1.0 } else { 0.0 }), 400))
            .collect();
        let x = CaseFeatures::vector(vec![0.6, 0.8]).unwrap();
        let mut gate = KwikGate::from_rows(p, &history);
        let m = gate.measure(&x.augmented());
        assert!((m.q_norm - 2.0_f64.sqrt() / 20.0).abs() < 1e-12);
        assert_eq!(m.u_norm, 0.0);
        assert_eq!(m.rank, 3);
        assert_eq!(kwik_gate(&history, &x, 0.1, 0.05), GateDecision::Predict);
    }

    #[test]
    fn kwik_orthogonal_novelty_compels() {
        let e1 = CaseFeatures::vector(vec![1.0, 0.0]).unwrap().augmented();
        let history = vec![e1; 50];
        let x = CaseFeatures::vector(vec![0.0, 1.0]).unwrap();
        let mut gate = KwikGate::from_rows(3, &history);
        let m = gate.measure(&x.augmented());
        // [0, 1, 1] minus its projection on [1, 0, 1] / sqrt(2)
        assert!((m.u_norm - 1.5_f64.sqrt()).abs() < 1e-12);
        assert!(m.u_norm >= 1.0);
        assert_eq!(kwik_gate(&history, &x, 0.1, 0.05), GateDecision::Compel);
    }

    #[test]
    fn kwik_default_thresholds() {
        let p = KwikParams::from_accuracy(0.25, 0.05, 5, 1.0).unwrap();
        assert_eq!(p.alpha2, 0.0625);
        let expected = 0.0625 / (5.0 * 6.0_f64.ln() * 80.0_f64.ln().sqrt());
        assert!((p.alpha1 - expected).abs() < 1e-15);
        assert!(KwikParams::from_accuracy(0.25, 1.5, 5, 1.0).is_err());
    }

    #[test]
    fn select_per_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = CaseFeatures::Singleton;
        let mut none = Policy::new(PolicyConfig::NoSubsidy, None).unwrap();
        assert_eq!(none.select(5, &x, 0.1, &mut rng).unwrap(), SelectionAction::NoAction);

        let etc = PolicyConfig::ExploreThenCommit {
            horizon: 100,
            alpha: 2.0,
            c_max: 4.0,
        };
        let mut etc = Policy::new(etc, None).unwrap();
        assert_eq!(etc.select(10, &x, 0.1, &mut rng).unwrap(), SelectionAction::Compel);
        assert_eq!(etc.select(11, &x, 0.1, &mut rng).unwrap(), SelectionAction::NoAction);

        let mut dynamic = Policy::new(PolicyConfig::DynamicCompelling { alpha: 1.0, c_max: 1.0 }, None).unwrap();
        let trials = 1_000_000;
        let compels = (0..trials)
            .filter(|_| dynamic.select(10_000, &x, 0.1, &mut rng).unwrap() == SelectionAction::Compel)
            .count();
        let freq = compels as f64 / trials as f64;
        assert!((freq - 0.01).abs() < 0.001, "freq {freq}");

        let mut subsidy = Policy::new(
            PolicyConfig::SubsidySampling {
                alpha: 1.0,
                c_min: 4.0,
                c_max: 12.0,
            },
            None,
        )
        .unwrap();
        for t in 1..200 {
            match subsidy.select(t, &x, 0.5, &mut rng).unwrap() {
                SelectionAction::Subsidy(s) => assert!(s >= 0.0 && s.is_finite()),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn kwik_policy_needs_vector_cases() {
        let p = KwikParams::from_accuracy(0.25, 0.05, 2, 1.0).unwrap();
        assert!(Policy::new(PolicyConfig::Kwik(p), None).is_err());
    }
}
