//! The online protocol. Each step a case arrives, the policy acts, the
//! individual settles or litigates, and the loss is charged. Also covers the
//! offline baseline, Monte Carlo regret estimation and the deterrent check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::{Learner, LearnerKind};
use crate::model::{
    court_outcome, sample_case, CaseFeatures, CaseSpec, CostModel, Dataset, DecisionRule, GroundTruth, Observation,
    RunLedger, StepRecord,
};
use crate::policies::{agent_decision, Policy, PolicyConfig, SelectionAction};
use crate::stats::{derive_seed, RunningStats};

// Independent ChaCha streams per concern, so a policy that consumes more
// randomness does not shift the case, noise or cost sequences.
const STREAM_CASES: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_COSTS: u64 = 2;
const STREAM_POLICY: u64 = 3;

/// Replications are simulated in chunks of this size so that per-step
/// accumulators stay bounded in memory.
const REPLICATION_CHUNK: usize = 64;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: usize,
    pub truth: GroundTruth,
    pub cases: CaseSpec,
    pub costs: CostModel,
    pub learner: Learner,
    pub policy: PolicyConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        self.cases.validate()?;
        self.costs.validate()?;
        self.learner.validate()?;
        if let CostModel::FixedSequence(values) = &self.costs {
            if values.len() < self.horizon {
                return Err(Error::config(
                    "cost.values",
                    format!("needs at least {} entries, got {}", self.horizon, values.len()),
                ));
            }
        }
        if let Some(n) = self.truth.dim() {
            if self.cases.dim() != Some(n) {
                return Err(Error::config(
                    "cases.dim",
                    format!(
                        "linear decision rule has dimension {n}, cases have {:?}",
                        self.cases.dim()
                    ),
                ));
            }
        }
        match self.learner.kind {
            LearnerKind::EmpiricalMean => {
                if matches!(self.truth.rule(), DecisionRule::Linear { .. }) {
                    return Err(Error::config(
                        "learner.kind",
                        "the empirical mean only learns constant decision rules",
                    ));
                }
            }
            LearnerKind::Ols | LearnerKind::NormConstrainedLinear { .. } => {
                if self.cases.dim().is_none() {
                    return Err(Error::config("learner.kind", "linear learners need vector cases"));
                }
            }
        }
        let policy = Policy::new(self.policy.clone(), self.cases.dim())?;
        if let Some(schedule) = policy.subsidy_schedule() {
            schedule.check_horizon(self.horizon)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// One step of the environment: what arrives and what the court would
/// uncover if the case were litigated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub case: CaseFeatures,
    pub cost: f64,
    pub true_value: f64,
    /// Drawn for every step; only revealed online when the case litigates.
    pub outcome: f64,
}

/// The full environment sequence of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub steps: Vec<EnvStep>,
}

impl Environment {
    pub fn draw(config: &RunConfig) -> Result<Self> {
        let mut case_rng = stream(config.seed, STREAM_CASES);
        let mut noise_rng = stream(config.seed, STREAM_NOISE);
        let mut cost_rng = stream(config.seed, STREAM_COSTS);
        let mut steps = Vec::with_capacity(config.horizon);
        for t in 1..=config.horizon {
            let case = sample_case(&config.cases, &mut case_rng)?;
            let cost = config.costs.draw(t, &mut cost_rng);
            let obs = court_outcome(&config.truth, &case, &mut noise_rng)?;
            let true_value = config.truth.value(&case)?;
            steps.push(EnvStep {
                case,
                cost,
                true_value,
                outcome: obs.outcome,
            });
        }
        Ok(Environment { steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

/// Totals of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTotals {
    pub total_loss: f64,
    pub court_count: usize,
    pub total_subsidy_paid: f64,
}

/// Plays the online protocol over `env`, handing every step record to
/// `on_step`. `config` must already be validated.
pub fn simulate<F: FnMut(StepRecord)>(config: &RunConfig, env: &Environment, mut on_step: F) -> Result<RunTotals> {
    let alpha = config.truth.alpha();
    let sigma = config.truth.sigma();
    let dim = config.cases.dim();
    let n = dim.unwrap_or(0);
    let learner = config.learner;

    let mut policy = Policy::new(config.policy.clone(), dim)?;
    let mut policy_rng = stream(config.seed, STREAM_POLICY);
    let mut data = Dataset::new(dim);
    let mut rule = learner.fit(&data);
    let mut totals = RunTotals::default();

    for (i, step) in env.steps.iter().enumerate() {
        let t = i + 1;
        let m_before = data.len();
        let err_before = learner.err_bound(m_before, sigma, alpha, n);
        let action = policy.select(t, &step.case, err_before, &mut policy_rng)?;
        let (subsidy, compelled) = match action {
            SelectionAction::NoAction => (0.0, false),
            SelectionAction::Compel => (0.0, true),
            SelectionAction::Subsidy(s) => (s, false),
        };
        let d = compelled || agent_decision(step.cost, subsidy, err_before);
        let settlement_value = rule.predict(&step.case, alpha);
        let applied_decision = if d {
            data.push(Observation {
                case: step.case.clone(),
                outcome: step.outcome,
            })?;
            policy.record_court(&step.case);
            rule = learner.fit(&data);
            rule.predict(&step.case, alpha)
        } else {
            settlement_value
        };
        let record = StepRecord {
            t,
            case: step.case.clone(),
            cost: step.cost,
            subsidy,
            compelled,
            d,
            applied_decision,
            settlement_value,
            true_value: step.true_value,
            squared_error: (applied_decision - step.true_value).powi(2),
            court_cost_incurred: if d { step.cost } else { 0.0 },
            pre_step_err_bound: err_before,
            m_before,
        };
        totals.total_loss += record.loss();
        if d {
            totals.court_count += 1;
            totals.total_subsidy_paid += subsidy;
        }
        on_step(record);
    }
    Ok(totals)
}

/// Runs one configuration and records every step.
pub fn run(config: &RunConfig) -> Result<RunLedger> {
    config.validate()?;
    let env = Environment::draw(config)?;
    run_in(config, &env)
}

/// Like [`run`] on a pre-drawn environment.
pub fn run_in(config: &RunConfig, env: &Environment) -> Result<RunLedger> {
    let mut records = Vec::with_capacity(env.horizon());
    let totals = simulate(config, env, |r| records.push(r))?;
    Ok(RunLedger {
        records,
        total_loss: totals.total_loss,
        court_count: totals.court_count,
        total_subsidy_paid: totals.total_subsidy_paid,
        seed: config.seed,
        config_digest: config.digest(),
    })
}

/// Loss floor `L*`: the learner fitted once on every `(x_t, y_t)` of the
/// environment, charged squared error only.
pub fn offline_baseline(env: &Environment, truth: &GroundTruth, learner: &Learner, dim: Option<usize>) -> Result<f64> {
    let data = Dataset::from_observations(
        dim,
        env.steps.iter().map(|s| Observation {
            case: s.case.clone(),
            outcome: s.outcome,
        }),
    )?;
    let rule = learner.fit(&data);
    Ok(env
        .steps
        .iter()
        .map(|s| (rule.predict(&s.case, truth.alpha()) - s.true_value).powi(2))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub horizon: usize,
    pub replications: usize,
    pub mean_regret: f64,
    pub std_error: f64,
    pub mean_online_loss: f64,
    pub mean_offline_loss: f64,
    pub mean_court_count: f64,
    pub mean_total_subsidy: f64,
}

#[derive(Debug, Clone, Copy)]
struct Replication {
    online: f64,
    offline: f64,
    courts: usize,
    subsidy: f64,
}

/// Seed of replication `r` of a cell seeded with `cell_seed`.
pub fn replication_seed(cell_seed: u64, r: usize) -> u64 {
    derive_seed(cell_seed, &[r as u64])
}

/// Estimates `R_T = E[L_online - L*] / T` over independent replications.
///
/// Replication `r` runs with seed `replication_seed(config.seed, r)`; the
/// online run and its offline baseline share one environment.
pub fn estimate_regret(config: &RunConfig, replications: usize) -> Result<RegretReport> {
    if replications == 0 {
        return Err(Error::config("replications", "must be >= 1"));
    }
    config.validate()?;
    let reps: Vec<Replication> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = replication_seed(config.seed, r);
            let env = Environment::draw(&cfg)?;
            let totals = simulate(&cfg, &env, |_| {})?;
            let offline = offline_baseline(&env, &cfg.truth, &cfg.learner, cfg.cases.dim())?;
            Ok(Replication {
                online: totals.total_loss,
                offline,
                courts: totals.court_count,
                subsidy: totals.total_subsidy_paid,
            })
        })
        .collect::<Result<_>>()?;

    // Folded in replication order so the result is bit-reproducible.
    let horizon = config.horizon as f64;
    let regret: RunningStats = reps.iter().map(|r| (r.online - r.offline) / horizon).collect();
    let mean = |f: fn(&Replication) -> f64| reps.iter().map(f).sum::<f64>() / reps.len() as f64;
    Ok(RegretReport {
        horizon: config.horizon,
        replications,
        mean_regret: regret.mean(),
        std_error: regret.std_error(),
        mean_online_loss: mean(|r| r.online),
        mean_offline_loss: mean(|r| r.offline),
        mean_court_count: mean(|r| r.courts as f64),
        mean_total_subsidy: mean(|r| r.subsidy),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterrentStep {
    pub t: usize,
    /// Cross-replication mean of `s_t - c_t - L(D_{t-1})(x_t)`.
    pub mean_payoff: f64,
    pub payoff_std_error: f64,
    /// Cross-replication mean of the offered subsidy `s_t`.
    pub mean_subsidy: f64,
    pub subsidy_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterrentReport {
    pub replications: usize,
    pub per_step: Vec<DeterrentStep>,
    /// Largest per-step mean payoff of breaking the law.
    pub max_violation: f64,
    /// No step's mean payoff exceeds zero by more than three standard
    /// errors.
    pub satisfied: bool,
}

impl DeterrentReport {
    /// Steps whose mean payoff exceeds `k` standard errors above zero.
    pub fn violations(&self, k: f64) -> Vec<usize> {
        self.per_step
            .iter()
            .filter(|s| s.mean_payoff > k * s.payoff_std_error)
            .map(|s| s.t)
            .collect()
    }
}

/// Estimates the expected payoff of breaking the law,
/// `E[s_t - c_t - L(D_{t-1})(x_t)]`, at every step.
pub fn check_deterrent(config: &RunConfig, replications: usize) -> Result<DeterrentReport> {
    if replications == 0 {
        return Err(Error::config("replications", "must be >= 1"));
    }
    config.validate()?;
    let horizon = config.horizon;
    let mut payoff = vec![RunningStats::new(); horizon];
    let mut subsidy = vec![RunningStats::new(); horizon];
    let mut start = 0;
    while start < replications {
        let end = (start + REPLICATION_CHUNK).min(replications);
        let chunk: Vec<Vec<(f64, f64)>> = (start..end)
            .into_par_iter()
            .map(|r| {
                let mut cfg = config.clone();
                cfg.seed = replication_seed(config.seed, r);
                let env = Environment::draw(&cfg)?;
                let mut rows = Vec::with_capacity(horizon);
                simulate(&cfg, &env, |rec| {
                    rows.push((rec.subsidy - rec.cost - rec.settlement_value, rec.subsidy));
                })?;
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        for rows in &chunk {
            for (i, &(p, s)) in rows.iter().enumerate() {
                payoff[i].push(p);
                subsidy[i].push(s);
            }
        }
        start = end;
    }
    let per_step: Vec<DeterrentStep> = payoff
        .iter()
        .zip(&subsidy)
        .enumerate()
        .map(|(i, (p, s))| DeterrentStep {
            t: i + 1,
            mean_payoff: p.mean(),
            payoff_std_error: p.std_error(),
            mean_subsidy: s.mean(),
            subsidy_std_error: s.std_error(),
        })
        .collect();
    let max_violation = per_step.iter().map(|s| s.mean_payoff).fold(f64::NEG_INFINITY, f64::max);
    let mut report = DeterrentReport {
        replications,
        per_step,
        max_violation,
        satisfied: true,
    };
    report.satisfied = report.violations(3.0).is_empty();
    Ok(report)
}

/// Accuracy and exploration statistics of a KWIK run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwikSummary {
    pub horizon: usize,
    /// Steps settled at the learner's prediction.
    pub predicted_count: usize,
    pub compelled_count: usize,
    pub compelled_first_half: usize,
    pub compelled_second_half: usize,
    pub predictions_within_eps: usize,
    pub max_abs_prediction_error: f64,
}

impl KwikSummary {
    pub fn from_ledger(ledger: &RunLedger, epsilon: f64) -> Self {
        let horizon = ledger.records.len();
        let half = horizon / 2;
        let mut s = KwikSummary {
            horizon,
            predicted_count: 0,
            compelled_count: 0,
            compelled_first_half: 0,
            compelled_second_half: 0,
            predictions_within_eps: 0,
            max_abs_prediction_error: 0.0,
        };
        for r in &ledger.records {
            if r.compelled {
                s.compelled_count += 1;
                if r.t <= half {
                    s.compelled_first_half += 1;
                } else {
                    s.compelled_second_half += 1;
                }
            }
            if !r.d {
                s.predicted_count += 1;
                let err = (r.settlement_value - r.true_value).abs();
                if err <= epsilon {
                    s.predictions_within_eps += 1;
                }
                s.max_abs_prediction_error = s.max_abs_prediction_error.max(err);
            }
        }
        s
    }

    /// Fraction of predicted cases within `epsilon` of the true decision;
    /// 1 when nothing was predicted.
    pub fn fraction_within_eps(&self) -> f64 {
        if self.predicted_count == 0 {
            1.0
        } else {
            self.predictions_within_eps as f64 / self.predicted_count as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerKind;

    fn constant_config(mu: f64, sigma: f64, alpha: f64, cost: f64, horizon: usize, policy: PolicyConfig) -> RunConfig {
        RunConfig {
            horizon,
            truth: GroundTruth::constant(mu, sigma, alpha).unwrap(),
            cases: CaseSpec::Singleton,
            costs: CostModel::PointMass(cost),
            learner: Learner::new(LearnerKind::EmpiricalMean),
            policy,
            seed: 17,
        }
    }

    #[test]
    fn expensive_court_settles_every_case() {
        let cfg = constant_config(1.0, 0.0, 1.0, 3.0, 5, PolicyConfig::NoSubsidy);
        let ledger = run(&cfg).unwrap();
        assert_eq!(ledger.court_count, 0);
        assert_eq!(ledger.total_loss, 5.0);
        let first = &ledger.records[0];
        assert_eq!(first.pre_step_err_bound, 1.0);
        assert_eq!(first.applied_decision, 0.0);
        assert_eq!(first.squared_error, 1.0);
    }

    #[test]
    fn compel_all_noiseless() {
        let policy = PolicyConfig::ExploreThenCommit {
            horizon: 3,
            alpha: 10.0,
            c_max: 0.5,
        };
        let cfg = constant_config(1.0, 0.0, 1.0, 0.5, 3, policy);
        let ledger = run(&cfg).unwrap();
        assert_eq!(ledger.court_count, 3);
        assert_eq!(ledger.total_loss, 1.5);
        assert!(ledger.records.iter().all(|r| r.applied_decision == 1.0));
    }

    #[test]
    fn ledger_passes_audit() {
        let policy = PolicyConfig::DynamicCompelling { alpha: 1.0, c_max: 1.0 };
        let mut cfg = constant_config(0.5, 0.5, 1.0, 0.7, 500, policy);
        cfg.costs = CostModel::Uniform { c_min: 0.5, c_max: 1.0 };
        let ledger = run(&cfg).unwrap();
        ledger.audit().unwrap();
        assert_eq!(ledger, run(&cfg).unwrap());
    }

    #[test]
    fn offline_baseline_is_zero_without_noise() {
        let cfg = constant_config(0.7, 0.0, 1.0, 1.0, 100, PolicyConfig::NoSubsidy);
        let env = Environment::draw(&cfg).unwrap();
        // the mean of 100 copies of 0.7 is exact up to round-off
        assert!(offline_baseline(&env, &cfg.truth, &cfg.learner, None).unwrap() < 1e-24);
    }

    #[test]
    fn zero_cost_compel_all_has_zero_regret_without_noise() {
        let policy = PolicyConfig::ExploreThenCommit {
            horizon: 50,
            alpha: 1.0,
            c_max: 0.0,
        };
        let cfg = constant_config(0.4, 0.0, 1.0, 0.0, 50, policy);
        let report = estimate_regret(&cfg, 10).unwrap();
        assert!(report.mean_regret.abs() < 1e-24);
        assert_eq!(report.mean_court_count, 50.0);
    }

    #[test]
    fn environment_does_not_depend_on_policy() {
        let a = constant_config(0.5, 0.3, 1.0, 0.5, 200, PolicyConfig::NoSubsidy);
        let mut b = a.clone();
        b.policy = PolicyConfig::DynamicCompelling { alpha: 1.0, c_max: 1.0 };
        assert_eq!(Environment::draw(&a).unwrap(), Environment::draw(&b).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = constant_config(0.5, 0.3, 1.0, 0.5, 0, PolicyConfig::NoSubsidy);
        assert!(cfg.validate().unwrap_err().to_string().contains("horizon"));
        cfg.horizon = 10;
        cfg.learner = Learner::new(LearnerKind::Ols);
        assert!(cfg.validate().unwrap_err().to_string().contains("learner.kind"));
        cfg.learner = Learner::new(LearnerKind::EmpiricalMean);
        cfg.costs = CostModel::FixedSequence(vec![1.0; 3]);
        assert!(cfg.validate().unwrap_err().to_string().contains("cost.values"));
        cfg.costs = CostModel::Uniform { c_min: 0.5, c_max: 1.0 };
        cfg.policy = PolicyConfig::SubsidySampling {
            alpha: 1.0,
            c_min: 0.5,
            c_max: 1.0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn deterrent_without_subsidy_is_negative() {
        let mut cfg = constant_config(0.5, 0.3, 1.0, 0.5, 50, PolicyConfig::NoSubsidy);
        cfg.costs = CostModel::Uniform { c_min: 0.5, c_max: 1.0 };
        let report = check_deterrent(&cfg, 20).unwrap();
        assert!(report.satisfied);
        assert!(report.max_violation < 0.0);
        assert!(report.per_step.iter().all(|s| s.mean_subsidy == 0.0));
    }
}
