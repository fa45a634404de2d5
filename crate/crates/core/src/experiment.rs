//! Experiment files: TOML configuration, horizon sweeps over several
//! policies, and CSV/JSON result emission.
//!
//! A config looks like
//!
//! ```toml
//! sweep = [1000, 10000, 100000]
//! replications = 200
//! seed = 7
//!
//! [truth]
//! family = "constant"
//! mu = 0.5
//! sigma = 0.5
//! alpha = 1.0
//!
//! [cost]
//! distribution = "uniform"
//! c_min = 0.5
//! c_max = 1.0
//!
//! [[policy]]
//! name = "explore_then_commit"
//! ```
//!
//! Policy parameters that mirror the environment (`alpha`, `c_min`, `c_max`,
//! the ETC horizon) default to the truth, cost model and swept horizon, and
//! may be overridden per policy.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::{Learner, LearnerKind};
use crate::model::{CaseSpec, CostModel, GroundTruth, VectorDistribution};
use crate::policies::{KwikParams, PolicyConfig};
use crate::sim::{estimate_regret, replication_seed, run, KwikSummary, RegretReport, RunConfig};
use crate::stats::{derive_seed, loglog_slope};

pub const DEFAULT_REPLICATIONS: usize = 100;
pub const DEFAULT_OUT_DIR: &str = "results";

pub const REGRET_CSV_HEADER: &str =
    "policy,T,mean_regret,std_error,mean_court_count,mean_total_subsidy,mean_offline_loss";
pub const SLOPES_CSV_HEADER: &str = "policy,slope";
pub const KWIK_CSV_HEADER: &str =
    "T,n,epsilon,delta,predicted_count,compelled_count,fraction_predictions_within_eps,max_abs_prediction_error";

// ---------------------------------------------------------------------------
// Raw file schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sweep: Option<Vec<i64>>,
    replications: Option<i64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    emit: Option<Vec<String>>,
    truth: Option<RawTruth>,
    cases: Option<RawCases>,
    cost: Option<RawCost>,
    learner: Option<RawLearner>,
    #[serde(default)]
    policy: Vec<RawPolicy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    family: Option<String>,
    mu: Option<f64>,
    beta: Option<Vec<f64>>,
    beta0: Option<f64>,
    sigma: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCases {
    kind: Option<String>,
    dim: Option<i64>,
    distribution: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    distribution: Option<String>,
    c_min: Option<f64>,
    c_max: Option<f64>,
    c: Option<f64>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLearner {
    kind: Option<String>,
    err_constant: Option<f64>,
    radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    name: Option<String>,
    label: Option<String>,
    alpha: Option<f64>,
    c_min: Option<f64>,
    c_max: Option<f64>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    alpha1_constant: Option<f64>,
}

fn required<T>(value: Option<T>, path: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(path, "missing field"))
}

// ---------------------------------------------------------------------------
// Validated spec

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    NoSubsidy,
    ExploreThenCommit,
    DynamicCompelling,
    SubsidySampling,
    Kwik,
}

impl PolicyKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "no_subsidy" | "none" => PolicyKind::NoSubsidy,
            "explore_then_commit" | "etc" => PolicyKind::ExploreThenCommit,
            "dynamic_compelling" | "dynamic" => PolicyKind::DynamicCompelling,
            "subsidy_sampling" | "subsidy" => PolicyKind::SubsidySampling,
            "kwik" => PolicyKind::Kwik,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::NoSubsidy => "no_subsidy",
            PolicyKind::ExploreThenCommit => "explore_then_commit",
            PolicyKind::DynamicCompelling => "dynamic_compelling",
            PolicyKind::SubsidySampling => "subsidy_sampling",
            PolicyKind::Kwik => "kwik",
        }
    }
}

/// Accuracy target and (optional) explicit thresholds of a KWIK policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwikSettings {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha1_constant: f64,
}

/// A policy entry of an experiment. Unset parameters are filled from the
/// environment when a run config is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub label: String,
    pub kind: PolicyKind,
    pub alpha: Option<f64>,
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub kwik: Option<KwikSettings>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            label: kind.name().to_string(),
            kind,
            alpha: None,
            c_min: None,
            c_max: None,
            kwik: None,
        }
    }

    /// Concrete policy for horizon `horizon` in the given environment.
    pub fn resolve(
        &self,
        horizon: usize,
        truth: &GroundTruth,
        costs: &CostModel,
        dim: Option<usize>,
    ) -> Result<PolicyConfig> {
        let alpha = self.alpha.unwrap_or(truth.alpha());
        let c_min = self.c_min.unwrap_or(costs.c_min());
        let c_max = self.c_max.unwrap_or(costs.c_max());
        Ok(match self.kind {
            PolicyKind::NoSubsidy => PolicyConfig::NoSubsidy,
            PolicyKind::ExploreThenCommit => PolicyConfig::ExploreThenCommit { horizon, alpha, c_max },
            PolicyKind::DynamicCompelling => PolicyConfig::DynamicCompelling { alpha, c_max },
            PolicyKind::SubsidySampling => PolicyConfig::SubsidySampling { alpha, c_min, c_max },
            PolicyKind::Kwik => {
                let k = self
                    .kwik
                    .ok_or_else(|| Error::config("policy.epsilon", "missing field"))?;
                let n = dim.ok_or_else(|| Error::config("cases.kind", "the KWIK policy needs vector cases"))?;
                let mut params = KwikParams::from_accuracy(k.epsilon, k.delta, n, k.alpha1_constant)?;
                if let Some(a1) = k.alpha1 {
                    params.alpha1 = a1;
                }
                if let Some(a2) = k.alpha2 {
                    params.alpha2 = a2;
                }
                PolicyConfig::Kwik(params)
            }
        })
    }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub truth: GroundTruth,
    pub cases: CaseSpec,
    pub costs: CostModel,
    pub learner: Learner,
    pub sweep: Vec<usize>,
    pub policies: Vec<PolicySpec>,
    pub replications: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub emit: Vec<EmitFormat>,
}

impl ExperimentSpec {
    /// Run configuration of policy `policy` at horizon `horizon`. Its seed is
    /// the cell seed `derive_seed(master, [horizon])`, so every policy sees
    /// the same environments and adding a policy changes nothing else.
    pub fn run_config(&self, policy: usize, horizon: usize) -> Result<RunConfig> {
        let spec = &self.policies[policy];
        let policy_config = spec
            .resolve(horizon, &self.truth, &self.costs, self.cases.dim())
            .map_err(|e| scope_policy_error(e, policy))?;
        Ok(RunConfig {
            horizon,
            truth: self.truth.clone(),
            cases: self.cases.clone(),
            costs: self.costs.clone(),
            learner: self.learner,
            policy: policy_config,
            seed: derive_seed(self.seed, &[horizon as u64]),
        })
    }

    /// Checks every invariant, including each (policy, horizon) run config.
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::config("sweep", "must not be empty"));
        }
        if self.sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("sweep", "sweep must be increasing"));
        }
        if self.sweep[0] == 0 {
            return Err(Error::config("sweep", "horizons must be >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policy", "at least one policy is required"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::config(
                    format!("policy[{i}].label"),
                    format!("duplicate label `{}`", p.label),
                ));
            }
        }
        if self.costs.c_min() <= 0.0 {
            let path = match self.costs {
                CostModel::Uniform { .. } => "cost.c_min",
                CostModel::PointMass(_) => "cost.c",
                CostModel::FixedSequence(_) => "cost.values",
            };
            return Err(Error::config(path, "court costs must be > 0"));
        }
        for i in 0..self.policies.len() {
            for &t in &self.sweep {
                self.run_config(i, t)?
                    .validate()
                    .map_err(|e| scope_policy_error(e, i))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("experiment spec serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn scope_policy_error(e: Error, index: usize) -> Error {
    match e {
        Error::Config { path, message } if path == "policy" || path.starts_with("policy.") => Error::Config {
            path: format!("policy[{index}]{}", &path["policy".len()..]),
            message,
        },
        other => other,
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Parses and fully validates a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let truth = {
        let t = required(raw.truth, "truth")?;
        let sigma = required(t.sigma, "truth.sigma")?;
        let alpha = required(t.alpha, "truth.alpha")?;
        match required(t.family, "truth.family")?.as_str() {
            "constant" => GroundTruth::constant(required(t.mu, "truth.mu")?, sigma, alpha)?,
            "linear" => GroundTruth::linear(
                required(t.beta, "truth.beta")?,
                required(t.beta0, "truth.beta0")?,
                sigma,
                alpha,
            )?,
            other => return Err(Error::config("truth.family", format!("unknown family `{other}`"))),
        }
    };

    let cases = match raw.cases {
        None => match truth.dim() {
            Some(n) => CaseSpec::uniform_ball(n),
            None => CaseSpec::Singleton,
        },
        Some(c) => match c.kind.as_deref().unwrap_or("vector") {
            "singleton" => CaseSpec::Singleton,
            "vector" => {
                let dim = match (c.dim, truth.dim()) {
                    (Some(d), _) if d < 1 => return Err(Error::config("cases.dim", "must be >= 1")),
                    (Some(d), _) => d as usize,
                    (None, Some(n)) => n,
                    (None, None) => return Err(Error::config("cases.dim", "missing field")),
                };
                let distribution = match c.distribution.as_deref().unwrap_or("uniform_ball") {
                    "uniform_ball" => VectorDistribution::UniformBall,
                    "unit_sphere" => VectorDistribution::UnitSphere,
                    other => {
                        return Err(Error::config(
                            "cases.distribution",
                            format!("unknown distribution `{other}`"),
                        ))
                    }
                };
                CaseSpec::Vector { dim, distribution }
            }
            other => return Err(Error::config("cases.kind", format!("unknown case kind `{other}`"))),
        },
    };

    let costs = {
        let c = required(raw.cost, "cost")?;
        let model = match required(c.distribution, "cost.distribution")?.as_str() {
            "uniform" => CostModel::Uniform {
                c_min: required(c.c_min, "cost.c_min")?,
                c_max: required(c.c_max, "cost.c_max")?,
            },
            "point" => CostModel::PointMass(required(c.c, "cost.c")?),
            "fixed" => CostModel::FixedSequence(required(c.values, "cost.values")?),
            other => {
                return Err(Error::config(
                    "cost.distribution",
                    format!("unknown distribution `{other}`"),
                ))
            }
        };
        model.validate()?;
        model
    };

    let learner = {
        let default_kind = if truth.dim().is_some() { "ols" } else { "empirical_mean" };
        let (kind, err_constant, radius) = match raw.learner {
            None => (default_kind.to_string(), None, None),
            Some(l) => (
                l.kind.unwrap_or_else(|| default_kind.to_string()),
                l.err_constant,
                l.radius,
            ),
        };
        let kind = match kind.as_str() {
            "empirical_mean" => LearnerKind::EmpiricalMean,
            "ols" => LearnerKind::Ols,
            "norm_constrained" => LearnerKind::NormConstrainedLinear {
                radius: radius.unwrap_or(1.0),
            },
            other => return Err(Error::config("learner.kind", format!("unknown learner `{other}`"))),
        };
        let learner = Learner::new(kind).with_err_constant(err_constant.unwrap_or(1.0));
        learner.validate()?;
        learner
    };

    let sweep = required(raw.sweep, "sweep")?
        .into_iter()
        .map(|t| usize::try_from(t).map_err(|_| Error::config("sweep", format!("invalid horizon {t}"))))
        .collect::<Result<Vec<_>>>()?;

    let replications = match raw.replications {
        None => DEFAULT_REPLICATIONS,
        Some(r) if r >= 1 => r as usize,
        Some(r) => return Err(Error::config("replications", format!("must be >= 1, got {r}"))),
    };

    let emit = raw
        .emit
        .unwrap_or_else(|| vec!["csv".into()])
        .iter()
        .enumerate()
        .map(|(i, e)| match e.as_str() {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(Error::config(format!("emit[{i}]"), format!("unknown format `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let policies = raw
        .policy
        .into_iter()
        .enumerate()
        .map(|(i, p)| parse_policy(i, p))
        .collect::<Result<Vec<_>>>()?;

    let spec = ExperimentSpec {
        truth,
        cases,
        costs,
        learner,
        sweep,
        policies,
        replications,
        seed: raw.seed.unwrap_or(0),
        out_dir: raw.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        emit,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_policy(i: usize, p: RawPolicy) -> Result<PolicySpec> {
    let path = |f: &str| format!("policy[{i}].{f}");
    let name = required(p.name, &path("name"))?;
    let kind =
        PolicyKind::parse(&name).ok_or_else(|| Error::config(path("name"), format!("unknown policy `{name}`")))?;
    let kwik = if kind == PolicyKind::Kwik {
        Some(KwikSettings {
            epsilon: required(p.epsilon, &path("epsilon"))?,
            delta: required(p.delta, &path("delta"))?,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            alpha1_constant: p.alpha1_constant.unwrap_or(1.0),
        })
    } else {
        for (field, set) in [
            ("epsilon", p.epsilon.is_some()),
            ("delta", p.delta.is_some()),
            ("alpha1", p.alpha1.is_some()),
            ("alpha2", p.alpha2.is_some()),
            ("alpha1_constant", p.alpha1_constant.is_some()),
        ] {
            if set {
                return Err(Error::config(
                    path(field),
                    format!("only applies to the kwik policy, not `{name}`"),
                ));
            }
        }
        None
    };
    Ok(PolicySpec {
        label: p.label.unwrap_or_else(|| kind.name().to_string()),
        kind,
        alpha: p.alpha,
        c_min: p.c_min,
        c_max: p.c_max,
        kwik,
    })
}

// ---------------------------------------------------------------------------
// Running and emitting

/// Per-invocation switches that are not part of the experiment itself.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Also write every run's ledger to `ledgers.jsonl`.
    pub ledgers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub policy: String,
    pub report: RegretReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub policy: String,
    /// `None` when fewer than two horizons have positive regret.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<RegretRow>,
    pub slopes: Vec<SlopeRow>,
    pub files: Vec<PathBuf>,
}

/// Estimates regret for every (policy, horizon) cell and writes
/// `regret.csv`, `slopes.csv` (and JSON / ledgers when requested) into
/// `spec.out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (i, policy) in spec.policies.iter().enumerate() {
        let mut points = Vec::new();
        for &t in &spec.sweep {
            let report = estimate_regret(&spec.run_config(i, t)?, spec.replications)?;
            points.push((t as f64, report.mean_regret));
            rows.push(RegretRow {
                policy: policy.label.clone(),
                report,
            });
        }
        slopes.push(SlopeRow {
            policy: policy.label.clone(),
            slope: loglog_slope(&points),
        });
    }

    create_dir(&spec.out_dir)?;
    let mut files = Vec::new();
    if spec.emit.contains(&EmitFormat::Csv) {
        files.push(write_file(&spec.out_dir.join("regret.csv"), &regret_csv(&rows))?);
        files.push(write_file(&spec.out_dir.join("slopes.csv"), &slopes_csv(&slopes))?);
    }
    if spec.emit.contains(&EmitFormat::Json) {
        let doc = serde_json::json!({
            "experiment_digest": spec.digest(),
            "regret": rows,
            "slopes": slopes,
        });
        let text = serde_json::to_string_pretty(&doc).expect("json");
        files.push(write_file(&spec.out_dir.join("regret.json"), &text)?);
    }
    if options.ledgers {
        files.push(write_ledgers(spec, None)?);
    }
    Ok(ExperimentOutput { rows, slopes, files })
}

fn write_ledgers(spec: &ExperimentSpec, only: Option<PolicyKind>) -> Result<PathBuf> {
    let digest = spec.digest();
    let mut out = String::new();
    for (i, policy) in spec.policies.iter().enumerate() {
        if only.is_some_and(|k| k != policy.kind) {
            continue;
        }
        for &t in &spec.sweep {
            let cell = spec.run_config(i, t)?;
            let lines: Vec<String> = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let mut cfg = cell.clone();
                    cfg.seed = replication_seed(cell.seed, r);
                    let ledger = run(&cfg)?;
                    let line = serde_json::json!({
                        "policy": policy.label,
                        "T": t,
                        "replication": r,
                        "experiment_digest": digest,
                        "ledger": ledger,
                    });
                    Ok(serde_json::to_string(&line).expect("json"))
                })
                .collect::<Result<_>>()?;
            for line in lines {
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
    write_file(&spec.out_dir.join("ledgers.jsonl"), &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwikRow {
    pub policy: String,
    pub horizon: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Means over replications.
    pub predicted_count: f64,
    pub compelled_count: f64,
    /// Pooled over all replications.
    pub fraction_predictions_within_eps: f64,
    /// Worst case over all replications.
    pub max_abs_prediction_error: f64,
    pub summaries: Vec<KwikSummary>,
}

/// Runs every KWIK policy of `spec` over the sweep and writes `kwik.csv`.
pub fn kwik_report(spec: &ExperimentSpec, options: &RunOptions) -> Result<(Vec<KwikRow>, Vec<PathBuf>)> {
    spec.validate()?;
    let n = spec.cases.dim().unwrap_or(0);
    let mut rows = Vec::new();
    for (i, policy) in spec.policies.iter().enumerate() {
        if policy.kind != PolicyKind::Kwik {
            continue;
        }
        for &t in &spec.sweep {
            let cell = spec.run_config(i, t)?;
            let PolicyConfig::Kwik(params) = cell.policy else {
                unreachable!("kwik policy resolves to a kwik config")
            };
            let summaries: Vec<KwikSummary> = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let mut cfg = cell.clone();
                    cfg.seed = replication_seed(cell.seed, r);
                    Ok(KwikSummary::from_ledger(&run(&cfg)?, params.epsilon))
                })
                .collect::<Result<_>>()?;
            let reps = summaries.len() as f64;
            let predicted: usize = summaries.iter().map(|s| s.predicted_count).sum();
            let within: usize = summaries.iter().map(|s| s.predictions_within_eps).sum();
            rows.push(KwikRow {
                policy: policy.label.clone(),
                horizon: t,
                n,
                epsilon: params.epsilon,
                delta: params.delta,
                predicted_count: predicted as f64 / reps,
                compelled_count: summaries.iter().map(|s| s.compelled_count).sum::<usize>() as f64 / reps,
                fraction_predictions_within_eps: if predicted == 0 {
                    1.0
                } else {
                    within as f64 / predicted as f64
                },
                max_abs_prediction_error: summaries.iter().map(|s| s.max_abs_prediction_error).fold(0.0, f64::max),
                summaries,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::config("policy", "no kwik policy configured"));
    }
    create_dir(&spec.out_dir)?;
    let mut files = vec![write_file(&spec.out_dir.join("kwik.csv"), &kwik_csv(&rows))?];
    if spec.emit.contains(&EmitFormat::Json) {
        let doc = serde_json::json!({ "experiment_digest": spec.digest(), "kwik": rows });
        let text = serde_json::to_string_pretty(&doc).expect("json");
        files.push(write_file(&spec.out_dir.join("kwik.json"), &text)?);
    }
    if options.ledgers {
        files.push(write_ledgers(spec, Some(PolicyKind::Kwik))?);
    }
    Ok((rows, files))
}

pub fn regret_csv(rows: &[RegretRow]) -> String {
    let mut s = String::from(REGRET_CSV_HEADER);
    s.push('\n');
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            row.policy,
            r.horizon,
            format_sig(r.mean_regret),
            format_sig(r.std_error),
            format_sig(r.mean_court_count),
            format_sig(r.mean_total_subsidy),
            format_sig(r.mean_offline_loss),
        );
    }
    s
}

/// Slopes that could not be fitted are written as an empty field.
pub fn slopes_csv(rows: &[SlopeRow]) -> String {
    let mut s = String::from(SLOPES_CSV_HEADER);
    s.push('\n');
    for row in rows {
        let slope = row.slope.map(format_sig).unwrap_or_default();
        let _ = writeln!(s, "{},{}", row.policy, slope);
    }
    s
}

pub fn kwik_csv(rows: &[KwikRow]) -> String {
    let mut s = String::from(KWIK_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.horizon,
            r.n,
            format_sig(r.epsilon),
            format_sig(r.delta),
            format_sig(r.predicted_count),
            format_sig(r.compelled_count),
            format_sig(r.fraction_predictions_within_eps),
            format_sig(r.max_abs_prediction_error),
        );
    }
    s
}

/// Formats `x` with 12 significant digits, like C's `%.12g`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    assert!(x.is_finite(), "refusing to emit non-finite value {x}");
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
