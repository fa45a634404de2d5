//! Learning a hidden decision rule from costly, noisy court outcomes.
//!
//! Individuals with a case either settle at the value predicted from past
//! court outcomes or litigate, paying a cost, which reveals a noisy
//! observation of the true decision. Left alone they stop litigating once
//! the predictions look accurate enough, and learning stalls. The selection
//! policies here compel or subsidise litigation so that the regret against
//! an offline learner vanishes.
//!
//! * [`model`]: cases, ground truth, datasets, costs and ledgers
//! * [`learners`]: empirical mean, OLS and norm-constrained least squares
//! * [`policies`]: explore-then-commit, dynamic compelling, subsidy sampling
//!   and the KWIK gate
//! * [`sim`]: the online protocol, regret and deterrent estimation
//! * [`experiment`]: TOML configs, horizon sweeps and CSV output

pub mod error;
pub mod experiment;
pub mod learners;
pub mod model;
pub mod policies;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use learners::{FittedRule, Learner, LearnerKind};
pub use model::{CaseFeatures, CaseSpec, CostModel, Dataset, GroundTruth, Observation, RunLedger, StepRecord};
pub use policies::{KwikParams, Policy, PolicyConfig, SelectionAction};
pub use sim::{check_deterrent, estimate_regret, offline_baseline, run, DeterrentReport, RegretReport, RunConfig};
