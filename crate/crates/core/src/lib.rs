//! Rare-event failure probability estimation.
//!
//! Drivers:
//! - [`akmcs::run_akmcs`]: adaptive-Kriging Monte Carlo for moderate probabilities.
//! - [`subset::run_sus`]: subset simulation with component-wise Metropolis-Hastings.
//! - [`coupled::run_coupled`]: subset simulation where each sample is either
//!   predicted by a (multifidelity) surrogate or evaluated by the expensive
//!   model, decided by a level-dependent learning function.
//!
//! Failure is `g(x) >= 0` throughout.

pub mod akmcs;
pub mod coupled;
pub mod error;
pub mod estimate;
pub mod kriging;
pub mod linalg;
pub mod mlp;
pub mod models;
pub mod normal;
pub mod param_space;
pub mod subset;

pub use akmcs::{run_akmcs, AkmcsConfig, AkmcsRun, AkmcsTraceRow};
pub use coupled::{
    budget_report, budget_table, hf_calls_by_sample_index, run_coupled, BudgetSummary, CallLedger,
    CoupledConfig, CoupledRun, LedgerRecord, RetrainPolicy, SampleSource, Strategy,
};
pub use error::{Error, Result};
pub use estimate::{compose_pf, FailureEstimate, SubsetSummary};
pub use kriging::{FitOptions, GpModel, GpPrediction, KernelParams};
pub use mlp::{MlpConfig, MlpModel};
pub use models::{
    borehole_space, Borehole, Constant, Evaluator, LimitState, Linear, ModelPair,
    PerturbedBorehole, Subprocess,
};
pub use param_space::{InputSample, MarginalDistribution, ParameterSpace};
pub use subset::{run_sus, SusConfig, SusRun, SusTraceRow};
