//! Experiment harness: decision metrics, repeated holdout, leave-one-
//! subject-out, resolution sweeps and stage latency.

mod holdout;
mod latency;
mod metrics;
mod sweep;

pub use holdout::{
    labeled, leave_one_subject_out, repeated_holdout, run_seed, Aggregate, EvalReport, Fold, HoldoutConfig,
    LosoReport, RunResult, Target, MIN_PER_CLASS,
};
pub use latency::{bench_latency, LatencyFixture, LatencyStats, Stage, MIN_ITERS};
pub use metrics::{metrics, tune_threshold, Metrics};
pub use sweep::{resolution_sweep, SweepRow, SweepTable};
