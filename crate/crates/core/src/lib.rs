//! Incremental (continual) training of morphing attack detectors over
//! chunked feature streams.
//!
//! The crate covers a small dense network with SGD, the incremental
//! strategies (Naive, Joint, LwF, EWC, SI, SLDA), stream construction with
//! fixed or Zipf-distributed chunk sizes, detection metrics with BRoT
//! ranking, a binary feature format, and a deterministic sweep runner.

pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod runner;
pub mod seed;
pub mod strategies;
pub mod stream;

pub use data::{Dataset, SourceSet, SynthSourceSpec};
pub use error::{Error, Result};
pub use metrics::{MetricRecord, RankingTable, ScoreSet};
pub use nn::{Batch, Matrix, MlpModel, OptimizerState, ParamSet};
pub use runner::{GridResult, GridSpec, MetricProfile, RunConfig, RunResult};
pub use strategies::{Learner, StrategyConfig, StrategyKind};
pub use stream::{Experience, ExperienceStream, SizeMode, SizeSchedule};
