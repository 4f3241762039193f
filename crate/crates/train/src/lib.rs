#![forbid(unsafe_code)]

//! Training harness: configuration, dataset sampling, the multi-scale
//! loop, evaluation, and a synthetic corpus generator for running
//! everything without external data.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod synth;
pub mod trainer;

pub use config::{Schedule, TrainConfig};
pub use data::{sample_task, sample_task_at, Dataset, Task};
pub use error::{Result, TrainError};
pub use eval::{evaluate, evaluate_with, EvalOptions, EvalReport, EvalRow};
pub use synth::{synth_corpus, synth_image};
pub use trainer::{fnv64, fnv64_file, StepMetrics, Trainer, CSV_HEADER};
