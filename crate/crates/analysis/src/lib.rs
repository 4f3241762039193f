#![forbid(unsafe_code)]

//! Analysis instruments: cross-scale representation similarity, filter
//! atlas rendering, and the efficiency bench harness.

pub mod atlas;
pub mod bench;
pub mod cka;
pub mod flops;

pub use atlas::{export_filter_atlas, render_filter_atlas};
pub use bench::{bench, BenchConfig, BenchResult, MIN_TRIALS, MIN_WARMUP};
pub use cka::{cka_across_scales, linear_cka, CkaReport};
pub use flops::{variant_flops, variant_params, variant_workspace_bytes, BenchVariant};
