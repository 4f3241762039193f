//! igkit: train, instantiate, and analyze multi-scale SR upsamplers.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data/contract error,
//! 4 numerical failure.

#![forbid(unsafe_code)]

use clap::{Parser, Subcommand};
use std::path::PathBuf;

mod commands;
mod selftest;

pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { code: 3, msg: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError { code: 4, msg: msg.into() }
    }
}

impl From<igkit_train::TrainError> for CliError {
    fn from(e: igkit_train::TrainError) -> Self {
        use igkit_train::TrainError::*;
        match &e {
            Config(_) => CliError::usage(e.to_string()),
            NonFinite { .. } => CliError::numeric(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<igkit_core::CoreError> for CliError {
    fn from(e: igkit_core::CoreError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<igkit_image::ImageError> for CliError {
    fn from(e: igkit_image::ImageError) -> Self {
        CliError::data(e.to_string())
    }
}

type CmdResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "igkit", version, about = "Multi-scale super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a directory of images.
    Train {
        /// key=value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of training images (.png/.ppm).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoints, logs, and the eval table.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config iteration count.
        #[arg(long)]
        iterations: Option<usize>,
        /// Held-out directory for the final table (defaults to --data).
        #[arg(long)]
        eval_data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over a directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated scales; defaults to the checkpoint's set.
        #[arg(long)]
        scales: Option<String>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precompute per-scale filter banks from a checkpoint.
    Instantiate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated integer scales.
        #[arg(long)]
        scales: String,
        #[arg(long)]
        out: PathBuf,
        /// Store f32 payloads (compact, lossy) instead of f64.
        #[arg(long)]
        f32: bool,
    },
    /// Upsample one image.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        /// Optional filter bank; the upsampler then runs from it.
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long = "in", value_name = "IMG")]
        input: PathBuf,
        /// Integer scales run natively; non-integers route through the
        /// ceiling scale plus downscale.
        #[arg(long)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the upsampler variants.
    Bench {
        /// Comma list of spconv, spconv_plus, igconv_inst, igconv_plus_inst.
        #[arg(long, default_value = "spconv,spconv_plus,igconv_inst,igconv_plus_inst")]
        variants: String,
        #[arg(long, default_value = "2,3,4")]
        scales: String,
        #[arg(long, default_value_t = 64)]
        ce: usize,
        #[arg(long, default_value_t = 64)]
        c_mid: usize,
        /// Output size the feature map is sized against, as WxH.
        #[arg(long, default_value = "1280x720")]
        out_size: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        /// Time in f64 instead of the default f32.
        #[arg(long)]
        f64: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-scale encoder similarity between checkpoints.
    Cka {
        /// Comma-separated checkpoint paths (1 or more).
        #[arg(long)]
        ckpts: String,
        /// Directory of probe images.
        #[arg(long)]
        data: PathBuf,
        /// Number of probe crops.
        #[arg(long, default_value_t = 8)]
        probes: usize,
        /// Probe crop side in LR pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render generated filters across scales into a PNG grid.
    Atlas {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "2,3,4,32")]
        scales: String,
        #[arg(long, default_value_t = 12)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle and invariant battery.
    Selftest,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { config, data, out, seed, iterations, eval_data } => {
            commands::train(config, data, out, seed, iterations, eval_data)
        }
        Cmd::Eval { ckpt, data, scales, out } => commands::eval(ckpt, data, scales, out),
        Cmd::Instantiate { ckpt, scales, out, f32 } => {
            commands::instantiate(ckpt, &scales, out, f32)
        }
        Cmd::Infer { ckpt, bank, input, scale, out } => {
            commands::infer(ckpt, bank, input, scale, out)
        }
        Cmd::Bench { variants, scales, ce, c_mid, out_size, trials, warmup, f64, out } => {
            commands::bench_cmd(&variants, &scales, ce, c_mid, &out_size, trials, warmup, f64, out)
        }
        Cmd::Cka { ckpts, data, probes, size, out } => {
            commands::cka_cmd(&ckpts, data, probes, size, out)
        }
        Cmd::Atlas { ckpt, scales, count, out } => commands::atlas_cmd(ckpt, &scales, count, out),
        Cmd::Selftest => selftest::run(),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.msg);
        std::process::exit(e.code);
    }
}
