use std::io::Write;
use std::path::{Path, PathBuf};

use igkit_analysis::{
    bench, cka_across_scales, export_filter_atlas, BenchConfig, BenchResult, BenchVariant,
};
use igkit_core::container::DType;
use igkit_image::{read_image, write_image, ImageBuffer};
use igkit_model::{FilterBank, SrModel, Variant};
use igkit_train::{evaluate, Dataset, TrainConfig, Trainer, CSV_HEADER};

use crate::{CliError, CmdResult};

fn parse_scales(s: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let v: usize = part
            .parse()
            .map_err(|_| CliError::usage(format!("scale {part:?} is not a positive integer")))?;
        if v < 1 {
            return Err(CliError::usage(format!("scale {v} must be >= 1")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::usage("empty scale list"));
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn train(
    config: Option<PathBuf>,
    data: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    iterations: Option<usize>,
    eval_data: Option<PathBuf>,
) -> CmdResult {
    if !data.is_dir() {
        return Err(CliError::usage(format!("data directory {} does not exist", data.display())));
    }
    let mut cfg = match &config {
        Some(path) => TrainConfig::parse_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    let ds = Dataset::load_dir(&data)?;
    println!(
        "training {} on {} images: scales {:?}, patch {}, batch {}x{}, {} iterations, seed {}",
        cfg.variant.tag(),
        ds.len(),
        cfg.scales,
        cfg.patch_size,
        cfg.sub_batches,
        cfg.batch / cfg.sub_batches,
        cfg.iterations,
        cfg.seed
    );
    let mut trainer = Trainer::new(cfg.clone())?;
    let log_path = out.join("train_log.csv");
    let mut log = std::io::BufWriter::new(
        std::fs::File::create(&log_path)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", log_path.display())))?,
    );
    writeln!(log, "{CSV_HEADER}").ok();
    let log_every = cfg.log_every.max(1);
    let started = std::time::Instant::now();
    let mut run_error: Option<igkit_train::TrainError> = None;
    let res = trainer.run(&ds, |m| {
        for row in m.csv_rows() {
            writeln!(log, "{row}").ok();
        }
        if m.step % log_every == 0 || m.step + 1 == cfg.iterations {
            println!(
                "step {:>6}  lr {:.3e}  mean loss {:.6}",
                m.step,
                m.lr,
                m.mean_total()
            );
        }
    });
    log.flush().ok();
    if let Err(e) = res {
        // Persist what we have for diagnosis, then surface the error.
        run_error = Some(e);
    }
    let ckpt_path = out.join("checkpoint_final.ignt");
    trainer.save_checkpoint(&ckpt_path)?;
    if let Some(e) = run_error {
        return Err(e.into());
    }
    println!(
        "trained {} steps in {:.1}s; checkpoint at {} (fnv64 {:016x})",
        trainer.step_count(),
        started.elapsed().as_secs_f64(),
        ckpt_path.display(),
        igkit_train::fnv64_file(&ckpt_path)?
    );
    // Final table from the EMA (or live) weights.
    let eval_dir = eval_data.unwrap_or(data);
    let eval_ds = Dataset::load_dir(&eval_dir)?;
    let model = trainer.eval_model()?;
    let report = evaluate(&model, &eval_ds, &cfg.scales)?;
    print!("{}", report.table());
    write_text(&out.join("eval.csv"), &report.to_csv())?;
    Ok(())
}

pub fn eval(
    ckpt: PathBuf,
    data: PathBuf,
    scales: Option<String>,
    out: Option<PathBuf>,
) -> CmdResult {
    let (model, _) = SrModel::load(&ckpt)?;
    let scales = match scales {
        Some(s) => parse_scales(&s)?,
        None => model.cfg.scales.clone(),
    };
    let ds = Dataset::load_dir(&data)?;
    let report = evaluate(&model, &ds, &scales)?;
    print!("{}", report.table());
    if let Some(path) = out {
        write_text(&path, &report.to_csv())?;
    }
    Ok(())
}

pub fn instantiate(ckpt: PathBuf, scales: &str, out: PathBuf, f32_payload: bool) -> CmdResult {
    let scales = parse_scales(scales)?;
    let (model, _) = SrModel::load(&ckpt)?;
    let bank = model.instantiate(&scales)?;
    let dtype = if f32_payload { DType::F32 } else { DType::F64 };
    bank.save(&out, dtype)?;
    println!("bank {} ({} scales, {:?} payload)", out.display(), scales.len(), dtype);
    for &r in &scales {
        println!("  x{r}: {} parameters", bank.param_count_for(r));
    }
    Ok(())
}

pub fn infer(
    ckpt: PathBuf,
    bank: Option<PathBuf>,
    input: PathBuf,
    scale: f64,
    out: PathBuf,
) -> CmdResult {
    if !(scale > 1.0) && scale != 1.0 {
        return Err(CliError::usage(format!("scale {scale} must be >= 1")));
    }
    let (model, _) = SrModel::load(&ckpt)?;
    let img = read_image(&input)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", input.display())))?;
    if img.channels != 3 {
        return Err(CliError::usage("inference expects an RGB image"));
    }
    let lr = img.to_tensor();
    let integer = scale.fract() == 0.0;
    let sr = if !integer {
        println!(
            "non-integer scale {scale}: predicting x{} then resampling down",
            scale.ceil() as usize
        );
        model.super_resolve_arbitrary(&lr, scale)?
    } else {
        let r = scale as usize;
        match &bank {
            Some(bank_path) => {
                let bank = FilterBank::load(bank_path)?;
                if !bank.scales().contains(&r) {
                    return Err(CliError::data(format!(
                        "bank {} has scales {:?}, not x{r}",
                        bank_path.display(),
                        bank.scales()
                    )));
                }
                let m = model.encode(&lr)?;
                bank.upsample(&lr, &m, r)?
            }
            None => model.super_resolve(&lr, r)?,
        }
    };
    let out_img = ImageBuffer::from_tensor(&sr)?;
    write_image(&out, &out_img)?;
    println!(
        "{} ({}x{}) -> {} ({}x{})",
        input.display(),
        img.width,
        img.height,
        out.display(),
        out_img.width,
        out_img.height
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn bench_cmd(
    variants: &str,
    scales: &str,
    ce: usize,
    c_mid: usize,
    out_size: &str,
    trials: usize,
    warmup: usize,
    use_f64: bool,
    out: Option<PathBuf>,
) -> CmdResult {
    let scales = parse_scales(scales)?;
    let mut variant_list = Vec::new();
    for tag in variants.split(',') {
        let tag = tag.trim();
        let v = BenchVariant::from_tag(tag)
            .ok_or_else(|| CliError::usage(format!("unknown bench variant {tag:?}")))?;
        variant_list.push(v);
    }
    let (w, h) = out_size
        .split_once('x')
        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
        .ok_or_else(|| CliError::usage(format!("out size {out_size:?} is not WxH")))?;
    let mut results: Vec<BenchResult> = Vec::new();
    println!(
        "timing upsampler-only forwards for a {w}x{h} output, ce {ce}, {} ({} warmup, {} trials)",
        if use_f64 { "f64" } else { "f32" },
        warmup,
        trials
    );
    println!(
        "{:<18} {:>5} {:>10} {:>10} {:>10} {:>10} {:>14} {:>12}",
        "variant", "scale", "median ms", "p10 ms", "p90 ms", "params", "flops", "workspace"
    );
    for &variant in &variant_list {
        for &scale in &scales {
            let cfg = BenchConfig {
                variant,
                ce,
                scale,
                c_mid,
                out_h: h,
                out_w: w,
                trials,
                warmup,
                use_f64,
                seed: 0,
            };
            let r = bench(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
            println!(
                "{:<18} {:>5} {:>10.3} {:>10.3} {:>10.3} {:>10} {:>14} {:>12}",
                r.variant, r.scale, r.median_ms, r.p10_ms, r.p90_ms, r.params, r.flops,
                r.workspace_bytes
            );
            results.push(r);
        }
    }
    if let Some(path) = out {
        let mut text = String::from(BenchResult::csv_header());
        text.push('\n');
        for r in &results {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        write_text(&path, &text)?;
    }
    Ok(())
}

pub fn cka_cmd(
    ckpts: &str,
    data: PathBuf,
    probes: usize,
    size: usize,
    out: Option<PathBuf>,
) -> CmdResult {
    if probes == 0 {
        return Err(CliError::usage("need at least one probe"));
    }
    let mut models = Vec::new();
    for path in ckpts.split(',') {
        let path = path.trim();
        let (model, _) = SrModel::load(Path::new(path))?;
        let label = Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string());
        models.push((label, model));
    }
    if models.is_empty() {
        return Err(CliError::usage("no checkpoints given"));
    }
    let ds = Dataset::load_dir(&data)?;
    // Deterministic probe crops from the corpus.
    let mut rng = igkit_core::Rng::new(0);
    let mut probe_tensors = Vec::with_capacity(probes);
    for i in 0..probes {
        let img = &ds.images[i % ds.len()];
        if img.width < size || img.height < size {
            return Err(CliError::data(format!(
                "probe image smaller than requested crop {size}"
            )));
        }
        let x0 = rng.below(img.width - size + 1);
        let y0 = rng.below(img.height - size + 1);
        probe_tensors.push(img.crop(x0, y0, size, size)?.to_tensor());
    }
    let refs: Vec<(String, &SrModel)> =
        models.iter().map(|(l, m)| (l.clone(), m)).collect();
    let report = cka_across_scales(&refs, &probe_tensors)?;
    print!("{}", report.table());
    if let Some(path) = out {
        write_text(&path, &report.to_csv())?;
    }
    Ok(())
}

pub fn atlas_cmd(ckpt: PathBuf, scales: &str, count: usize, out: PathBuf) -> CmdResult {
    let scales = parse_scales(scales)?;
    let (model, _) = SrModel::load(&ckpt)?;
    let hyper = match (&model.hyper, model.cfg.variant) {
        (Some(h), Variant::IgConv | Variant::IgConvPlus) => h,
        _ => {
            return Err(CliError::usage(format!(
                "{} checkpoints have no filter generator to visualize",
                model.cfg.variant.tag()
            )))
        }
    };
    export_filter_atlas(hyper, &scales, count, model.cfg.fgrep, &out)?;
    println!("atlas with {count} filters x {:?} scales at {}", scales, out.display());
    Ok(())
}
