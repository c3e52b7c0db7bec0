//! Subcommand implementations.

use crate::run_manifest::{manifest_path_for, RunManifestBuilder};
use crate::{Cli, CliError, Command};
use attiqa::core::{load_manifest, Attribute, ImageRaster, PerAttribute, RunConfig};
use attiqa::distortion::{apply_distortion, DistortionKind};
use attiqa::evaluation::{compare_pairs, cross_dataset, evaluate, PairwiseBenchmark};
use attiqa::model::load_checkpoint;
use attiqa::promptsel::{
    default_candidates, load_candidates, select_prompts, SelectionMode, SelectionOptions,
    SelectionReport,
};
use attiqa::training::{finetune, pretrain};
use attiqa::vlm::{
    generate_labels, load_label_store, provider_by_id, EmbeddingCache, PromptPair, PromptPairSet,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub(crate) fn run(cli: &Cli, argv: &[String]) -> Result<(), CliError> {
    match &cli.command {
        Command::SelectPrompts {
            candidates,
            images,
            perception,
            provider,
            mode,
            perception_cap,
            out,
        } => select_prompts_cmd(
            cli,
            argv,
            candidates,
            images.as_deref(),
            perception.as_deref(),
            provider,
            mode,
            *perception_cap,
            out,
        ),
        Command::GenLabels {
            manifest,
            pairs,
            provider,
            out,
        } => gen_labels_cmd(cli, argv, manifest, pairs, provider, out),
        Command::Pretrain {
            manifest,
            labels,
            out,
            loss,
            dry_run,
        } => pretrain_cmd(cli, argv, manifest, labels, out, loss.as_deref(), *dry_run),
        Command::Finetune {
            ckpt,
            manifest,
            out,
            linear_probe,
            dry_run,
        } => finetune_cmd(cli, argv, ckpt, manifest, out, *linear_probe, *dry_run),
        Command::Evaluate {
            ckpt,
            manifest,
            out,
            five_crop,
        } => evaluate_cmd(cli, argv, ckpt, manifest, out, *five_crop),
        Command::Crossval {
            ckpt,
            test,
            train_name,
            out,
        } => crossval_cmd(cli, argv, ckpt, test, train_name.as_deref(), out),
        Command::ComparePairs { ckpt, pairs, out } => {
            compare_pairs_cmd(cli, argv, ckpt, pairs, out)
        }
        Command::Distort {
            image,
            kind,
            level,
            seed,
            out,
        } => distort_cmd(cli, argv, image, kind, *level, *seed, out),
    }
}

/// Config file (or the desk preset) with the global seed override applied.
fn resolved_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::validation)?,
        None => RunConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::validation)?;
    Ok(config)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("report serializes");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::runtime)?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, json.as_bytes()).map_err(CliError::runtime)?;
    std::fs::rename(&tmp, path).map_err(CliError::runtime)
}

fn png_dir(dir: &Path) -> Result<Vec<ImageRaster>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::validation(format!("cannot read image dir {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "png"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::validation(format!(
            "no .png files under {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            ImageRaster::from_png(p, id).map_err(CliError::validation)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn select_prompts_cmd(
    cli: &Cli,
    argv: &[String],
    candidates: &str,
    images: Option<&Path>,
    perception: Option<&Path>,
    provider_id: &str,
    mode: &str,
    perception_cap: usize,
    out: &Path,
) -> Result<(), CliError> {
    let mode = match mode {
        "distortion" => SelectionMode::Distortion,
        "perception" => SelectionMode::Perception,
        _ => SelectionMode::Joint,
    };
    let candidate_sets = if candidates == "default" {
        default_candidates()
    } else {
        load_candidates(candidates).map_err(CliError::validation)?
    };
    let provider = provider_by_id(provider_id).map_err(CliError::validation)?;
    let image_corpus = images.map(png_dir).transpose()?;
    let annotated = perception
        .map(|p| load_manifest(p).map_err(CliError::validation))
        .transpose()?;

    let mut options = SelectionOptions::new(mode);
    options.perception_cap = perception_cap;
    options.subsample_seed = cli.seed.unwrap_or(0);

    let report = select_prompts(
        &candidate_sets,
        options,
        image_corpus.as_deref(),
        annotated.as_ref(),
        provider.as_ref(),
    )
    .map_err(CliError::runtime)?;
    write_json(out, &report)?;

    let mut manifest = RunManifestBuilder::new("select-prompts", argv);
    manifest
        .seed(options.subsample_seed)
        .config(serde_json::json!({
            "mode": mode,
            "provider": provider_id,
            "perception_cap": perception_cap,
            "candidates": candidates,
        }));
    if candidates != "default" {
        manifest
            .input(Path::new(candidates))
            .map_err(CliError::runtime)?;
    }
    if let Some(p) = perception {
        manifest.input(p).map_err(CliError::runtime)?;
    }
    manifest.output(out);
    manifest
        .write(&manifest_path_for(out, false))
        .map_err(CliError::runtime)
}

#[derive(Clone, Serialize, Deserialize)]
struct PairsFileEntry {
    positive: String,
    negative: String,
}

#[derive(Serialize, Deserialize)]
struct PairsFile {
    set_id: String,
    pairs: PerAttribute<PairsFileEntry>,
}

/// Reads prompt pairs from a pair-set file or a selection report.
fn load_pairs(path: &Path) -> Result<PromptPairSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read pairs {}: {e}", path.display())))?;
    if let Ok(file) = serde_json::from_str::<PairsFile>(&text) {
        let pairs: Result<Vec<PromptPair>, _> = Attribute::ALL
            .into_iter()
            .map(|a| PromptPair::new(a, &file.pairs[a].positive, &file.pairs[a].negative))
            .collect();
        let pairs = pairs.map_err(CliError::validation)?;
        let mut iter = pairs.into_iter();
        return Ok(PromptPairSet::new(
            file.set_id,
            PerAttribute::new(std::array::from_fn(|_| iter.next().expect("five pairs"))),
        ));
    }
    let report: SelectionReport = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!(
            "{} is neither a pair-set file nor a selection report: {e}",
            path.display()
        ))
    })?;
    Ok(report.chosen_pairs())
}

fn gen_labels_cmd(
    cli: &Cli,
    argv: &[String],
    manifest_path: &Path,
    pairs_path: &Path,
    provider_id: &str,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path).map_err(CliError::validation)?;
    let pairs = load_pairs(pairs_path)?;
    let provider = provider_by_id(provider_id).map_err(CliError::validation)?;
    let cache = EmbeddingCache::from_env();

    let summary = generate_labels(&manifest, &pairs, provider.as_ref(), out, cache.as_ref())
        .map_err(CliError::runtime)?;
    eprintln!(
        "labels: {} written, {} already present, {} unreadable",
        summary.written, summary.skipped_existing, summary.unreadable
    );

    let mut run = RunManifestBuilder::new("gen-labels", argv);
    run.seed(cli.seed.unwrap_or(0))
        .config(serde_json::json!({
            "provider": provider_id,
            "prompt_set": pairs.set_id,
        }))
        .output(out);
    run.input(manifest_path).map_err(CliError::runtime)?;
    run.input(pairs_path).map_err(CliError::runtime)?;
    run.write(&manifest_path_for(out, false))
        .map_err(CliError::runtime)
}

fn pretrain_cmd(
    cli: &Cli,
    argv: &[String],
    manifest_path: &Path,
    labels_path: &Path,
    out: &Path,
    loss: Option<&str>,
    dry_run: bool,
) -> Result<(), CliError> {
    let mut config = resolved_config(cli)?;
    match loss {
        Some("l2") => config.pretrain.loss = attiqa::core::PretrainLoss::L2,
        Some("ranking") => config.pretrain.loss = attiqa::core::PretrainLoss::Ranking,
        _ => {}
    }
    let manifest = load_manifest(manifest_path).map_err(CliError::validation)?;
    let labels = load_label_store(labels_path).map_err(CliError::validation)?;

    let mut run = RunManifestBuilder::new("pretrain", argv);
    run.seed(config.seed)
        .dry_run(dry_run)
        .config(serde_json::to_value(&config).expect("config serializes"));
    run.input(manifest_path).map_err(CliError::runtime)?;
    run.input(labels_path).map_err(CliError::runtime)?;
    if let Some(path) = &cli.config {
        run.input(path).map_err(CliError::runtime)?;
    }

    if !dry_run {
        let outcome = pretrain(&manifest, &labels, &config, out).map_err(CliError::runtime)?;
        run.output(&outcome.final_dir);
        run.output(&out.join("loss_history.csv"));
    }
    run.write(&manifest_path_for(out, true))
        .map_err(CliError::runtime)
}

fn finetune_cmd(
    cli: &Cli,
    argv: &[String],
    ckpt: &Path,
    manifest_path: &Path,
    out: &Path,
    linear_probe: bool,
    dry_run: bool,
) -> Result<(), CliError> {
    let mut config = resolved_config(cli)?;
    if linear_probe {
        config.finetune.linear_probe = true;
    }
    let manifest = load_manifest(manifest_path).map_err(CliError::validation)?;

    let mut run = RunManifestBuilder::new("finetune", argv);
    run.seed(config.seed)
        .dry_run(dry_run)
        .config(serde_json::to_value(&config).expect("config serializes"));
    run.input(manifest_path).map_err(CliError::runtime)?;
    if let Some(path) = &cli.config {
        run.input(path).map_err(CliError::runtime)?;
    }

    if !dry_run {
        // Hash the checkpoint the run starts from.
        for file in ["manifest.json", "weights.bin"] {
            run.input(&ckpt.join(file))
                .map_err(|e| CliError::validation(format!("checkpoint {}: {e}", ckpt.display())))?;
        }
        let outcome = finetune(ckpt, &manifest, &config, out).map_err(CliError::runtime)?;
        run.output(&outcome.final_dir);
        run.output(&out.join("loss_history.csv"));
    }
    run.write(&manifest_path_for(out, true))
        .map_err(CliError::runtime)
}

fn evaluate_cmd(
    cli: &Cli,
    argv: &[String],
    ckpt: &Path,
    manifest_path: &Path,
    out: &Path,
    five_crop: bool,
) -> Result<(), CliError> {
    let mut config = resolved_config(cli)?;
    if five_crop {
        config.eval.five_crop = true;
    }
    let (model, _) = load_checkpoint(ckpt).map_err(CliError::validation)?;
    let manifest = load_manifest(manifest_path).map_err(CliError::validation)?;

    let report = evaluate(&model, &manifest, &config.eval).map_err(CliError::runtime)?;
    write_json(out, &report)?;

    let mut run = RunManifestBuilder::new("evaluate", argv);
    run.seed(config.seed)
        .config(serde_json::to_value(&config).expect("config serializes"))
        .output(out);
    run.input(manifest_path).map_err(CliError::runtime)?;
    for file in ["manifest.json", "weights.bin"] {
        run.input(&ckpt.join(file)).map_err(CliError::runtime)?;
    }
    run.write(&manifest_path_for(out, false))
        .map_err(CliError::runtime)
}

fn crossval_cmd(
    cli: &Cli,
    argv: &[String],
    ckpt: &Path,
    test_path: &Path,
    train_name: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let config = resolved_config(cli)?;
    let (model, meta) = load_checkpoint(ckpt).map_err(CliError::validation)?;
    let test = load_manifest(test_path).map_err(CliError::validation)?;
    let train_name = train_name.unwrap_or(&meta.dataset);

    let report =
        cross_dataset(&model, train_name, &test, &config.eval).map_err(CliError::runtime)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    write_json(out, &report)?;

    let mut run = RunManifestBuilder::new("crossval", argv);
    run.seed(config.seed)
        .config(serde_json::to_value(&config).expect("config serializes"))
        .output(out);
    run.input(test_path).map_err(CliError::runtime)?;
    for file in ["manifest.json", "weights.bin"] {
        run.input(&ckpt.join(file)).map_err(CliError::runtime)?;
    }
    run.write(&manifest_path_for(out, false))
        .map_err(CliError::runtime)
}

fn compare_pairs_cmd(
    cli: &Cli,
    argv: &[String],
    ckpt: &Path,
    pairs_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let config = resolved_config(cli)?;
    let (model, _) = load_checkpoint(ckpt).map_err(CliError::validation)?;
    let benchmark = PairwiseBenchmark::load(pairs_path).map_err(CliError::validation)?;

    let agreement = compare_pairs(&model, &benchmark, &config.eval).map_err(CliError::runtime)?;
    write_json(out, &agreement)?;

    let mut run = RunManifestBuilder::new("compare-pairs", argv);
    run.seed(config.seed)
        .config(serde_json::to_value(&config).expect("config serializes"))
        .output(out);
    run.input(pairs_path).map_err(CliError::runtime)?;
    for file in ["manifest.json", "weights.bin"] {
        run.input(&ckpt.join(file)).map_err(CliError::runtime)?;
    }
    run.write(&manifest_path_for(out, false))
        .map_err(CliError::runtime)
}

fn distort_cmd(
    cli: &Cli,
    argv: &[String],
    image: &Path,
    kind: &str,
    level: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let kind = DistortionKind::from_name(kind).ok_or_else(|| {
        CliError::validation(format!(
            "unknown distortion kind '{kind}' (expected one of {})",
            DistortionKind::ALL
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    let img = ImageRaster::from_png(image, "input").map_err(CliError::validation)?;
    let distorted = apply_distortion(&img, kind, level, seed).map_err(CliError::validation)?;
    distorted.save_png(out).map_err(CliError::runtime)?;

    let mut run = RunManifestBuilder::new("distort", argv);
    run.seed(seed)
        .config(serde_json::json!({
            "kind": kind.name(),
            "level": level,
        }))
        .output(out);
    run.input(image).map_err(CliError::runtime)?;
    let _ = cli;
    run.write(&manifest_path_for(out, false))
        .map_err(CliError::runtime)
}
