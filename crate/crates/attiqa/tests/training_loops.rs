//! Training-loop contracts on small corpora: determinism, label coverage,
//! loss-mode toggles, the linear-probe freeze, and checkpoint provenance.

use attiqa::core::{split_dataset, PerAttribute, PretrainLoss, RunConfig};
use attiqa::model::load_checkpoint;
use attiqa::promptsel::render_prompt;
use attiqa::synthetic::{procedural_corpus, write_corpus};
use attiqa::training::{finetune, pretrain, TrainError};
use attiqa::vlm::{
    generate_labels, load_label_store, AnalyticMockProvider, LabelStore, Polarity, PromptPair,
    PromptPairSet,
};
use tempfile::TempDir;

struct Fixture {
    _dir: TempDir,
    manifest: attiqa::core::DatasetManifest,
    labels: LabelStore,
    root: std::path::PathBuf,
}

fn small_config() -> RunConfig {
    let mut config = RunConfig::desk();
    config.pretrain.resize_short = 32;
    config.pretrain.crop = 32;
    config.pretrain.batch = 8;
    config.pretrain.epochs = 4;
    config.pretrain.lr_milestones = vec![3];
    config.finetune.resize_short = 32;
    config.finetune.crop = 32;
    config.finetune.batch = 8;
    config.finetune.epochs = 4;
    config.eval.resize_short = 32;
    config.eval.crop = 32;
    config.model.desk_stages = vec![6, 12];
    config.model.backbone_dim = 16;
    config.model.head_hidden = 16;
    config.model.reg_hidden = 16;
    config
}

fn fixture(n: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let images = procedural_corpus(n, 32, 32, seed);
    let manifest = write_corpus(dir.path(), &images, "loop", true, false).unwrap();
    let provider = AnalyticMockProvider::new();
    let pairs = PerAttribute::from_fn(|a| {
        PromptPair::new(
            a,
            render_prompt(provider.planted_adjective(a, Polarity::Positive).unwrap()).unwrap(),
            render_prompt(provider.planted_adjective(a, Polarity::Negative).unwrap()).unwrap(),
        )
        .unwrap()
    });
    let set = PromptPairSet::new("planted", pairs);
    let labels_path = dir.path().join("labels.jsonl");
    generate_labels(&manifest, &set, &provider, &labels_path, None).unwrap();
    let labels = load_label_store(&labels_path).unwrap();
    let root = dir.path().to_path_buf();
    Fixture {
        _dir: dir,
        manifest,
        labels,
        root,
    }
}

#[test]
fn pretrain_is_deterministic_across_runs() {
    let fx = fixture(24, 1);
    let config = small_config();
    let a = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("a")).unwrap();
    let b = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("b")).unwrap();
    assert_eq!(a.model.checksum(), b.model.checksum());
    assert_eq!(a.loss_history, b.loss_history);

    let mut other = config;
    other.seed = 99;
    let c = pretrain(&fx.manifest, &fx.labels, &other, fx.root.join("c")).unwrap();
    assert_ne!(a.model.checksum(), c.model.checksum());
}

#[test]
fn pretrain_writes_history_and_final_checkpoint() {
    let fx = fixture(16, 2);
    let config = small_config();
    let outcome = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("pt")).unwrap();
    assert!(fx.root.join("pt/loss_history.csv").exists());
    let csv = std::fs::read_to_string(fx.root.join("pt/loss_history.csv")).unwrap();
    assert!(csv.starts_with("step,epoch,loss,lr\n"));
    assert_eq!(csv.lines().count() - 1, outcome.loss_history.len());

    let (model, meta) = load_checkpoint(&outcome.final_dir).unwrap();
    assert_eq!(model.checksum(), outcome.model.checksum());
    assert_eq!(meta.provider_id, "analytic-mock");
    assert_eq!(meta.prompt_set_id, "planted");
    assert_eq!(meta.epoch, config.pretrain.epochs);
    // Milestone decay reflected in the recorded learning rates.
    let last = outcome.loss_history.last().unwrap();
    assert!((last.lr - config.pretrain.lr * config.pretrain.lr_decay).abs() < 1e-15);
}

#[test]
fn pretrain_requires_labels_for_every_image() {
    let fx = fixture(6, 3);
    let mut missing = LabelStore::default();
    let mut records: Vec<_> = fx.labels.records().cloned().collect();
    records.pop();
    for r in records {
        missing.insert(r);
    }
    match pretrain(&fx.manifest, &missing, &small_config(), fx.root.join("x")) {
        Err(TrainError::MissingLabels(_)) => {}
        Err(other) => panic!("unexpected error: {other}"),
        Ok(_) => panic!("pretrain accepted a manifest with missing labels"),
    }
}

#[test]
fn l2_pretrain_mode_runs_and_differs_from_ranking() {
    let fx = fixture(16, 4);
    let mut config = small_config();
    let ranking = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("r")).unwrap();
    config.pretrain.loss = PretrainLoss::L2;
    let l2 = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("l")).unwrap();
    assert_ne!(ranking.model.checksum(), l2.model.checksum());
    assert!(l2.loss_history.iter().all(|p| p.loss >= 0.0));
}

#[test]
fn literal_orientation_is_selectable() {
    let fx = fixture(12, 5);
    let mut config = small_config();
    config.pretrain.orientation = attiqa::core::RankingOrientation::Literal;
    let literal = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("lit")).unwrap();
    config.pretrain.orientation = attiqa::core::RankingOrientation::Corrected;
    let corrected = pretrain(&fx.manifest, &fx.labels, &config, fx.root.join("cor")).unwrap();
    assert_ne!(literal.model.checksum(), corrected.model.checksum());
}

#[test]
fn finetune_requires_mos_and_respects_linear_probe_freeze() {
    let fx = fixture(20, 6);
    let config = small_config();
    let (train, _) = split_dataset(&fx.manifest, 0.8, 0).unwrap();
    let pre = pretrain(&train, &fx.labels, &config, fx.root.join("pt")).unwrap();

    // Drop MOS from one record.
    let mut records: Vec<_> = train.records().to_vec();
    records[0].mos = None;
    let no_mos = attiqa::core::DatasetManifest::new("no-mos", records).unwrap();
    assert!(matches!(
        finetune(&pre.final_dir, &no_mos, &config, fx.root.join("bad")),
        Err(TrainError::MissingMos(_))
    ));

    // Full fine-tune moves backbone and heads.
    let full = finetune(&pre.final_dir, &train, &config, fx.root.join("full")).unwrap();
    assert_ne!(
        full.model.backbone_checksum(),
        pre.model.backbone_checksum()
    );

    // Linear probe freezes backbone and heads but trains the regressor.
    let mut probe_config = config.clone();
    probe_config.finetune.linear_probe = true;
    let probe = finetune(&pre.final_dir, &train, &probe_config, fx.root.join("lp")).unwrap();
    assert_eq!(
        probe.model.backbone_checksum(),
        pre.model.backbone_checksum()
    );
    assert_eq!(probe.model.heads_checksum(), pre.model.heads_checksum());
    let frozen_reg = {
        let (mut reloaded, _) = load_checkpoint(&pre.final_dir).unwrap();
        reloaded.attach_regressor(probe_config.seed);
        reloaded.regressor_checksum().unwrap()
    };
    assert_ne!(probe.model.regressor_checksum().unwrap(), frozen_reg);
}

#[test]
fn full_scale_recipe_is_accepted_and_echoed() {
    // The full-scale hyperparameters validate; a desk run with them would
    // take hours, so only the config plumbing is exercised here.
    let config = RunConfig::full_scale();
    config.validate().unwrap();
    let json = serde_json::to_value(&config).unwrap();
    assert_eq!(json["pretrain"]["lr"], 1e-4);
    assert_eq!(
        json["pretrain"]["lr_milestones"],
        serde_json::json!([60, 80])
    );
    assert_eq!(json["pretrain"]["margin"], 0.1);
    assert_eq!(json["finetune"]["schedule"], "cosine");
    for lr in [1e-4, 5e-5, 1e-5] {
        let mut variant = config.clone();
        variant.finetune.lr = lr;
        variant.validate().unwrap();
        let round: RunConfig =
            serde_json::from_str(&serde_json::to_string(&variant).unwrap()).unwrap();
        assert_eq!(round.finetune.lr, lr);
    }
}
