//! Temporary calibration harness; prints measurements, asserts nothing.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use storysalad::clustering::{cluster_salad, Distancer};
use storysalad::derive_seed;
use storysalad::embedding::topic_similarity;
use storysalad::events::{
    cluster_event_salad, narrative_cosine_means, pretrain_event_embeddings, EventDistancer,
    EventEmbedder, EventPairModel, EventSalad, EventTask, EventVocab, PretrainConfig,
};
use storysalad::metrics::{clustering_accuracy, clustering_accuracy_from_labels, spearman_rho};
use storysalad::neural::model::{Composition, ModelConfig, TextPairModel, Variant};
use storysalad::neural::text_task::TextTask;
use storysalad::neural::train::{train, TrainConfig};
use storysalad::saladgen::{salad_vocabulary, Salad};
use storysalad::synthetic::{
    event_salads, graded_salads, mixture_table, separable_salads, EventSpec, MixtureSpec,
};

fn text_config(variant: Variant, embed: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        variant,
        embed_dim: embed,
        hidden,
        layers: 1,
        dropout: 0.0,
        max_sentence_len: 60,
        cnn_widths: vec![2],
        cnn_filters: 6,
        context_cap: 96,
        composition: Composition::Concat,
    }
}

fn train_text(
    variant: Variant,
    embed: usize,
    hidden: usize,
    salads: &[Salad],
    tc: &TrainConfig,
    init_seed: u64,
) -> (TextPairModel, f64) {
    let vocab = salad_vocabulary(salads, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let model = TextPairModel::new(text_config(variant, embed, hidden), vocab, &mut rng).unwrap();
    let mut task = TextTask::new(model, salads);
    let outcome = train(&mut task, tc).unwrap();
    (task.into_model(), outcome.best_val_acc)
}

fn learned_cas(model: &TextPairModel, salads: &[Salad], seed: u64) -> Vec<f64> {
    salads
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = cluster_salad(s, &Distancer::Learned(model), 5, derive_seed(seed, i as u64))
                .unwrap();
            clustering_accuracy(s, &a).unwrap()
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn calibrate_separable() {
    let t0 = Instant::now();
    let spec = MixtureSpec {
        salads: 500,
        ..MixtureSpec::default()
    };
    let salads = separable_salads(&spec, 11);
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 32,
        max_epochs: 8,
        min_epochs: 2,
        min_improvement: 1e-4,
        val_fraction: 0.05,
        pairs_per_salad: 8,
        seed: 0,
        ..TrainConfig::default()
    };
    let (model, val_acc) = train_text(Variant::Plain, 16, 16, &salads, &tc, 42);
    let t_train = t0.elapsed();

    let cas = learned_cas(&model, &salads, 99);
    let table = mixture_table(&spec, 8, 0.05, 7);
    let cos_cas: Vec<f64> = salads
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = cluster_salad(s, &Distancer::Cosine(&table), 5, derive_seed(17, i as u64))
                .unwrap();
            clustering_accuracy(s, &a).unwrap()
        })
        .collect();
    println!(
        "[separable] val_acc={val_acc:.4} learned_ca={:.4} cosine_ca={:.4} train={:?} total={:?}",
        mean(&cas),
        mean(&cos_cas),
        t_train,
        t0.elapsed()
    );
}

struct HardSetup {
    tag: &'static str,
    sentence_len: usize,
    family: usize,
    shared: usize,
    min_sf: f64,
    max_sf: f64,
    marker_pool: usize,
    train_salads: usize,
    embed: usize,
    hidden: usize,
    widths: Vec<usize>,
    filters: usize,
    context_cap: usize,
    dropout: f64,
    batch: usize,
    epochs: usize,
    lr: f64,
}

fn run_hard(setup: &HardSetup) {
    let spec = MixtureSpec {
        salads: setup.train_salads,
        sentence_len: setup.sentence_len,
        family_size: setup.family,
        shared_size: setup.shared,
        marker_pool: setup.marker_pool,
        min_shared_fraction: setup.min_sf,
        max_shared_fraction: setup.max_sf,
        ..MixtureSpec::default()
    };
    let eval_spec = MixtureSpec {
        salads: 40,
        ..spec.clone()
    };
    let table = mixture_table(&spec, 8, 0.05, 7300);
    let tc = TrainConfig {
        lr: setup.lr,
        batch_size: setup.batch,
        max_epochs: setup.epochs,
        min_epochs: setup.epochs,
        min_improvement: 1e-9,
        val_fraction: 0.1,
        pairs_per_salad: 16,
        seed: 0,
        ..TrainConfig::default()
    };

    let t0 = Instant::now();
    let mut gaps = Vec::new();
    let mut rho_ok = 0;
    for seed in 0..5u64 {
        let train_salads: Vec<Salad> = graded_salads(&spec, derive_seed(7100, seed))
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        let eval: Vec<(Salad, f64)> = graded_salads(&eval_spec, derive_seed(7200, seed));
        let eval_salads: Vec<Salad> = eval.iter().map(|(s, _)| s.clone()).collect();
        let tsims: Vec<f64> = eval_salads
            .iter()
            .map(|s| topic_similarity(s, &table).unwrap())
            .collect();

        let mut row = String::new();
        let mut means = [0.0f64; 2];
        let mut rhos = [f64::NAN; 2];
        for (slot, variant) in [(0, Variant::Plain), (1, Variant::AttentionContext)] {
            let config = ModelConfig {
                variant,
                embed_dim: setup.embed,
                hidden: setup.hidden,
                layers: 1,
                dropout: setup.dropout,
                max_sentence_len: 60,
                cnn_widths: setup.widths.clone(),
                cnn_filters: setup.filters,
                context_cap: setup.context_cap,
                composition: Composition::Concat,
            };
            let vocab = salad_vocabulary(&train_salads, 10_000);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7400, seed));
            let model = TextPairModel::new(config, vocab, &mut rng).unwrap();
            let mut task = TextTask::new(model, &train_salads);
            let outcome = train(&mut task, &tc).unwrap();
            let model = task.into_model();
            let cas = learned_cas(&model, &eval_salads, derive_seed(7500, seed));
            rhos[slot] = spearman_rho(&cas, &tsims).unwrap_or(f64::NAN);
            means[slot] = mean(&cas);
            row += &format!(
                " {variant:?}: val={:.3} ca={:.4} rho={:+.3} |",
                outcome.best_val_acc, means[slot], rhos[slot]
            );
        }
        if rhos[0] < 0.0 && rhos[1] > rhos[0] {
            rho_ok += 1;
        }
        gaps.push(means[1] - means[0]);
        println!(
            "[{} seed {seed}]{row} gap={:+.4}",
            setup.tag,
            means[1] - means[0]
        );
    }
    println!(
        "[{}] mean gap={:+.4} rho_ok={rho_ok}/5 elapsed={:?}",
        setup.tag,
        mean(&gaps),
        t0.elapsed()
    );
}

#[test]
fn calibrate_hard_contrast() {
    run_hard(&HardSetup {
        tag: "hard85-long",
        sentence_len: 6,
        family: 6,
        shared: 6,
        min_sf: 0.85,
        max_sf: 1.0,
        marker_pool: 8,
        train_salads: 384,
        embed: 8,
        hidden: 8,
        widths: vec![1],
        filters: 12,
        context_cap: 12,
        dropout: 0.1,
        batch: 16,
        epochs: 90,
        lr: 5e-3,
    });
}

#[test]
fn probe_pure_hard_learnability() {
    let spec = MixtureSpec {
        salads: 384,
        sentence_len: 6,
        family_size: 6,
        shared_size: 6,
        marker_pool: 8,
        min_shared_fraction: 1.0,
        max_shared_fraction: 1.0,
        ..MixtureSpec::default()
    };
    let eval_spec = MixtureSpec {
        salads: 24,
        ..spec.clone()
    };
    let train_salads: Vec<Salad> = graded_salads(&spec, 901)
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let eval_salads: Vec<Salad> = graded_salads(&eval_spec, 902)
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let tc = TrainConfig {
        lr: 5e-3,
        batch_size: 16,
        max_epochs: 60,
        min_epochs: 60,
        min_improvement: 1e-9,
        val_fraction: 0.1,
        pairs_per_salad: 16,
        seed: 0,
        ..TrainConfig::default()
    };
    for variant in [Variant::Plain, Variant::AttentionContext] {
        let t0 = Instant::now();
        let config = ModelConfig {
            variant,
            embed_dim: 8,
            hidden: 8,
            layers: 1,
            dropout: 0.1,
            max_sentence_len: 60,
            cnn_widths: vec![1],
            cnn_filters: 8,
            context_cap: 12,
            composition: Composition::Concat,
        };
        let vocab = salad_vocabulary(&train_salads, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let model = TextPairModel::new(config, vocab, &mut rng).unwrap();
        let mut task = TextTask::new(model, &train_salads);
        let outcome = train(&mut task, &tc).unwrap();
        let model = task.into_model();
        let cas = learned_cas(&model, &eval_salads, 903);
        let hist: Vec<String> = outcome
            .history
            .iter()
            .step_by(20)
            .map(|e| format!("e{}:{:.3}/{:.3}", e.epoch, e.train_loss, e.val_acc))
            .collect();
        println!(
            "[probe {variant:?}] best_val={:.4}@{} ca={:.4} time={:?}\n  {}",
            outcome.best_val_acc,
            outcome.best_epoch,
            mean(&cas),
            t0.elapsed(),
            hist.join(" ")
        );
    }
}

fn event_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        embed_dim: 12,
        hidden: 10,
        layers: 1,
        dropout: 0.0,
        max_sentence_len: 8,
        cnn_widths: vec![1],
        cnn_filters: 6,
        context_cap: 16,
        composition: Composition::Concat,
    }
}

fn event_cas(model: &EventPairModel, salads: &[EventSalad], seed: u64) -> Vec<f64> {
    salads
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = cluster_event_salad(
                s,
                &EventDistancer::Learned(model),
                5,
                derive_seed(seed, i as u64),
            )
            .unwrap();
            clustering_accuracy_from_labels(&s.gold_labels(), &a).unwrap()
        })
        .collect()
}

#[test]
fn calibrate_event_pretraining() {
    let t0 = Instant::now();
    let clean_spec = EventSpec {
        salads: 16,
        ..EventSpec::default()
    };
    let hard_spec = EventSpec {
        salads: 10,
        shared_fraction: 0.5,
        ..EventSpec::default()
    };
    let word_dim = 8;
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 16,
        max_epochs: 12,
        min_epochs: 4,
        min_improvement: 1e-4,
        val_fraction: 0.1,
        pairs_per_salad: 12,
        seed: 0,
        ..TrainConfig::default()
    };

    let mut pre_means = Vec::new();
    let mut raw_means = Vec::new();
    for seed in 0..5u64 {
        let clean = event_salads(&clean_spec, derive_seed(8100, seed));
        let hard = event_salads(&hard_spec, derive_seed(8200, seed));
        let mut all = clean.clone();
        all.extend(hard.iter().cloned());
        let vocab = EventVocab::build(&all, 10_000);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(8300, seed));
        let cfg = event_config(Variant::AttentionContext);
        let mut embedder = EventEmbedder::new(vocab.id_count(), word_dim, cfg.embed_dim, &mut rng);
        let pc = PretrainConfig {
            steps: 150,
            ..PretrainConfig::default()
        };
        pretrain_event_embeddings(&clean, &vocab, &mut embedder, &pc).unwrap();
        let (within, cross) = narrative_cosine_means(&clean, &vocab, &embedder).unwrap();

        let mut rng_pre = ChaCha8Rng::seed_from_u64(derive_seed(8400, seed));
        let model_pre =
            EventPairModel::with_embedder(cfg.clone(), embedder, vocab.clone(), &mut rng_pre)
                .unwrap();
        let mut rng_raw = ChaCha8Rng::seed_from_u64(derive_seed(8400, seed));
        let model_raw =
            EventPairModel::new(cfg.clone(), word_dim, vocab.clone(), &mut rng_raw).unwrap();

        let mut cas = [0.0f64; 2];
        for (slot, model) in [(0, model_pre), (1, model_raw)] {
            let mut task = EventTask::new(model, &hard);
            let outcome = train(&mut task, &tc).unwrap();
            let model = task.into_model();
            cas[slot] = mean(&event_cas(&model, &hard, derive_seed(8500, seed)));
            let _ = outcome;
        }
        pre_means.push(cas[0]);
        raw_means.push(cas[1]);
        println!(
            "[events seed {seed}] within={within:.3} cross={cross:.3} gap={:.3} ca_pre={:.4} ca_raw={:.4}",
            within - cross,
            cas[0],
            cas[1]
        );
    }
    println!(
        "[events] mean ca_pre={:.4} mean ca_raw={:.4} diff={:+.4} elapsed={:?}",
        mean(&pre_means),
        mean(&raw_means),
        mean(&pre_means) - mean(&raw_means),
        t0.elapsed()
    );
}
