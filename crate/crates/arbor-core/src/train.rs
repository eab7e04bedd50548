//! The training loop.
//!
//! Four regimes arise from two switches: the loss (`ce` or `ce+cssl`) and
//! corpus augmentation (`none` or `rotation`). Cross-entropy is computed on
//! original training sentences only; in `ce+cssl` mode each batch element
//! additionally carries a freshly permuted copy of its sentence, and the
//! contrastive term pulls each pooled anchor toward its own permutation
//! while pushing it away from the other in-batch positives (or from
//! explicitly sampled negative sentences).
//!
//! Optimization is plain SGD with momentum and global-norm gradient
//! clipping. Everything is deterministic in `(config, seed)`: batch
//! composition, positive permutations, negative sampling, and parameter
//! initialization each draw from their own seeded stream, so two runs with
//! the same configuration produce bitwise-identical models. [`fit`] is
//! IO-free — it returns the report and best checkpoint bytes and leaves
//! writing files to the caller.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::augment::{
    build_augmented_corpus, permute_sentence, sample_negative, AugmentConfig, AugmentError,
};
use crate::autodiff::{GradError, Gradients, ParamStore, Tape};
use crate::conllu::{Sentence, Treebank};
use crate::decode::Decoder;
use crate::eval::{parse_treebank, score, EvalError};
use crate::loss::{batch_loss_graph, BatchLossSpec, LossError};
use crate::matrix::Matrix;
use crate::model::{ModelConfig, ModelError, ParserModel, Vocabulary};
use crate::rng::{stream_rng, STREAM_NEGATIVE, STREAM_POSITIVE, STREAM_SHUFFLE};

/// Which objective to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Parsing cross-entropy only.
    Ce,
    /// Cross-entropy plus the contrastive term.
    CeCssl,
}

/// Whether to expand the training corpus before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    None,
    /// Append rotated copies of every training sentence.
    Rotation,
}

/// Where contrastive negatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeMode {
    /// Other batch elements' positives (the default).
    InBatch,
    /// One sampled unrelated sentence per anchor.
    Sampled,
}

/// All knobs of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub augmentation: Augmentation,
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the contrastive term; 0 recovers plain CE exactly.
    pub lambda: f64,
    pub negatives: NegativeMode,
    /// Disable sinusoidal position encodings (the order-agnostic ablation).
    pub no_position_encoding: bool,
    /// Re-permute positives every epoch instead of fixing them at epoch 0.
    pub fresh_positives_per_epoch: bool,
    /// Evaluate on dev every this many epochs (the last epoch is always
    /// evaluated).
    pub dev_eval_every: usize,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: f64,
    pub momentum: f64,
    /// Encoder/scorer dimensions. Its `use_position_encoding` field is
    /// ignored; `no_position_encoding` above is the single source of truth.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 2e-3,
            epochs: 20,
            seed: 0,
            loss_mode: LossMode::Ce,
            augmentation: Augmentation::None,
            tau: 0.1,
            lambda: 1.0,
            negatives: NegativeMode::InBatch,
            no_position_encoding: false,
            fresh_positives_per_epoch: true,
            dev_eval_every: 1,
            clip_norm: 1.0,
            momentum: 0.9,
            model: ModelConfig::default(),
        }
    }
}

fn render_opt(v: &Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "-".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("batch_size must be at least 1")]
    ZeroBatchSize,
    #[error("batch_size {batch_size} too small: ce+cssl needs at least 2 for in-batch negatives")]
    BatchSizeTooSmallForCssl { batch_size: usize },
    #[error("learning_rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("tau must be positive and finite, got {0}")]
    BadTau(f64),
    #[error("lambda must be finite and non-negative, got {0}")]
    BadLambda(f64),
    #[error("clip_norm must be positive, got {0}")]
    BadClipNorm(f64),
    #[error("momentum must lie in [0, 1), got {0}")]
    BadMomentum(f64),
    #[error("dev_eval_every must be at least 1")]
    ZeroDevEvalEvery,
    #[error("the {which} treebank is empty")]
    EmptyTreebank { which: &'static str },
    #[error("training treebank has {size} sentences; ce+cssl needs at least 2")]
    TreebankTooSmall { size: usize },
    #[error("loss became non-finite at batch {batch}: ce={ce}, cssl={}", render_opt(.cssl))]
    NonFiniteLoss {
        batch: usize,
        ce: f64,
        cssl: Option<f64>,
    },
    #[error("gradient of {name} became non-finite at batch {batch}")]
    NonFiniteGradient { batch: usize, name: String },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::ZeroBatchSize);
        }
        if self.loss_mode == LossMode::CeCssl && self.batch_size < 2 {
            return Err(TrainError::BatchSizeTooSmallForCssl {
                batch_size: self.batch_size,
            });
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::BadLearningRate(self.learning_rate));
        }
        if self.loss_mode == LossMode::CeCssl {
            if !self.tau.is_finite() || self.tau <= 0.0 {
                return Err(TrainError::BadTau(self.tau));
            }
            if !self.lambda.is_finite() || self.lambda < 0.0 {
                return Err(TrainError::BadLambda(self.lambda));
            }
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(TrainError::BadClipNorm(self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::BadMomentum(self.momentum));
        }
        if self.dev_eval_every == 0 {
            return Err(TrainError::ZeroDevEvalEvery);
        }
        Ok(())
    }

    /// Whether batches need permuted positives: contrastive mode with a
    /// nonzero weight. At `lambda = 0` the contrastive term contributes
    /// nothing, so positives are skipped entirely — this is what makes the
    /// `lambda = 0` trajectory bitwise identical to plain CE.
    fn needs_positives(&self) -> bool {
        self.loss_mode == LossMode::CeCssl && self.lambda != 0.0
    }
}

/// One training batch: indices of the originals in the training treebank,
/// plus (in contrastive mode) one permuted positive per original.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub originals: Vec<usize>,
    pub positives: Option<Vec<Sentence>>,
}

/// Shuffle the corpus (seeded by `(cfg.seed, epoch)`) and cut it into
/// batches of `cfg.batch_size`. A trailing batch of size 1 is merged into
/// its predecessor. In contrastive mode each original gets a fresh permuted
/// positive (re-drawn per epoch unless `fresh_positives_per_epoch` is off).
pub fn make_batches(
    tb: &Treebank,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<Batch>, TrainError> {
    cfg.validate()?;
    let n = tb.sentences.len();
    if n == 0 {
        return Err(TrainError::EmptyTreebank { which: "training" });
    }
    if cfg.loss_mode == LossMode::CeCssl && n < 2 {
        return Err(TrainError::TreebankTooSmall { size: n });
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(cfg.seed, STREAM_SHUFFLE, epoch as u64);
    indices.shuffle(&mut rng);

    let mut groups: Vec<Vec<usize>> = indices.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
    if groups.len() >= 2 && groups.last().is_some_and(|g| g.len() < 2) {
        let last = groups.pop().unwrap();
        groups.last_mut().unwrap().extend(last);
    }

    let positive_epoch = if cfg.fresh_positives_per_epoch {
        epoch
    } else {
        0
    };
    let mut batches = Vec::with_capacity(groups.len());
    for originals in groups {
        let positives = if cfg.needs_positives() {
            let mut list = Vec::with_capacity(originals.len());
            for &i in &originals {
                let index = (positive_epoch * n + i) as u64;
                let mut rng = stream_rng(cfg.seed, STREAM_POSITIVE, index);
                let (permuted, _map) = permute_sentence(&tb.sentences[i], &mut rng)?;
                list.push(permuted);
            }
            Some(list)
        } else {
            None
        };
        batches.push(Batch {
            originals,
            positives,
        });
    }
    Ok(batches)
}

/// Scale gradients so the global norm is at most `max_norm`; returns the
/// pre-clipping norm.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// SGD with momentum: `v <- momentum * v + g`, `p <- p - lr * v`. Velocity
/// is kept in 64-bit precision across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    momentum: f64,
    velocity: BTreeMap<String, Matrix>,
}

impl SgdMomentum {
    pub fn new(momentum: f64) -> Self {
        SgdMomentum {
            momentum,
            velocity: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, learning_rate: f64) {
        let momentum = self.momentum;
        for (name, grad) in grads.iter() {
            let v = self
                .velocity
                .entry(name.to_string())
                .or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
            for (vi, gi) in v.data_mut().iter_mut().zip(grad.data()) {
                *vi = momentum * *vi + *gi;
            }
            let param = params
                .get_mut(name)
                .expect("gradient for unknown parameter");
            for (p, vi) in param.data.iter_mut().zip(v.data()) {
                *p = (*p as f64 - learning_rate * *vi) as f32;
            }
        }
    }
}

/// Mean losses over one epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_ce: f64,
    pub mean_cssl: Option<f64>,
    pub batch_count: usize,
}

/// Run one epoch of updates over `batches`, mutating `model` in place.
/// Aborts with the batch index and component losses if the loss or any
/// gradient stops being finite.
pub fn train_epoch(
    model: &mut ParserModel,
    optimizer: &mut SgdMomentum,
    tb: &Treebank,
    batches: &[Batch],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    let mut ce_sum = 0.0;
    let mut cssl_sum = 0.0;
    let mut cssl_seen = false;
    for (batch_index, batch) in batches.iter().enumerate() {
        let originals: Vec<&Sentence> = batch.originals.iter().map(|&i| &tb.sentences[i]).collect();
        let positives: Option<Vec<&Sentence>> =
            batch.positives.as_ref().map(|p| p.iter().collect());
        let negatives: Option<Vec<&Sentence>> =
            if positives.is_some() && cfg.negatives == NegativeMode::Sampled {
                let mut list = Vec::with_capacity(batch.originals.len());
                for &i in &batch.originals {
                    let index = (epoch * tb.sentences.len() + i) as u64;
                    let mut rng = stream_rng(cfg.seed, STREAM_NEGATIVE, index);
                    list.push(sample_negative(&tb.sentences[i], tb, &mut rng)?);
                }
                Some(list)
            } else {
                None
            };
        let spec = BatchLossSpec {
            originals,
            positives,
            sampled_negatives: negatives,
            temperature: cfg.tau,
            lambda: cfg.lambda,
        };

        let (ce, cssl, mut grads) = {
            let mut tape = Tape::new(model.params());
            let nodes = batch_loss_graph(model, &mut tape, &spec)?;
            let total = tape.scalar(nodes.total);
            let ce = tape.scalar(nodes.ce);
            let cssl = nodes.cssl.map(|c| tape.scalar(c));
            if !total.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    batch: batch_index,
                    ce,
                    cssl,
                });
            }
            let grads = tape.backward(nodes.total).map_err(|e| match e {
                GradError::NotFinite { name } => TrainError::NonFiniteGradient {
                    batch: batch_index,
                    name,
                },
            })?;
            (ce, cssl, grads)
        };

        clip_gradients(&mut grads, cfg.clip_norm);
        optimizer.step(model.params_mut(), &grads, cfg.learning_rate);

        ce_sum += ce;
        if let Some(c) = cssl {
            cssl_sum += c;
            cssl_seen = true;
        }
    }
    let count = batches.len().max(1) as f64;
    Ok(EpochStats {
        mean_ce: ce_sum / count,
        mean_cssl: cssl_seen.then(|| cssl_sum / count),
        batch_count: batches.len(),
    })
}

/// One row of the training report.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_ce: f64,
    pub mean_cssl: Option<f64>,
    /// Dev scores when this epoch was on the evaluation schedule.
    pub dev_uas: Option<f64>,
    pub dev_las: Option<f64>,
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose checkpoint was kept (0 = the initial model, before any
    /// update).
    pub best_epoch: usize,
    /// Dev LAS of the kept checkpoint; `None` when dev was never evaluated.
    pub best_las: Option<f64>,
    /// Size of the training corpus after augmentation.
    pub train_sentences: usize,
    /// Filled in by the caller (the core loop does not read clocks).
    pub wall_seconds: Option<f64>,
}

/// Result of [`fit`]: the report, the final model, and the serialized
/// best-dev-LAS checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub report: TrainReport,
    pub model: ParserModel,
    pub best_checkpoint: Vec<u8>,
}

/// Train a fresh model on `train_tb`, evaluating on `dev_tb` on schedule and
/// retaining the best-dev-LAS checkpoint (strictly better wins, so ties keep
/// the earlier epoch). With `epochs = 0` the initial model is checkpointed.
pub fn fit(
    train_tb: &Treebank,
    dev_tb: &Treebank,
    cfg: &TrainConfig,
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    if train_tb.sentences.is_empty() {
        return Err(TrainError::EmptyTreebank { which: "training" });
    }
    if dev_tb.sentences.is_empty() {
        return Err(TrainError::EmptyTreebank { which: "dev" });
    }

    let corpus = match cfg.augmentation {
        Augmentation::None => train_tb.clone(),
        Augmentation::Rotation => {
            let aug_cfg = AugmentConfig {
                seed: cfg.seed,
                ..AugmentConfig::default()
            };
            build_augmented_corpus(train_tb, &aug_cfg)?.treebank
        }
    };

    let model_cfg = ModelConfig {
        use_position_encoding: !cfg.no_position_encoding,
        ..cfg.model
    };
    let vocab = Vocabulary::build(&corpus);
    let mut model = ParserModel::new(model_cfg, vocab, cfg.seed)?;
    let mut optimizer = SgdMomentum::new(cfg.momentum);

    let mut best_epoch = 0usize;
    let mut best_las: Option<f64> = None;
    let mut best_checkpoint = model.save_bytes();
    let mut records = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let batches = make_batches(&corpus, cfg, e)?;
        let stats = train_epoch(&mut model, &mut optimizer, &corpus, &batches, cfg, e)?;
        let on_schedule = (e + 1) % cfg.dev_eval_every == 0 || e + 1 == cfg.epochs;
        let (dev_uas, dev_las) = if on_schedule {
            let pred = parse_treebank(&model, dev_tb, Decoder::Mst)?;
            let result = score(dev_tb, &pred, false)?;
            if best_las.is_none_or(|b| result.las > b) {
                best_las = Some(result.las);
                best_epoch = e + 1;
                best_checkpoint = model.save_bytes();
            }
            (Some(result.uas), Some(result.las))
        } else {
            (None, None)
        };
        records.push(EpochRecord {
            epoch: e + 1,
            mean_ce: stats.mean_ce,
            mean_cssl: stats.mean_cssl,
            dev_uas,
            dev_las,
        });
    }

    Ok(FitOutcome {
        report: TrainReport {
            epochs: records,
            best_epoch,
            best_las,
            train_sentences: corpus.sentences.len(),
            wall_seconds: None,
        },
        model,
        best_checkpoint,
    })
}

/// Human-readable per-epoch log, one line per epoch.
pub fn render_log(report: &TrainReport) -> String {
    let mut out = String::new();
    let total = report.epochs.len();
    for r in &report.epochs {
        out.push_str(&format!("epoch {}/{}  ce {:.4}", r.epoch, total, r.mean_ce));
        match r.mean_cssl {
            Some(c) => out.push_str(&format!("  cssl {c:.4}")),
            None => out.push_str("  cssl -"),
        }
        match (r.dev_uas, r.dev_las) {
            (Some(u), Some(l)) => out.push_str(&format!("  dev-uas {u:.2}  dev-las {l:.2}\n")),
            _ => out.push('\n'),
        }
    }
    match report.best_las {
        Some(las) => out.push_str(&format!(
            "best epoch {}  dev-las {las:.2}\n",
            report.best_epoch
        )),
        None => out.push_str("no dev evaluation performed; initial model kept\n"),
    }
    out
}

/// Machine-readable summary: `key=value` headers, then one `epoch=` line per
/// epoch (absent measurements are omitted).
pub fn render_summary(report: &TrainReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("epochs={}\n", report.epochs.len()));
    out.push_str(&format!("train_sentences={}\n", report.train_sentences));
    out.push_str(&format!("best_epoch={}\n", report.best_epoch));
    if let Some(las) = report.best_las {
        out.push_str(&format!("best_las={las:.2}\n"));
    }
    if let Some(w) = report.wall_seconds {
        out.push_str(&format!("wall_seconds={w:.3}\n"));
    }
    for r in &report.epochs {
        out.push_str(&format!("epoch={} ce={:.6}", r.epoch, r.mean_ce));
        if let Some(c) = r.mean_cssl {
            out.push_str(&format!(" cssl={c:.6}"));
        }
        if let (Some(u), Some(l)) = (r.dev_uas, r.dev_las) {
            out.push_str(&format!(" dev_uas={u:.2} dev_las={l:.2}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::is_valid;
    use crate::synth::{generate_corpus, GrammarSpec};
    use alloc::vec;

    fn tiny_grammar(seed: u64) -> GrammarSpec {
        GrammarSpec {
            nouns: 12,
            verbs: 6,
            adjectives: 4,
            min_len: 3,
            max_len: 5,
            seed,
            ..GrammarSpec::default()
        }
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            learning_rate: 0.05,
            epochs: 2,
            seed: 11,
            model: ModelConfig {
                dim: 8,
                proj_dim: 4,
                layers: 1,
                heads: 2,
                max_len: 16,
                use_position_encoding: true,
            },
            ..TrainConfig::default()
        }
    }

    fn corpus(n: usize, seed: u64) -> Treebank {
        generate_corpus(&tiny_grammar(seed), n).unwrap()
    }

    #[test]
    fn batches_cover_corpus_and_merge_singletons() {
        let tb = corpus(32, 1);
        let cfg = TrainConfig {
            batch_size: 16,
            ..tiny_train_config()
        };
        let batches = make_batches(&tb, &cfg, 0).unwrap();
        assert_eq!(batches.len(), 2);
        assert!(batches.iter().all(|b| b.originals.len() == 16));
        let mut all: Vec<usize> = batches.iter().flat_map(|b| b.originals.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..32).collect::<Vec<_>>());

        // 33 sentences: the trailing singleton joins the previous batch.
        let tb = corpus(33, 2);
        let batches = make_batches(&tb, &cfg, 0).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].originals.len(), 17);
    }

    #[test]
    fn batch_composition_is_seeded_by_epoch() {
        let tb = corpus(20, 3);
        let cfg = tiny_train_config();
        let a = make_batches(&tb, &cfg, 0).unwrap();
        let b = make_batches(&tb, &cfg, 0).unwrap();
        assert_eq!(a, b);
        let c = make_batches(&tb, &cfg, 1).unwrap();
        let order =
            |bs: &[Batch]| -> Vec<usize> { bs.iter().flat_map(|b| b.originals.clone()).collect() };
        assert_ne!(order(&a), order(&c), "different epochs reshuffle");
    }

    #[test]
    fn contrastive_batches_carry_valid_permuted_positives() {
        let tb = corpus(10, 4);
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            ..tiny_train_config()
        };
        let batches = make_batches(&tb, &cfg, 0).unwrap();
        for batch in &batches {
            let positives = batch.positives.as_ref().unwrap();
            assert_eq!(positives.len(), batch.originals.len());
            for (&i, pos) in batch.originals.iter().zip(positives) {
                let orig = &tb.sentences[i];
                assert!(is_valid(pos));
                let mut a: Vec<&str> = orig.tokens.iter().map(|t| t.form.as_str()).collect();
                let mut b: Vec<&str> = pos.tokens.iter().map(|t| t.form.as_str()).collect();
                a.sort_unstable();
                b.sort_unstable();
                assert_eq!(a, b, "positive must be a reordering of the original");
            }
        }
    }

    fn positives_by_sentence(batches: &[Batch]) -> BTreeMap<usize, Vec<String>> {
        let mut map = BTreeMap::new();
        for b in batches {
            for (&i, p) in b.originals.iter().zip(b.positives.as_ref().unwrap()) {
                map.insert(i, p.tokens.iter().map(|t| t.form.clone()).collect());
            }
        }
        map
    }

    #[test]
    fn positives_are_fresh_per_epoch_unless_disabled() {
        let tb = corpus(12, 5);
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            ..tiny_train_config()
        };
        let e0 = positives_by_sentence(&make_batches(&tb, &cfg, 0).unwrap());
        let e1 = positives_by_sentence(&make_batches(&tb, &cfg, 1).unwrap());
        assert_ne!(e0, e1, "fresh positives should change between epochs");

        let frozen = TrainConfig {
            fresh_positives_per_epoch: false,
            ..cfg
        };
        let f0 = positives_by_sentence(&make_batches(&tb, &frozen, 0).unwrap());
        let f1 = positives_by_sentence(&make_batches(&tb, &frozen, 1).unwrap());
        assert_eq!(f0, f1, "frozen positives must repeat");
    }

    #[test]
    fn cssl_needs_two_sentences() {
        let tb = corpus(1, 6);
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            ..tiny_train_config()
        };
        assert_eq!(
            make_batches(&tb, &cfg, 0).unwrap_err(),
            TrainError::TreebankTooSmall { size: 1 }
        );
        let ce = TrainConfig {
            loss_mode: LossMode::Ce,
            ..tiny_train_config()
        };
        let batches = make_batches(&tb, &ce, 0).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].originals.len(), 1);
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let cfg = TrainConfig {
            batch_size: 1,
            loss_mode: LossMode::CeCssl,
            ..tiny_train_config()
        };
        assert_eq!(
            cfg.validate().unwrap_err(),
            TrainError::BatchSizeTooSmallForCssl { batch_size: 1 }
        );
        let cfg = TrainConfig {
            learning_rate: -1.0,
            ..tiny_train_config()
        };
        assert_eq!(
            cfg.validate().unwrap_err(),
            TrainError::BadLearningRate(-1.0)
        );
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            tau: 0.0,
            ..tiny_train_config()
        };
        assert_eq!(cfg.validate().unwrap_err(), TrainError::BadTau(0.0));
        let cfg = TrainConfig {
            momentum: 1.0,
            ..tiny_train_config()
        };
        assert_eq!(cfg.validate().unwrap_err(), TrainError::BadMomentum(1.0));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = Gradients::new();
        grads.accumulate("a", &Matrix::from_vec(1, 2, vec![3.0, 0.0]));
        grads.accumulate("b", &Matrix::from_vec(1, 1, vec![4.0]));
        let before = clip_gradients(&mut grads, 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((grads.global_norm() - 1.0).abs() < 1e-6);

        let mut small = Gradients::new();
        small.accumulate("a", &Matrix::from_vec(1, 1, vec![0.3]));
        let before = clip_gradients(&mut small, 1.0);
        assert!((before - 0.3).abs() < 1e-12);
        assert_eq!(small.get("a").unwrap().at(0, 0), 0.3);
    }

    #[test]
    fn sgd_momentum_matches_hand_computation() {
        let mut params = ParamStore::new();
        params.insert("w", 1, 1, vec![1.0]);
        let mut grads = Gradients::new();
        grads.accumulate("w", &Matrix::from_vec(1, 1, vec![0.5]));
        let mut opt = SgdMomentum::new(0.9);
        opt.step(&mut params, &grads, 0.1);
        // v = 0.5, p = 1 - 0.1 * 0.5 = 0.95
        assert!((params.get("w").unwrap().data[0] - 0.95).abs() < 1e-6);
        opt.step(&mut params, &grads, 0.1);
        // v = 0.9 * 0.5 + 0.5 = 0.95, p = 0.95 - 0.095 = 0.855
        assert!((params.get("w").unwrap().data[0] - 0.855).abs() < 1e-6);
    }

    #[test]
    fn training_overfits_a_tiny_corpus() {
        let train = corpus(3, 7);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 4,
            dev_eval_every: 50,
            ..tiny_train_config()
        };
        let outcome = fit(&train, &train, &cfg).unwrap();
        let first = outcome.report.epochs.first().unwrap().mean_ce;
        let last = outcome.report.epochs.last().unwrap().mean_ce;
        assert!(last.is_finite() && first.is_finite());
        assert!(
            last < first,
            "ce should fall when memorizing: {first} -> {last}"
        );
    }

    #[test]
    fn lambda_zero_reproduces_plain_ce_bitwise() {
        let train = corpus(8, 8);
        let dev = corpus(3, 9);
        let ce_cfg = TrainConfig {
            loss_mode: LossMode::Ce,
            ..tiny_train_config()
        };
        let zero_cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            lambda: 0.0,
            ..tiny_train_config()
        };
        let a = fit(&train, &dev, &ce_cfg).unwrap();
        let b = fit(&train, &dev, &zero_cfg).unwrap();
        assert_eq!(
            a.model.params(),
            b.model.params(),
            "trajectories must agree bitwise"
        );
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn fit_zero_epochs_checkpoints_the_initial_model() {
        let train = corpus(4, 10);
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_train_config()
        };
        let outcome = fit(&train, &train, &cfg).unwrap();
        assert!(outcome.report.epochs.is_empty());
        assert_eq!(outcome.report.best_epoch, 0);
        assert_eq!(outcome.report.best_las, None);
        let restored = ParserModel::load_bytes(&outcome.best_checkpoint).unwrap();
        assert_eq!(&restored, &outcome.model);
    }

    #[test]
    fn fit_is_deterministic_and_keeps_the_best_dev_epoch() {
        let train = corpus(10, 11);
        let dev = corpus(4, 12);
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            epochs: 3,
            ..tiny_train_config()
        };
        let a = fit(&train, &dev, &cfg).unwrap();
        let b = fit(&train, &dev, &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.best_checkpoint, b.best_checkpoint);

        let best_recorded = a
            .report
            .epochs
            .iter()
            .filter_map(|r| r.dev_las)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.report.best_las, Some(best_recorded));

        // Reloading the kept checkpoint reproduces its dev LAS exactly.
        let restored = ParserModel::load_bytes(&a.best_checkpoint).unwrap();
        let pred = parse_treebank(&restored, &dev, Decoder::Mst).unwrap();
        let rescored = score(&dev, &pred, false).unwrap();
        assert_eq!(Some(rescored.las), a.report.best_las);
    }

    #[test]
    fn dev_eval_schedule_skips_and_hits_last_epoch() {
        let train = corpus(6, 13);
        let cfg = TrainConfig {
            epochs: 3,
            dev_eval_every: 2,
            ..tiny_train_config()
        };
        let outcome = fit(&train, &train, &cfg).unwrap();
        let evaluated: Vec<bool> = outcome
            .report
            .epochs
            .iter()
            .map(|r| r.dev_las.is_some())
            .collect();
        assert_eq!(evaluated, vec![false, true, true]);
    }

    #[test]
    fn rotation_augmentation_doubles_the_corpus() {
        let train = corpus(6, 14);
        let cfg = TrainConfig {
            epochs: 1,
            augmentation: Augmentation::Rotation,
            ..tiny_train_config()
        };
        let outcome = fit(&train, &train, &cfg).unwrap();
        assert_eq!(outcome.report.train_sentences, 12);
    }

    #[test]
    fn sampled_negative_mode_trains() {
        let train = corpus(8, 15);
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            negatives: NegativeMode::Sampled,
            epochs: 1,
            ..tiny_train_config()
        };
        let outcome = fit(&train, &train, &cfg).unwrap();
        let cssl = outcome.report.epochs[0].mean_cssl.unwrap();
        assert!(cssl.is_finite());
    }

    #[test]
    fn reports_render_both_formats() {
        let train = corpus(5, 16);
        let cfg = TrainConfig {
            loss_mode: LossMode::CeCssl,
            epochs: 2,
            ..tiny_train_config()
        };
        let mut outcome = fit(&train, &train, &cfg).unwrap();
        outcome.report.wall_seconds = Some(1.5);
        let log = render_log(&outcome.report);
        assert!(log.contains("epoch 1/2"));
        assert!(log.contains("best epoch"));
        let summary = render_summary(&outcome.report);
        assert!(summary.contains("epochs=2"));
        assert!(summary.contains("wall_seconds=1.500"));
        assert!(summary.contains("epoch=1 ce="));
        assert!(summary.contains(" cssl="));
    }
}
