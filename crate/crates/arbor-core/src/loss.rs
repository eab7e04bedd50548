//! Training objectives.
//!
//! Three ingredients:
//!
//! * the parsing cross-entropy ([`cross_entropy_loss`]) — per dependent, a
//!   softmax over candidate heads plus a softmax over labels conditioned on
//!   the gold head, averaged over dependents;
//! * the contrastive sentence-embedding loss ([`cssl_loss`]) — each pooled
//!   anchor must identify its own permuted counterpart among the positives
//!   of the whole batch (in-batch negatives), optionally against explicitly
//!   sampled negatives instead;
//! * their sum ([`joint_loss`]), with a weight `lambda` on the contrastive
//!   term defaulting to 1.
//!
//! The cross-entropy applies to original (unpermuted) sentences only;
//! permuted copies influence training exclusively through the contrastive
//! term. [`batch_loss_and_gradients`] assembles the whole objective for one
//! batch on a single autodiff tape so the two terms share encoder work and
//! backpropagate together.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{GradError, Gradients, NodeId, Tape};
use crate::conllu::Sentence;
use crate::fmath;
use crate::model::{ModelError, ParserModel, ScoreTensor, Vocabulary};

/// Default temperature for the contrastive softmax.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
/// Default weight of the contrastive term in the joint objective.
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("contrastive batch needs at least 2 elements, got {size}")]
    BatchTooSmall { size: usize },
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("{kind} vector {index} has norm {norm}, expected unit length")]
    NotUnitNorm {
        kind: &'static str,
        index: usize,
        norm: f64,
    },
    #[error("batch has {anchors} anchors but {positives} positives")]
    MismatchedBatch { anchors: usize, positives: usize },
    #[error("embedding dimensions disagree within the batch")]
    MismatchedDims,
    #[error("scores are for {expected} tokens but the sentence has {got}")]
    ScoreMismatch { expected: usize, got: usize },
    #[error("gold head {head} of dependent {dependent} out of range 0..={len}")]
    GoldHeadOutOfRange {
        dependent: usize,
        head: usize,
        len: usize,
    },
    #[error("label {label:?} does not occur in the model vocabulary")]
    UnknownLabel { label: String },
    #[error("label scores missing: score_labels has not been run for this sentence")]
    LabelScoresMissing,
    #[error("sampled-negative mode requires at least one negative embedding")]
    MissingNegatives,
    #[error("{what} is not finite")]
    NonFinite { what: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gradient(#[from] GradError),
}

/// Pooled embeddings for one contrastive batch: `anchors[i]` is the original
/// sentence's embedding, `positives[i]` the embedding of its permuted
/// counterpart. All vectors must be unit-norm and `temperature` positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl ContrastiveBatch {
    fn validate(&self) -> Result<(), LossError> {
        if self.anchors.len() < 2 {
            return Err(LossError::BatchTooSmall {
                size: self.anchors.len(),
            });
        }
        if self.anchors.len() != self.positives.len() {
            return Err(LossError::MismatchedBatch {
                anchors: self.anchors.len(),
                positives: self.positives.len(),
            });
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(LossError::BadTemperature(self.temperature));
        }
        let dim = self.anchors[0].len();
        for (kind, vectors) in [("anchor", &self.anchors), ("positive", &self.positives)] {
            for (index, v) in vectors.iter().enumerate() {
                if v.len() != dim {
                    return Err(LossError::MismatchedDims);
                }
                let norm = fmath::sqrt(v.iter().map(|x| x * x).sum());
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(LossError::NotUnitNorm { kind, index, norm });
                }
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(sum(exp(x)))` over possibly `-inf` entries, without overflow.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.map(|v| fmath::exp(v - max)).sum();
    max + fmath::ln(sum)
}

/// Contrastive loss: mean over anchors `i` of
/// `-log[ exp(z_i . z_i+ / t) / sum_j exp(z_i . z_j+ / t) ]`,
/// where the denominator runs over every positive in the batch (the other
/// elements' positives act as negatives; the anchor itself is excluded).
pub fn cssl_loss(batch: &ContrastiveBatch) -> Result<f64, LossError> {
    batch.validate()?;
    let n = batch.anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let logits =
            (0..n).map(|j| dot(&batch.anchors[i], &batch.positives[j]) / batch.temperature);
        let own = dot(&batch.anchors[i], &batch.positives[i]) / batch.temperature;
        total += log_sum_exp(logits) - own;
    }
    Ok(total / n as f64)
}

/// Parsing cross-entropy for one sentence: mean over dependents of the
/// negative log-probability of the gold head (softmax over the dependent's
/// row of candidate heads) plus the negative log-probability of the gold
/// label (softmax over labels, conditioned on the gold head).
///
/// `scores.label_scores` must have been computed under the gold heads.
pub fn cross_entropy_loss(
    scores: &ScoreTensor,
    gold: &Sentence,
    vocab: &Vocabulary,
) -> Result<f64, LossError> {
    let n = scores.n();
    if gold.len() != n {
        return Err(LossError::ScoreMismatch {
            expected: n,
            got: gold.len(),
        });
    }
    if scores.label_scores.rows() != n || scores.label_scores.cols() != vocab.label_count() {
        return Err(LossError::LabelScoresMissing);
    }
    let arc = &scores.arc_scores;
    let mut total = 0.0;
    for (i, token) in gold.tokens.iter().enumerate() {
        let d = i + 1;
        if token.head > n {
            return Err(LossError::GoldHeadOutOfRange {
                dependent: d,
                head: token.head,
                len: n,
            });
        }
        let head_logits = (0..=n).map(|h| arc.at(h, d));
        total += log_sum_exp(head_logits) - arc.at(token.head, d);

        let label = vocab
            .label_index(&token.deprel)
            .ok_or_else(|| LossError::UnknownLabel {
                label: token.deprel.clone(),
            })?;
        let row = scores.label_scores.row(i);
        total += log_sum_exp(row.iter().copied()) - row[label];
    }
    Ok(total / n as f64)
}

/// Joint objective `ce + lambda * cssl`.
pub fn joint_loss(ce: f64, cssl: f64, lambda: f64) -> Result<f64, LossError> {
    if !ce.is_finite() {
        return Err(LossError::NonFinite { what: "ce loss" });
    }
    if !cssl.is_finite() {
        return Err(LossError::NonFinite { what: "cssl loss" });
    }
    if !lambda.is_finite() {
        return Err(LossError::NonFinite { what: "lambda" });
    }
    Ok(ce + lambda * cssl)
}

/// One training batch, described by references into the corpus.
///
/// `originals` receive the cross-entropy loss. When `positives` is present
/// (one permuted counterpart per original) the contrastive term is added
/// with weight `lambda`; `sampled_negatives` switches its denominator from
/// in-batch positives to the given negative sentences.
#[derive(Debug, Clone)]
pub struct BatchLossSpec<'a> {
    pub originals: Vec<&'a Sentence>,
    pub positives: Option<Vec<&'a Sentence>>,
    pub sampled_negatives: Option<Vec<&'a Sentence>>,
    pub temperature: f64,
    pub lambda: f64,
}

impl<'a> BatchLossSpec<'a> {
    /// Cross-entropy-only batch.
    pub fn ce_only(originals: Vec<&'a Sentence>) -> Self {
        BatchLossSpec {
            originals,
            positives: None,
            sampled_negatives: None,
            temperature: DEFAULT_TEMPERATURE,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// Loss values for one batch. `cssl` is `None` when the batch had no
/// contrastive term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLossValue {
    pub total: f64,
    pub ce: f64,
    pub cssl: Option<f64>,
}

/// Tape nodes for the assembled batch objective.
#[derive(Debug, Clone, Copy)]
pub struct BatchLossNodes {
    pub total: NodeId,
    pub ce: NodeId,
    pub cssl: Option<NodeId>,
}

/// Build the full batch objective on `tape`:
/// `mean_i CE(original_i) + lambda * CSSL(pooled anchors, pooled positives)`.
pub fn batch_loss_graph(
    model: &ParserModel,
    tape: &mut Tape,
    spec: &BatchLossSpec,
) -> Result<BatchLossNodes, LossError> {
    if spec.originals.is_empty() {
        return Err(LossError::BatchTooSmall { size: 0 });
    }
    if let Some(positives) = &spec.positives {
        if positives.len() != spec.originals.len() {
            return Err(LossError::MismatchedBatch {
                anchors: spec.originals.len(),
                positives: positives.len(),
            });
        }
        if spec.originals.len() < 2 {
            return Err(LossError::BatchTooSmall {
                size: spec.originals.len(),
            });
        }
        if spec.temperature.is_nan() || spec.temperature <= 0.0 {
            return Err(LossError::BadTemperature(spec.temperature));
        }
    }

    let mut ce_terms = Vec::with_capacity(spec.originals.len());
    let mut anchor_nodes = Vec::with_capacity(spec.originals.len());
    for sentence in &spec.originals {
        let (ce, pooled) = sentence_ce_graph(model, tape, sentence)?;
        ce_terms.push(ce);
        anchor_nodes.push(pooled);
    }
    let mut ce = ce_terms[0];
    for &term in &ce_terms[1..] {
        ce = tape.add(ce, term);
    }
    let ce = tape.scale(ce, 1.0 / ce_terms.len() as f64);

    let Some(positives) = &spec.positives else {
        return Ok(BatchLossNodes {
            total: ce,
            ce,
            cssl: None,
        });
    };

    let mut positive_nodes = Vec::with_capacity(positives.len());
    for sentence in positives {
        let indices = model.indices(sentence)?;
        let nodes = model.build_encoder(tape, &indices);
        positive_nodes.push(nodes.pooled);
    }
    let anchors = tape.concat_rows(&anchor_nodes);
    let positives_mat = tape.concat_rows(&positive_nodes);

    let cssl = match &spec.sampled_negatives {
        None => {
            // In-batch: row i of the logit matrix scores anchor i against
            // every positive; the diagonal holds the true pair.
            let sim = tape.matmul(anchors, positives_mat, false, true);
            let scaled = tape.scale(sim, 1.0 / spec.temperature);
            let logp = tape.row_log_softmax(scaled);
            let targets: Vec<usize> = (0..anchor_nodes.len()).collect();
            tape.nll_mean(logp, targets)
        }
        Some(negatives) => {
            if negatives.is_empty() {
                return Err(LossError::MissingNegatives);
            }
            let mut negative_nodes = Vec::with_capacity(negatives.len());
            for sentence in negatives {
                let indices = model.indices(sentence)?;
                let nodes = model.build_encoder(tape, &indices);
                negative_nodes.push(nodes.pooled);
            }
            let negatives_mat = tape.concat_rows(&negative_nodes);
            // Column 0: similarity to the own positive; the rest: sampled
            // negatives shared across anchors.
            let paired = tape.mul(anchors, positives_mat);
            let own = tape.row_sum(paired);
            let against = tape.matmul(anchors, negatives_mat, false, true);
            let logits = tape.concat_cols(&[own, against]);
            let scaled = tape.scale(logits, 1.0 / spec.temperature);
            let logp = tape.row_log_softmax(scaled);
            tape.nll_mean(logp, alloc::vec![0; anchor_nodes.len()])
        }
    };

    let weighted = tape.scale(cssl, spec.lambda);
    let total = tape.add(ce, weighted);
    Ok(BatchLossNodes {
        total,
        ce,
        cssl: Some(cssl),
    })
}

/// Cross-entropy graph for one sentence; returns the scalar CE node and the
/// pooled-embedding node (reused as the contrastive anchor).
fn sentence_ce_graph(
    model: &ParserModel,
    tape: &mut Tape,
    sentence: &Sentence,
) -> Result<(NodeId, NodeId), LossError> {
    let n = sentence.len();
    let gold_heads = sentence.heads();
    for (i, &h) in gold_heads.iter().enumerate() {
        if h > n {
            return Err(LossError::GoldHeadOutOfRange {
                dependent: i + 1,
                head: h,
                len: n,
            });
        }
    }
    let mut gold_labels = Vec::with_capacity(n);
    for token in &sentence.tokens {
        let id =
            model
                .vocab()
                .label_index(&token.deprel)
                .ok_or_else(|| LossError::UnknownLabel {
                    label: token.deprel.clone(),
                })?;
        gold_labels.push(id);
    }

    let indices = model.indices(sentence)?;
    let enc = model.build_encoder(tape, &indices);

    let arc = model.build_arc_scorer(tape, enc.reps);
    let rows = tape.slice_rows(arc, 1, n + 1);
    let arc_logp = tape.row_log_softmax(rows);
    let arc_nll = tape.nll_mean(arc_logp, gold_heads.clone());

    let labels = model.build_label_scorer(tape, enc.reps, &gold_heads);
    let label_logp = tape.row_log_softmax(labels);
    let label_nll = tape.nll_mean(label_logp, gold_labels);

    Ok((tape.add(arc_nll, label_nll), enc.pooled))
}

fn read_values(tape: &Tape, nodes: &BatchLossNodes) -> BatchLossValue {
    BatchLossValue {
        total: tape.scalar(nodes.total),
        ce: tape.scalar(nodes.ce),
        cssl: nodes.cssl.map(|c| tape.scalar(c)),
    }
}

/// Forward-only batch objective.
pub fn batch_loss(model: &ParserModel, spec: &BatchLossSpec) -> Result<BatchLossValue, LossError> {
    let mut tape = Tape::new(model.params());
    let nodes = batch_loss_graph(model, &mut tape, spec)?;
    Ok(read_values(&tape, &nodes))
}

/// Batch objective with parameter gradients.
pub fn batch_loss_and_gradients(
    model: &ParserModel,
    spec: &BatchLossSpec,
) -> Result<(BatchLossValue, Gradients), LossError> {
    let mut tape = Tape::new(model.params());
    let nodes = batch_loss_graph(model, &mut tape, spec)?;
    let values = read_values(&tape, &nodes);
    let grads = tape.backward(nodes.total)?;
    Ok((values, grads))
}
