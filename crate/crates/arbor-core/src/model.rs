//! The differentiable parser.
//!
//! A [`ParserModel`] is a small from-scratch self-attention encoder plus a
//! Dozat–Manning style biaffine scorer pair:
//!
//! * token input = form embedding + POS embedding, with optional fixed
//!   sinusoidal position encodings (the on/off flag is the order-sensitivity
//!   ablation: with positions off, the whole network is equivariant to the
//!   order of the input tokens);
//! * a stack of post-norm transformer blocks;
//! * a pooled sentence embedding — mean over non-ROOT token representations,
//!   L2-normalized — consumed by the contrastive loss;
//! * an arc scorer `score(h, d) = relu-projected biaffine form` over all
//!   head/dependent pairs, and a per-label biaffine scorer conditioned on a
//!   head assignment.
//!
//! All forward passes are built on the [`crate::autodiff`] tape, so the
//! training loss can reuse exactly the graphs defined here.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{NodeId, ParamStore, Tape};
use crate::conllu::{Sentence, Treebank};
use crate::fmath;
use crate::matrix::Matrix;
use crate::rng::{stream_rng, STREAM_INIT};

/// Reserved form/POS entry for out-of-vocabulary items.
pub const UNK: &str = "<unk>";
/// Pseudo-token prepended at position 0 to represent ROOT.
pub const ROOT: &str = "<root>";

/// String-to-index maps for forms, POS tags, and dependency labels.
///
/// Built from the training split only; anything unseen maps to [`UNK`].
/// Indices are dense from 0 and assigned in first-occurrence order, so a
/// vocabulary is a deterministic function of its treebank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    forms: Vec<String>,
    upos: Vec<String>,
    labels: Vec<String>,
    form_ids: BTreeMap<String, usize>,
    upos_ids: BTreeMap<String, usize>,
    label_ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Collect forms, POS tags, and labels from a training treebank.
    pub fn build(tb: &Treebank) -> Self {
        let mut v = Vocabulary {
            forms: Vec::new(),
            upos: Vec::new(),
            labels: Vec::new(),
            form_ids: BTreeMap::new(),
            upos_ids: BTreeMap::new(),
            label_ids: BTreeMap::new(),
        };
        intern(&mut v.forms, &mut v.form_ids, UNK);
        intern(&mut v.forms, &mut v.form_ids, ROOT);
        intern(&mut v.upos, &mut v.upos_ids, UNK);
        intern(&mut v.upos, &mut v.upos_ids, ROOT);
        for sentence in &tb.sentences {
            for token in &sentence.tokens {
                intern(&mut v.forms, &mut v.form_ids, &token.form);
                intern(&mut v.upos, &mut v.upos_ids, &token.upos);
                intern(&mut v.labels, &mut v.label_ids, &token.deprel);
            }
        }
        v
    }

    fn from_lists(forms: Vec<String>, upos: Vec<String>, labels: Vec<String>) -> Self {
        let index = |list: &[String]| {
            list.iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect::<BTreeMap<_, _>>()
        };
        Vocabulary {
            form_ids: index(&forms),
            upos_ids: index(&upos),
            label_ids: index(&labels),
            forms,
            upos,
            labels,
        }
    }

    pub fn form_count(&self) -> usize {
        self.forms.len()
    }

    pub fn upos_count(&self) -> usize {
        self.upos.len()
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Index of a surface form, falling back to `<unk>`.
    pub fn form_index(&self, form: &str) -> usize {
        self.form_ids.get(form).copied().unwrap_or(0)
    }

    /// Index of a POS tag, falling back to `<unk>`.
    pub fn upos_index(&self, upos: &str) -> usize {
        self.upos_ids.get(upos).copied().unwrap_or(0)
    }

    /// Index of a dependency label, if known.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_ids.get(label).copied()
    }

    /// Label string for a label index.
    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

fn intern(list: &mut Vec<String>, ids: &mut BTreeMap<String, usize>, item: &str) {
    if !ids.contains_key(item) {
        ids.insert(item.to_string(), list.len());
        list.push(item.to_string());
    }
}

/// Encoder and scorer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Model width `d` (embeddings, encoder, pooled vectors).
    pub dim: usize,
    /// Biaffine projection width `d'`.
    pub proj_dim: usize,
    /// Number of encoder blocks.
    pub layers: usize,
    /// Attention heads per block; must divide `dim`.
    pub heads: usize,
    /// Longest supported input including the ROOT pseudo-token.
    pub max_len: usize,
    /// Add sinusoidal position encodings to the input when true.
    pub use_position_encoding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            proj_dim: 32,
            layers: 2,
            heads: 4,
            max_len: 128,
            use_position_encoding: true,
        }
    }
}

impl ModelConfig {
    fn feed_forward_dim(&self) -> usize {
        2 * self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("sentence of {len} tokens exceeds max_len {max_len} (ROOT included)")]
    SentenceTooLong { len: usize, max_len: usize },
    #[error("head {head} for dependent {dependent} out of range 0..={len}")]
    HeadOutOfRange {
        dependent: usize,
        head: usize,
        len: usize,
    },
    #[error("attention heads {heads} must divide model dim {dim}")]
    BadHeadCount { heads: usize, dim: usize },
}

/// Arc and label scores for one sentence.
///
/// `arc_scores[h][d]` is the score of head `h` governing dependent `d`
/// ((n+1)x(n+1); row 0 is ROOT-as-head, column 0 is unused, the diagonal is
/// `-inf`). `label_scores` is `n x |labels|`, conditioned on whatever head
/// assignment it was computed with; it is empty until labels are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTensor {
    pub arc_scores: Matrix,
    pub label_scores: Matrix,
}

impl ScoreTensor {
    pub fn from_arcs(arc_scores: Matrix) -> Self {
        assert_eq!(arc_scores.rows(), arc_scores.cols(), "arc matrix square");
        ScoreTensor {
            arc_scores,
            label_scores: Matrix::zeros(0, 0),
        }
    }

    /// Number of true tokens (ROOT excluded).
    pub fn n(&self) -> usize {
        self.arc_scores.rows() - 1
    }
}

/// Result of encoding one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutput {
    /// `(n+1) x d`, row 0 = ROOT.
    pub token_reps: Matrix,
    /// Unit-norm pooled sentence embedding, length `d`.
    pub pooled: Vec<f64>,
}

/// Vocabulary indices for one sentence, ROOT prepended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceIndices {
    pub forms: Vec<usize>,
    pub upos: Vec<usize>,
}

/// Tape nodes produced by the encoder builder.
#[derive(Debug, Clone, Copy)]
pub struct EncoderNodes {
    pub reps: NodeId,
    pub pooled: NodeId,
}

/// The trainable parser: configuration, vocabulary, and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParserModel {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamStore,
}

impl ParserModel {
    /// Initialize with uniform Xavier weights drawn deterministically from
    /// `seed`. Biases start at zero, layer-norm gains at one.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        if config.heads == 0 || !config.dim.is_multiple_of(config.heads) {
            return Err(ModelError::BadHeadCount {
                heads: config.heads,
                dim: config.dim,
            });
        }
        let d = config.dim;
        let p = config.proj_dim;
        let f = config.feed_forward_dim();
        let labels = vocab.label_count().max(1);

        let mut params = ParamStore::new();
        let mut tensor_index = 0u64;
        let mut xavier = |store: &mut ParamStore, name: &str, rows: usize, cols: usize| {
            let mut rng = stream_rng(seed, STREAM_INIT, tensor_index);
            tensor_index += 1;
            let bound = fmath::sqrt(6.0 / (rows + cols) as f64);
            let data: Vec<f32> = (0..rows * cols)
                .map(|_| rng.gen_range(-bound..bound) as f32)
                .collect();
            store.insert(name, rows, cols, data);
        };
        let zeros = |store: &mut ParamStore, name: &str, rows: usize, cols: usize| {
            store.insert(name, rows, cols, alloc::vec![0.0; rows * cols]);
        };
        let ones = |store: &mut ParamStore, name: &str, rows: usize, cols: usize| {
            store.insert(name, rows, cols, alloc::vec![1.0; rows * cols]);
        };

        xavier(&mut params, "embed.form", vocab.form_count(), d);
        xavier(&mut params, "embed.upos", vocab.upos_count(), d);
        for layer in 0..config.layers {
            for gate in ["wq", "wk", "wv", "wo"] {
                xavier(&mut params, &format!("enc{layer}.attn.{gate}"), d, d);
            }
            for bias in ["bq", "bk", "bv", "bo"] {
                zeros(&mut params, &format!("enc{layer}.attn.{bias}"), 1, d);
            }
            ones(&mut params, &format!("enc{layer}.ln1.gain"), 1, d);
            zeros(&mut params, &format!("enc{layer}.ln1.bias"), 1, d);
            xavier(&mut params, &format!("enc{layer}.ff.w1"), d, f);
            zeros(&mut params, &format!("enc{layer}.ff.b1"), 1, f);
            xavier(&mut params, &format!("enc{layer}.ff.w2"), f, d);
            zeros(&mut params, &format!("enc{layer}.ff.b2"), 1, d);
            ones(&mut params, &format!("enc{layer}.ln2.gain"), 1, d);
            zeros(&mut params, &format!("enc{layer}.ln2.bias"), 1, d);
        }
        xavier(&mut params, "arc.head.w", d, p);
        zeros(&mut params, "arc.head.b", 1, p);
        xavier(&mut params, "arc.dep.w", d, p);
        zeros(&mut params, "arc.dep.b", 1, p);
        xavier(&mut params, "arc.u", p, p);
        zeros(&mut params, "arc.head_bias", 1, p);
        zeros(&mut params, "arc.dep_bias", 1, p);
        xavier(&mut params, "label.bilinear", labels * d, d);
        xavier(&mut params, "label.head_w", labels, d);
        xavier(&mut params, "label.dep_w", labels, d);
        zeros(&mut params, "label.bias", 1, labels);

        Ok(ParserModel {
            config,
            vocab,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Map a sentence to vocabulary indices, ROOT pseudo-token first.
    pub fn indices(&self, sentence: &Sentence) -> Result<SentenceIndices, ModelError> {
        let len = sentence.len() + 1;
        if len > self.config.max_len {
            return Err(ModelError::SentenceTooLong {
                len: sentence.len(),
                max_len: self.config.max_len,
            });
        }
        let mut forms = Vec::with_capacity(len);
        let mut upos = Vec::with_capacity(len);
        forms.push(self.vocab.form_index(ROOT));
        upos.push(self.vocab.upos_index(ROOT));
        for token in &sentence.tokens {
            forms.push(self.vocab.form_index(&token.form));
            upos.push(self.vocab.upos_index(&token.upos));
        }
        Ok(SentenceIndices { forms, upos })
    }

    /// Build the encoder graph for one sentence on `tape`.
    pub fn build_encoder(&self, tape: &mut Tape, indices: &SentenceIndices) -> EncoderNodes {
        let rows = indices.forms.len();
        let form_table = tape.param("embed.form");
        let upos_table = tape.param("embed.upos");
        let form_vecs = tape.gather_rows(form_table, indices.forms.clone());
        let upos_vecs = tape.gather_rows(upos_table, indices.upos.clone());
        let mut x = tape.add(form_vecs, upos_vecs);
        if self.config.use_position_encoding {
            let table = tape.constant(sinusoid_table(rows, self.config.dim));
            x = tape.add(x, table);
        }
        for layer in 0..self.config.layers {
            x = self.build_block(tape, x, layer);
        }
        let words = tape.slice_rows(x, 1, rows);
        let mean = tape.mean_rows(words);
        let pooled = tape.l2_normalize_rows(mean);
        EncoderNodes { reps: x, pooled }
    }

    /// One post-norm transformer block: multi-head self-attention and a
    /// ReLU feed-forward, each followed by residual + layer norm.
    fn build_block(&self, tape: &mut Tape, x: NodeId, layer: usize) -> NodeId {
        let d = self.config.dim;
        let dk = d / self.config.heads;
        let name = |suffix: &str| format!("enc{layer}.{suffix}");

        let project = |tape: &mut Tape, x: NodeId, w: &str, b: &str| {
            let w = tape.param(w);
            let b = tape.param(b);
            let xw = tape.matmul(x, w, false, false);
            tape.add_row(xw, b)
        };
        let q = project(tape, x, &name("attn.wq"), &name("attn.bq"));
        let k = project(tape, x, &name("attn.wk"), &name("attn.bk"));
        let v = project(tape, x, &name("attn.wv"), &name("attn.bv"));

        let mut head_outputs = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let qh = tape.slice_cols(q, lo, hi);
            let kh = tape.slice_cols(k, lo, hi);
            let vh = tape.slice_cols(v, lo, hi);
            let logits = tape.matmul(qh, kh, false, true);
            let scaled = tape.scale(logits, 1.0 / fmath::sqrt(dk as f64));
            let weights = tape.row_softmax(scaled);
            head_outputs.push(tape.matmul(weights, vh, false, false));
        }
        let merged = tape.concat_cols(&head_outputs);
        let attended = project(tape, merged, &name("attn.wo"), &name("attn.bo"));
        let x = tape.add(x, attended);
        let x = self.build_layer_norm(tape, x, &name("ln1"));

        let hidden = project(tape, x, &name("ff.w1"), &name("ff.b1"));
        let hidden = tape.relu(hidden);
        let out = project(tape, hidden, &name("ff.w2"), &name("ff.b2"));
        let x = tape.add(x, out);
        self.build_layer_norm(tape, x, &name("ln2"))
    }

    fn build_layer_norm(&self, tape: &mut Tape, x: NodeId, prefix: &str) -> NodeId {
        let gain = tape.param(&format!("{prefix}.gain"));
        let bias = tape.param(&format!("{prefix}.bias"));
        let normed = tape.layer_norm(x);
        let scaled = tape.mul_row(normed, gain);
        tape.add_row(scaled, bias)
    }

    /// Build the arc scorer over `reps`. The returned node is the
    /// dependent-major matrix `scores[d][h]` with the self-arc diagonal at
    /// `-inf` — each row is one dependent's distribution over candidate
    /// heads, ready for a row softmax.
    pub fn build_arc_scorer(&self, tape: &mut Tape, reps: NodeId) -> NodeId {
        let rows = tape.value(reps).rows();
        let project = |tape: &mut Tape, w: &str, b: &str| {
            let w = tape.param(w);
            let b = tape.param(b);
            let xw = tape.matmul(reps, w, false, false);
            let xb = tape.add_row(xw, b);
            tape.relu(xb)
        };
        let ph = project(tape, "arc.head.w", "arc.head.b");
        let pd = project(tape, "arc.dep.w", "arc.dep.b");

        // scores[d][h] = ph[h]^T U pd[d] + u_bias . ph[h] + v_bias . pd[d]
        let u = tape.param("arc.u");
        let pdu = tape.matmul(pd, u, false, true);
        let bilinear = tape.matmul(pdu, ph, false, true);
        let head_bias = tape.param("arc.head_bias");
        let hb = tape.matmul(head_bias, ph, false, true);
        let with_hb = tape.add_row(bilinear, hb);
        let dep_bias = tape.param("arc.dep_bias");
        let db = tape.matmul(pd, dep_bias, false, true);
        let with_db = tape.add_col(with_hb, db);

        let mut mask = Matrix::zeros(rows, rows);
        for i in 0..rows {
            mask.set(i, i, f64::NEG_INFINITY);
        }
        let mask = tape.constant(mask);
        tape.add(with_db, mask)
    }

    /// Build the label scorer over `reps` for dependents `1..=n` under the
    /// given head assignment (`heads[i]` is the head row of token `i + 1`).
    /// Produces an `n x |labels|` score node.
    pub fn build_label_scorer(&self, tape: &mut Tape, reps: NodeId, heads: &[usize]) -> NodeId {
        let rows = tape.value(reps).rows();
        let n = rows - 1;
        assert_eq!(heads.len(), n, "one head per dependent");
        let d = self.config.dim;
        let labels = self.vocab.label_count().max(1);

        let head_rows = tape.gather_rows(reps, heads.to_vec());
        let dep_rows = tape.slice_rows(reps, 1, rows);

        let bilinear_table = tape.param("label.bilinear");
        let mut columns = Vec::with_capacity(labels);
        for l in 0..labels {
            let u_l = tape.slice_rows(bilinear_table, l * d, (l + 1) * d);
            let hu = tape.matmul(head_rows, u_l, false, false);
            let prod = tape.mul(hu, dep_rows);
            columns.push(tape.row_sum(prod));
        }
        let bilinear = tape.concat_cols(&columns);

        let head_w = tape.param("label.head_w");
        let dep_w = tape.param("label.dep_w");
        let lin_head = tape.matmul(head_rows, head_w, false, true);
        let lin_dep = tape.matmul(dep_rows, dep_w, false, true);
        let summed = tape.add(bilinear, lin_head);
        let summed = tape.add(summed, lin_dep);
        let bias = tape.param("label.bias");
        tape.add_row(summed, bias)
    }

    /// Encode one sentence, returning token representations and the pooled
    /// unit-norm sentence embedding.
    pub fn encode(&self, sentence: &Sentence) -> Result<EncodeOutput, ModelError> {
        let indices = self.indices(sentence)?;
        let mut tape = Tape::new(&self.params);
        let nodes = self.build_encoder(&mut tape, &indices);
        Ok(EncodeOutput {
            token_reps: tape.value(nodes.reps).clone(),
            pooled: tape.value(nodes.pooled).row(0).to_vec(),
        })
    }

    /// Score every head/dependent pair from precomputed representations.
    /// Returns the head-major `(n+1) x (n+1)` matrix described on
    /// [`ScoreTensor`].
    pub fn score_arcs(&self, token_reps: &Matrix) -> Matrix {
        let mut tape = Tape::new(&self.params);
        let reps = tape.constant(token_reps.clone());
        let dep_major = self.build_arc_scorer(&mut tape, reps);
        tape.value(dep_major).transpose()
    }

    /// Score labels for each dependent under a head assignment
    /// (`heads[i]` in `0..=n` is the head of token `i + 1`).
    pub fn score_labels(&self, token_reps: &Matrix, heads: &[usize]) -> Result<Matrix, ModelError> {
        let n = token_reps.rows() - 1;
        for (i, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(ModelError::HeadOutOfRange {
                    dependent: i + 1,
                    head: h,
                    len: n,
                });
            }
        }
        if heads.len() != n {
            return Err(ModelError::HeadOutOfRange {
                dependent: heads.len(),
                head: 0,
                len: n,
            });
        }
        let mut tape = Tape::new(&self.params);
        let reps = tape.constant(token_reps.clone());
        let scores = self.build_label_scorer(&mut tape, reps, heads);
        Ok(tape.value(scores).clone())
    }
}

/// Fixed sinusoidal position encodings: row `pos`, columns alternating
/// `sin(pos / 10000^(2i/d))` and `cos(pos / 10000^(2i/d))`.
pub fn sinusoid_table(rows: usize, dim: usize) -> Matrix {
    let mut table = Matrix::zeros(rows, dim);
    for pos in 0..rows {
        let row = table.row_mut(pos);
        for i in 0..dim / 2 {
            let rate = fmath::powf(10000.0, 2.0 * i as f64 / dim as f64);
            let angle = pos as f64 / rate;
            row[2 * i] = fmath::sin(angle);
            row[2 * i + 1] = fmath::cos(angle);
        }
        if dim % 2 == 1 {
            let rate = fmath::powf(10000.0, (dim - 1) as f64 / dim as f64);
            row[dim - 1] = fmath::sin(pos as f64 / rate);
        }
    }
    table
}

// --- checkpoint serialization ---

const MAGIC: &[u8; 4] = b"ARBR";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint format version {found}")]
    BadVersion { found: u32 },
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("checkpoint contains invalid UTF-8 at byte {offset}")]
    BadUtf8 { offset: usize },
    #[error("checkpoint has trailing bytes after the last parameter block")]
    TrailingBytes,
}

impl ParserModel {
    /// Serialize config, vocabulary, and parameters to bytes. All integers
    /// and floats are little-endian; parameters are 32-bit floats.
    pub fn save_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, FORMAT_VERSION);
        push_u32(&mut out, self.config.dim as u32);
        push_u32(&mut out, self.config.proj_dim as u32);
        push_u32(&mut out, self.config.layers as u32);
        push_u32(&mut out, self.config.heads as u32);
        push_u32(&mut out, self.config.max_len as u32);
        push_u32(&mut out, self.config.use_position_encoding as u32);
        for list in [&self.vocab.forms, &self.vocab.upos, &self.vocab.labels] {
            push_u32(&mut out, list.len() as u32);
            for item in list.iter() {
                push_str(&mut out, item);
            }
        }
        push_u32(&mut out, self.params.iter().count() as u32);
        for (name, param) in self.params.iter() {
            push_str(&mut out, name);
            push_u32(&mut out, param.rows as u32);
            push_u32(&mut out, param.cols as u32);
            for &v in &param.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Reconstruct a model from [`ParserModel::save_bytes`] output.
    pub fn load_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, offset: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::BadVersion { found: version });
        }
        let config = ModelConfig {
            dim: r.u32()? as usize,
            proj_dim: r.u32()? as usize,
            layers: r.u32()? as usize,
            heads: r.u32()? as usize,
            max_len: r.u32()? as usize,
            use_position_encoding: r.u32()? != 0,
        };
        let mut lists: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for list in lists.iter_mut() {
            let count = r.u32()? as usize;
            for _ in 0..count {
                list.push(r.string()?);
            }
        }
        let [forms, upos, labels] = lists;
        let vocab = Vocabulary::from_lists(forms, upos, labels);
        let mut params = ParamStore::new();
        let param_count = r.u32()? as usize;
        for _ in 0..param_count {
            let name = r.string()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()));
            }
            params.insert(&name, rows, cols, data);
        }
        if r.offset != bytes.len() {
            return Err(CheckpointError::TrailingBytes);
        }
        Ok(ParserModel {
            config,
            vocab,
            params,
        })
    }
}

fn push_u32(out: &mut Vec<u8>, value: u32) {
    out.extend_from_slice(&value.to_le_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, count: usize) -> Result<&'a [u8], CheckpointError> {
        if self.offset + count > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                offset: self.offset,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + count];
        self.offset += count;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let offset = self.offset;
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        core::str::from_utf8(raw)
            .map(|s| s.to_string())
            .map_err(|_| CheckpointError::BadUtf8 { offset })
    }
}
