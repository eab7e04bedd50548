//! Scoring and significance testing.
//!
//! * [`score`] — UAS (correct heads) and LAS (correct heads and labels) as
//!   percentages over aligned gold/predicted treebanks, with optional
//!   punctuation exclusion.
//! * [`robustness_report`] — how much a model degrades when test sentences
//!   are randomly reordered (gold trees are remapped along with the words,
//!   so the annotation stays correct).
//! * [`paired_t_test`] — two-tailed paired Student t-test over per-sentence
//!   LAS values, with the p-value computed from the regularized incomplete
//!   beta function. Degenerate inputs (no differences, or zero variance)
//!   take explicit flagged paths instead of producing NaN.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::augment::permute_treebank;
use crate::conllu::Treebank;
use crate::decode::{parse_sentence, Decoder};
use crate::fmath;
use crate::model::{ModelError, ParserModel};
use crate::rng::{stream_rng, STREAM_ROBUSTNESS};

/// Attachment scores over a treebank, as percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub uas: f64,
    pub las: f64,
    /// LAS of each sentence, in treebank order (one entry per sentence; a
    /// sentence with no countable tokens scores 100).
    pub per_sentence_las: Vec<f64>,
    /// Number of tokens that entered the score.
    pub token_count: usize,
}

/// Degradation of a model under word-order permutation of the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub original: EvalResult,
    /// Pooled score over `rounds` permuted copies of the test set; `None`
    /// when `rounds` is zero.
    pub permuted: Option<EvalResult>,
    /// `original - permuted`; positive means permutation hurts.
    pub delta_uas: Option<f64>,
    pub delta_las: Option<f64>,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCountMismatch { gold: usize, pred: usize },
    #[error("{sentence}: gold has {gold_len} tokens but prediction has {pred_len}")]
    LengthMismatch {
        sentence: String,
        gold_len: usize,
        pred_len: usize,
    },
    #[error("paired samples differ in length: {a} vs {b}")]
    PairLengthMismatch { a: usize, b: usize },
    #[error("paired t-test needs at least 2 pairs, got {n}")]
    TooFewPairs { n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}

/// Human-readable sentence handle for error messages: the sent_id when
/// present, otherwise the 1-based position.
fn sentence_name(tb: &Treebank, index: usize) -> String {
    match &tb.sentences[index].sent_id {
        Some(id) => format!("sentence {} (sent_id {id})", index + 1),
        None => format!("sentence {}", index + 1),
    }
}

/// Attachment scores of `pred` against `gold`. The treebanks must align
/// sentence by sentence and token by token. With `ignore_punct`, tokens
/// whose gold UPOS is `PUNCT` are excluded.
pub fn score(
    gold: &Treebank,
    pred: &Treebank,
    ignore_punct: bool,
) -> Result<EvalResult, EvalError> {
    if gold.sentences.len() != pred.sentences.len() {
        return Err(EvalError::SentenceCountMismatch {
            gold: gold.sentences.len(),
            pred: pred.sentences.len(),
        });
    }
    let mut total = 0usize;
    let mut heads_ok = 0usize;
    let mut labeled_ok = 0usize;
    let mut per_sentence_las = Vec::with_capacity(gold.sentences.len());
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::LengthMismatch {
                sentence: sentence_name(gold, i),
                gold_len: g.len(),
                pred_len: p.len(),
            });
        }
        let mut sent_total = 0usize;
        let mut sent_labeled = 0usize;
        for (gt, pt) in g.tokens.iter().zip(&p.tokens) {
            if ignore_punct && gt.upos == "PUNCT" {
                continue;
            }
            sent_total += 1;
            if gt.head == pt.head {
                heads_ok += 1;
                if gt.deprel == pt.deprel {
                    labeled_ok += 1;
                    sent_labeled += 1;
                }
            }
        }
        total += sent_total;
        per_sentence_las.push(if sent_total == 0 {
            100.0
        } else {
            100.0 * sent_labeled as f64 / sent_total as f64
        });
    }
    let pct = |k: usize| {
        if total == 0 {
            100.0
        } else {
            100.0 * k as f64 / total as f64
        }
    };
    Ok(EvalResult {
        uas: pct(heads_ok),
        las: pct(labeled_ok),
        per_sentence_las,
        token_count: total,
    })
}

/// Parse every sentence of `gold` with `model` and return predictions.
pub fn parse_treebank(
    model: &ParserModel,
    gold: &Treebank,
    decoder: Decoder,
) -> Result<Treebank, EvalError> {
    let mut parsed = Vec::with_capacity(gold.sentences.len());
    for s in &gold.sentences {
        parsed.push(parse_sentence(model, s, decoder)?);
    }
    Ok(Treebank::new(parsed))
}

/// Score `model` on `gold` as-is and on `rounds` randomly permuted copies
/// of every sentence (gold trees remapped through the same permutations),
/// and report the degradation. Deterministic in `(model, gold, rounds,
/// seed)`.
pub fn robustness_report(
    model: &ParserModel,
    gold: &Treebank,
    rounds: usize,
    seed: u64,
    decoder: Decoder,
    ignore_punct: bool,
) -> Result<RobustnessReport, EvalError> {
    let original_pred = parse_treebank(model, gold, decoder)?;
    let original = score(gold, &original_pred, ignore_punct)?;
    if rounds == 0 {
        return Ok(RobustnessReport {
            original,
            permuted: None,
            delta_uas: None,
            delta_las: None,
            rounds,
        });
    }
    let mut permuted_gold = Vec::new();
    for round in 0..rounds {
        let round_seed: u64 = stream_rng(seed, STREAM_ROBUSTNESS, round as u64).gen();
        let (copy, _maps) = permute_treebank(gold, round_seed)?;
        permuted_gold.extend(copy.sentences);
    }
    let permuted_gold = Treebank::new(permuted_gold);
    let permuted_pred = parse_treebank(model, &permuted_gold, decoder)?;
    let permuted = score(&permuted_gold, &permuted_pred, ignore_punct)?;
    Ok(RobustnessReport {
        delta_uas: Some(original.uas - permuted.uas),
        delta_las: Some(original.las - permuted.las),
        original,
        permuted: Some(permuted),
        rounds,
    })
}

/// Which branch the paired t-test took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TTestNote {
    /// Normal case: finite t, p from the t distribution.
    Regular,
    /// Every paired difference was exactly zero; t is undefined, reported
    /// as 0 with p = 1.
    AllDifferencesZero,
    /// Nonzero mean but zero variance; |t| is unbounded, reported as
    /// signed infinity with p = 0.
    ZeroVarianceNonzeroMean,
}

/// Paired t-test outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    pub p: f64,
    /// Number of pairs.
    pub n: usize,
    pub note: TTestNote,
}

/// Two-tailed paired Student t-test on per-sentence scores. The p-value
/// comes from `P(|T| > t) = I_x(df/2, 1/2)` with `x = df / (df + t^2)`,
/// evaluated through the regularized incomplete beta function.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::PairLengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs { n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;

    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(PairedTTest {
            t: 0.0,
            p: 1.0,
            n,
            note: TTestNote::AllDifferencesZero,
        });
    }
    if var == 0.0 {
        return Ok(PairedTTest {
            t: if mean > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            p: 0.0,
            n,
            note: TTestNote::ZeroVarianceNonzeroMean,
        });
    }
    let t = mean / fmath::sqrt(var / n as f64);
    let df = (n - 1) as f64;
    let p = regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
    Ok(PairedTTest {
        t,
        p,
        n,
        note: TTestNote::Regular,
    })
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection: gamma(x) gamma(1-x) = pi / sin(pi x).
        let pi = core::f64::consts::PI;
        return fmath::ln(pi / fmath::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * fmath::ln(2.0 * core::f64::consts::PI) + (x + 0.5) * fmath::ln(t) - t + fmath::ln(acc)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * fmath::ln(x) + b * fmath::ln(1.0 - x);
    // Continued fraction converges quickly only below the split point;
    // above it, use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
    if x < (a + 1.0) / (a + b + 2.0) {
        fmath::exp(ln_front) * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - fmath::exp(ln_front) * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Lentz's method for the incomplete-beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=200 {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
