//! Core algorithms for a dependency-parsing toolkit aimed at free-word-order
//! languages.
//!
//! The crate is organized around a small set of building blocks:
//!
//! * [`conllu`] — reading, validating, and writing CoNLL-U treebanks.
//! * [`augment`] — dependency-preserving word-order permutations, rotation
//!   data augmentation, and negative sampling for contrastive batches.
//! * [`model`] — a from-scratch self-attention encoder with optional sinusoidal
//!   position encodings, mean-pooled sentence embeddings, and Dozat–Manning
//!   style biaffine arc/label scorers.
//! * [`loss`] — the parsing cross-entropy, the contrastive loss over pooled
//!   sentence embeddings, and their joint combination.
//! * [`decode`] — greedy and Chu-Liu/Edmonds maximum-spanning-arborescence
//!   decoding with a single-root constraint.
//! * [`train`] — a deterministic, IO-free training loop with SGD + momentum,
//!   gradient clipping, and best-checkpoint selection.
//! * [`eval`] — UAS/LAS scoring, word-order robustness reports, and a paired
//!   Student t-test.
//! * [`synth`] — a synthetic case-marked corpus generator whose trees are
//!   recoverable from morphology alone, independent of word order.
//!
//! Everything here is pure computation over in-memory data: no files, no
//! clocks, no global state. All randomness flows through explicitly seeded
//! generators (see [`rng`]), so every operation is a deterministic function of
//! its inputs and seeds. The crate is `no_std`-compatible (with `alloc`); the
//! companion CLI crate adds file formats and process orchestration on top.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod autodiff;
pub mod conllu;
pub mod decode;
pub mod eval;
mod fmath;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod synth;
pub mod train;

pub use conllu::{Sentence, Token, Treebank};
pub use matrix::Matrix;
pub use model::{ModelConfig, ParserModel, ScoreTensor, Vocabulary};
