//! Shared oracles for the integration suites: independent, brute-force or
//! directly-coded implementations that the fast library code is checked
//! against. Everything here favors obviousness over speed.

#![allow(dead_code)]

use arbor_core::conllu::{Sentence, Token};
use arbor_core::matrix::Matrix;
use rand::Rng;

/// Sum of `scores[head][dep]` over the arcs of `heads` (1-based dependents).
/// Row 0 of `scores` holds ROOT's outgoing arcs.
pub fn tree_score(scores: &Matrix, heads: &[usize]) -> f64 {
    heads
        .iter()
        .enumerate()
        .map(|(i, &h)| scores.at(h, i + 1))
        .sum()
}

/// Is `heads` a spanning arborescence rooted at 0 with exactly one child of
/// ROOT? Checked the slow way: walk up from every node.
pub fn is_single_root_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|&&h| h == 0).count() != 1 {
        return false;
    }
    for start in 1..=n {
        let mut seen = vec![false; n + 1];
        let mut node = start;
        loop {
            if node == 0 {
                break;
            }
            if seen[node] {
                return false; // cycle
            }
            seen[node] = true;
            node = heads[node - 1];
        }
    }
    true
}

/// Exhaustive maximum over all single-root arborescences of an `(n+1) x
/// (n+1)` score matrix. Only feasible for small `n`; returns the best score
/// and one best head assignment.
pub fn best_tree_brute_force(scores: &Matrix) -> (f64, Vec<usize>) {
    let n = scores.rows() - 1;
    assert!((1..=8).contains(&n), "brute force only for tiny n");
    let mut heads = vec![0usize; n];
    let mut best_score = f64::NEG_INFINITY;
    let mut best_heads = Vec::new();
    // Mixed-radix counter over all head assignments in {0..n}^n.
    loop {
        if !heads.iter().enumerate().any(|(i, &h)| h == i + 1) && is_single_root_tree(&heads) {
            let s = tree_score(scores, &heads);
            if s > best_score {
                best_score = s;
                best_heads = heads.clone();
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return (best_score, best_heads);
            }
            heads[pos] += 1;
            if heads[pos] <= n {
                break;
            }
            heads[pos] = 0;
            pos += 1;
        }
    }
}

/// The contrastive loss written as directly from its definition as possible:
/// mean over anchors of `-log( exp(z_i . p_i / tau) / sum_j exp(z_i . p_j /
/// tau) )`, with the sum running over every positive in the batch.
pub fn cssl_reference_in_batch(anchors: &[Vec<f64>], positives: &[Vec<f64>], tau: f64) -> f64 {
    let n = anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: f64 = dot(&anchors[i], &positives[i]) / tau;
        let denom: f64 = (0..n)
            .map(|j| (dot(&anchors[i], &positives[j]) / tau).exp())
            .sum();
        total += -(own.exp() / denom).ln();
    }
    total / n as f64
}

/// Same loss with explicitly sampled negatives: the denominator for anchor
/// `i` is its own positive plus every sampled negative.
pub fn cssl_reference_sampled(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    tau: f64,
) -> f64 {
    let n = anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: f64 = dot(&anchors[i], &positives[i]) / tau;
        let mut denom = own.exp();
        for neg in negatives {
            denom += (dot(&anchors[i], neg) / tau).exp();
        }
        total += -(own.exp() / denom).ln();
    }
    total / n as f64
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rows of random unit vectors, each drawn from a symmetric cube then
/// normalized (resampling the rare near-zero draw).
pub fn random_unit_rows<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-3 {
                return v.iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

const ORACLE_UPOS: [&str; 5] = ["NOUN", "VERB", "ADJ", "ADV", "PUNCT"];
const ORACLE_DEPRELS: [&str; 6] = ["nsubj", "obj", "obl", "amod", "advmod", "punct"];

/// A random valid sentence: a uniformly random rooted tree over `n` tokens
/// (heads drawn among earlier positions of a shuffled order, so arcs go in
/// arbitrary surface directions), with forms/UPOS/labels from small pools.
pub fn random_sentence<R: Rng>(rng: &mut R, max_len: usize) -> Sentence {
    let n = rng.gen_range(1..=max_len.max(1));
    // Attachment order: a random permutation of 1..=n; each node attaches to
    // ROOT (first node) or to some node earlier in that order.
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut heads = vec![0usize; n + 1];
    for (k, &node) in order.iter().enumerate() {
        heads[node] = if k == 0 {
            0
        } else {
            order[rng.gen_range(0..k)]
        };
    }
    let tokens: Vec<Token> = (1..=n)
        .map(|id| {
            let mut t = Token::new(
                id,
                &format!("w{}", rng.gen_range(0..50)),
                heads[id],
                if heads[id] == 0 {
                    "root"
                } else {
                    ORACLE_DEPRELS[rng.gen_range(0..ORACLE_DEPRELS.len())]
                },
            );
            t.upos = ORACLE_UPOS[rng.gen_range(0..ORACLE_UPOS.len())].to_string();
            t
        })
        .collect();
    Sentence::new(tokens)
}
