//! Turning arc scores into trees.
//!
//! Two decoders over a [`ScoreTensor`]:
//!
//! * [`greedy_decode`] — per-dependent argmax. Fast, but the result may
//!   contain cycles or several ROOT children.
//! * [`mst_decode`] — Chu-Liu/Edmonds maximum spanning arborescence with a
//!   single-ROOT-child constraint; always yields a valid (possibly
//!   non-projective) tree.
//!
//! Ties are broken toward the smaller index everywhere so decoding is
//! deterministic. [`assign_labels`] then picks argmax labels conditioned on
//! the chosen heads.

use alloc::string::String;
use alloc::vec::Vec;

use crate::conllu::Sentence;
use crate::matrix::Matrix;
use crate::model::{ModelError, ParserModel, ScoreTensor};

/// Decoding strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Greedy,
    Mst,
}

/// Index of the largest value, ties toward the smaller index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Per-dependent argmax heads. `heads[i]` is the head of token `i + 1`.
/// The output is not guaranteed to be a tree.
pub fn greedy_decode(scores: &ScoreTensor) -> Vec<usize> {
    let arc = &scores.arc_scores;
    let n = scores.n();
    (1..=n)
        .map(|d| argmax((0..=n).map(|h| arc.at(h, d))))
        .collect()
}

/// Maximum-scoring arborescence rooted at ROOT with exactly one ROOT child.
///
/// Runs unconstrained Chu-Liu/Edmonds first; if that uses several ROOT
/// children, re-runs once per candidate ROOT child with the other ROOT arcs
/// forbidden and keeps the best-scoring tree (ties toward the smaller
/// candidate index).
pub fn mst_decode(scores: &ScoreTensor) -> Vec<usize> {
    let arc = &scores.arc_scores;
    let n = scores.n();
    let heads = chu_liu_edmonds(arc);
    if heads.iter().filter(|&&h| h == 0).count() == 1 {
        return heads;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for forced in 1..=n {
        let mut restricted = arc.clone();
        for d in 1..=n {
            if d != forced {
                restricted.set(0, d, f64::NEG_INFINITY);
            }
        }
        let candidate = chu_liu_edmonds(&restricted);
        let score: f64 = candidate
            .iter()
            .enumerate()
            .map(|(i, &h)| arc.at(h, i + 1))
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, candidate));
        }
    }
    best.expect("n >= 1").1
}

/// Unconstrained Chu-Liu/Edmonds on a head-major score matrix. Node 0 is the
/// root; returns `heads[d - 1]` for `d` in `1..=n`.
fn chu_liu_edmonds(arc: &Matrix) -> Vec<usize> {
    let m = arc.rows();
    let score = |h: usize, d: usize| arc.at(h, d);
    let heads = contract(m, &score);
    (1..m).map(|d| heads[d]).collect()
}

/// Recursive contraction step. `score(h, d)` is defined for `h, d < m`;
/// returns a head table indexed by node (entry 0 unused).
fn contract(m: usize, score: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    // Best incoming arc for every non-root node.
    let mut best_head = alloc::vec![0usize; m];
    for (d, head) in best_head.iter_mut().enumerate().skip(1) {
        *head = argmax((0..m).map(|h| {
            if h == d {
                f64::NEG_INFINITY
            } else {
                score(h, d)
            }
        }));
    }

    let Some(cycle) = find_cycle(&best_head) else {
        return best_head;
    };

    let in_cycle = |v: usize| cycle.contains(&v);
    let cycle_score: f64 = cycle.iter().map(|&d| score(best_head[d], d)).sum();

    // Contracted node list: root, non-cycle nodes in order, then the cycle
    // as one super-node at the end.
    let mut keep: Vec<usize> = (0..m).filter(|&v| !in_cycle(v)).collect();
    let super_node = keep.len();
    let contracted_m = keep.len() + 1;
    keep.push(usize::MAX); // placeholder so keep[super_node] exists

    // For arcs entering the super-node remember which cycle node they attach
    // to; for arcs leaving it, which cycle node they leave from.
    let mut enter_at = alloc::vec![0usize; contracted_m];
    let mut leave_from = alloc::vec![0usize; contracted_m];
    let mut entering = alloc::vec![f64::NEG_INFINITY; contracted_m];
    let mut leaving = alloc::vec![f64::NEG_INFINITY; contracted_m];
    for (new_v, &old_v) in keep.iter().enumerate().take(super_node) {
        for &d in &cycle {
            let gain = score(old_v, d) - score(best_head[d], d);
            if gain > entering[new_v] {
                entering[new_v] = gain;
                enter_at[new_v] = d;
            }
        }
        for &h in &cycle {
            if score(h, old_v) > leaving[new_v] {
                leaving[new_v] = score(h, old_v);
                leave_from[new_v] = h;
            }
        }
    }

    let keep_for_score = keep.clone();
    let contracted_score = move |h: usize, d: usize| -> f64 {
        match (h == super_node, d == super_node) {
            (false, false) => score(keep_for_score[h], keep_for_score[d]),
            (false, true) => cycle_score + entering[h],
            (true, false) => leaving[d],
            (true, true) => f64::NEG_INFINITY,
        }
    };
    let inner = contract(contracted_m, &contracted_score);

    // Expand: cycle arcs stay except the one displaced by the arc that
    // enters the super-node; arcs out of the super-node leave from their
    // recorded cycle node.
    let mut heads = best_head;
    let breaker = inner[super_node];
    let broken = enter_at[breaker];
    heads[broken] = keep[breaker];
    for (new_v, &old_v) in keep.iter().enumerate().take(super_node) {
        if new_v == 0 {
            continue;
        }
        let h = inner[new_v];
        heads[old_v] = if h == super_node {
            leave_from[new_v]
        } else {
            keep[h]
        };
    }
    heads
}

/// First cycle in the best-head graph, if any, as a list of node indices.
fn find_cycle(best_head: &[usize]) -> Option<Vec<usize>> {
    let m = best_head.len();
    // 0 = unvisited, 1 = on current path, 2 = done.
    let mut state = alloc::vec![0u8; m];
    state[0] = 2;
    for start in 1..m {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = best_head[v];
        }
        if state[v] == 1 {
            // v is on the current path: everything from v onward is a cycle.
            let from = path.iter().position(|&p| p == v).unwrap();
            let cycle: Vec<usize> = path[from..].to_vec();
            for &p in &path {
                state[p] = 2;
            }
            return Some(cycle);
        }
        for &p in &path {
            state[p] = 2;
        }
    }
    None
}

/// Argmax labels for each dependent under a head assignment, ties toward the
/// smaller label index.
pub fn assign_labels(
    model: &ParserModel,
    token_reps: &Matrix,
    heads: &[usize],
) -> Result<Vec<String>, ModelError> {
    let scores = model.score_labels(token_reps, heads)?;
    Ok((0..scores.rows())
        .map(|d| {
            let l = argmax(scores.row(d).iter().copied());
            model.vocab().label(l).into()
        })
        .collect())
}

/// Full pipeline for one sentence: encode, score, decode heads, assign
/// labels. Returns a copy of the sentence with predicted heads and labels.
pub fn parse_sentence(
    model: &ParserModel,
    sentence: &Sentence,
    decoder: Decoder,
) -> Result<Sentence, ModelError> {
    let encoded = model.encode(sentence)?;
    let tensor = ScoreTensor::from_arcs(model.score_arcs(&encoded.token_reps));
    let heads = match decoder {
        Decoder::Greedy => greedy_decode(&tensor),
        Decoder::Mst => mst_decode(&tensor),
    };
    let labels = assign_labels(model, &encoded.token_reps, &heads)?;
    let mut parsed = sentence.clone();
    for (token, (head, label)) in parsed.tokens.iter_mut().zip(heads.iter().zip(labels)) {
        token.head = *head;
        token.deprel = label;
    }
    Ok(parsed)
}
