//! Dependency-preserving data augmentation.
//!
//! Three generators live here, all deterministic functions of their inputs
//! and a seed:
//!
//! * [`permute_sentence`] draws a uniformly random reordering of the words
//!   (ROOT fixed) and remaps every head through it, producing a sentence
//!   whose tree is isomorphic to the original. These are the positive pairs
//!   for contrastive training and the permuted test sets for robustness
//!   evaluation.
//! * [`rotate_sentence`] rearranges the sibling subtrees of head words:
//!   for each head whose dependents carry an eligible relation, the head and
//!   its dependent subtrees are treated as blocks and shuffled with
//!   probability `rotation_probability`, each subtree moving as a unit.
//! * [`sample_negative`] picks a random sentence that cannot be a
//!   reordering of the anchor (different word multiset).
//!
//! None of these ever change the multiset of
//! `(head form, dependent form, relation)` triples — that is the invariant
//! the property tests pin down.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::conllu::{validate_tree, Sentence, Token, Treebank, Violation};
use crate::rng::{stream_rng, STREAM_AUGMENT, STREAM_ROBUSTNESS};

/// Hard ceiling on `copies_per_sentence` in [`AugmentConfig`].
pub const MAX_COPIES_PER_SENTENCE: usize = 5;

/// A bijection over word positions `{1..n}` with ROOT (0) held fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMap {
    /// `map[old] = new`; entry 0 is always 0.
    map: Vec<usize>,
}

impl PermutationMap {
    /// Identity over `{0..n}`.
    pub fn identity(n: usize) -> Self {
        PermutationMap {
            map: (0..=n).collect(),
        }
    }

    /// Build from the new linear order: `new_order[k]` is the old id of the
    /// token now at position `k + 1`. Panics unless `new_order` is a
    /// permutation of `1..=n`.
    pub fn from_new_order(new_order: &[usize]) -> Self {
        let n = new_order.len();
        let mut map = alloc::vec![usize::MAX; n + 1];
        map[0] = 0;
        for (k, &old) in new_order.iter().enumerate() {
            assert!(old >= 1 && old <= n, "position {old} outside 1..={n}");
            assert!(map[old] == usize::MAX, "position {old} mapped twice");
            map[old] = k + 1;
        }
        PermutationMap { map }
    }

    /// Number of word positions covered (ROOT excluded).
    pub fn len(&self) -> usize {
        self.map.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New position of old position `old`. ROOT maps to itself.
    pub fn apply(&self, old: usize) -> usize {
        self.map[old]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }
}

/// Which dependency relations mark a dependent subtree as movable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EligibleRelations {
    /// Every relation.
    All,
    /// Only the listed relations.
    Only(BTreeSet<String>),
    /// Every relation except the listed ones.
    AllExcept(BTreeSet<String>),
}

impl EligibleRelations {
    pub fn is_eligible(&self, deprel: &str) -> bool {
        match self {
            EligibleRelations::All => true,
            EligibleRelations::Only(set) => set.contains(deprel),
            EligibleRelations::AllExcept(set) => !set.contains(deprel),
        }
    }
}

impl Default for EligibleRelations {
    /// Everything except punctuation: punctuation order is not syntax-bearing.
    fn default() -> Self {
        let mut set = BTreeSet::new();
        set.insert("punct".to_string());
        EligibleRelations::AllExcept(set)
    }
}

/// Settings for rotation-based corpus augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Rotated copies appended per source sentence, at most
    /// [`MAX_COPIES_PER_SENTENCE`].
    pub copies_per_sentence: usize,
    /// Chance that any given head's sibling blocks are shuffled.
    pub rotation_probability: f64,
    pub eligible_relations: EligibleRelations,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            copies_per_sentence: 1,
            rotation_probability: 0.5,
            eligible_relations: EligibleRelations::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("sentence is not a valid dependency tree: {}", render_violations(.0))]
    InvalidSentence(Vec<Violation>),
    #[error("copies_per_sentence {requested} exceeds the cap of {MAX_COPIES_PER_SENTENCE}")]
    TooManyCopies { requested: usize },
    #[error("rotation_probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("no sentence in the treebank has a different word multiset than the anchor")]
    NoEligibleNegative,
}

fn render_violations(violations: &[Violation]) -> String {
    let parts: Vec<String> = violations.iter().map(|v| format!("{v}")).collect();
    parts.join("; ")
}

fn ensure_valid(sentence: &Sentence) -> Result<(), AugmentError> {
    let report = validate_tree(sentence);
    if report.is_empty() {
        Ok(())
    } else {
        Err(AugmentError::InvalidSentence(report))
    }
}

/// Reorder a sentence's tokens by `map`, renumbering ids to `1..n` and
/// remapping every head (`new_head = map(old_head)`, ROOT fixed).
pub fn apply_permutation(sentence: &Sentence, map: &PermutationMap) -> Sentence {
    let n = sentence.len();
    assert_eq!(map.len(), n, "permutation length does not match sentence");
    let mut tokens: Vec<Option<Token>> = alloc::vec![None; n];
    for token in &sentence.tokens {
        let new_id = map.apply(token.id);
        let mut moved = token.clone();
        moved.id = new_id;
        moved.head = map.apply(token.head);
        tokens[new_id - 1] = Some(moved);
    }
    Sentence {
        tokens: tokens.into_iter().map(|t| t.unwrap()).collect(),
        sent_id: sentence.sent_id.clone(),
        comments: sentence.comments.clone(),
    }
}

/// Uniformly permute a sentence's word order, preserving its tree.
///
/// Returns the reordered sentence and the position map that produced it.
pub fn permute_sentence<R: Rng>(
    sentence: &Sentence,
    rng: &mut R,
) -> Result<(Sentence, PermutationMap), AugmentError> {
    ensure_valid(sentence)?;
    let n = sentence.len();
    let mut new_order: Vec<usize> = (1..=n).collect();
    new_order.shuffle(rng);
    let map = PermutationMap::from_new_order(&new_order);
    Ok((apply_permutation(sentence, &map), map))
}

/// Permute every sentence of a treebank, deriving one random stream per
/// sentence from `seed` so results do not depend on iteration order.
pub fn permute_treebank(
    tb: &Treebank,
    seed: u64,
) -> Result<(Treebank, Vec<PermutationMap>), AugmentError> {
    let mut sentences = Vec::with_capacity(tb.len());
    let mut maps = Vec::with_capacity(tb.len());
    for (index, sentence) in tb.sentences.iter().enumerate() {
        let mut rng = stream_rng(seed, STREAM_ROBUSTNESS, index as u64);
        let (permuted, map) = permute_sentence(sentence, &mut rng)?;
        sentences.push(permuted);
        maps.push(map);
    }
    Ok((
        Treebank {
            sentences,
            source_path: tb.source_path.clone(),
        },
        maps,
    ))
}

/// Shuffle the sibling blocks of each eligible head with probability
/// `cfg.rotation_probability`, keeping every subtree contiguous and intact.
pub fn rotate_sentence<R: Rng>(
    sentence: &Sentence,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Sentence, AugmentError> {
    if !(0.0..=1.0).contains(&cfg.rotation_probability) {
        return Err(AugmentError::BadProbability(cfg.rotation_probability));
    }
    ensure_valid(sentence)?;
    let n = sentence.len();
    let mut children: Vec<Vec<usize>> = alloc::vec![Vec::new(); n + 1];
    for token in &sentence.tokens {
        children[token.head].push(token.id);
    }

    // Depth-first from ROOT with children in id order, so the random stream
    // is consumed in a reproducible order regardless of tree shape.
    let mut new_order: Vec<usize> = Vec::with_capacity(n);
    linearize(0, sentence, cfg, &children, rng, &mut new_order);
    let map = PermutationMap::from_new_order(&new_order);
    Ok(apply_permutation(sentence, &map))
}

/// Append the linearization of `node`'s subtree to `out`.
///
/// The block sequence is the head itself plus one block per dependent
/// subtree, initially in original order (blocks keyed by their root token's
/// position). Blocks whose relation is eligible — the head always counts —
/// may swap places; ineligible dependents keep their slots.
fn linearize<R: Rng>(
    node: usize,
    sentence: &Sentence,
    cfg: &AugmentConfig,
    children: &[Vec<usize>],
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    let deps = &children[node];
    if deps.is_empty() {
        if node != 0 {
            out.push(node);
        }
        return;
    }

    // Block = None for the head itself, Some(dep) for a dependent subtree.
    let mut blocks: Vec<Option<usize>> = deps.iter().map(|&d| Some(d)).collect();
    if node != 0 {
        let pos = blocks
            .iter()
            .position(|b| b.unwrap() > node)
            .unwrap_or(blocks.len());
        blocks.insert(pos, None);
    }

    let movable: Vec<usize> = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| match b {
            None => true,
            Some(d) => cfg
                .eligible_relations
                .is_eligible(&sentence.tokens[d - 1].deprel),
        })
        .map(|(slot, _)| slot)
        .collect();
    let head_selected = movable.len() >= 2 && movable.iter().any(|&s| blocks[s].is_some());
    if head_selected && rng.gen::<f64>() < cfg.rotation_probability {
        let mut picked: Vec<Option<usize>> = movable.iter().map(|&s| blocks[s]).collect();
        picked.shuffle(rng);
        for (&slot, block) in movable.iter().zip(picked) {
            blocks[slot] = block;
        }
    }

    for block in blocks {
        match block {
            None => out.push(node),
            Some(dep) => linearize(dep, sentence, cfg, children, rng, out),
        }
    }
}

/// A source sentence skipped during corpus augmentation, with the reasons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedSentence {
    /// 0-based index into the source treebank.
    pub index: usize,
    pub violations: Vec<Violation>,
}

impl core::fmt::Display for SkippedSentence {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "sentence {} skipped: {}",
            self.index,
            render_violations(&self.violations)
        )
    }
}

/// An augmented treebank plus the sentences that had to be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub treebank: Treebank,
    pub skipped: Vec<SkippedSentence>,
}

/// Append up to `copies_per_sentence` rotated copies of every valid sentence.
///
/// Copies carry an `# augmented_from = ...` provenance comment. Invalid
/// source sentences are kept in the output but produce no copies; they are
/// reported in the outcome. Deterministic for a given seed.
pub fn build_augmented_corpus(
    tb: &Treebank,
    cfg: &AugmentConfig,
) -> Result<AugmentOutcome, AugmentError> {
    if cfg.copies_per_sentence > MAX_COPIES_PER_SENTENCE {
        return Err(AugmentError::TooManyCopies {
            requested: cfg.copies_per_sentence,
        });
    }
    if !(0.0..=1.0).contains(&cfg.rotation_probability) {
        return Err(AugmentError::BadProbability(cfg.rotation_probability));
    }
    let mut sentences = Vec::new();
    let mut skipped = Vec::new();
    for (index, sentence) in tb.sentences.iter().enumerate() {
        sentences.push(sentence.clone());
        let report = validate_tree(sentence);
        if !report.is_empty() {
            skipped.push(SkippedSentence {
                index,
                violations: report,
            });
            continue;
        }
        let mut rng = stream_rng(cfg.seed, STREAM_AUGMENT, index as u64);
        let origin = sentence
            .sent_id
            .clone()
            .unwrap_or_else(|| format!("{}", index + 1));
        for _ in 0..cfg.copies_per_sentence {
            let mut copy = rotate_sentence(sentence, cfg, &mut rng)?;
            copy.sent_id = None;
            copy.comments = alloc::vec![format!("# augmented_from = {origin}")];
            sentences.push(copy);
        }
    }
    Ok(AugmentOutcome {
        treebank: Treebank {
            sentences,
            source_path: tb.source_path.clone(),
        },
        skipped,
    })
}

/// Draw a sentence whose word multiset differs from the anchor's, uniformly
/// over all such sentences.
pub fn sample_negative<'a, R: Rng>(
    anchor: &Sentence,
    tb: &'a Treebank,
    rng: &mut R,
) -> Result<&'a Sentence, AugmentError> {
    let anchor_forms = sorted_forms(anchor);
    let eligible: Vec<&Sentence> = tb
        .sentences
        .iter()
        .filter(|s| sorted_forms(s) != anchor_forms)
        .collect();
    if eligible.is_empty() {
        return Err(AugmentError::NoEligibleNegative);
    }
    Ok(eligible[rng.gen_range(0..eligible.len())])
}

fn sorted_forms(sentence: &Sentence) -> Vec<&str> {
    let mut forms: Vec<&str> = sentence.tokens.iter().map(|t| t.form.as_str()).collect();
    forms.sort_unstable();
    forms
}

/// The multiset of `(head form, dependent form, relation)` triples, sorted.
/// ROOT appears as the pseudo-form `<ROOT>`.
pub fn dependency_triples(sentence: &Sentence) -> Vec<(String, String, String)> {
    let mut triples: Vec<(String, String, String)> = sentence
        .tokens
        .iter()
        .map(|t| {
            let head_form = if t.head == 0 {
                "<ROOT>".to_string()
            } else {
                sentence.tokens[t.head - 1].form.clone()
            };
            (head_form, t.form.clone(), t.deprel.clone())
        })
        .collect();
    triples.sort();
    triples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::is_valid;
    use crate::rng::stream_rng;
    use alloc::vec;

    fn sentence_from_heads(heads: &[usize]) -> Sentence {
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| Token::new(i + 1, &format!("w{}", i + 1), h, "dep"))
            .collect();
        Sentence::new(tokens)
    }

    #[test]
    fn permutation_map_remaps_worked_example() {
        // Tokens [A, B, C] with heads [2, 0, 2]; map 1->2, 2->3, 3->1.
        let mut s = sentence_from_heads(&[2, 0, 2]);
        s.tokens[0].form = "A".into();
        s.tokens[1].form = "B".into();
        s.tokens[2].form = "C".into();
        let map = PermutationMap::from_new_order(&[3, 1, 2]);
        assert_eq!(map.apply(1), 2);
        assert_eq!(map.apply(2), 3);
        assert_eq!(map.apply(3), 1);
        let out = apply_permutation(&s, &map);
        let forms: Vec<&str> = out.tokens.iter().map(|t| t.form.as_str()).collect();
        assert_eq!(forms, ["C", "A", "B"]);
        assert_eq!(out.heads(), [3, 3, 0]);
        assert!(is_valid(&out));
    }

    #[test]
    fn one_token_sentence_permutes_to_itself() {
        let s = sentence_from_heads(&[0]);
        let mut rng = stream_rng(1, 9, 0);
        let (out, map) = permute_sentence(&s, &mut rng).unwrap();
        assert!(map.is_identity());
        assert_eq!(out, s);
    }

    #[test]
    fn permute_refuses_invalid_sentences() {
        let s = sentence_from_heads(&[2, 1]);
        let mut rng = stream_rng(1, 9, 0);
        let err = permute_sentence(&s, &mut rng).unwrap_err();
        match err {
            AugmentError::InvalidSentence(violations) => assert!(!violations.is_empty()),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn permutation_preserves_triples_and_validity() {
        let s = sentence_from_heads(&[3, 3, 0, 3, 4]);
        let before = dependency_triples(&s);
        for index in 0..50 {
            let mut rng = stream_rng(7, 9, index);
            let (out, _) = permute_sentence(&s, &mut rng).unwrap();
            assert!(is_valid(&out));
            assert_eq!(dependency_triples(&out), before);
        }
    }

    #[test]
    fn zero_rotation_probability_is_identity() {
        let s = sentence_from_heads(&[2, 0, 2, 3]);
        let cfg = AugmentConfig {
            rotation_probability: 0.0,
            ..AugmentConfig::default()
        };
        let mut rng = stream_rng(3, 9, 0);
        assert_eq!(rotate_sentence(&s, &cfg, &mut rng).unwrap(), s);
    }

    #[test]
    fn rotation_moves_whole_subtrees() {
        // [S1][V][S2]: V at position 3 heads subtrees {1,2} and {4,5}.
        let mut s = sentence_from_heads(&[2, 3, 0, 5, 3]);
        for (token, form) in s.tokens.iter_mut().zip(["a", "b", "V", "c", "d"]) {
            token.form = form.into();
        }
        let cfg = AugmentConfig {
            rotation_probability: 1.0,
            ..AugmentConfig::default()
        };
        let before = dependency_triples(&s);
        let mut seen_swapped = false;
        for index in 0..30 {
            let mut rng = stream_rng(11, 9, index);
            let out = rotate_sentence(&s, &cfg, &mut rng).unwrap();
            assert!(is_valid(&out));
            assert_eq!(dependency_triples(&out), before);
            let joined: String = out.tokens.iter().map(|t| t.form.as_str()).collect();
            // Each subtree moves as one contiguous block. Rotation recurses,
            // so a block's internal pair may itself flip at its own head.
            let pos = |f: char| joined.find(f).unwrap();
            assert_eq!(pos('a').abs_diff(pos('b')), 1, "ab split in {joined}");
            assert_eq!(pos('c').abs_diff(pos('d')), 1, "cd split in {joined}");
            if pos('c').min(pos('d')) < pos('a').min(pos('b')) {
                seen_swapped = true;
            }
        }
        assert!(seen_swapped, "block swap never observed in 30 draws");
    }

    #[test]
    fn rotation_skips_ineligible_relations() {
        // Both dependents are punctuation: default eligibility leaves the
        // sentence alone.
        let mut s = sentence_from_heads(&[2, 0, 2]);
        s.tokens[0].deprel = "punct".into();
        s.tokens[2].deprel = "punct".into();
        let cfg = AugmentConfig {
            rotation_probability: 1.0,
            ..AugmentConfig::default()
        };
        for index in 0..10 {
            let mut rng = stream_rng(5, 9, index);
            assert_eq!(rotate_sentence(&s, &cfg, &mut rng).unwrap(), s);
        }
    }

    #[test]
    fn augmented_corpus_bounds_and_determinism() {
        let tb = Treebank::new(vec![
            sentence_from_heads(&[0, 1, 2]),
            sentence_from_heads(&[2, 0, 2]),
        ]);
        let cfg = AugmentConfig {
            copies_per_sentence: 2,
            rotation_probability: 1.0,
            seed: 42,
            ..AugmentConfig::default()
        };
        let first = build_augmented_corpus(&tb, &cfg).unwrap();
        assert!(first.skipped.is_empty());
        assert_eq!(first.treebank.len(), 6);
        assert!(first.treebank.sentences[1].comments[0].starts_with("# augmented_from = "));
        let second = build_augmented_corpus(&tb, &cfg).unwrap();
        assert_eq!(
            crate::conllu::serialize_conllu(&first.treebank),
            crate::conllu::serialize_conllu(&second.treebank)
        );
    }

    #[test]
    fn zero_copies_is_identity() {
        let tb = Treebank::new(vec![sentence_from_heads(&[0, 1])]);
        let cfg = AugmentConfig {
            copies_per_sentence: 0,
            ..AugmentConfig::default()
        };
        let out = build_augmented_corpus(&tb, &cfg).unwrap();
        assert_eq!(out.treebank, tb);
    }

    #[test]
    fn invalid_sentences_are_kept_but_not_copied() {
        let tb = Treebank::new(vec![
            sentence_from_heads(&[0]),
            sentence_from_heads(&[0, 0]),
        ]);
        let cfg = AugmentConfig {
            copies_per_sentence: 1,
            ..AugmentConfig::default()
        };
        let out = build_augmented_corpus(&tb, &cfg).unwrap();
        assert_eq!(out.treebank.len(), 3);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].index, 1);
    }

    #[test]
    fn copies_cap_enforced() {
        let tb = Treebank::new(vec![sentence_from_heads(&[0])]);
        let cfg = AugmentConfig {
            copies_per_sentence: MAX_COPIES_PER_SENTENCE + 1,
            ..AugmentConfig::default()
        };
        assert!(matches!(
            build_augmented_corpus(&tb, &cfg),
            Err(AugmentError::TooManyCopies { .. })
        ));
    }

    fn sentence_with_forms(forms: &[&str]) -> Sentence {
        let tokens = forms
            .iter()
            .enumerate()
            .map(|(i, f)| Token::new(i + 1, f, if i == 0 { 0 } else { 1 }, "dep"))
            .collect();
        Sentence::new(tokens)
    }

    #[test]
    fn negative_sampling_rejects_same_word_multiset() {
        let anchor = sentence_with_forms(&["b", "a"]);
        let tb = Treebank::new(vec![
            sentence_with_forms(&["a", "b"]), // permutation of anchor
            sentence_with_forms(&["c", "d"]),
        ]);
        let mut rng = stream_rng(1, 9, 0);
        for _ in 0..20 {
            let s = sample_negative(&anchor, &tb, &mut rng).unwrap();
            assert_eq!(s.tokens[0].form, "c");
        }
    }

    #[test]
    fn negative_sampling_errors_without_candidates() {
        let anchor = sentence_with_forms(&["a", "b"]);
        let tb = Treebank::new(vec![sentence_with_forms(&["b", "a"])]);
        let mut rng = stream_rng(1, 9, 0);
        assert_eq!(
            sample_negative(&anchor, &tb, &mut rng).unwrap_err(),
            AugmentError::NoEligibleNegative
        );
    }

    #[test]
    fn negative_sampling_is_close_to_uniform() {
        let anchor = sentence_with_forms(&["z", "z"]);
        let tb = Treebank::new(vec![
            sentence_with_forms(&["z", "z"]),
            sentence_with_forms(&["a"]),
            sentence_with_forms(&["b"]),
            sentence_with_forms(&["c"]),
            sentence_with_forms(&["d"]),
        ]);
        let mut rng = stream_rng(99, 9, 0);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let s = sample_negative(&anchor, &tb, &mut rng).unwrap();
            let idx = match s.tokens[0].form.as_str() {
                "a" => 0,
                "b" => 1,
                "c" => 2,
                _ => 3,
            };
            counts[idx] += 1;
        }
        // Binomial(10000, 1/4): mean 2500, sigma ~43.3; allow 3 sigma.
        for &c in &counts {
            let dev = (c as f64 - 2500.0).abs();
            assert!(dev < 3.0 * 43.4, "count {c} deviates by {dev}");
        }
    }

    #[test]
    fn permute_treebank_is_deterministic() {
        let tb = Treebank::new(vec![
            sentence_from_heads(&[0, 1, 1]),
            sentence_from_heads(&[2, 0]),
        ]);
        let (a, maps_a) = permute_treebank(&tb, 5).unwrap();
        let (b, maps_b) = permute_treebank(&tb, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(maps_a, maps_b);
        assert_eq!(maps_a.len(), 2);
        for (sentence, map) in a.sentences.iter().zip(&maps_a) {
            assert!(is_valid(sentence));
            assert_eq!(map.len(), sentence.len());
        }
    }
}
