//! Maximum-spanning-arborescence decoding checked against exhaustive
//! enumeration on small random score matrices.

mod common;

use arbor_core::conllu::{validate_tree, Sentence, Token};
use arbor_core::decode::mst_decode;
use arbor_core::matrix::Matrix;
use arbor_core::model::ScoreTensor;
use arbor_core::rng::stream_rng;
use common::{best_tree_brute_force, is_single_root_tree, tree_score};
use rand::Rng;

fn random_scores<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n + 1, n + 1);
    for h in 0..=n {
        for d in 0..=n {
            m.set(h, d, rng.gen_range(-10.0..10.0));
        }
    }
    // Match the scorer contract: self-arcs are impossible. Column 0 is left
    // as random junk to prove the decoder never reads it.
    for i in 0..=n {
        m.set(i, i, f64::NEG_INFINITY);
    }
    m
}

fn heads_as_sentence(heads: &[usize]) -> Sentence {
    Sentence::new(
        (1..=heads.len())
            .map(|id| Token::new(id, &format!("w{id}"), heads[id - 1], "dep"))
            .collect(),
    )
}

#[test]
fn mst_matches_brute_force_on_500_random_matrices() {
    for case in 0..500u64 {
        let mut rng = stream_rng(0xDEC0DE, 40, case);
        let n = rng.gen_range(1..=7);
        let scores = random_scores(&mut rng, n);
        let decoded = mst_decode(&ScoreTensor::from_arcs(scores.clone()));

        assert_eq!(decoded.len(), n);
        assert!(
            is_single_root_tree(&decoded),
            "case {case}: decoder output is not a single-root tree: {decoded:?}"
        );
        assert!(
            validate_tree(&heads_as_sentence(&decoded)).is_empty(),
            "case {case}: validate_tree rejected the decoded tree"
        );

        let (best, oracle_heads) = best_tree_brute_force(&scores);
        let got = tree_score(&scores, &decoded);
        assert_eq!(
            got, best,
            "case {case} (n={n}): decoder score {got} != oracle {best} \
             (oracle tree {oracle_heads:?}, decoded {decoded:?})"
        );
    }
}

#[test]
fn brute_force_oracle_agrees_with_itself_on_a_known_matrix() {
    // Sanity-check the oracle: 2 tokens, clear best tree 0 -> 1 -> 2.
    let mut m = Matrix::zeros(3, 3);
    m.set(0, 1, 5.0);
    m.set(0, 2, 1.0);
    m.set(1, 2, 4.0);
    m.set(2, 1, 2.0);
    m.set(1, 1, f64::NEG_INFINITY);
    m.set(2, 2, f64::NEG_INFINITY);
    let (best, heads) = best_tree_brute_force(&m);
    assert_eq!(heads, vec![0, 1]);
    assert_eq!(best, 9.0);
}
