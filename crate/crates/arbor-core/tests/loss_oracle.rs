//! The contrastive loss checked against a directly-coded transcription of
//! its defining formula, plus the closed-form two-anchor case.

mod common;

use arbor_core::loss::{cssl_loss, ContrastiveBatch};
use arbor_core::rng::stream_rng;
use common::{cssl_reference_in_batch, random_unit_rows};
use rand::Rng;

#[test]
fn cssl_matches_direct_formula_on_100_random_batches() {
    for case in 0..100u64 {
        let mut rng = stream_rng(0x105505, 41, case);
        let n = rng.gen_range(2..=8);
        let d = rng.gen_range(2..=16);
        let tau = [0.05, 0.1, 0.5, 1.0][rng.gen_range(0..4)];
        let anchors = random_unit_rows(&mut rng, n, d);
        let positives = random_unit_rows(&mut rng, n, d);

        let expected = cssl_reference_in_batch(&anchors, &positives, tau);
        let got = cssl_loss(&ContrastiveBatch {
            anchors,
            positives,
            temperature: tau,
        })
        .unwrap();
        assert!(
            (got - expected).abs() < 1e-6,
            "case {case} (n={n}, d={d}, tau={tau}): {got} vs {expected}"
        );
    }
}

#[test]
fn two_orthogonal_anchors_give_log_one_plus_e_inverse() {
    // Anchors on distinct axes, each positive equal to its anchor, tau = 1:
    // every per-anchor term is -log(e / (e + 1)) = log(1 + e^-1).
    let batch = ContrastiveBatch {
        anchors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        positives: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        temperature: 1.0,
    };
    let got = cssl_loss(&batch).unwrap();
    let expected = (1.0 + (-1.0f64).exp()).ln();
    assert!(
        (got - expected).abs() < 1e-9,
        "{got} vs closed form {expected}"
    );
}
