mod common;

use microlm::{grad_wrt_onehot, loss_ce, loss_cw, GradSlice, LossKind, ModelParams, TokenSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences for the one-hot gradient.
///
/// Perturbing one-hot coordinate `(pos, tok)` by `h` adds `h * E[tok]` to
/// the input embedding at `pos`; since the input is `E[id] + P[pos]` and
/// `P[pos]` feeds exactly one position, the same perturbation is realized
/// by adding `h * E[tok]` to the position-embedding row. That keeps the
/// oracle on the ordinary forward path with no special entry points.
fn fd_onehot_grad(
    params: &ModelParams<f64>,
    input: &TokenSeq,
    pos: usize,
    tok: usize,
    span: std::ops::Range<usize>,
    target: &TokenSeq,
    kind: LossKind,
    h: f64,
) -> f64 {
    let d = params.config.dim;
    let eval = |sign: f64| -> f64 {
        let mut p = params.clone();
        for i in 0..d {
            p.pos_emb[pos * d + i] += sign * h * params.tok_emb[tok * d + i];
        }
        let logits = p.forward_logits(input).unwrap();
        match kind {
            LossKind::CrossEntropy => loss_ce(&logits, span.clone(), target).unwrap(),
            LossKind::CarliniWagner { kappa } => {
                loss_cw(&logits, span.clone(), target, kappa).unwrap()
            }
        }
    };
    (eval(1.0) - eval(-1.0)) / (2.0 * h)
}

fn check_grad(kind: LossKind, seed: u64, min_coords: usize) {
    let vocab = common::letters_vocab("abcdefghijklmnop");
    let params: ModelParams<f64> = common::tiny_params(vocab, seed);
    let v = params.config.vocab_size;

    // prompt: positions 0..10, trigger span 2..7, target span 10..14
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let input: TokenSeq = (0..14).map(|_| rng.gen_range(3..v as u32)).collect();
    let target = TokenSeq(input[10..14].to_vec());
    let trig = 2..7usize;
    let span = 10..14usize;

    let grad = grad_wrt_onehot(&params, &input, trig.clone(), span.clone(), &target, kind).unwrap();

    let mut checked = 0;
    let mut strict = 0;
    while checked < min_coords {
        let i = rng.gen_range(0..trig.len());
        let j = rng.gen_range(0..v);
        let analytic = grad.get(i, j);
        let fd = fd_onehot_grad(
            &params,
            &input,
            trig.start + i,
            j,
            span.clone(),
            &target,
            kind,
            1e-5,
        );
        let denom = analytic.abs().max(fd.abs()).max(1e-3);
        let rel = (analytic - fd).abs() / denom;
        assert!(
            rel <= 1e-5,
            "coordinate ({i},{j}): analytic {analytic:.3e} vs fd {fd:.3e}, rel {rel:.3e}"
        );
        if analytic.abs() >= 1e-3 {
            strict += 1;
        }
        checked += 1;
    }
    // make sure the check saw a healthy share of well-conditioned entries
    assert!(strict >= min_coords / 10, "only {strict} large-magnitude coords");
}

#[test]
fn ce_gradient_matches_central_differences() {
    check_grad(LossKind::CrossEntropy, 31, 120);
}

#[test]
fn cw_gradient_matches_central_differences() {
    check_grad(LossKind::CarliniWagner { kappa: 0.5 }, 32, 60);
}

#[test]
fn positions_after_the_target_have_zero_rows() {
    // Causality: a trigger position at or past the target span cannot
    // reach the rows that predict the target, so its gradient row is zero.
    let vocab = common::letters_vocab("abcdefgh");
    let params: ModelParams<f64> = common::tiny_params(vocab, 8);
    let input = TokenSeq(vec![3, 4, 5, 6, 7, 8, 9, 10]);
    let target = TokenSeq(vec![5, 6]);
    // target occupies positions 2..4, trigger after it at 5..7
    let grad = grad_wrt_onehot(
        &params,
        &input,
        5..7,
        2..4,
        &target,
        LossKind::CrossEntropy,
    )
    .unwrap();
    for i in 0..2 {
        for j in 0..params.config.vocab_size {
            assert_eq!(grad.get(i, j), 0.0, "row {i} col {j}");
        }
    }
}

#[test]
fn grad_is_additive_over_contexts() {
    let vocab = common::letters_vocab("abcdefghijkl");
    let params: ModelParams<f64> = common::tiny_params(vocab, 77);
    let a = TokenSeq(vec![3, 4, 5, 6, 7, 8, 9]);
    let b = TokenSeq(vec![10, 11, 3, 6, 5, 4, 12]);
    let ta = TokenSeq(a[5..7].to_vec());
    let tb = TokenSeq(b[5..7].to_vec());
    let kind = LossKind::CrossEntropy;
    let ga = grad_wrt_onehot(&params, &a, 1..4, 5..7, &ta, kind).unwrap();
    let gb = grad_wrt_onehot(&params, &b, 1..4, 5..7, &tb, kind).unwrap();
    let summed = microlm::sum_grad_slices(&[ga.clone(), gb.clone()]);
    for i in 0..3 {
        for j in 0..params.config.vocab_size {
            let expect = ga.get(i, j) + gb.get(i, j);
            assert!((summed.get(i, j) - expect).abs() < 1e-15);
        }
    }
}

#[test]
fn overlapping_spans_are_rejected() {
    let vocab = common::letters_vocab("abcd");
    let params: ModelParams<f64> = common::tiny_params(vocab, 1);
    let input = TokenSeq(vec![3, 4, 5, 6]);
    let target = TokenSeq(vec![5, 6]);
    let err = grad_wrt_onehot(&params, &input, 1..3, 2..4, &target, LossKind::CrossEntropy);
    assert!(err.is_err());
}

#[test]
fn non_finite_gradient_is_reported() {
    let vocab = common::letters_vocab("abcd");
    let mut params: ModelParams<f64> = common::tiny_params(vocab, 1);
    params.tok_emb[3 * params.config.dim] = f64::NAN;
    let input = TokenSeq(vec![3, 4, 5, 6]);
    let target = TokenSeq(vec![5, 6]);
    let err = grad_wrt_onehot(&params, &input, 1..2, 2..4, &target, LossKind::CrossEntropy);
    assert!(matches!(err, Err(microlm::Error::NonFiniteGradient)));
}

#[test]
fn grad_slice_scores_have_expected_shape() {
    let vocab = common::letters_vocab("abcdefgh");
    let params: ModelParams<f64> = common::tiny_params(vocab, 5);
    let input = TokenSeq(vec![3, 4, 5, 6, 7, 8]);
    let target = TokenSeq(vec![7, 8]);
    let g: GradSlice<f64> =
        grad_wrt_onehot(&params, &input, 0..3, 4..6, &target, LossKind::CrossEntropy).unwrap();
    assert_eq!(g.trigger_len, 3);
    assert_eq!(g.vocab, params.config.vocab_size);
    assert!(g.is_finite());
}
