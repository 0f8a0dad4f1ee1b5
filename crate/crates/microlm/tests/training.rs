mod common;

use microlm::{load_checkpoint, save_checkpoint, train_lm, ModelConfig, ModelParams, Vocab};

fn small_trainable() -> ModelParams<f32> {
    let corpus = common::mini_corpus();
    let vocab = Vocab::learn(&corpus, 300);
    let config = ModelConfig {
        vocab_size: vocab.size(),
        dim: 32,
        layers: 2,
        heads: 4,
        context_len: 128,
        tied_head: true,
    };
    ModelParams::init_random(config, vocab, 17)
}

fn params_equal(a: &ModelParams<f32>, b: &ModelParams<f32>) -> bool {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    if bits(&a.tok_emb) != bits(&b.tok_emb) || bits(&a.pos_emb) != bits(&b.pos_emb) {
        return false;
    }
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        for (x, y) in [
            (&la.ln1_g, &lb.ln1_g),
            (&la.wq, &lb.wq),
            (&la.wk, &lb.wk),
            (&la.wv, &lb.wv),
            (&la.wo, &lb.wo),
            (&la.ln2_g, &lb.ln2_g),
            (&la.w_fc1, &lb.w_fc1),
            (&la.w_fc2, &lb.w_fc2),
        ] {
            if bits(x) != bits(y) {
                return false;
            }
        }
    }
    bits(&a.lnf_g) == bits(&b.lnf_g)
        && a.head.as_deref().map(bits) == b.head.as_deref().map(bits)
}

#[test]
fn zero_steps_leave_params_unchanged() {
    let params = small_trainable();
    let before = params.clone();
    let corpus = common::mini_corpus();
    let (after, report) = train_lm(params, &corpus, 0, 1e-3, 9).unwrap();
    assert!(params_equal(&before, &after));
    assert_eq!(report.steps, 0);
    assert_eq!(report.initial_mean_loss, report.final_mean_loss);
}

#[test]
fn two_hundred_steps_cut_mean_loss_by_a_fifth() {
    let params = small_trainable();
    let corpus = common::mini_corpus();
    let (_, report) = train_lm(params, &corpus, 200, 3e-3, 9).unwrap();
    let drop = (report.initial_mean_loss - report.final_mean_loss) / report.initial_mean_loss;
    assert!(
        drop >= 0.20,
        "loss only dropped {:.1}% ({:.4} -> {:.4})",
        drop * 100.0,
        report.initial_mean_loss,
        report.final_mean_loss
    );
}

#[test]
fn same_seed_trains_bit_identically() {
    let corpus = common::mini_corpus();
    let (a, _) = train_lm(small_trainable(), &corpus, 50, 1e-3, 123).unwrap();
    let (b, _) = train_lm(small_trainable(), &corpus, 50, 1e-3, 123).unwrap();
    assert!(params_equal(&a, &b));
}

#[test]
fn empty_corpus_is_an_error() {
    let params = small_trainable();
    assert!(train_lm(params, &[], 10, 1e-3, 0).is_err());
}

#[test]
fn absurd_learning_rate_diverges_or_fails_to_improve() {
    let params = small_trainable();
    let corpus = common::mini_corpus();
    // An enormous step size must either blow up to non-finite loss
    // (Diverged) or fail the strict-improvement postcondition.
    let result = train_lm(params, &corpus, 40, 1e9, 9);
    assert!(result.is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let corpus = common::mini_corpus();
    let (params, _) = train_lm(small_trainable(), &corpus, 20, 1e-3, 5).unwrap();
    save_checkpoint(&params, &path).unwrap();
    let loaded: ModelParams<f32> = load_checkpoint(&path).unwrap();
    assert!(params_equal(&params, &loaded));
    assert_eq!(loaded.seed, params.seed);
    assert_eq!(loaded.config, params.config);
    assert_eq!(loaded.vocab.size(), params.vocab.size());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let params = small_trainable();
    save_checkpoint(&params, &path).unwrap();

    let bytes = std::fs::read(&path).unwrap();

    let bad_magic = {
        let mut b = bytes.clone();
        b[0] = b'X';
        b
    };
    let p1 = dir.path().join("bad_magic.ckpt");
    std::fs::write(&p1, bad_magic).unwrap();
    assert!(load_checkpoint::<f32>(&p1).is_err());

    let truncated = &bytes[..bytes.len() - 17];
    let p2 = dir.path().join("truncated.ckpt");
    std::fs::write(&p2, truncated).unwrap();
    assert!(load_checkpoint::<f32>(&p2).is_err());
}

#[test]
fn checkpoint_converts_precision_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let params = small_trainable();
    save_checkpoint(&params, &path).unwrap();
    let as_f64: ModelParams<f64> = load_checkpoint(&path).unwrap();
    assert_eq!(as_f64.tok_emb.len(), params.tok_emb.len());
    assert!((as_f64.tok_emb[5] - params.tok_emb[5] as f64).abs() < 1e-12);
}
