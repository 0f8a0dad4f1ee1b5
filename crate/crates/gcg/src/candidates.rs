use microlm::{GradSlice, Scalar, TokenId, TokenSeq, Vocab};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::context::Trigger;
use crate::error::Error;
use crate::mask::TokenMask;

/// For each trigger position, the `k` allowed tokens with the
/// most-negative linearized substitution score
/// `g[i][j] - g[i][current_i]`; ties break toward the lower token id.
pub fn top_k_substitutions<F: Scalar>(
    grad: &GradSlice<F>,
    current: &Trigger,
    k: usize,
    mask: &TokenMask,
) -> Result<Vec<Vec<TokenId>>, Error> {
    if k == 0 || k > mask.len() {
        return Err(Error::KTooLarge {
            k,
            allowed: mask.len(),
        });
    }
    assert_eq!(grad.trigger_len, current.len(), "grad/trigger shape mismatch");

    let mut lists = Vec::with_capacity(grad.trigger_len);
    for i in 0..grad.trigger_len {
        let cur = current.ids[i] as usize;
        let base = grad.get(i, cur).to_f64();
        let mut scored: Vec<(f64, TokenId)> = mask
            .ids()
            .iter()
            .map(|&j| (grad.get(i, j as usize).to_f64() - base, j))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        lists.push(scored.into_iter().take(k).map(|(_, j)| j).collect());
    }
    Ok(lists)
}

fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    // modulo draw: bias is negligible at these list sizes and the result
    // is stable across rand versions
    (rng.next_u64() % n as u64) as usize
}

/// Sample `search_width` candidate triggers, each differing from
/// `current` in exactly one position: position uniform, replacement
/// uniform over that position's candidate list (minus the incumbent
/// token). Duplicates are permitted; the draw is deterministic in `rng`.
pub fn sample_candidates(
    current: &Trigger,
    cand_lists: &[Vec<TokenId>],
    search_width: usize,
    rng: &mut ChaCha8Rng,
    vocab: &Vocab,
) -> Result<Vec<Trigger>, Error> {
    assert_eq!(cand_lists.len(), current.len());
    let mut out = Vec::with_capacity(search_width);
    for _ in 0..search_width {
        let pos = uniform_index(rng, current.len());
        let incumbent = current.ids[pos];
        let choices: Vec<TokenId> = cand_lists[pos]
            .iter()
            .copied()
            .filter(|&t| t != incumbent)
            .collect();
        let ids = if choices.is_empty() {
            // degenerate list containing only the incumbent
            current.ids.clone()
        } else {
            let pick = choices[uniform_index(rng, choices.len())];
            let mut ids = current.ids.0.clone();
            ids[pos] = pick;
            TokenSeq(ids)
        };
        out.push(Trigger::from_ids(ids, vocab)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use microlm::GradSlice;
    use rand_chacha::rand_core::SeedableRng;
    use std::collections::BTreeSet;

    fn test_vocab() -> Vocab {
        let mut tokens = vec![b"<pad>".to_vec(), b"<bos>".to_vec(), b"<eos>".to_vec()];
        for ch in b'a'..=b'z' {
            tokens.push(vec![ch]);
        }
        let special: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
        Vocab::from_tokens(tokens, special, false)
    }

    fn trig(ids: Vec<u32>, vocab: &Vocab) -> Trigger {
        Trigger::from_ids(TokenSeq(ids), vocab).unwrap()
    }

    #[test]
    fn k_equal_to_mask_returns_every_allowed_token_sorted_by_score() {
        let vocab = test_vocab();
        let mask = TokenMask::from_ids((3..8).collect());
        let mut grad: GradSlice<f64> = GradSlice::zeros(1, vocab.size());
        for (j, g) in [(3usize, 0.5), (4, -1.0), (5, 2.0), (6, -3.0), (7, 0.0)] {
            grad.data[j] = g;
        }
        let current = trig(vec![7], &vocab);
        let lists = top_k_substitutions(&grad, &current, 5, &mask).unwrap();
        // scores relative to g[current=7]=0.0: 6:-3, 4:-1, 7:0, 3:0.5, 5:2
        assert_eq!(lists[0], vec![6, 4, 7, 3, 5]);
    }

    #[test]
    fn zero_gradient_falls_back_to_lowest_token_ids() {
        let vocab = test_vocab();
        let mask = TokenMask::from_ids((3..13).collect());
        let grad: GradSlice<f64> = GradSlice::zeros(2, vocab.size());
        let current = trig(vec![5, 9], &vocab);
        let lists = top_k_substitutions(&grad, &current, 4, &mask).unwrap();
        assert_eq!(lists[0], vec![3, 4, 5, 6]);
        assert_eq!(lists[1], vec![3, 4, 5, 6]);
    }

    #[test]
    fn random_grad_matches_full_sort_oracle() {
        use rand::Rng;
        let vocab = test_vocab();
        let mask = TokenMask::from_ids((3..29).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut grad: GradSlice<f64> = GradSlice::zeros(3, vocab.size());
        for v in grad.data.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let current = trig(vec![4, 17, 23], &vocab);
        let k = 8;
        let lists = top_k_substitutions(&grad, &current, k, &mask).unwrap();
        for i in 0..3 {
            // oracle: full sort of (score, id) pairs, first k
            let base = grad.get(i, current.ids[i] as usize);
            let mut pairs: Vec<(f64, u32)> = mask
                .ids()
                .iter()
                .map(|&j| (grad.get(i, j as usize) - base, j))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: Vec<u32> = pairs.into_iter().take(k).map(|(_, j)| j).collect();
            assert_eq!(lists[i], expected, "position {i}");
        }
    }

    #[test]
    fn oversized_k_is_an_error() {
        let vocab = test_vocab();
        let mask = TokenMask::from_ids(vec![3, 4]);
        let grad: GradSlice<f64> = GradSlice::zeros(1, vocab.size());
        let current = trig(vec![3], &vocab);
        assert!(top_k_substitutions(&grad, &current, 3, &mask).is_err());
    }

    #[test]
    fn forced_single_candidate_substitution() {
        let vocab = test_vocab();
        let current = trig(vec![5], &vocab);
        let lists = vec![vec![9u32]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cands = sample_candidates(&current, &lists, 1, &mut rng, &vocab).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].ids.0, vec![9]);
        assert_eq!(cands[0].text, "g");
    }

    #[test]
    fn two_way_choice_is_roughly_balanced() {
        let vocab = test_vocab();
        let current = trig(vec![5], &vocab);
        let lists = vec![vec![7u32, 8u32]];
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let cands = sample_candidates(&current, &lists, 1000, &mut rng, &vocab).unwrap();
        let a = cands.iter().filter(|c| c.ids.0 == vec![7]).count();
        let b = cands.iter().filter(|c| c.ids.0 == vec![8]).count();
        assert_eq!(a + b, 1000);
        let ratio = a as f64 / b as f64;
        assert!((0.9..=1.1111).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn candidates_are_hamming_distance_one() {
        let vocab = test_vocab();
        let current = trig(vec![5, 9, 13, 20], &vocab);
        let lists: Vec<Vec<u32>> = vec![
            vec![3, 4, 6],
            vec![10, 11],
            vec![14, 15, 16, 17],
            vec![21],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cands = sample_candidates(&current, &lists, 64, &mut rng, &vocab).unwrap();
        for c in cands {
            let diff = c
                .ids
                .iter()
                .zip(current.ids.iter())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(diff, 1);
        }
    }
}
