use ndarray::Array2;
use proptest::prelude::*;

use semsum_core::evaluator::evaluate_video;
use semsum_core::losses::{adversarial_losses, reconstruction_loss, sparsity_loss, ssim};
use semsum_core::selector::{Selector, SelectorConfig};
use semsum_core::summarizer::{budget_frames, knapsack, summarize_frames};
use semsum_core::{
    f1_frame, KnapsackValue, LossWeights, Protocol, ScoreMode, ScoreSequence, SummaryMask,
    VideoRecord,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-50.0f64..50.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn mask(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, n)
}

/// Sampled layout: `t` picks with stride, random contiguous shots.
fn layout() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize, Vec<[usize; 2]>)> {
    (2usize..20, 1usize..6).prop_flat_map(|(t, stride)| {
        let n = t * stride;
        (
            prop::collection::vec(0.0f64..=1.0, t),
            prop::collection::btree_set(1..n, 0..n.min(8)),
        )
            .prop_map(move |(scores, cuts)| {
                let mut bounds = vec![0];
                bounds.extend(cuts);
                bounds.push(n);
                let cps = bounds.windows(2).map(|w| [w[0], w[1] - 1]).collect();
                (scores, (0..t).map(|i| i * stride).collect(), n, cps)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scores_stay_in_unit_interval(
        seed in any::<u64>(),
        alpha_raw in -40.0f64..40.0,
        x in matrix(6, 3),
        t in matrix(6, 2),
        mode in prop::sample::select(vec![ScoreMode::Fused, ScoreMode::CosineOnly, ScoreMode::RecurrentOnly]),
    ) {
        let cfg = SelectorConfig { d_c: 3, hidden: 4, mode, ..SelectorConfig::new(3, 2) };
        let mut sel = Selector::<f64>::new(cfg, seed).unwrap();
        sel.set_alpha_raw(alpha_raw);
        let s = sel.select(&x, &t).unwrap();
        prop_assert_eq!(s.len(), 6);
        prop_assert!(s.scores.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn alignment_ignores_positive_frame_scaling(
        seed in any::<u64>(),
        x in matrix(5, 4),
        t in matrix(5, 3),
        frame in 0usize..5,
        scale in 0.01f64..100.0,
    ) {
        let sel = Selector::<f64>::new(SelectorConfig { d_c: 3, hidden: 2, ..SelectorConfig::new(4, 3) }, seed).unwrap();
        let before = sel.cosine_alignment(&x, &t).unwrap().values;
        let mut scaled = x.clone();
        scaled.row_mut(frame).mapv_inplace(|v| v * scale);
        let after = sel.cosine_alignment(&scaled, &t).unwrap().values;
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn knapsack_matches_exhaustive_search(
        items in prop::collection::vec((0u32..=64, 1usize..20), 0..=12),
        cap in 0usize..120,
    ) {
        let values: Vec<f64> = items.iter().map(|&(v, _)| v as f64 / 64.0).collect();
        let weights: Vec<usize> = items.iter().map(|&(_, w)| w).collect();
        let chosen = knapsack(&values, &weights, cap);
        prop_assert!(chosen.iter().map(|&i| weights[i]).sum::<usize>() <= cap);
        let got: f64 = chosen.iter().map(|&i| values[i]).sum();
        let mut best = 0.0f64;
        for m in 0u32..(1 << items.len()) {
            let pick = |i: usize| m >> i & 1 == 1;
            let w: usize = (0..items.len()).filter(|&i| pick(i)).map(|i| weights[i]).sum();
            if w <= cap {
                best = best.max((0..items.len()).filter(|&i| pick(i)).map(|i| values[i]).sum());
            }
        }
        prop_assert_eq!(got, best);
    }

    #[test]
    fn summaries_respect_budget_and_shots(
        (scores, picks, n, cps) in layout(),
        ratio in 0.0f64..=1.0,
        by_length in any::<bool>(),
    ) {
        let value = if by_length { KnapsackValue::MeanTimesLength } else { KnapsackValue::Mean };
        let m = summarize_frames(&scores, &picks, n, &cps, ratio, value).unwrap();
        prop_assert_eq!(m.mask.len(), n);
        prop_assert!(m.selected_frames() <= budget_frames(ratio, n));
        for &[s, e] in &cps {
            prop_assert!(m.mask[s..=e].iter().all(|&v| v == m.mask[s]));
        }
    }

    #[test]
    fn f1_is_symmetric_and_padding_invariant(
        (a, g) in (1usize..40).prop_flat_map(|n| (mask(n), mask(n))),
        pad in 0usize..10,
    ) {
        let f = f1_frame(&a, &g).unwrap();
        prop_assert_eq!(f, f1_frame(&g, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&f));
        let ap = [a.clone(), vec![0; pad]].concat();
        let gp = [g.clone(), vec![0; pad]].concat();
        prop_assert_eq!(f, f1_frame(&ap, &gp).unwrap());
    }

    #[test]
    fn max_user_never_below_mean_user(
        (a, users) in (2usize..30, 1usize..6)
            .prop_flat_map(|(n, u)| (mask(n), prop::collection::vec(mask(n), u))),
    ) {
        let n = a.len();
        let flat: Vec<u8> = users.concat();
        let record = VideoRecord {
            video_id: "video_1".into(),
            visual: Array2::zeros((2, 1)),
            semantic: Array2::zeros((2, 1)),
            n_frames: n,
            picks: vec![0, n - 1],
            change_points: vec![[0, n - 1]],
            user_summaries: Some(Array2::from_shape_vec((users.len(), n), flat).unwrap()),
            gt_score: None,
        };
        let m = SummaryMask { mask: a, budget_ratio: 0.15, selected_shots: vec![] };
        let max = evaluate_video(&m, &record, Protocol::MaxUser).unwrap();
        let mean = evaluate_video(&m, &record, Protocol::MeanUser).unwrap();
        prop_assert!(max >= mean);
    }

    #[test]
    fn ssim_range_and_identity(a in matrix(7, 9), b in matrix(7, 9)) {
        let v = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(v, ssim(&b, &a).unwrap());
    }

    #[test]
    fn losses_are_finite_and_non_negative(
        x in matrix(4, 3), xh in matrix(4, 3), t in matrix(4, 2), th in matrix(4, 2),
        scores in prop::collection::vec(0.0f64..=1.0, 1..10),
        lambda in 0.0f64..=1.0,
        p_real in 0.0f64..=1.0, p_fake in 0.0f64..=1.0,
    ) {
        let w = LossWeights { lambda_s: lambda, ..LossWeights::default() };
        let rec = reconstruction_loss(&x, &xh, &t, &th, &w).unwrap();
        prop_assert!(rec.is_finite() && rec >= 0.0);
        let sp = sparsity_loss(&ScoreSequence::new(scores, ScoreMode::Fused).unwrap(), &w).unwrap();
        prop_assert!(sp.is_finite() && sp >= 0.0);
        let (d, g) = adversarial_losses(p_real, p_fake);
        prop_assert!(d.is_finite() && d >= 0.0 && g.is_finite() && g >= 0.0);
    }
}
