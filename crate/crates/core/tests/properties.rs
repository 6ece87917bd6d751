use std::collections::BTreeSet;

use migate_core::corrupt::{
    corrupt_image, corrupt_text, ngram_cosine, ImageBuffer, NgramCosine, NoiseKind, TextCorruption, TextOp,
};
use migate_core::gate::{caption_count, choose_caption_set, hash_unit};
use migate_core::metrics::delta_p;
use migate_core::pid::{aggregate, exact_oracle, DiscreteJointDistribution, PointwiseInteraction, PointwiseTerms};
use proptest::prelude::*;

fn terms() -> impl Strategy<Value = PointwiseTerms> {
    (
        prop::array::uniform3(-10.0f64..10.0),
        -8.0f64..0.0,
        prop::array::uniform3(-8.0f64..0.0),
    )
        .prop_map(|(h, prior, post)| PointwiseTerms::from_models(h, prior, post))
}

fn distribution() -> impl Strategy<Value = DiscreteJointDistribution> {
    (2usize..=3, 2usize..=3, 2usize..=3).prop_flat_map(|(v, t, y)| {
        prop::collection::vec(0.0f64..1.0, v * t * y).prop_filter_map("non-zero mass", move |w| {
            let total: f64 = w.iter().sum();
            if total <= 1e-3 {
                return None;
            }
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            DiscreteJointDistribution::new(v, t, y, p).ok()
        })
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn chain_identities_hold(t in terms()) {
        let p = PointwiseInteraction::from_terms(&t);
        let [iv, it, ij] = [0, 1, 2].map(|m| t.i_plus[m] - t.i_minus[m]);
        prop_assert!(close(p.r, p.r_plus - p.r_minus, 1e-12));
        prop_assert!(close(p.u_v + p.r, iv, 1e-12));
        prop_assert!(close(p.u_t + p.r, it, 1e-12));
        prop_assert!(close(p.s + p.r + p.u_v + p.u_t, ij, 1e-12));
    }

    #[test]
    fn swapping_terms_swaps_uniqueness(t in terms()) {
        let a = PointwiseInteraction::from_terms(&t);
        let b = PointwiseInteraction::from_terms(&t.swapped());
        prop_assert!(close(a.r, b.r, 1e-12) && close(a.s, b.s, 1e-12));
        prop_assert!(close(a.u_v, b.u_t, 1e-12) && close(a.u_t, b.u_v, 1e-12));
    }

    #[test]
    fn oracle_is_invariant_under_relabeling(d in distribution(), seed in any::<u64>()) {
        let (v, t, y) = d.alphabet_sizes();
        let perm = |n: usize, s: u64| {
            let mut p: Vec<usize> = (0..n).collect();
            p.sort_by_key(|&i| (i as u64 + 1).wrapping_mul(s | 1).rotate_left(17));
            p
        };
        let moved = d.relabeled(&perm(v, seed), &perm(t, seed >> 7), &perm(y, seed >> 13)).unwrap();
        let a = exact_oracle(&d).aggregates;
        let b = exact_oracle(&moved).aggregates;
        prop_assert!(a.max_abs_diff(&b) < 1e-12, "{a:?} vs {b:?}");
    }

    #[test]
    fn oracle_transposition_swaps_uniqueness(d in distribution()) {
        let a = exact_oracle(&d).aggregates;
        let b = exact_oracle(&d.transposed()).aggregates;
        prop_assert!((a.r - b.r).abs() < 1e-12 && (a.s - b.s).abs() < 1e-12);
        prop_assert!((a.u_v - b.u_t).abs() < 1e-12 && (a.u_t - b.u_v).abs() < 1e-12);
    }

    #[test]
    fn aggregates_ignore_sample_order(ts in prop::collection::vec(terms(), 1..40), rot in any::<usize>()) {
        let vals: Vec<_> = ts.iter().map(PointwiseInteraction::from_terms).collect();
        let mut shuffled = vals.clone();
        shuffled.reverse();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        let a = aggregate(&vals).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn caption_sets_nest_and_follow_the_count_law(
        n in 1usize..300,
        mask in prop::collection::vec(any::<bool>(), 300),
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let tiers: Vec<f64> = refs.iter().map(|id| hash_unit(id, "")).collect();
        let valid: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let small = choose_caption_set(&valid, n, lo, &tiers, &refs);
        let large = choose_caption_set(&valid, n, hi, &tiers, &refs);
        prop_assert_eq!(small.len(), ((lo * n as f64 + 1e-9).floor() as usize).min(valid.len()));
        prop_assert_eq!(large.len(), caption_count(n, hi, valid.len()));
        let large: BTreeSet<_> = large.into_iter().collect();
        prop_assert!(small.iter().all(|i| large.contains(i)));
        prop_assert!(small.iter().all(|i| mask[*i]));
    }

    #[test]
    fn tiers_lie_in_unit_interval(id in ".{0,40}", salt in "[a-z:]{0,8}") {
        let u = hash_unit(&id, &salt);
        prop_assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn delta_p_is_scale_invariant(a in 0.0f64..100.0, b in 0.01f64..100.0, c in 0.01f64..100.0) {
        let x = delta_p(a, b).unwrap();
        let y = delta_p(c * a, c * b).unwrap();
        prop_assert!(close(x, y, 1e-12));
    }

    #[test]
    fn accepted_text_meets_similarity_floor(
        text in "[a-z ]{4,60}",
        level in 1u8..=5,
        op in prop::sample::select(TextOp::ALL.to_vec()),
        seed in any::<u64>(),
    ) {
        match corrupt_text(&text, op, level, seed, &NgramCosine).unwrap() {
            TextCorruption::Accepted { text: out, attempts } => {
                prop_assert!(ngram_cosine(&text, &out) >= 0.2);
                prop_assert!((1..=100).contains(&attempts));
            }
            TextCorruption::Excluded { attempts } => prop_assert_eq!(attempts, 100),
        }
    }

    #[test]
    fn image_corruption_is_deterministic(seed in any::<u64>(), level in 1u8..=10, kind in prop::sample::select(NoiseKind::ALL.to_vec())) {
        let img = ImageBuffer::filled(6, 5, 3, 120);
        prop_assert_eq!(corrupt_image(&img, kind, level, seed).unwrap(), corrupt_image(&img, kind, level, seed).unwrap());
    }
}

#[test]
fn severity_tables_grow_monotonically() {
    for kind in NoiseKind::ALL {
        let s: Vec<f64> = (1..=10).map(|l| kind.severity(l).unwrap()).collect();
        for w in s.windows(2) {
            match kind {
                NoiseKind::Shot => assert!(w[1] < w[0], "{kind}: {s:?}"),
                _ => assert!(w[1] > w[0], "{kind}: {s:?}"),
            }
        }
    }
}
