use std::collections::HashSet;

use moss_core::stability::{empirical_stability, pairwise_similarity, similarity_matrix, Metric};
use moss_core::Error;
use proptest::prelude::*;

fn set_strategy() -> impl Strategy<Value = HashSet<u8>> {
    proptest::collection::hash_set(0u8..30, 1..12)
}

const SYMMETRIC: [Metric; 3] = [Metric::Dsc, Metric::Jaccard, Metric::Ochiai];

proptest! {
    #[test]
    fn similarities_are_bounded(a in set_strategy(), b in set_strategy()) {
        for metric in [Metric::Dsc, Metric::Jaccard, Metric::Ochiai, Metric::Pog] {
            let s = pairwise_similarity(&a, &b, metric).unwrap();
            prop_assert!((0.0..=1.0).contains(&s), "{metric}: {s}");
            prop_assert_eq!(pairwise_similarity(&a, &a, metric).unwrap(), 1.0);
        }
    }

    #[test]
    fn symmetric_metrics_are_symmetric(a in set_strategy(), b in set_strategy()) {
        for metric in SYMMETRIC {
            prop_assert_eq!(pairwise_similarity(&a, &b, metric).unwrap(), pairwise_similarity(&b, &a, metric).unwrap());
        }
    }

    #[test]
    fn dice_is_a_function_of_jaccard(a in set_strategy(), b in set_strategy()) {
        let d = pairwise_similarity(&a, &b, Metric::Dsc).unwrap();
        let j = pairwise_similarity(&a, &b, Metric::Jaccard).unwrap();
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() <= 1e-12);
    }

    #[test]
    fn empirical_stability_ignores_order(
        sets in proptest::collection::vec(set_strategy(), 2..8),
        perm in Just(()).prop_perturb(|_, mut rng| rng.random::<u64>()),
    ) {
        let mut shuffled = sets.clone();
        // deterministic shuffle from the drawn seed
        let n = shuffled.len();
        let mut state = perm;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        for metric in [Metric::Dsc, Metric::Jaccard, Metric::Ochiai, Metric::Pog] {
            let a = empirical_stability(&sets, metric).unwrap();
            let b = empirical_stability(&shuffled, metric).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn hand_examples() {
    let a: HashSet<u8> = [1, 2, 3, 4].into();
    let b: HashSet<u8> = [3, 4, 5].into();
    assert!((pairwise_similarity(&a, &b, Metric::Dsc).unwrap() - 4.0 / 7.0).abs() < 1e-15);
    assert!((pairwise_similarity(&a, &b, Metric::Jaccard).unwrap() - 0.4).abs() < 1e-15);
    assert!((pairwise_similarity(&a, &b, Metric::Ochiai).unwrap() - 2.0 / 12f64.sqrt()).abs() < 1e-15);
    assert!((pairwise_similarity(&a, &b, Metric::Pog).unwrap() - 0.5).abs() < 1e-15);

    let m = similarity_matrix(&[a.clone(), b.clone()], Metric::Dsc).unwrap();
    assert_eq!(m[0][0], 1.0);
    assert_eq!(m[0][1], m[1][0]);
    assert!((empirical_stability(&[a.clone(), b], Metric::Dsc).unwrap() - 4.0 / 7.0).abs() < 1e-15);
}

#[test]
fn degenerate_inputs_are_errors() {
    let a: HashSet<u8> = [1].into();
    assert!(matches!(pairwise_similarity(&a, &HashSet::new(), Metric::Dsc), Err(Error::EmptyRuleSet)));
    assert!(matches!(empirical_stability(&[a], Metric::Dsc), Err(Error::TooFewSets(1))));
    assert!(matches!("cosine".parse::<Metric>(), Err(Error::InvalidConfig(_))));
    assert_eq!("Jaccard".parse::<Metric>().unwrap(), Metric::Jaccard);
}
