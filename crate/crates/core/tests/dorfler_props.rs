use harmonic_afem::afem::dorfler_mark;
use proptest::prelude::*;

fn sq(v: &[f64], set: impl IntoIterator<Item = usize>) -> f64 {
    set.into_iter().map(|t| v[t] * v[t]).sum()
}

proptest! {
    #[test]
    fn marked_set_is_sufficient_and_minimal(
        v in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0, Just(1.0)], 1..80),
        theta in 0.05f64..=1.0,
    ) {
        let marked = dorfler_mark(&v, theta);
        let total = sq(&v, 0..v.len());
        if total == 0.0 {
            prop_assert!(marked.is_empty());
            return Ok(());
        }
        let target = theta * theta * total;
        prop_assert!(sq(&v, marked.iter().copied()) >= target * (1.0 - 1e-12));
        prop_assert!(marked.iter().all(|&t| v[t] > 0.0));

        // no set of fewer elements can reach the target: the best one takes
        // the largest values
        let mut sorted: Vec<f64> = v.iter().map(|x| x * x).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let best_smaller: f64 = sorted.iter().take(marked.len() - 1).sum();
        prop_assert!(best_smaller < target);

        // every marked value is at least every unmarked one
        let min_marked = marked.iter().map(|&t| v[t]).fold(f64::INFINITY, f64::min);
        prop_assert!((0..v.len()).filter(|t| !marked.contains(t)).all(|t| v[t] <= min_marked));
    }

    #[test]
    fn marking_is_monotone_in_theta(v in prop::collection::vec(0.0f64..5.0, 1..40), a in 0.05f64..=1.0, b in 0.05f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = dorfler_mark(&v, lo);
        let large = dorfler_mark(&v, hi);
        prop_assert!(small.is_subset(&large));
    }
}
