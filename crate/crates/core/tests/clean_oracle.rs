mod common;

use common::{for_each_fixture, quarter_joint};
use fse::clean::{confident_joint, noise_rate_estimate, prune, CleanError, ProbRecord, PruneStrategy};
use fse::corpus::Label;
use proptest::prelude::*;

fn label(y: usize) -> Label {
    if y == 1 {
        Label::Similar
    } else {
        Label::Dissimilar
    }
}

fn records(labels: &[usize], quarters: &[u32]) -> Vec<ProbRecord> {
    labels
        .iter()
        .zip(quarters)
        .enumerate()
        .map(|(i, (&y, &q))| ProbRecord::from_p_similar(i, label(y), f64::from(q) / 4.0).unwrap())
        .collect()
}

/// Runs the library against the oracle on every fixture of length `n`.
fn check_all(n: usize, grid: &[u32]) -> usize {
    let mut count = 0;
    for_each_fixture(n, grid, |labels, quarters| {
        let got = confident_joint(&records(labels, quarters));
        match quarter_joint(labels, quarters) {
            Some(c) => assert_eq!(got.unwrap().counts, c, "labels {labels:?} quarters {quarters:?}"),
            None => assert!(matches!(got, Err(CleanError::MissingClass(_)))),
        }
        count += 1;
    });
    count
}

#[test]
fn joint_matches_exact_oracle_on_every_small_fixture() {
    let full = [0, 1, 2, 3, 4];
    let mut n_fixtures = 0;
    for n in 1..=6 {
        n_fixtures += check_all(n, &full);
    }
    for n in 7..=8 {
        n_fixtures += check_all(n, &[1, 2, 3]);
    }
    assert!(n_fixtures > 1_000_000);
}

/// Records whose probabilities are the one-hot true class.
fn perfect(truth: &[bool], flips: &[bool]) -> Vec<ProbRecord> {
    truth
        .iter()
        .zip(flips)
        .enumerate()
        .map(|(i, (&t, &f))| ProbRecord::from_p_similar(i, label(usize::from(t ^ f)), f64::from(u8::from(t))).unwrap())
        .collect()
}

fn both_labels_present(truth: &[bool], flips: &[bool]) -> bool {
    let noisy: Vec<bool> = truth.iter().zip(flips).map(|(t, f)| t ^ f).collect();
    noisy.contains(&true) && noisy.contains(&false)
}

proptest! {
    #[test]
    fn perfect_scorer_recovers_the_flip_mask(
        rows in prop::collection::vec((any::<bool>(), prop::bool::weighted(0.2)), 2..60)
    ) {
        let (truth, flips): (Vec<bool>, Vec<bool>) = rows.into_iter().unzip();
        prop_assume!(both_labels_present(&truth, &flips));
        let recs = perfect(&truth, &flips);
        let joint = confident_joint(&recs).unwrap();
        let n_flips = flips.iter().filter(|&&f| f).count();
        prop_assert_eq!(joint.off_diagonal() as usize, n_flips);
        prop_assert_eq!(joint.total() as usize, truth.len());
        let expected = n_flips as f64 / truth.len() as f64;
        prop_assert!((noise_rate_estimate(&joint).unwrap() - expected).abs() < 1e-12);
        let result = prune(&recs, &joint, PruneStrategy::PruneByCount);
        let flipped: Vec<usize> = (0..flips.len()).filter(|&i| flips[i]).collect();
        prop_assert_eq!(result.pruned, flipped);
    }

    #[test]
    fn one_more_flip_adds_one_off_diagonal_count(
        rows in prop::collection::vec((any::<bool>(), prop::bool::weighted(0.2)), 3..60),
        pick in any::<prop::sample::Index>(),
    ) {
        let (truth, flips): (Vec<bool>, Vec<bool>) = rows.into_iter().unzip();
        let clean: Vec<usize> = (0..flips.len()).filter(|&i| !flips[i]).collect();
        prop_assume!(!clean.is_empty());
        let mut more = flips.clone();
        more[clean[pick.index(clean.len())]] = true;
        prop_assume!(both_labels_present(&truth, &flips) && both_labels_present(&truth, &more));
        let before = confident_joint(&perfect(&truth, &flips)).unwrap().off_diagonal();
        let after = confident_joint(&perfect(&truth, &more)).unwrap().off_diagonal();
        prop_assert_eq!(after, before + 1);
    }

    #[test]
    fn pruned_count_is_bounded_by_off_diagonal(
        rows in prop::collection::vec((any::<bool>(), 0.0f64..=1.0), 2..80)
    ) {
        let recs: Vec<ProbRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(y, p))| ProbRecord::from_p_similar(i, label(usize::from(y)), p).unwrap())
            .collect();
        prop_assume!(rows.iter().any(|r| r.0) && rows.iter().any(|r| !r.0));
        let joint = confident_joint(&recs).unwrap();
        let result = prune(&recs, &joint, PruneStrategy::PruneByCount);
        prop_assert!(result.pruned.len() <= joint.off_diagonal() as usize);
        prop_assert_eq!(result.pruned.len() + result.kept.len(), recs.len());
        prop_assert!(joint.total() as usize <= recs.len());
    }
}
