//! Seeded stratified partitioning.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::round;
use crate::rng::SeededRng;

fn members_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    members
}

/// Assigns every index a fold in `0..k`. Within each class (ascending) the
/// members are shuffled and dealt round-robin; the dealer position carries
/// over between classes so fold sizes differ by at most one overall.
pub fn stratified_assign(labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    assert!(k > 0, "k must be positive");
    let mut rng = SeededRng::new(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for mut members in members_by_class(labels) {
        rng.shuffle(&mut members);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    folds
}

/// Splits indices into (train, holdout) with `fraction` of every class held
/// out. A class with at least two members always keeps one on each side.
pub fn stratified_holdout(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for mut members in members_by_class(labels) {
        rng.shuffle(&mut members);
        let n = members.len();
        let mut h = round(fraction * n as f64) as usize;
        if n >= 2 {
            h = h.clamp(1, n - 1);
        } else {
            h = 0;
        }
        hold.extend_from_slice(&members[..h]);
        train.extend_from_slice(&members[h..]);
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assign_balances_each_class() {
        let mut labels = vec![0; 90];
        labels.extend(vec![1; 210]);
        labels.extend(vec![2; 300]);
        let folds = stratified_assign(&labels, 5, 1);
        for f in 0..5 {
            let per: Vec<usize> = (0..3).map(|c| (0..600).filter(|&i| folds[i] == f && labels[i] == c).count()).collect();
            assert_eq!(per, vec![18, 42, 60]);
        }
        assert_eq!(folds, stratified_assign(&labels, 5, 1));
        assert_ne!(folds, stratified_assign(&labels, 5, 2));
    }

    #[test]
    fn carry_over_keeps_folds_within_one() {
        let labels = [0, 0, 0, 1, 1, 1, 1, 2];
        let folds = stratified_assign(&labels, 3, 0);
        let sizes: Vec<usize> = (0..3).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let (train, hold) = stratified_holdout(&labels, 0.2, 3);
        assert_eq!(train.len() + hold.len(), 100);
        assert!(hold.iter().all(|i| !train.contains(i)));
        for c in 0..3 {
            let n = hold.iter().filter(|&&i| labels[i] == c).count();
            assert!((6..=7).contains(&n), "class {c}: {n}");
        }
        let (t, h) = stratified_holdout(&[0, 1, 1], 0.2, 0);
        assert_eq!((t.len(), h.len()), (2, 1));
    }
}
