use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Named fractions for one split stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: Vec<(String, f64)>,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn halves(first: &str, second: &str, seed: u64) -> Self {
        SplitSpec {
            fractions: vec![(first.to_string(), 0.5), (second.to_string(), 0.5)],
            seed,
            stratified: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.fractions.iter().map(|f| f.1).sum();
        if self.fractions.is_empty() || (total - 1.0).abs() > 1e-9 || self.fractions.iter().any(|f| !(f.1 >= 0.0)) {
            return invalid(format!("split fractions must be non-negative and sum to 1, got {total}"));
        }
        Ok(())
    }

    /// Partitions `0..labels.len()` by name. Each partition is sorted.
    pub fn apply(&self, labels: &[usize]) -> Result<BTreeMap<String, Vec<usize>>> {
        self.validate()?;
        let fr: Vec<f64> = self.fractions.iter().map(|f| f.1).collect();
        let parts = if self.stratified {
            stratified_split(labels, &fr, self.seed)?
        } else {
            stratified_split(&vec![0; labels.len()], &fr, self.seed)?
        };
        Ok(self.fractions.iter().map(|f| f.0.clone()).zip(parts).collect())
    }
}

/// Largest-remainder allocation of `n` items to `fractions`. Ties go to
/// the partition furthest below its share of everything allocated so far,
/// then to the earlier one.
fn allocate(n: usize, fractions: &[f64], so_far: &[usize]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let grand = (so_far.iter().sum::<usize>() + n) as f64;
    let deficit: Vec<f64> = (0..fractions.len()).map(|i| so_far[i] as f64 - fractions[i] * grand).collect();
    let frac = |i: usize| exact[i] - exact[i].floor();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        frac(b)
            .total_cmp(&frac(a))
            .then(deficit[a].total_cmp(&deficit[b]))
            .then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Per-class shuffled partition of row indices. Every class must have at
/// least as many rows as there are partitions.
pub fn stratified_split(labels: &[usize], fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || (total - 1.0).abs() > 1e-9 || fractions.iter().any(|f| !(*f >= 0.0)) {
        return invalid(format!("split fractions must be non-negative and sum to 1, got {total}"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); fractions.len()];
    for (class, mut rows) in by_class {
        if rows.len() < fractions.len() {
            return invalid(format!(
                "class {class} has {} rows, fewer than the {} partitions",
                rows.len(),
                fractions.len()
            ));
        }
        rows.shuffle(&mut rng);
        let mut start = 0;
        let so_far: Vec<usize> = out.iter().map(Vec::len).collect();
        for (part, n) in out.iter_mut().zip(allocate(rows.len(), fractions, &so_far)) {
            part.extend_from_slice(&rows[start..start + n]);
            start += n;
        }
    }
    for p in &mut out {
        p.sort_unstable();
    }
    Ok(out)
}

/// Nested per-class prefixes: the rows kept at a smaller portion are a
/// subset of those kept at a larger one.
pub fn nested_portion(labels: &[usize], portion: f64, seed: u64) -> Result<Vec<usize>> {
    if !(portion > 0.0 && portion <= 1.0) {
        return invalid(format!("portion {portion} outside (0, 1]"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut rows) in by_class {
        rows.shuffle(&mut rng);
        let keep = ((portion * rows.len() as f64).round() as usize).clamp(1, rows.len());
        out.extend_from_slice(&rows[..keep]);
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn halves_are_stratified() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let parts = stratified_split(&labels, &[0.5, 0.5], 7).unwrap();
        assert_eq!(parts[0].len() + parts[1].len(), 100);
        for c in 0..3 {
            let a = parts[0].iter().filter(|&&i| labels[i] == c).count() as f64;
            let n = labels.iter().filter(|&&y| y == c).count() as f64;
            assert!((a - n / 2.0).abs() <= 1.0);
        }
        assert_eq!(parts, stratified_split(&labels, &[0.5, 0.5], 7).unwrap());
    }

    #[test]
    fn tiny_class_is_named() {
        let err = stratified_split(&[0, 0, 0, 4], &[0.5, 0.5], 0).unwrap_err();
        assert!(err.to_string().contains("class 4"));
    }

    #[test]
    fn named_spec() {
        let s = SplitSpec::halves("dec_train", "dec_test", 1);
        let m = s.apply(&[0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(m["dec_train"].len(), 3);
        let bad = SplitSpec {
            fractions: vec![("a".into(), 0.6), ("b".into(), 0.6)],
            ..s
        };
        assert!(bad.apply(&[0, 1]).is_err());
    }

    #[test]
    fn portions_nest() {
        let labels: Vec<usize> = (0..200).map(|i| i % 4).collect();
        let a = nested_portion(&labels, 0.1, 3).unwrap();
        let b = nested_portion(&labels, 0.5, 3).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|i| b.contains(i)));
        assert!(nested_portion(&labels, 0.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_cover(labels in proptest::collection::vec(0usize..3, 12..120), seed in any::<u64>()) {
            let mut labels = labels;
            labels.extend([0, 0, 0, 1, 1, 1, 2, 2, 2]);
            let parts = stratified_split(&labels, &[0.25, 0.25, 0.5], seed).unwrap();
            let mut all: Vec<usize> = parts.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }
    }
}
