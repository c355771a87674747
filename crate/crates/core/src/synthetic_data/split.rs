use rand::seq::SliceRandom;

use super::DomainData;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Stratified split: each class keeps `round(ratio * n_k)` samples in the
/// first half, clamped so both halves hold at least one. Sample order within
/// each half follows the input.
pub fn split_train_val(
    domain: &DomainData,
    ratio: f64,
    seed: u64,
) -> Result<(DomainData, DomainData)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut rng = rng_from(seed, &[domain.index() as u64]);
    let mut in_train = vec![false; domain.len()];
    for (k, mut idx) in domain.class_indices().into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::Split(format!(
                "domain {} class {k} has {} sample(s), need at least 2",
                domain.index(),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for &j in &idx[..n_train] {
            in_train[j] = true;
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (s, t) in domain.samples().iter().zip(in_train) {
        if t {
            a.push(s.clone())
        } else {
            b.push(s.clone())
        }
    }
    let k = domain.num_classes();
    Ok((
        DomainData::new(domain.index(), a, k)?,
        DomainData::new(domain.index(), b, k)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic_data::Sample;
    use proptest::prelude::*;

    fn balanced(n: usize) -> DomainData {
        let s = (0..n).map(|j| Sample::new(vec![j as f64], j % 2)).collect();
        DomainData::new(0, s, 2).unwrap()
    }

    #[test]
    fn eighty_twenty() {
        let (tr, va) = split_train_val(&balanced(100), 0.8, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        assert_eq!(
            tr.class_indices().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![40, 40]
        );
        assert_eq!(
            va.class_indices().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![10, 10]
        );
    }

    #[test]
    fn deterministic_and_rejects_singletons() {
        let d = balanced(30);
        assert_eq!(
            split_train_val(&d, 0.7, 9).unwrap(),
            split_train_val(&d, 0.7, 9).unwrap()
        );
        let s = vec![
            Sample::new(vec![0.0], 0),
            Sample::new(vec![1.0], 0),
            Sample::new(vec![2.0], 1),
        ];
        let d = DomainData::new(0, s, 2).unwrap();
        assert!(matches!(split_train_val(&d, 0.5, 0), Err(Error::Split(_))));
        assert!(split_train_val(&balanced(10), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn union_is_input(n in 4usize..80, ratio in 0.05f64..0.95, seed in 0u64..100) {
            let d = balanced(n);
            let (a, b) = split_train_val(&d, ratio, seed).unwrap();
            let key = |s: &Sample| (s.x[0].to_bits(), s.y);
            let mut all: Vec<_> = a.samples().iter().chain(b.samples()).map(key).collect();
            let mut orig: Vec<_> = d.samples().iter().map(key).collect();
            all.sort();
            orig.sort();
            prop_assert_eq!(all, orig);
        }
    }
}
