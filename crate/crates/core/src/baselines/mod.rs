//! Comparison methods: pooled ERM (optionally restricted to the most recent
//! domains or given the domain index as an extra input) and the vanilla
//! prototypical network whose support and query come from the same domain.

mod erm;
mod proto;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use erm::{
    cross_entropy, pool_sources, predict_erm, train_erm, train_erm_on_pool, ErmConfig, ErmModel,
    ErmOutcome, TargetIndex,
};
pub use proto::train_proto_vanilla;

/// How the domain index is fed to ERM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IndexMode {
    #[default]
    None,
    /// Append `i / (m - 1)`.
    ScalarConcat,
    /// Append the one-hot vector `e_i` of length `m`.
    OneHotConcat,
    /// Flattened `x (outer) e_i`, length `feature_dim * m`.
    OuterProduct,
}

impl IndexMode {
    pub fn augmented_dim(self, feature_dim: usize, m: usize) -> usize {
        match self {
            IndexMode::None => feature_dim,
            IndexMode::ScalarConcat => feature_dim + 1,
            IndexMode::OneHotConcat => feature_dim + m,
            IndexMode::OuterProduct => feature_dim * m,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(IndexMode::None),
            "scalar" | "scalar-concat" => Ok(IndexMode::ScalarConcat),
            "onehot" | "one-hot" | "one-hot-concat" | "onehot-concat" => {
                Ok(IndexMode::OneHotConcat)
            }
            "outer" | "outer-product" => Ok(IndexMode::OuterProduct),
            other => Err(Error::Config(format!("unknown index mode `{other}`"))),
        }
    }
}

/// Appends (or multiplies in) domain index `i` of `m` seen domains.
pub fn augment_with_index(x: &[f64], i: usize, mode: IndexMode, m: usize) -> Result<Vec<f64>> {
    if i >= m {
        return Err(Error::Config(format!(
            "domain index {i} >= {m} seen domains"
        )));
    }
    Ok(augment_unchecked(x, i as f64, i, mode, m))
}

/// `scalar` feeds `ScalarConcat`; `slot` feeds the one-hot and outer modes.
pub(crate) fn augment_unchecked(
    x: &[f64],
    scalar: f64,
    slot: usize,
    mode: IndexMode,
    m: usize,
) -> Vec<f64> {
    match mode {
        IndexMode::None => x.to_vec(),
        IndexMode::ScalarConcat => {
            let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
            let mut v = x.to_vec();
            v.push(scalar / denom);
            v
        }
        IndexMode::OneHotConcat => {
            let mut v = x.to_vec();
            v.extend((0..m).map(|j| if j == slot { 1.0 } else { 0.0 }));
            v
        }
        IndexMode::OuterProduct => {
            let mut v = vec![0.0; x.len() * m];
            // row-major x (outer) e: entry (a, j) = x[a] * e[j]
            for (a, xa) in x.iter().enumerate() {
                v[a * m + slot] = *xa;
            }
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        assert_eq!(
            augment_with_index(&[1.0, 2.0], 0, IndexMode::None, 4).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            augment_with_index(&[5.0], 1, IndexMode::OneHotConcat, 3).unwrap(),
            vec![5.0, 0.0, 1.0, 0.0]
        );
        let (a, b) = (0.7, -1.3);
        assert_eq!(
            augment_with_index(&[a, b], 0, IndexMode::OuterProduct, 2).unwrap(),
            vec![a, 0.0, b, 0.0]
        );
        assert_eq!(
            augment_with_index(&[a, b], 1, IndexMode::OuterProduct, 2).unwrap(),
            vec![0.0, a, 0.0, b]
        );
        assert_eq!(
            augment_with_index(&[a], 2, IndexMode::ScalarConcat, 5).unwrap(),
            vec![a, 0.5]
        );
        assert!(augment_with_index(&[a], 3, IndexMode::OneHotConcat, 3).is_err());
    }

    #[test]
    fn mode_names() {
        for (s, m) in [
            ("none", IndexMode::None),
            ("scalar", IndexMode::ScalarConcat),
            ("one-hot", IndexMode::OneHotConcat),
            ("outer-product", IndexMode::OuterProduct),
        ] {
            assert_eq!(IndexMode::parse(s).unwrap(), m);
        }
        assert!(IndexMode::parse("film").is_err());
    }

    proptest! {
        #[test]
        fn shape_law(x in proptest::collection::vec(-5.0f64..5.0, 1..8), m in 1usize..9, seed in 0usize..100) {
            let i = seed % m;
            for mode in [IndexMode::None, IndexMode::ScalarConcat, IndexMode::OneHotConcat, IndexMode::OuterProduct] {
                let v = augment_with_index(&x, i, mode, m).unwrap();
                prop_assert_eq!(v.len(), mode.augmented_dim(x.len(), m));
            }
            let oh = augment_with_index(&x, i, IndexMode::OneHotConcat, m).unwrap();
            prop_assert_eq!(oh[x.len()..].iter().filter(|v| **v == 1.0).count(), 1);
            prop_assert_eq!(oh[x.len()..].iter().sum::<f64>(), 1.0);
        }
    }
}
