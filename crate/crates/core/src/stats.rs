//! Split-strength statistics.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// One-sided two-sample z-test of training accuracy before vs. after a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStrength {
    pub n_total: usize,
    pub n_before: usize,
    pub n_after: usize,
    #[serde(with = "crate::serde_f64")]
    pub z: f64,
    pub p_value: f64,
}

/// Upper tail of the standard normal, `1 - Φ(z)`, accurate far into the tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `n_before` and `n_after` are training error counts out of `n_total`.
///
/// When both error counts coincide at 0 or `n_total` the statistic is
/// undefined and reported as `z = 0`, `p = 0.5`.
pub fn split_strength(n_total: usize, n_before: usize, n_after: usize) -> Result<SplitStrength> {
    if n_total == 0 || n_before > n_total || n_after > n_total {
        return Err(Error::InvalidArgument(format!(
            "split strength needs 0 <= errors <= total >= 1, got ({n_total}, {n_before}, {n_after})"
        )));
    }
    let (n, b, a) = (n_total as f64, n_before as f64, n_after as f64);
    let var = (b * (n - b) + a * (n - a)) / n;
    let z = if var > 0.0 {
        (b - a) / var.sqrt()
    } else if n_before == n_after {
        0.0
    } else if n_before > n_after {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(SplitStrength {
        n_total,
        n_before,
        n_after,
        z,
        p_value: normal_sf(z),
    })
}

/// CART's per-terminal error reduction. Reported, never used for decisions.
pub fn cart_alpha(r_node: f64, r_subtree: f64, n_terminals: usize) -> Result<f64> {
    if n_terminals < 2 {
        return Err(Error::InvalidArgument(format!(
            "subtree needs at least 2 terminals, got {n_terminals}"
        )));
    }
    Ok((r_node - r_subtree) / (n_terminals - 1) as f64)
}

pub fn gini_index(proportions: &[f64]) -> Result<f64> {
    let sum: f64 = proportions.iter().sum();
    if proportions.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "not a probability vector: {proportions:?}"
        )));
    }
    Ok(1.0 - proportions.iter().map(|p| p * p).sum::<f64>())
}

/// Gini index of the empirical distribution of `labels` over `n_classes`.
pub fn gini_of_labels(labels: &[usize], n_classes: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let s = split_strength(200, 100, 50).unwrap();
        assert!((s.z - 5.345).abs() < 0.01, "{}", s.z);
        assert!((s.p_value - 4.5e-8).abs() < 0.5e-8, "{}", s.p_value);
        let s = split_strength(1200, 600, 550).unwrap();
        assert!((s.z - 2.045).abs() < 0.01, "{}", s.z);
        assert!((s.p_value - 0.0204).abs() < 0.001, "{}", s.p_value);
    }

    #[test]
    fn no_change_gives_half() {
        for (n, b) in [(10, 0), (10, 10), (10, 4), (500, 123)] {
            let s = split_strength(n, b, b).unwrap();
            assert_eq!((s.z, s.p_value), (0.0, 0.5));
        }
    }

    #[test]
    fn invalid_counts() {
        assert!(split_strength(0, 0, 0).is_err());
        assert!(split_strength(5, 6, 0).is_err());
        assert!(split_strength(5, 0, 6).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(cart_alpha(100.0, 50.0, 2).unwrap(), 50.0);
        assert_eq!(cart_alpha(600.0, 550.0, 2).unwrap(), 50.0);
        assert_eq!(cart_alpha(7.0, 7.0, 4).unwrap(), 0.0);
        assert!(cart_alpha(1.0, 0.0, 1).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_index(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini_index(&[0.5, 0.5]).unwrap(), 0.5);
        let g = gini_index(&[0.95, 0.05]).unwrap();
        assert!((g - 0.095).abs() < 1e-12);
        assert!(g > 0.0 && g <= 0.1);
        assert!(gini_index(&[0.7, 0.7]).is_err());
        assert!(gini_index(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn normal_tail() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        let p = normal_sf(1.959963984540054);
        assert!((p - 0.025).abs() < 1e-9, "{p}");
    }

    proptest::proptest! {
        #[test]
        fn p_is_upper_normal_tail(n in 1usize..500, b in 0usize..500, a in 0usize..500) {
            let (b, a) = (b % (n + 1), a % (n + 1));
            let s = split_strength(n, b, a).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&s.p_value));
            proptest::prop_assert_eq!(s.z > 0.0, b > a);
            proptest::prop_assert_eq!(s.p_value < 0.5, b > a);
        }
    }
}
