//! Forward variable selection for ULDA.
//!
//! Columns are added greedily, each time picking the one that raises the
//! attained ULDA criterion the most. A step is kept only if the increase is
//! significant; selection stops at the first step that is not.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{select_columns, submatrix};
use crate::ulda::{self, active_columns, attained_trace, solve_discriminant, PriorMode, UldaModel};

/// Increases below this are treated as no gain (collinear candidates).
const MIN_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    /// Significance level of each step.
    pub alpha: f64,
    /// Divide `alpha` by the number of remaining candidates at each step.
    pub bonferroni: bool,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            alpha: 0.05,
            bonferroni: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub column: usize,
    /// Increase of the criterion when the column was added.
    pub gain: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    /// Best candidate at the step that failed the test, if selection stopped
    /// that way.
    pub rejected: Option<SelectionStep>,
}

impl SelectionTrace {
    pub fn selected(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.column).collect()
    }
}

/// p-value for adding one column that raised the criterion by `gain`, given
/// `n` rows, `already` selected columns and `n_classes` classes.
///
/// The increase equals the between-class share of the added column's
/// residual after regressing out the selected ones, so `(n - 1 - already)`
/// times it is asymptotically chi-square with `n_classes - 1` degrees of
/// freedom under the null of no added separation.
pub fn step_p_value(gain: f64, n: usize, already: usize, n_classes: usize) -> f64 {
    let dof = n as f64 - 1.0 - already as f64;
    if dof <= 0.0 || n_classes < 2 {
        return 1.0;
    }
    let stat = dof * gain.max(0.0);
    ChiSquared::new((n_classes - 1) as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(1.0)
}

/// Greedy forward ULDA. Fails with [`Error::NoDiscriminantDirection`] when
/// not even one column passes the step test.
pub fn forward_ulda(
    x: &DMatrix<f64>,
    y: &[usize],
    priors: PriorMode,
    config: ForwardConfig,
) -> Result<(UldaModel, SelectionTrace)> {
    let (model, trace) = forward_ulda_traced(x, y, priors, config);
    model.map(|m| (m, trace))
}

/// Like [`forward_ulda`], but hands back the selection trace even when no
/// model could be built.
pub fn forward_ulda_traced(
    x: &DMatrix<f64>,
    y: &[usize],
    priors: PriorMode,
    config: ForwardConfig,
) -> (Result<UldaModel>, SelectionTrace) {
    let mut trace = SelectionTrace::default();
    if x.iter().any(|v| !v.is_finite()) {
        return (
            Err(Error::InvalidArgument("non-finite design matrix entry".into())),
            trace,
        );
    }
    let all: Vec<usize> = (0..x.ncols()).collect();
    let scatter = match ulda::moments(x, y) {
        Ok(s) => s,
        Err(e) => return (Err(e), trace),
    };
    let n = x.nrows();
    let n_classes = scatter.classes.len();
    let max_abs: Vec<f64> = x.column_iter().map(|c| c.amax()).collect();
    let diag: Vec<f64> = all.iter().map(|&c| scatter.total[(c, c)]).collect();
    let mut candidates = active_columns(&diag, &max_abs, n);

    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0.0;
    while !candidates.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        let mut subset = selected.clone();
        subset.push(0);
        for &c in &candidates {
            *subset.last_mut().unwrap() = c;
            let t = attained_trace(
                &submatrix(&scatter.total, &subset),
                &submatrix(&scatter.between, &subset),
                n,
            );
            let gain = t - current;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let (column, gain) = best.unwrap();
        if gain <= MIN_GAIN {
            break;
        }
        let p_value = step_p_value(gain, n, selected.len(), n_classes);
        let level = if config.bonferroni {
            config.alpha / candidates.len() as f64
        } else {
            config.alpha
        };
        let step = SelectionStep {
            column,
            gain,
            p_value,
        };
        if p_value > level {
            trace.rejected = Some(step);
            break;
        }
        trace.steps.push(step);
        selected.push(column);
        candidates.retain(|&c| c != column);
        current += gain;
    }
    if selected.is_empty() {
        return (Err(Error::NoDiscriminantDirection), trace);
    }

    let sub_abs: Vec<f64> = selected.iter().map(|&c| max_abs[c]).collect();
    let disc = solve_discriminant(
        &submatrix(&scatter.total, &selected),
        &submatrix(&scatter.between, &selected),
        &sub_abs,
        n,
        n_classes - 1,
    );
    let model = disc.map(|d| {
        ulda::assemble(
            selected.clone(),
            d,
            &select_columns(&scatter.class_means, &selected),
            scatter.class_counts.clone(),
            scatter.classes.clone(),
            n,
            priors,
        )
    });
    (model, trace)
}

/// Columns in the order they were accepted.
pub fn rank_columns(trace: &SelectionTrace) -> Result<Vec<usize>> {
    if trace.steps.is_empty() {
        return Err(Error::InvalidArgument("empty selection trace".into()));
    }
    Ok(trace.selected())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::normal_matrix;
    use crate::ulda::fit_ulda_on;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two informative columns at positions `a` and `b` among `m` noise ones.
    fn signal_plus_noise(seed: u64, n: usize, m: usize, a: usize, b: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = normal_matrix(&mut rng, n, m);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        for r in 0..n {
            x[(r, a)] += [0.0, 1.5, 0.0][y[r]];
            x[(r, b)] += [0.0, 0.0, 1.5][y[r]];
        }
        (x, y)
    }

    /// One-way ANOVA F-test p-value for one column; independent screen.
    fn anova_p(x: &DMatrix<f64>, y: &[usize], c: usize, j: usize) -> f64 {
        use statrs::distribution::FisherSnedecor;
        let n = y.len();
        let mean = x.column(c).mean();
        let mut sums = vec![0.0; j];
        let mut counts = vec![0.0; j];
        for r in 0..n {
            sums[y[r]] += x[(r, c)];
            counts[y[r]] += 1.0;
        }
        let ssb: f64 = (0..j).map(|k| counts[k] * (sums[k] / counts[k] - mean).powi(2)).sum();
        let ssw: f64 = (0..n).map(|r| (x[(r, c)] - sums[y[r]] / counts[y[r]]).powi(2)).sum();
        let f = (ssb / (j - 1) as f64) / (ssw / (n - j) as f64);
        FisherSnedecor::new((j - 1) as f64, (n - j) as f64).unwrap().sf(f)
    }

    #[test]
    fn finds_informative_columns_among_noise() {
        let (x, y) = signal_plus_noise(1, 600, 102, 17, 64);
        // the screen agrees these two are the only strong ones
        for c in 0..102 {
            let p = anova_p(&x, &y, c, 3);
            assert_eq!(p < 1e-6, c == 17 || c == 64, "column {c} p={p}");
        }
        let (model, trace) = forward_ulda(&x, &y, PriorMode::Estimated, ForwardConfig::default()).unwrap();
        let ranked = rank_columns(&trace).unwrap();
        assert!(ranked.len() >= 2 && ranked.len() <= 4, "{ranked:?}");
        let mut top2 = ranked[..2].to_vec();
        top2.sort();
        assert_eq!(top2, [17, 64]);
        assert_eq!(model.features, ranked);
    }

    #[test]
    fn single_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = normal_matrix(&mut rng, 100, 1);
        let y: Vec<usize> = (0..100).map(|r| r % 2).collect();
        for r in 0..100 {
            x[(r, 0)] += 3.0 * y[r] as f64;
        }
        let (model, trace) = forward_ulda(&x, &y, PriorMode::Estimated, ForwardConfig::default()).unwrap();
        assert_eq!(trace.selected(), [0]);
        assert_eq!(model.features, [0]);
    }

    #[test]
    fn gains_are_actual_trace_increases() {
        let (x, y) = signal_plus_noise(3, 400, 8, 2, 5);
        let cfg = ForwardConfig { alpha: 0.5, bonferroni: false };
        let (model, trace) = forward_ulda(&x, &y, PriorMode::Estimated, cfg).unwrap();
        let mut prefix = Vec::new();
        let mut last = 0.0;
        for step in &trace.steps {
            prefix.push(step.column);
            let fitted = fit_ulda_on(&x, &y, &prefix, PriorMode::Estimated).unwrap();
            assert!(step.gain > 0.0);
            assert!((fitted.trace - last - step.gain).abs() < 1e-9);
            assert!(step.p_value <= cfg.alpha);
            last = fitted.trace;
        }
        assert!((model.trace - last).abs() < 1e-9);
        if let Some(r) = trace.rejected {
            assert!(r.p_value > cfg.alpha);
        }
    }

    #[test]
    fn pure_noise_selects_nothing() {
        let cfg = ForwardConfig { alpha: 0.01, bonferroni: false };
        let mut empty = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = normal_matrix(&mut rng, 200, 3);
            let y: Vec<usize> = (0..200).map(|r| r % 2).collect();
            if matches!(
                forward_ulda(&x, &y, PriorMode::Estimated, cfg),
                Err(Error::NoDiscriminantDirection)
            ) {
                empty += 1;
            }
        }
        assert!(empty >= 190, "{empty}/200");
    }

    #[test]
    fn column_order_only_matters_through_ties() {
        let (x, y) = signal_plus_noise(4, 300, 6, 1, 4);
        let perm = [5, 3, 0, 4, 2, 1];
        let xp = select_columns(&x, &perm);
        let cfg = ForwardConfig::default();
        let (_, a) = forward_ulda(&x, &y, PriorMode::Estimated, cfg).unwrap();
        let (_, b) = forward_ulda(&xp, &y, PriorMode::Estimated, cfg).unwrap();
        let mapped: Vec<usize> = b.selected().iter().map(|&c| perm[c]).collect();
        assert_eq!(a.selected(), mapped);
    }

    #[test]
    fn empty_trace_cannot_be_ranked() {
        assert!(rank_columns(&SelectionTrace::default()).is_err());
        let t = SelectionTrace {
            steps: vec![
                SelectionStep { column: 5, gain: 0.3, p_value: 0.0 },
                SelectionStep { column: 2, gain: 0.1, p_value: 0.01 },
            ],
            rejected: None,
        };
        assert_eq!(rank_columns(&t).unwrap(), [5, 2]);
    }
}
