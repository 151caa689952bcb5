//! Uncorrelated linear discriminant analysis.
//!
//! The transformation maximizes `trace((WᵀS_T W)⁺ (WᵀS_B W))` subject to
//! `WᵀS_T W = I`. It is computed by whitening with the truncated spectrum of
//! the total scatter and then diagonalizing the whitened between-class
//! scatter, which realizes the pseudo-inverse without ever forming one and
//! stays well defined when the scatter matrices are singular.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_means, pinv_psd, select_columns, submatrix, sym_eigen_desc};

/// Lower bound on `1 - λ` when turning a discriminant eigenvalue into a
/// within-class variance; `λ = 1` means the classes do not overlap at all on
/// that axis.
const WITHIN_VARIANCE_FLOOR: f64 = 1e-8;

/// A column counts as constant when its spread is below this fraction of its
/// largest magnitude.
const CONSTANT_COLUMN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    #[default]
    Estimated,
    Equal,
}

/// Total, between-class and within-class scatter of a design matrix.
#[derive(Debug, Clone)]
pub struct ScatterDecomposition {
    pub total: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
    /// One row per present class, in `classes` order.
    pub class_means: DMatrix<f64>,
    pub grand_mean: DVector<f64>,
    pub class_counts: Vec<usize>,
    /// Global class ids present in `y`, ascending.
    pub classes: Vec<usize>,
}

/// Class ids present in `y` (ascending) and each row's position in that list.
fn local_classes(y: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let max = y.iter().copied().max().unwrap_or(0);
    let mut seen = vec![false; max + 1];
    for &c in y {
        seen[c] = true;
    }
    let classes: Vec<usize> = (0..=max).filter(|&c| seen[c]).collect();
    let mut slot = vec![usize::MAX; max + 1];
    for (i, &c) in classes.iter().enumerate() {
        slot[c] = i;
    }
    (classes, y.iter().map(|&c| slot[c]).collect())
}

/// Means and the total / between scatter; the parts needed for fitting.
pub(crate) struct Moments {
    pub total: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub class_means: DMatrix<f64>,
    pub grand_mean: DVector<f64>,
    pub class_counts: Vec<usize>,
    pub classes: Vec<usize>,
    pub local: Vec<usize>,
}

pub(crate) fn moments(x: &DMatrix<f64>, y: &[usize]) -> Result<Moments> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let (classes, local) = local_classes(y);
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let j = classes.len();
    let grand_mean = column_means(x);
    let mut class_counts = vec![0usize; j];
    let mut sums = DMatrix::<f64>::zeros(j, m);
    for (r, &k) in local.iter().enumerate() {
        class_counts[k] += 1;
        for c in 0..m {
            sums[(k, c)] += x[(r, c)];
        }
    }
    let class_means = DMatrix::from_fn(j, m, |k, c| sums[(k, c)] / class_counts[k] as f64);

    let mut centered = x.clone();
    for (c, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-grand_mean[c]);
    }
    let total = centered.tr_mul(&centered);

    let mut between = DMatrix::<f64>::zeros(m, m);
    for k in 0..j {
        let d: DVector<f64> = class_means.row(k).transpose() - &grand_mean;
        between += (&d * d.transpose()) * class_counts[k] as f64;
    }
    Ok(Moments {
        total,
        between,
        class_means,
        grand_mean,
        class_counts,
        classes,
        local,
    })
}

pub fn compute_scatter(x: &DMatrix<f64>, y: &[usize]) -> Result<ScatterDecomposition> {
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument("scatter needs at least 2 rows".into()));
    }
    let mo = moments(x, y)?;
    let mut resid = x.clone();
    for (r, &k) in mo.local.iter().enumerate() {
        for c in 0..x.ncols() {
            resid[(r, c)] -= mo.class_means[(k, c)];
        }
    }
    let within = resid.tr_mul(&resid);
    Ok(ScatterDecomposition {
        total: mo.total,
        between: mo.between,
        within,
        class_means: mo.class_means,
        grand_mean: mo.grand_mean,
        class_counts: mo.class_counts,
        classes: mo.classes,
    })
}

/// Output of the whitening / diagonalization step.
pub(crate) struct Discriminant {
    /// `m × q`, rows of constant columns are zero.
    pub transform: DMatrix<f64>,
    /// Decreasing, in `(0, 1]`.
    pub eigenvalues: Vec<f64>,
    /// Numerical rank of the total scatter over all `m` columns.
    pub rank: usize,
}

/// Which of the columns (given their total-scatter diagonal and largest
/// magnitude) carry any variation.
pub(crate) fn active_columns(total_diag: &[f64], max_abs: &[f64], n: usize) -> Vec<usize> {
    (0..total_diag.len())
        .filter(|&c| {
            let sd = (total_diag[c].max(0.0) / n.max(1) as f64).sqrt();
            sd > CONSTANT_COLUMN_RTOL * max_abs[c] && sd > 0.0
        })
        .collect()
}

/// Sum of the whitened between-class eigenvalues for the given scatter pair,
/// i.e. the attained criterion, without building the transformation.
pub(crate) fn attained_trace(total: &DMatrix<f64>, between: &DMatrix<f64>, n: usize) -> f64 {
    let m = total.nrows();
    if m == 0 {
        return 0.0;
    }
    let scale: Vec<f64> = (0..m).map(|i| total[(i, i)].sqrt()).collect();
    let rt = DMatrix::from_fn(m, m, |r, c| total[(r, c)] / (scale[r] * scale[c]));
    let rb = DMatrix::from_fn(m, m, |r, c| between[(r, c)] / (scale[r] * scale[c]));
    let (vals, vecs) = sym_eigen_desc(&rt);
    let tol = m.max(n) as f64 * f64::EPSILON * vals[0].max(0.0);
    let mut sum = 0.0;
    for (k, &v) in vals.iter().enumerate() {
        if v > tol {
            let u = vecs.column(k);
            sum += (u.transpose() * &rb * u)[(0, 0)] / v;
        }
    }
    sum
}

/// Solves the ULDA criterion on a scatter pair.
///
/// `max_abs` holds each column's largest absolute value in the fitting data
/// and is used only to recognize constant columns.
pub(crate) fn solve_discriminant(
    total: &DMatrix<f64>,
    between: &DMatrix<f64>,
    max_abs: &[f64],
    n: usize,
    max_q: usize,
) -> Result<Discriminant> {
    let m = total.nrows();
    let diag: Vec<f64> = (0..m).map(|i| total[(i, i)]).collect();
    let active = active_columns(&diag, max_abs, n);
    if active.is_empty() {
        return Err(Error::NoDiscriminantDirection);
    }
    let scale: Vec<f64> = active.iter().map(|&c| diag[c].sqrt()).collect();
    let a = active.len();
    let rt = DMatrix::from_fn(a, a, |r, c| {
        total[(active[r], active[c])] / (scale[r] * scale[c])
    });
    let rb = DMatrix::from_fn(a, a, |r, c| {
        between[(active[r], active[c])] / (scale[r] * scale[c])
    });

    let (t_vals, t_vecs) = sym_eigen_desc(&rt);
    let tol = m.max(n) as f64 * f64::EPSILON * t_vals[0].max(0.0);
    let rank = t_vals.iter().filter(|&&v| v > tol).count();
    if rank == 0 {
        return Err(Error::NoDiscriminantDirection);
    }
    // Whitening map B with Bᵀ R_T B = I on the numerical range of R_T.
    let whiten = DMatrix::from_fn(a, rank, |r, c| t_vecs[(r, c)] / t_vals[c].sqrt());
    let wb = whiten.tr_mul(&rb) * &whiten;
    let (b_vals, b_vecs) = sym_eigen_desc(&wb);
    let b_tol = m.max(n) as f64 * f64::EPSILON;
    let q = b_vals.iter().take(max_q).filter(|&&v| v > b_tol).count();
    if q == 0 {
        return Err(Error::NoDiscriminantDirection);
    }
    let w_active = &whiten * b_vecs.columns(0, q);
    let mut transform = DMatrix::zeros(m, q);
    for (r, &c) in active.iter().enumerate() {
        for k in 0..q {
            transform[(c, k)] = w_active[(r, k)] / scale[r];
        }
    }
    let eigenvalues = b_vals[..q].iter().map(|v| v.min(1.0)).collect();
    Ok(Discriminant {
        transform,
        eigenvalues,
        rank,
    })
}

/// A fitted ULDA classifier over a subset of design-matrix columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "repr::UldaRepr", try_from = "repr::UldaRepr")]
pub struct UldaModel {
    /// Design-matrix column ids the model reads, in order.
    pub features: Vec<usize>,
    /// Global class ids the model was fitted on, ascending.
    pub classes: Vec<usize>,
    /// `features.len() × q`.
    pub transform: DMatrix<f64>,
    /// Projected class means, one row per entry of `classes`.
    pub centroids: DMatrix<f64>,
    /// Discriminant eigenvalues, decreasing.
    pub eigenvalues: Vec<f64>,
    /// Pooled within-class variance along each discriminant axis.
    pub variances: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub priors: Vec<f64>,
    pub prior_mode: PriorMode,
    /// Attained criterion value.
    pub trace: f64,
    /// The fitting design matrix (with intercept) had an exact linear
    /// dependency among the used columns.
    pub rank_deficient: bool,
}

pub fn priors_for(counts: &[usize], mode: PriorMode) -> Vec<f64> {
    let j = counts.len() as f64;
    match mode {
        PriorMode::Equal => vec![1.0 / j; counts.len()],
        PriorMode::Estimated => {
            let n: usize = counts.iter().sum();
            counts.iter().map(|&c| c as f64 / n as f64).collect()
        }
    }
}

pub fn fit_ulda(x: &DMatrix<f64>, y: &[usize], priors: PriorMode) -> Result<UldaModel> {
    let all: Vec<usize> = (0..x.ncols()).collect();
    fit_ulda_on(x, y, &all, priors)
}

/// Fits on the columns `features` of `x`.
pub fn fit_ulda_on(
    x: &DMatrix<f64>,
    y: &[usize],
    features: &[usize],
    priors: PriorMode,
) -> Result<UldaModel> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite design matrix entry".into()));
    }
    let sub = select_columns(x, features);
    let mo = moments(&sub, y)?;
    let max_abs: Vec<f64> = sub.column_iter().map(|c| c.amax()).collect();
    let n = sub.nrows();
    let j = mo.classes.len();
    let disc = solve_discriminant(&mo.total, &mo.between, &max_abs, n, j - 1)?;
    Ok(assemble(
        features.to_vec(),
        disc,
        &mo.class_means,
        mo.class_counts,
        mo.classes,
        n,
        priors,
    ))
}

/// Builds the model from precomputed pieces (class means over `features`).
pub(crate) fn assemble(
    features: Vec<usize>,
    disc: Discriminant,
    class_means: &DMatrix<f64>,
    class_counts: Vec<usize>,
    classes: Vec<usize>,
    n: usize,
    priors: PriorMode,
) -> UldaModel {
    let j = classes.len();
    let dof = n.saturating_sub(j).max(1) as f64;
    let centroids = class_means * &disc.transform;
    let variances = disc
        .eigenvalues
        .iter()
        .map(|&l| (1.0 - l).max(WITHIN_VARIANCE_FLOOR) / dof)
        .collect();
    let trace = disc.eigenvalues.iter().sum();
    UldaModel {
        rank_deficient: disc.rank < features.len(),
        features,
        priors: priors_for(&class_counts, priors),
        classes,
        transform: disc.transform,
        centroids,
        eigenvalues: disc.eigenvalues,
        variances,
        class_counts,
        prior_mode: priors,
        trace,
    }
}

impl UldaModel {
    pub fn n_components(&self) -> usize {
        self.transform.ncols()
    }

    /// Same discriminant axes with a different prior.
    pub fn with_priors(&self, mode: PriorMode) -> UldaModel {
        let mut m = self.clone();
        m.priors = priors_for(&m.class_counts, mode);
        m.prior_mode = mode;
        m
    }

    /// Discriminant scores of the rows of a full design matrix.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if let Some(&bad) = self.features.iter().find(|&&f| f >= x.ncols()) {
            return Err(Error::DimensionMismatch {
                expected: bad + 1,
                found: x.ncols(),
            });
        }
        Ok(select_columns(x, &self.features) * &self.transform)
    }

    /// Unnormalized log posteriors, one column per entry of `classes`.
    fn log_scores(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.project(x)?;
        let j = self.classes.len();
        let log_prior: Vec<f64> = self.priors.iter().map(|p| p.ln()).collect();
        Ok(DMatrix::from_fn(z.nrows(), j, |r, k| {
            let mut d = 0.0;
            for a in 0..z.ncols() {
                let diff = z[(r, a)] - self.centroids[(k, a)];
                d += diff * diff / self.variances[a];
            }
            log_prior[k] - 0.5 * d
        }))
    }

    /// Posterior class probabilities over `classes`, via log-sum-exp.
    pub fn posterior(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut s = self.log_scores(x)?;
        for mut row in s.row_iter_mut() {
            let top = row.max();
            row.apply(|v| *v = (*v - top).exp());
            let total = row.sum();
            row /= total;
        }
        Ok(s)
    }

    /// Posterior spread over all `n_classes` global classes.
    pub fn posterior_global(&self, x: &DMatrix<f64>, n_classes: usize) -> Result<DMatrix<f64>> {
        let local = self.posterior(x)?;
        let mut out = DMatrix::zeros(local.nrows(), n_classes);
        for (k, &c) in self.classes.iter().enumerate() {
            out.set_column(c, &local.column(k));
        }
        Ok(out)
    }

    /// Highest-posterior class, restricted to `allowed` global classes when
    /// given. Ties go to the lowest class id.
    pub fn predict(&self, x: &DMatrix<f64>, allowed: Option<&[usize]>) -> Result<Vec<usize>> {
        let allowed_local: Vec<usize> = match allowed {
            None => (0..self.classes.len()).collect(),
            Some(set) => {
                if set.is_empty() {
                    return Err(Error::InvalidArgument("empty allowed class set".into()));
                }
                (0..self.classes.len())
                    .filter(|&k| set.contains(&self.classes[k]))
                    .collect()
            }
        };
        if allowed_local.is_empty() {
            return Err(Error::InvalidArgument(
                "no allowed class is known to the model".into(),
            ));
        }
        let s = self.log_scores(x)?;
        Ok(s.row_iter()
            .map(|row| self.classes[argmax_among(row.iter().copied(), &allowed_local)])
            .collect())
    }
}

/// Index of the largest value among the listed positions; first wins ties.
pub(crate) fn argmax_among(values: impl Iterator<Item = f64>, among: &[usize]) -> usize {
    let v: Vec<f64> = values.collect();
    let mut best = among[0];
    for &k in &among[1..] {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

/// `trace((WᵀS_T W)⁺ (WᵀS_B W))` for an arbitrary transformation.
pub fn criterion_trace(w: &DMatrix<f64>, total: &DMatrix<f64>, between: &DMatrix<f64>) -> f64 {
    let a = w.tr_mul(total) * w;
    let b = w.tr_mul(between) * w;
    (pinv_psd(&a) * b).trace()
}

/// Criterion restricted to a column subset of the scatter matrices.
pub fn criterion_trace_on(
    w: &DMatrix<f64>,
    features: &[usize],
    scatter: &ScatterDecomposition,
) -> f64 {
    criterion_trace(
        w,
        &submatrix(&scatter.total, features),
        &submatrix(&scatter.between, features),
    )
}

mod repr {
    use super::*;

    /// Wire form: matrices as dense row-major arrays.
    #[derive(Serialize, Deserialize)]
    pub struct UldaRepr {
        features: Vec<usize>,
        classes: Vec<usize>,
        n_components: usize,
        transform: Vec<f64>,
        centroids: Vec<f64>,
        eigenvalues: Vec<f64>,
        variances: Vec<f64>,
        class_counts: Vec<usize>,
        priors: Vec<f64>,
        prior_mode: PriorMode,
        trace: f64,
        rank_deficient: bool,
    }

    fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
        m.transpose().as_slice().to_vec()
    }

    impl From<UldaModel> for UldaRepr {
        fn from(m: UldaModel) -> Self {
            UldaRepr {
                n_components: m.transform.ncols(),
                transform: row_major(&m.transform),
                centroids: row_major(&m.centroids),
                features: m.features,
                classes: m.classes,
                eigenvalues: m.eigenvalues,
                variances: m.variances,
                class_counts: m.class_counts,
                priors: m.priors,
                prior_mode: m.prior_mode,
                trace: m.trace,
                rank_deficient: m.rank_deficient,
            }
        }
    }

    impl TryFrom<UldaRepr> for UldaModel {
        type Error = String;

        fn try_from(r: UldaRepr) -> Result<Self, String> {
            let q = r.n_components;
            let p = r.features.len();
            let j = r.classes.len();
            if r.transform.len() != p * q || r.centroids.len() != j * q {
                return Err("ULDA matrix sizes disagree with feature/class counts".into());
            }
            if r.eigenvalues.len() != q
                || r.variances.len() != q
                || r.priors.len() != j
                || r.class_counts.len() != j
            {
                return Err("ULDA vector lengths disagree".into());
            }
            Ok(UldaModel {
                transform: DMatrix::from_row_slice(p, q, &r.transform),
                centroids: DMatrix::from_row_slice(j, q, &r.centroids),
                features: r.features,
                classes: r.classes,
                eigenvalues: r.eigenvalues,
                variances: r.variances,
                class_counts: r.class_counts,
                priors: r.priors,
                prior_mode: r.prior_mode,
                trace: r.trace,
                rank_deficient: r.rank_deficient,
            })
        }
    }
}
