use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix<R: Rng>(rng: &mut R, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

/// `n_per` rows per class; class `k` is shifted by `sep * k` along a
/// class-specific random direction.
pub fn gaussian_classes<R: Rng>(
    rng: &mut R,
    n_per: usize,
    m: usize,
    j: usize,
    sep: f64,
) -> (DMatrix<f64>, Vec<usize>) {
    let mut x = normal_matrix(rng, n_per * j, m);
    let shifts = normal_matrix(rng, j, m);
    let y: Vec<usize> = (0..n_per * j).map(|r| r / n_per).collect();
    for (r, &k) in y.iter().enumerate() {
        for c in 0..m {
            x[(r, c)] += sep * shifts[(k, c)];
        }
    }
    (x, y)
}
