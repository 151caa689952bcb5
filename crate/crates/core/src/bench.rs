//! Synthetic benchmark datasets and a small experiment runner.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::{AxisGiniConfig, AxisGiniTree, PluralityModel};
use crate::dataset::{make_folds, split_rows, Column, Dataset, Table};
use crate::error::{Error, Result};
use crate::tree::{fit_tree, GrowConfig, Method, Stopping};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChessboardParams {
    pub classes: usize,
    pub squares: usize,
    pub per_square: usize,
    pub rotated: bool,
    pub noise_dims: usize,
}

impl ChessboardParams {
    /// 3×3 board, three classes, 2000 points per square.
    pub fn three_by_three() -> Self {
        ChessboardParams {
            classes: 3,
            squares: 3,
            per_square: 2000,
            rotated: false,
            noise_dims: 0,
        }
    }

    /// Two-class 3×3 board turned by 45°.
    pub fn rotated() -> Self {
        ChessboardParams {
            classes: 2,
            squares: 3,
            per_square: 2000,
            rotated: true,
            noise_dims: 0,
        }
    }

    /// Cyclic diagonal tiling: no two edge-adjacent squares share a class.
    pub fn class_of(&self, row: usize, col: usize) -> usize {
        (row + col) % self.classes
    }
}

/// Uniform points in each unit square of a `squares × squares` board,
/// labelled by the square's class, then optionally rotated by 45° about the
/// board centre and padded with standard-normal noise columns.
pub fn gen_chessboard(p: &ChessboardParams, seed: u64) -> Result<Dataset> {
    if p.per_square == 0 || p.squares == 0 || p.classes < 2 {
        return Err(Error::InvalidArgument(format!("bad chessboard parameters {p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.squares * p.squares * p.per_square;
    let width = 2 + p.noise_dims;
    let mut cols = vec![Vec::with_capacity(n); width];
    let mut y = Vec::with_capacity(n);
    let centre = p.squares as f64 / 2.0;
    let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
    for row in 0..p.squares {
        for col in 0..p.squares {
            for _ in 0..p.per_square {
                let mut u = col as f64 + rng.random::<f64>();
                let mut v = row as f64 + rng.random::<f64>();
                if p.rotated {
                    let (du, dv) = (u - centre, v - centre);
                    u = centre + c * du - s * dv;
                    v = centre + s * du + c * dv;
                }
                cols[0].push(Some(u));
                cols[1].push(Some(v));
                for col in cols.iter_mut().skip(2) {
                    col.push(Some(rng.sample(StandardNormal)));
                }
                y.push(p.class_of(row, col));
            }
        }
    }
    numeric_dataset(cols, y, p.classes)
}

/// 64 centres at the corners of the 6-cube, `per_center` Gaussian draws with
/// standard deviation `sd` around each, labelled by coordinate parity.
pub fn gen_xor6d(per_center: usize, sd: f64, seed: u64) -> Result<Dataset> {
    if per_center == 0 || !(sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad xor parameters per_center={per_center} sd={sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<Option<f64>>> = (0..6).map(|_| Vec::with_capacity(64 * per_center)).collect();
    let mut y = Vec::with_capacity(64 * per_center);
    for centre in 0u32..64 {
        for _ in 0..per_center {
            for (d, col) in cols.iter_mut().enumerate() {
                let bit = ((centre >> d) & 1) as f64;
                let e: f64 = rng.sample(StandardNormal);
                col.push(Some(bit + sd * e));
            }
            y.push((centre.count_ones() % 2) as usize);
        }
    }
    numeric_dataset(cols, y, 2)
}

/// A broad majority class A and a compact minority class B sitting on its
/// flank. Under estimated priors LDA predicts (almost) everything as A.
pub fn gen_dominant_class(n_a: usize, n_b: usize, seed: u64) -> Result<Dataset> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidArgument("both classes need at least one row".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<Option<f64>>> = (0..2).map(|_| Vec::with_capacity(n_a + n_b)).collect();
    let mut y = Vec::with_capacity(n_a + n_b);
    for k in 0..n_a + n_b {
        let b = k >= n_a;
        let (mean, sd) = if b { (DOMINANT_B_MEAN, DOMINANT_B_SD) } else { ([0.0, 0.0], 1.0) };
        for d in 0..2 {
            let e: f64 = rng.sample(StandardNormal);
            cols[d].push(Some(mean[d] + sd * e));
        }
        y.push(b as usize);
    }
    let table = numeric_table(cols)?;
    Dataset::new(table, "y", y, vec!["A".into(), "B".into()])
}

const DOMINANT_B_MEAN: [f64; 2] = [1.0, 0.0];
const DOMINANT_B_SD: f64 = 0.25;

/// Two halves of `n_half` rows each. The left half is label noise; the right
/// half is cleanly separable. Splitting off the clean half is a strong split
/// even though no single linear rule beats the plurality rule at the root.
pub fn gen_split_strength_demo(n_half: usize, seed: u64) -> Result<Dataset> {
    if n_half < 4 {
        return Err(Error::InvalidArgument("need at least 4 rows per half".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<Option<f64>>> = (0..2).map(|_| Vec::with_capacity(2 * n_half)).collect();
    let mut y = Vec::with_capacity(2 * n_half);
    for k in 0..2 * n_half {
        let left = k < n_half;
        let class = k % 2;
        let u = if left {
            rng.random::<f64>()
        } else {
            // class 1 on [1, 1.5), class 0 on [1.5, 2)
            1.5 - 0.5 * class as f64 + 0.5 * rng.random::<f64>()
        };
        cols[0].push(Some(u));
        // consecutive rows share x2 so it carries no class signal at all
        let v = if class == 0 { rng.random::<f64>() } else { cols[1][k - 1].unwrap() };
        cols[1].push(Some(v));
        y.push(class);
    }
    numeric_dataset(cols, y, 2)
}

fn numeric_table(cols: Vec<Vec<Option<f64>>>) -> Result<Table> {
    let names = (1..=cols.len()).map(|i| format!("x{i}")).collect();
    Table::new(names, cols.into_iter().map(Column::Numeric).collect())
}

fn numeric_dataset(cols: Vec<Vec<Option<f64>>>, y: Vec<usize>, j: usize) -> Result<Dataset> {
    let classes = (0..j).map(|c| c.to_string()).collect();
    Dataset::new(numeric_table(cols)?, "y", y, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    Chessboard3x3 { per_square: usize, seed: u64 },
    RotatedChessboard { params: ChessboardParams, seed: u64 },
    ChessboardNoise { per_square: usize, noise_dims: usize, seed: u64 },
    Xor6d { per_center: usize, sd: f64, seed: u64 },
    DominantClass { n_a: usize, n_b: usize, seed: u64 },
    SplitStrengthDemo { n_half: usize, seed: u64 },
}

impl SyntheticSpec {
    pub const NAMES: [&'static str; 6] = [
        "chessboard3x3",
        "rotated_chessboard",
        "chessboard_noise",
        "xor6d",
        "dominant_class",
        "split_strength_demo",
    ];

    /// Spec with the default sizes for a named generator.
    pub fn named(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "chessboard3x3" => SyntheticSpec::Chessboard3x3 { per_square: 2000, seed },
            "rotated_chessboard" => SyntheticSpec::RotatedChessboard {
                params: ChessboardParams::rotated(),
                seed,
            },
            "chessboard_noise" => SyntheticSpec::ChessboardNoise {
                per_square: 2000,
                noise_dims: 100,
                seed,
            },
            "xor6d" => SyntheticSpec::Xor6d { per_center: 100, sd: 0.2, seed },
            "dominant_class" => SyntheticSpec::DominantClass { n_a: 809, n_b: 191, seed },
            "split_strength_demo" => SyntheticSpec::SplitStrengthDemo { n_half: 100, seed },
            _ => return Err(Error::UnknownSpec(name.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticSpec::Chessboard3x3 { .. } => "chessboard3x3",
            SyntheticSpec::RotatedChessboard { .. } => "rotated_chessboard",
            SyntheticSpec::ChessboardNoise { .. } => "chessboard_noise",
            SyntheticSpec::Xor6d { .. } => "xor6d",
            SyntheticSpec::DominantClass { .. } => "dominant_class",
            SyntheticSpec::SplitStrengthDemo { .. } => "split_strength_demo",
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match *self {
            SyntheticSpec::Chessboard3x3 { per_square, seed } => gen_chessboard(
                &ChessboardParams {
                    per_square,
                    ..ChessboardParams::three_by_three()
                },
                seed,
            ),
            SyntheticSpec::RotatedChessboard { params, seed } => gen_chessboard(&params, seed),
            SyntheticSpec::ChessboardNoise {
                per_square,
                noise_dims,
                seed,
            } => gen_chessboard(
                &ChessboardParams {
                    per_square,
                    noise_dims,
                    ..ChessboardParams::three_by_three()
                },
                seed,
            ),
            SyntheticSpec::Xor6d { per_center, sd, seed } => gen_xor6d(per_center, sd, seed),
            SyntheticSpec::DominantClass { n_a, n_b, seed } => gen_dominant_class(n_a, n_b, seed),
            SyntheticSpec::SplitStrengthDemo { n_half, seed } => {
                gen_split_strength_demo(n_half, seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Ldatree,
    Foldtree,
    Plurality,
    AxisGini,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::Ldatree => "ldatree",
            BenchMethod::Foldtree => "foldtree",
            BenchMethod::Plurality => "plurality",
            BenchMethod::AxisGini => "axis_gini",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<BenchMethod>> {
        let methods: Vec<BenchMethod> = s
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if methods.is_empty() {
            return Err(Error::InvalidArgument("no methods given".into()));
        }
        Ok(methods)
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ldatree" => Ok(BenchMethod::Ldatree),
            "foldtree" => Ok(BenchMethod::Foldtree),
            "plurality" => Ok(BenchMethod::Plurality),
            "axis_gini" => Ok(BenchMethod::AxisGini),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// Stratified split; `fraction` of the rows train the model.
    Holdout { fraction: f64 },
    Cv { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: BenchMethod,
    pub accuracy: f64,
    /// Across folds for CV; the binomial standard error of a single holdout.
    pub accuracy_sd: f64,
    /// Mean leaf count of the fitted trees (1 for the plurality rule).
    pub leaves: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: SyntheticSpec,
    pub protocol: Protocol,
    pub seed: u64,
    pub n_rows: usize,
    pub n_features: usize,
    pub results: Vec<MethodResult>,
}

impl BenchReport {
    pub fn result(&self, method: BenchMethod) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn to_text(&self) -> String {
        let protocol = match self.protocol {
            Protocol::Holdout { fraction } => format!("holdout {fraction}"),
            Protocol::Cv { k } => format!("{k}-fold cv"),
        };
        let mut out = format!(
            "{}  n={} p={}  {}  seed={}\n",
            self.spec.name(),
            self.n_rows,
            self.n_features,
            protocol,
            self.seed
        );
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>8} {:>8} {:>9}",
            "method", "accuracy", "sd", "leaves", "fit_s"
        );
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<10} {:>9.4} {:>8.4} {:>8.1} {:>9.3}",
                r.method.name(),
                r.accuracy,
                r.accuracy_sd,
                r.leaves,
                r.fit_seconds
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

/// Fits one method on `train` rows, returns (correct on `test`, leaves).
fn evaluate(
    method: BenchMethod,
    ds: &Dataset,
    train: &[usize],
    test: &[usize],
    config: &GrowConfig,
) -> Result<(usize, usize)> {
    let train_ds = ds.select(train);
    let test_table = ds.features.select(test);
    let (pred, leaves) = match method {
        BenchMethod::Ldatree | BenchMethod::Foldtree => {
            let method = if method == BenchMethod::Ldatree {
                Method::LdaTree
            } else {
                Method::FoldTree
            };
            let tree = fit_tree(&train_ds, &GrowConfig { method, ..*config })?;
            (tree.predict(&test_table)?, tree.n_leaves())
        }
        BenchMethod::Plurality => {
            let m = PluralityModel::fit(&train_ds, &train_ds.all_rows())?;
            (m.predict(&test_table), 1)
        }
        BenchMethod::AxisGini => {
            let config = AxisGiniConfig {
                p_threshold: config.prestop_p,
                ..AxisGiniConfig::default()
            };
            let m = AxisGiniTree::fit(&train_ds, &train_ds.all_rows(), config)?;
            (m.predict(&test_table)?, m.n_leaves())
        }
    };
    let correct = pred
        .iter()
        .zip(test)
        .filter(|(p, &r)| **p == ds.target[r])
        .count();
    Ok((correct, leaves))
}

/// Runs every method under one protocol on an already generated dataset.
///
/// LDA trees use `config` (its method field is overridden per method); the
/// axis-aligned baseline stops with `config.prestop_p`.
pub fn run_on_dataset(
    spec: SyntheticSpec,
    ds: &Dataset,
    methods: &[BenchMethod],
    protocol: Protocol,
    seed: u64,
    config: &GrowConfig,
) -> Result<BenchReport> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = match protocol {
        Protocol::Holdout { fraction } => {
            let (train, test) = split_rows(ds, fraction, seed)?;
            vec![(train, test)]
        }
        Protocol::Cv { k } => {
            let plan = make_folds(ds, k, seed)?;
            (0..k)
                .map(|f| (plan.train_positions(f), plan.test_positions(f)))
                .collect()
        }
    };
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let mut accs = Vec::with_capacity(splits.len());
        let mut leaves = 0.0;
        let mut correct_total = 0;
        let mut tested = 0;
        for (train, test) in &splits {
            let (correct, l) = evaluate(method, ds, train, test, config)?;
            accs.push(correct as f64 / test.len() as f64);
            leaves += l as f64;
            correct_total += correct;
            tested += test.len();
        }
        let accuracy = correct_total as f64 / tested as f64;
        let accuracy_sd = if accs.len() > 1 {
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64;
            var.sqrt()
        } else {
            (accuracy * (1.0 - accuracy) / tested as f64).sqrt()
        };
        results.push(MethodResult {
            method,
            accuracy,
            accuracy_sd,
            leaves: leaves / splits.len() as f64,
            fit_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(BenchReport {
        spec,
        protocol,
        seed,
        n_rows: ds.n_rows(),
        n_features: ds.features.n_cols(),
        results,
    })
}

/// Generates the spec's dataset and runs the methods with default tree
/// settings (CV pruning, 10 folds) seeded by `seed`.
pub fn run_bench(
    spec: SyntheticSpec,
    methods: &[BenchMethod],
    protocol: Protocol,
    seed: u64,
) -> Result<BenchReport> {
    let ds = spec.generate()?;
    let config = GrowConfig {
        seed,
        ..GrowConfig::new(Method::LdaTree, Stopping::CvPrune)
    };
    run_on_dataset(spec, &ds, methods, protocol, seed, &config)
}
