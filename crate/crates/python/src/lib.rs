//! Python module `foldtree`: fit, predict, save and load LDA-split trees,
//! and run the synthetic benchmarks.

use std::collections::HashSet;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ::foldtree::bench::{run_on_dataset, BenchMethod, Protocol, SyntheticSpec};
use ::foldtree::dataset::{default_na_tokens, load_csv, load_csv_with_schema, write_csv, Column, Dataset, Table};
use ::foldtree::forward::ForwardConfig;
use ::foldtree::impute::ImputePolicy;
use ::foldtree::tree::{fit_tree, load_model, save_model, GrowConfig, Method, Stopping, TreeModel};
use ::foldtree::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_config(
    method: &str,
    stopping: &str,
    imputation: &str,
    seed: u64,
    folds: usize,
    prestop_p: f64,
    growth_p: f64,
    alpha: f64,
    bonferroni: bool,
) -> PyResult<GrowConfig> {
    let method: Method = method.parse().map_err(py_err)?;
    let stopping = match stopping {
        "prestop" => Stopping::Prestop,
        "cv" => Stopping::CvPrune,
        s => return Err(PyValueError::new_err(format!("stopping must be `prestop` or `cv`, got `{s}`"))),
    };
    let imputation = match imputation {
        "node" => ImputePolicy::NodeWise,
        "root" => ImputePolicy::RootNode,
        s => return Err(PyValueError::new_err(format!("imputation must be `node` or `root`, got `{s}`"))),
    };
    for (name, v) in [("prestop_p", prestop_p), ("growth_p", growth_p), ("alpha", alpha)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(PyValueError::new_err(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    if folds < 2 {
        return Err(PyValueError::new_err("folds must be at least 2"));
    }
    Ok(GrowConfig {
        imputation,
        seed,
        folds,
        prestop_p,
        growth_p,
        forward: ForwardConfig { alpha, bonferroni },
        ..GrowConfig::new(method, stopping)
    })
}

/// Numeric table from row-major values; NaN and None are missing.
fn numeric_table(x: Vec<Vec<Option<f64>>>, names: Vec<String>) -> PyResult<Table> {
    let m = names.len();
    if let Some(bad) = x.iter().position(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!("row {bad} has {} values, expected {m}", x[bad].len())));
    }
    let columns = (0..m)
        .map(|c| Column::Numeric(x.iter().map(|r| r[c].filter(|v| !v.is_nan())).collect()))
        .collect();
    Table::new(names, columns).map_err(py_err)
}

fn na_set(na: Option<Vec<String>>) -> HashSet<String> {
    let mut t = default_na_tokens();
    t.extend(na.unwrap_or_default());
    t
}

/// A fitted LDATree or FoLDTree.
#[pyclass(name = "Tree", module = "foldtree")]
pub struct PyTree {
    model: TreeModel,
}

impl PyTree {
    fn table_for(&self, x: Vec<Vec<Option<f64>>>) -> PyResult<Table> {
        numeric_table(x, self.model.schema.iter().map(|(n, _)| n.clone()).collect())
    }
}

#[pymethods]
impl PyTree {
    /// Fits on numeric rows `x` with string labels `y`.
    #[staticmethod]
    #[pyo3(signature = (x, y, feature_names=None, method="ldatree", stopping="cv", imputation="node",
        seed=0, folds=10, prestop_p=0.01, growth_p=0.6, alpha=0.05, bonferroni=true))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        x: Vec<Vec<Option<f64>>>,
        y: Vec<String>,
        feature_names: Option<Vec<String>>,
        method: &str,
        stopping: &str,
        imputation: &str,
        seed: u64,
        folds: usize,
        prestop_p: f64,
        growth_p: f64,
        alpha: f64,
        bonferroni: bool,
    ) -> PyResult<Self> {
        let config = grow_config(method, stopping, imputation, seed, folds, prestop_p, growth_p, alpha, bonferroni)?;
        if x.len() != y.len() {
            return Err(PyValueError::new_err(format!("{} rows but {} labels", x.len(), y.len())));
        }
        let m = x.first().map_or(0, Vec::len);
        let names = feature_names.unwrap_or_else(|| (1..=m).map(|i| format!("x{i}")).collect());
        let table = numeric_table(x, names)?;
        let mut classes: Vec<String> = y.clone();
        classes.sort();
        classes.dedup();
        let target = y.iter().map(|l| classes.binary_search(l).unwrap()).collect();
        let ds = Dataset::new(table, "y", target, classes).map_err(py_err)?;
        Ok(PyTree { model: fit_tree(&ds, &config).map_err(py_err)? })
    }

    /// Fits on a CSV file; non-numeric columns are categorical.
    #[staticmethod]
    #[pyo3(signature = (path, target, method="ldatree", stopping="cv", imputation="node",
        seed=0, folds=10, prestop_p=0.01, growth_p=0.6, alpha=0.05, bonferroni=true, na=None))]
    #[allow(clippy::too_many_arguments)]
    fn fit_csv(
        path: &str,
        target: &str,
        method: &str,
        stopping: &str,
        imputation: &str,
        seed: u64,
        folds: usize,
        prestop_p: f64,
        growth_p: f64,
        alpha: f64,
        bonferroni: bool,
        na: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let config = grow_config(method, stopping, imputation, seed, folds, prestop_p, growth_p, alpha, bonferroni)?;
        let ds = load_csv(path, target, &na_set(na)).map_err(py_err)?;
        Ok(PyTree { model: fit_tree(&ds, &config).map_err(py_err)? })
    }

    fn predict(&self, x: Vec<Vec<Option<f64>>>) -> PyResult<Vec<String>> {
        let pred = self.model.predict(&self.table_for(x)?).map_err(py_err)?;
        Ok(pred.into_iter().map(|c| self.model.classes[c].clone()).collect())
    }

    /// One row of class probabilities per input row, in `classes` order.
    fn predict_proba(&self, x: Vec<Vec<Option<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let p = self.model.predict_proba(&self.table_for(x)?).map_err(py_err)?;
        Ok(p.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    #[pyo3(signature = (path, na=None))]
    fn predict_csv(&self, path: &str, na: Option<Vec<String>>) -> PyResult<Vec<String>> {
        let (table, _) = load_csv_with_schema(path, &self.model.schema, Some(&self.model.target_name), &na_set(na))
            .map_err(py_err)?;
        let pred = self.model.predict(&table).map_err(py_err)?;
        Ok(pred.into_iter().map(|c| self.model.classes[c].clone()).collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.model, path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTree { model: load_model(path).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.model.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTree { model: TreeModel::from_json(text).map_err(py_err)? })
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.model.classes.clone()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.model.schema.iter().map(|(n, _)| n.clone()).collect()
    }

    #[getter]
    fn n_leaves(&self) -> usize {
        self.model.n_leaves()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.model.depth()
    }

    #[getter]
    fn training_accuracy(&self) -> f64 {
        self.model.training_accuracy
    }

    fn __repr__(&self) -> String {
        format!(
            "Tree(method={:?}, leaves={}, depth={})",
            self.model.config.method,
            self.model.n_leaves(),
            self.model.depth()
        )
    }
}

/// Runs a synthetic benchmark and returns the report as JSON.
#[pyfunction]
#[pyo3(name = "bench", signature = (spec, methods="ldatree,foldtree,plurality,axis_gini", cv=None, holdout=0.5, seed=0))]
fn py_bench(spec: &str, methods: &str, cv: Option<usize>, holdout: f64, seed: u64) -> PyResult<String> {
    let methods = BenchMethod::parse_list(methods).map_err(py_err)?;
    let spec = SyntheticSpec::named(spec, seed).map_err(py_err)?;
    let protocol = match cv {
        Some(k) => Protocol::Cv { k },
        None => Protocol::Holdout { fraction: holdout },
    };
    let ds = spec.generate().map_err(py_err)?;
    let config = GrowConfig { seed, ..GrowConfig::new(Method::LdaTree, Stopping::CvPrune) };
    let report = run_on_dataset(spec, &ds, &methods, protocol, seed, &config).map_err(py_err)?;
    report.to_json().map_err(py_err)
}

/// Writes a synthetic benchmark dataset to a CSV file with target column `y`.
#[pyfunction]
#[pyo3(signature = (spec, path, seed=0))]
fn generate(spec: &str, path: &str, seed: u64) -> PyResult<()> {
    let ds = SyntheticSpec::named(spec, seed).and_then(|s| s.generate()).map_err(py_err)?;
    write_csv(&ds, path).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "foldtree")]
fn foldtree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_function(wrap_pyfunction!(py_bench, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add("SPECS", SyntheticSpec::NAMES.to_vec())?;
    Ok(())
}
