//! Reference classifiers for the benchmarks: the plurality rule and a small
//! axis-aligned Gini tree that stops with the same z-test as the LDA trees.

use nalgebra::DMatrix;

use crate::dataset::{Dataset, Table};
use crate::error::{Error, Result};
use crate::impute::{encode, fit_imputation, ImputationRecord, ImputePolicy};
use crate::stats::split_strength;
use crate::tree::plurality_class;

/// Always predicts the most frequent training class.
#[derive(Debug, Clone, PartialEq)]
pub struct PluralityModel {
    pub class: usize,
    pub proportions: Vec<f64>,
}

impl PluralityModel {
    pub fn fit(ds: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("plurality rule on zero rows".into()));
        }
        let counts = ds.class_counts(rows);
        let n = rows.len() as f64;
        Ok(PluralityModel {
            class: plurality_class(&counts),
            proportions: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    pub fn predict(&self, table: &Table) -> Vec<usize> {
        vec![self.class; table.n_rows()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGiniConfig {
    /// Split accepted when its z-test p-value is at most this.
    pub p_threshold: f64,
    pub min_node_size: Option<usize>,
    pub max_depth: usize,
}

impl Default for AxisGiniConfig {
    fn default() -> Self {
        AxisGiniConfig {
            p_threshold: 0.01,
            min_node_size: None,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum AxisNode {
    Leaf {
        class: usize,
    },
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree on single encoded columns, `x <= threshold` going left.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisGiniTree {
    record: ImputationRecord,
    nodes: Vec<AxisNode>,
}

struct AxisGrower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [usize],
    n_classes: usize,
    config: AxisGiniConfig,
    min_node: usize,
}

impl AxisGrower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best (column, threshold) by weighted child Gini, or `None` when no
    /// column varies.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total = self.counts(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for col in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[(a, col)].total_cmp(&self.x[(b, col)]));
            let mut left = vec![0usize; self.n_classes];
            for k in 0..n - 1 {
                left[self.y[order[k]]] += 1;
                let (v, next) = (self.x[(order[k], col)], self.x[(order[k + 1], col)]);
                if v == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let mut sl = 0.0;
                let mut sr = 0.0;
                for c in 0..self.n_classes {
                    let l = left[c] as f64;
                    let r = (total[c] - left[c]) as f64;
                    sl += l * l;
                    sr += r * r;
                }
                // n · weighted Gini = nl + nr − sl/nl − sr/nr
                let impurity = n as f64 - sl / nl - sr / nr;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, col, 0.5 * (v + next)));
                }
            }
        }
        best.map(|(_, c, t)| (c, t))
    }

    fn grow(&self, idx: Vec<usize>, depth: usize, nodes: &mut Vec<AxisNode>) -> Result<usize> {
        let id = nodes.len();
        let counts = self.counts(&idx);
        let class = plurality_class(&counts);
        nodes.push(AxisNode::Leaf { class });
        let errors = idx.len() - counts[class];
        if errors == 0 || idx.len() < self.min_node || depth >= self.config.max_depth {
            return Ok(id);
        }
        let Some((column, threshold)) = self.best_split(&idx) else {
            return Ok(id);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[(i, column)] <= threshold);
        let after = |part: &[usize]| {
            let c = self.counts(part);
            part.len() - c[plurality_class(&c)]
        };
        let strength = split_strength(idx.len(), errors, after(&l) + after(&r))?;
        if strength.p_value > self.config.p_threshold {
            return Ok(id);
        }
        let left = self.grow(l, depth + 1, nodes)?;
        let right = self.grow(r, depth + 1, nodes)?;
        nodes[id] = AxisNode::Split {
            column,
            threshold,
            left,
            right,
        };
        Ok(id)
    }
}

impl AxisGiniTree {
    pub fn fit(ds: &Dataset, rows: &[usize], config: AxisGiniConfig) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("axis tree on zero rows".into()));
        }
        let record = fit_imputation(&ds.features, rows, ImputePolicy::NodeWise, None)?;
        let x = encode(&ds.features, rows, &record)?.values;
        let y: Vec<usize> = rows.iter().map(|&r| ds.target[r]).collect();
        let j = ds.n_classes();
        let grower = AxisGrower {
            x: &x,
            y: &y,
            n_classes: j,
            config,
            min_node: config.min_node_size.unwrap_or((2 * j).max(10)),
        };
        let mut nodes = Vec::new();
        grower.grow((0..rows.len()).collect(), 0, &mut nodes)?;
        Ok(AxisGiniTree { record, nodes })
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, AxisNode::Leaf { .. }))
            .count()
    }

    pub fn predict(&self, table: &Table) -> Result<Vec<usize>> {
        let rows: Vec<usize> = (0..table.n_rows()).collect();
        let x = encode(table, &rows, &self.record)?.values;
        Ok(rows
            .iter()
            .map(|&r| {
                let mut id = 0;
                loop {
                    match self.nodes[id] {
                        AxisNode::Leaf { class } => return class,
                        AxisNode::Split {
                            column,
                            threshold,
                            left,
                            right,
                        } => id = if x[(r, column)] <= threshold { left } else { right },
                    }
                }
            })
            .collect())
    }
}
