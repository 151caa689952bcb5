//! LDATree / FoLDTree: decision trees whose splits are multi-way ULDA
//! classifiers.
//!
//! Each node fits ULDA (or forward ULDA) on its rows and routes every row to
//! the child keyed by its predicted class. Leaves predict with their node
//! model, which is the node's ULDA fit when that beats the plurality rule on
//! the node's training rows.

mod grow;
mod io;
mod prune;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Dataset, Table};
use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, SelectionTrace};
use crate::impute::{encode, ImputationRecord, ImputePolicy};
use crate::stats::SplitStrength;
use crate::ulda::{PriorMode, UldaModel};

pub use grow::{find_split, fit_tree, grow, grow_rows};
pub use io::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use prune::{prune, prune_to, pruning_sequence, subtree_strength, CvPoint, PruneStep, PruningReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// ULDA on all columns.
    LdaTree,
    /// Forward-selected ULDA.
    FoldTree,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ldatree" => Ok(Method::LdaTree),
            "foldtree" => Ok(Method::FoldTree),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stopping {
    /// Accept splits with p-value at most `prestop_p`; no pruning.
    Prestop,
    /// Grow with `growth_p`, then choose a pruned subtree by cross-validation.
    CvPrune,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    pub method: Method,
    pub stopping: Stopping,
    pub prestop_p: f64,
    pub growth_p: f64,
    pub forward: ForwardConfig,
    pub imputation: ImputePolicy,
    pub folds: usize,
    pub seed: u64,
    /// Smallest node that may be split; `None` means `max(2J, 10)`.
    pub min_node_size: Option<usize>,
    pub max_depth: usize,
    /// FoLDTree: when forward selection accepts no column, fit the node on
    /// the single best column instead of giving up on the node.
    pub single_column_fallback: bool,
}

impl Default for GrowConfig {
    fn default() -> Self {
        GrowConfig {
            method: Method::LdaTree,
            stopping: Stopping::CvPrune,
            prestop_p: 0.01,
            growth_p: 0.6,
            forward: ForwardConfig::default(),
            imputation: ImputePolicy::NodeWise,
            folds: 10,
            seed: 0,
            min_node_size: None,
            max_depth: 30,
            single_column_fallback: true,
        }
    }
}

impl GrowConfig {
    pub fn new(method: Method, stopping: Stopping) -> Self {
        GrowConfig {
            method,
            stopping,
            ..Default::default()
        }
    }

    /// p-value threshold for accepting a split during growth.
    pub fn accept_p(&self) -> f64 {
        match self.stopping {
            Stopping::Prestop => self.prestop_p,
            Stopping::CvPrune => self.growth_p,
        }
    }

    pub fn min_node_size_for(&self, n_classes: usize) -> usize {
        self.min_node_size.unwrap_or((2 * n_classes).max(10))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeModel {
    Ulda { model: UldaModel },
    Plurality { class: usize },
}

/// Why a node's split model was refitted with equal priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSwitch {
    /// Predicted-class Gini index in (0, 0.1].
    GiniBand,
    /// Every row predicted into one class although the node is impure.
    SingleClassPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub model: UldaModel,
    /// Predicted class → child node id.
    pub children: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Strength of the evaluated split, accepted or not.
    pub strength: Option<SplitStrength>,
    /// Gini index of the classes predicted under estimated priors.
    pub predicted_gini: Option<f64>,
    pub prior_switch: Option<PriorSwitch>,
    /// Prior mode of the split model that was evaluated.
    pub prior_mode: Option<PriorMode>,
    /// Column used when forward selection accepted none (FoLDTree only).
    pub fallback_column: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    /// Training rows reaching this node. Not persisted.
    #[serde(skip)]
    pub rows: Vec<usize>,
    pub n_rows: usize,
    pub class_counts: Vec<usize>,
    pub imputation: ImputationRecord,
    pub node_model: NodeModel,
    /// Training errors of `node_model` on this node's rows.
    pub node_errors: usize,
    /// Forward-selection record of the node's ULDA fit (FoLDTree only).
    pub selection: Option<SelectionTrace>,
    pub split: Option<Split>,
    pub diagnostics: Diagnostics,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn children(&self) -> impl Iterator<Item = usize> + '_ {
        self.split.iter().flat_map(|s| s.children.values().copied())
    }

    /// Class proportions among this node's training rows.
    pub fn class_proportions(&self) -> Vec<f64> {
        let n = self.n_rows.max(1) as f64;
        self.class_counts.iter().map(|&c| c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    /// Node 0 is the root; ids equal positions.
    pub nodes: Vec<TreeNode>,
    pub classes: Vec<String>,
    pub target_name: String,
    pub schema: Vec<(String, ColumnKind)>,
    pub config: GrowConfig,
    pub pruning: Option<PruningReport>,
    pub training_accuracy: f64,
}

/// Per-row prediction output of a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePrediction {
    pub labels: Vec<usize>,
    /// `n × J`.
    pub posteriors: DMatrix<f64>,
    /// Leaf node reached by each row.
    pub leaves: Vec<usize>,
}

impl TreeModel {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.is_leaf() {
                out.push(i);
            } else {
                stack.extend(node.children());
            }
        }
        out
    }

    /// Training errors when `id` keeps its current subtree.
    pub fn subtree_errors(&self, id: usize) -> usize {
        self.leaves_under(id)
            .iter()
            .map(|&l| self.nodes[l].node_errors)
            .sum()
    }

    /// True when any ULDA model in the tree saw an exactly rank-deficient
    /// design matrix.
    pub fn has_rank_deficiency(&self) -> bool {
        self.nodes.iter().any(|n| {
            let split = n.split.as_ref().is_some_and(|s| s.model.rank_deficient);
            let model = matches!(&n.node_model, NodeModel::Ulda { model } if model.rank_deficient);
            split || model
        })
    }

    fn check_schema(&self, table: &Table) -> Result<()> {
        let got = table.schema();
        for (i, (name, kind)) in self.schema.iter().enumerate() {
            match got.get(i) {
                Some((n, k)) if n == name && k == kind => {}
                Some((n, k)) => {
                    return Err(Error::SchemaMismatch(format!(
                        "column {i}: expected `{name}` ({kind:?}), found `{n}` ({k:?})"
                    )))
                }
                None => {
                    return Err(Error::SchemaMismatch(format!("column `{name}` is missing")))
                }
            }
        }
        if got.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} columns, found {}",
                self.schema.len(),
                got.len()
            )));
        }
        Ok(())
    }

    /// Routes every row of `table` to a leaf and evaluates the leaf models.
    ///
    /// At an internal node the split model only chooses among classes that
    /// have a child branch.
    pub fn predict_full(&self, table: &Table) -> Result<TreePrediction> {
        self.predict_masked(table, None)
    }

    /// Like [`TreeModel::predict_full`], treating nodes flagged in
    /// `collapsed` as leaves.
    pub(crate) fn predict_masked(
        &self,
        table: &Table,
        collapsed: Option<&[bool]>,
    ) -> Result<TreePrediction> {
        self.check_schema(table)?;
        let n = table.n_rows();
        let mut out = TreePrediction {
            labels: vec![0; n],
            posteriors: DMatrix::zeros(n, self.n_classes()),
            leaves: vec![0; n],
        };
        let mut stack = vec![(0usize, (0..n).collect::<Vec<usize>>())];
        while let Some((id, rows)) = stack.pop() {
            if rows.is_empty() {
                continue;
            }
            let node = &self.nodes[id];
            let split = node.split.as_ref().filter(|_| !collapsed.is_some_and(|c| c[id]));
            match split {
                Some(split) => {
                    let x = encode(table, &rows, &node.imputation)?;
                    let allowed: Vec<usize> = split.children.keys().copied().collect();
                    let pred = split.model.predict(&x.values, Some(&allowed))?;
                    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                    for (&r, c) in rows.iter().zip(pred) {
                        groups.entry(c).or_default().push(r);
                    }
                    for (c, g) in groups {
                        stack.push((split.children[&c], g));
                    }
                }
                None => self.evaluate_leaf(node, table, &rows, &mut out)?,
            }
        }
        Ok(out)
    }

    fn evaluate_leaf(
        &self,
        node: &TreeNode,
        table: &Table,
        rows: &[usize],
        out: &mut TreePrediction,
    ) -> Result<()> {
        match &node.node_model {
            NodeModel::Plurality { class } => {
                let props = node.class_proportions();
                for &r in rows {
                    out.labels[r] = *class;
                    out.leaves[r] = node.id;
                    for (c, &p) in props.iter().enumerate() {
                        out.posteriors[(r, c)] = p;
                    }
                }
            }
            NodeModel::Ulda { model } => {
                let x = encode(table, rows, &node.imputation)?;
                let labels = model.predict(&x.values, None)?;
                let post = model.posterior_global(&x.values, self.n_classes())?;
                for (i, &r) in rows.iter().enumerate() {
                    out.labels[r] = labels[i];
                    out.leaves[r] = node.id;
                    out.posteriors.set_row(r, &post.row(i));
                }
            }
        }
        Ok(())
    }

    pub fn predict(&self, table: &Table) -> Result<Vec<usize>> {
        Ok(self.predict_full(table)?.labels)
    }

    pub fn predict_proba(&self, table: &Table) -> Result<DMatrix<f64>> {
        Ok(self.predict_full(table)?.posteriors)
    }

    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        let pred = self.predict(&ds.features)?;
        Ok(accuracy(&pred, &ds.target))
    }

    /// Turns `id` into a leaf that predicts with its stored node model.
    /// Descendants stay in the table until [`TreeModel::compact`].
    pub(crate) fn collapse(&mut self, id: usize) {
        self.nodes[id].split = None;
    }

    /// Drops nodes unreachable from the root and renumbers in preorder.
    pub(crate) fn compact(&mut self) {
        let mut order = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            order.push(i);
            let mut kids: Vec<usize> = self.nodes[i].children().collect();
            kids.reverse();
            stack.extend(kids);
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        let mut nodes: Vec<TreeNode> = order.iter().map(|&i| self.nodes[i].clone()).collect();
        for node in &mut nodes {
            node.id = new_id[node.id];
            node.parent = node.parent.map(|p| new_id[p]);
            if let Some(split) = &mut node.split {
                for child in split.children.values_mut() {
                    *child = new_id[*child];
                }
            }
        }
        self.nodes = nodes;
    }

    /// Checks the structural invariants: a single root, valid child ids,
    /// every non-root node reached exactly once, strictly shrinking row
    /// counts along every edge.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ModelFormat(m));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut seen = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return bad(format!("node at position {i} has id {}", node.id));
            }
            if let Some(split) = &node.split {
                if split.children.len() < 2 {
                    return bad(format!("node {i} splits into {} children", split.children.len()));
                }
                for &c in split.children.values() {
                    if c >= self.nodes.len() || c == 0 {
                        return bad(format!("node {i} has invalid child {c}"));
                    }
                    seen[c] += 1;
                    if self.nodes[c].n_rows >= node.n_rows {
                        return bad(format!("child {c} is not smaller than node {i}"));
                    }
                    if self.nodes[c].parent != Some(i) {
                        return bad(format!("child {c} does not point back to {i}"));
                    }
                }
            }
        }
        if seen[0] != 0 || seen[1..].iter().any(|&s| s != 1) {
            return bad("node table is not a tree".into());
        }
        Ok(())
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

/// Most frequent class; ties go to the lowest index.
pub fn plurality_class(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests;
