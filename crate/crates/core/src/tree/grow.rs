use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{
    accuracy, plurality_class, Diagnostics, GrowConfig, Method, NodeModel, PriorSwitch, Split,
    Stopping, TreeModel, TreeNode,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forward::{forward_ulda_traced, SelectionTrace};
use crate::impute::{encode, fit_imputation, ImputationRecord};
use crate::stats::{gini_of_labels, split_strength};
use crate::ulda::{fit_ulda, fit_ulda_on, PriorMode, UldaModel};

/// Predicted-class Gini index at or below which the split model switches to
/// equal priors.
const GINI_SWITCH: f64 = 0.1;

/// A proposed split: the model that routes rows and where each row goes.
#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub model: UldaModel,
    /// Predicted class for each node row, in node row order.
    pub predictions: Vec<usize>,
    pub predicted_gini: f64,
    pub prior_switch: Option<PriorSwitch>,
}

/// Everything fitted at one node before deciding whether to split it.
struct NodeFit {
    rows: Vec<usize>,
    depth: usize,
    class_counts: Vec<usize>,
    imputation: ImputationRecord,
    node_model: NodeModel,
    node_errors: usize,
    selection: Option<SelectionTrace>,
    candidate: Option<SplitCandidate>,
    predicted_gini: Option<f64>,
    prior_switch: Option<PriorSwitch>,
    fallback_column: Option<usize>,
}

/// Builds the split model for a node from its estimated-prior ULDA fit.
///
/// `x`/`y` are the node's encoded rows. When the classes predicted by `lda`
/// are nearly pure (Gini in (0, 0.1]) or all identical while `y` is not, the
/// same axes are reused with equal priors. Returns `None` when fewer than two
/// classes end up predicted.
pub fn find_split(
    lda: &UldaModel,
    x: &nalgebra::DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
) -> Result<(Option<SplitCandidate>, f64, Option<PriorSwitch>)> {
    let estimated = lda.with_priors(PriorMode::Estimated);
    let pred = estimated.predict(x, None)?;
    let gini = gini_of_labels(&pred, n_classes);
    let impure = y.iter().any(|&c| c != y[0]);
    let switch = if gini > 0.0 && gini <= GINI_SWITCH {
        Some(PriorSwitch::GiniBand)
    } else if gini == 0.0 && impure {
        Some(PriorSwitch::SingleClassPrediction)
    } else {
        None
    };
    let (model, pred) = match switch {
        Some(_) => {
            let equal = lda.with_priors(PriorMode::Equal);
            let p = equal.predict(x, None)?;
            (equal, p)
        }
        None => (estimated, pred),
    };
    let distinct: BTreeSet<usize> = pred.iter().copied().collect();
    let candidate = (distinct.len() >= 2).then_some(SplitCandidate {
        model,
        predictions: pred,
        predicted_gini: gini,
        prior_switch: switch,
    });
    Ok((candidate, gini, switch))
}

struct Grower<'a> {
    ds: &'a Dataset,
    config: &'a GrowConfig,
    accept_p: f64,
    min_node: usize,
    root_record: Option<ImputationRecord>,
}

impl Grower<'_> {
    fn fit_node(&self, rows: Vec<usize>, depth: usize) -> Result<NodeFit> {
        let ds = self.ds;
        let j = ds.n_classes();
        let imputation = fit_imputation(
            &ds.features,
            &rows,
            self.config.imputation,
            self.root_record.as_ref(),
        )?;
        let class_counts = ds.class_counts(&rows);
        let plurality = plurality_class(&class_counts);
        let plurality_correct = class_counts[plurality];
        let present = class_counts.iter().filter(|&&c| c > 0).count();

        let mut fit = NodeFit {
            depth,
            node_model: NodeModel::Plurality { class: plurality },
            node_errors: rows.len() - plurality_correct,
            class_counts,
            imputation,
            selection: None,
            candidate: None,
            predicted_gini: None,
            prior_switch: None,
            fallback_column: None,
            rows,
        };
        if present < 2 {
            return Ok(fit);
        }

        let x = encode(&ds.features, &fit.rows, &fit.imputation)?.values;
        let y: Vec<usize> = fit.rows.iter().map(|&r| ds.target[r]).collect();
        let lda = match self.config.method {
            Method::LdaTree => fit_ulda(&x, &y, PriorMode::Estimated),
            Method::FoldTree => {
                let (m, trace) = forward_ulda_traced(&x, &y, PriorMode::Estimated, self.config.forward);
                let fallback = trace.rejected.filter(|_| self.config.single_column_fallback);
                fit.selection = Some(trace);
                match (m, fallback) {
                    (Err(Error::NoDiscriminantDirection), Some(best)) => {
                        fit.fallback_column = Some(best.column);
                        fit_ulda_on(&x, &y, &[best.column], PriorMode::Estimated)
                    }
                    (m, _) => m,
                }
            }
        };
        let lda = match lda {
            Ok(m) => m,
            Err(Error::NoDiscriminantDirection | Error::SingleClass) => return Ok(fit),
            Err(e) => return Err(e),
        };
        let pred = lda.predict(&x, None)?;
        let lda_correct = pred.iter().zip(&y).filter(|(a, b)| a == b).count();
        if lda_correct > plurality_correct {
            fit.node_errors = fit.rows.len() - lda_correct;
            fit.node_model = NodeModel::Ulda { model: lda.clone() };
        }

        let splittable = fit.rows.len() >= self.min_node
            && depth < self.config.max_depth
            && fit.node_errors > 0;
        if splittable {
            let (candidate, gini, switch) = find_split(&lda, &x, &y, j)?;
            fit.candidate = candidate;
            fit.predicted_gini = Some(gini);
            fit.prior_switch = switch;
        }
        Ok(fit)
    }

    /// Turns a fitted node into tree nodes, recursing into accepted splits.
    fn build(&self, fit: NodeFit, parent: Option<usize>, nodes: &mut Vec<TreeNode>) -> Result<usize> {
        let id = nodes.len();
        let mut diagnostics = Diagnostics {
            predicted_gini: fit.predicted_gini,
            prior_switch: fit.prior_switch,
            fallback_column: fit.fallback_column,
            ..Default::default()
        };
        let mut accepted = None;
        if let Some(candidate) = fit.candidate {
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (&r, &c) in fit.rows.iter().zip(&candidate.predictions) {
                groups.entry(c).or_default().push(r);
            }
            let keys: Vec<usize> = groups.keys().copied().collect();
            let children: Vec<NodeFit> = groups
                .into_values()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|rows| self.fit_node(rows, fit.depth + 1))
                .collect::<Result<_>>()?;
            let n_after: usize = children.iter().map(|c| c.node_errors).sum();
            let strength = split_strength(fit.rows.len(), fit.node_errors, n_after)?;
            diagnostics.strength = Some(strength);
            diagnostics.prior_mode = Some(candidate.model.prior_mode);
            if strength.p_value <= self.accept_p {
                accepted = Some((candidate.model, keys, children));
            }
        }

        nodes.push(TreeNode {
            id,
            depth: fit.depth,
            parent,
            n_rows: fit.rows.len(),
            rows: fit.rows,
            class_counts: fit.class_counts,
            imputation: fit.imputation,
            node_model: fit.node_model,
            node_errors: fit.node_errors,
            selection: fit.selection,
            split: None,
            diagnostics,
        });
        if let Some((model, keys, children)) = accepted {
            let mut map = BTreeMap::new();
            for (key, child) in keys.into_iter().zip(children) {
                let child_id = self.build(child, Some(id), nodes)?;
                map.insert(key, child_id);
            }
            nodes[id].split = Some(Split { model, children: map });
        }
        Ok(id)
    }
}

/// Grows a tree on the given rows of `ds`, accepting splits by the growth
/// threshold of `config`. No pruning.
pub fn grow_rows(ds: &Dataset, rows: &[usize], config: &GrowConfig) -> Result<TreeModel> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("cannot grow a tree on zero rows".into()));
    }
    let mut grower = Grower {
        ds,
        config,
        accept_p: config.accept_p(),
        min_node: config.min_node_size_for(ds.n_classes()),
        root_record: None,
    };
    let root_record = fit_imputation(&ds.features, rows, config.imputation, None)?;
    grower.root_record = Some(root_record);
    let root = grower.fit_node(rows.to_vec(), 0)?;
    let mut nodes = Vec::new();
    grower.build(root, None, &mut nodes)?;

    let mut tree = TreeModel {
        nodes,
        classes: ds.classes.clone(),
        target_name: ds.target_name.clone(),
        schema: ds.features.schema(),
        config: *config,
        pruning: None,
        training_accuracy: 0.0,
    };
    tree.training_accuracy = tree.rows_accuracy(ds, rows)?;
    Ok(tree)
}

/// Grows on every row of `ds`.
pub fn grow(ds: &Dataset, config: &GrowConfig) -> Result<TreeModel> {
    grow_rows(ds, &ds.all_rows(), config)
}

/// Grows and, for [`Stopping::CvPrune`], prunes by cross-validation.
pub fn fit_tree(ds: &Dataset, config: &GrowConfig) -> Result<TreeModel> {
    let tree = grow(ds, config)?;
    match config.stopping {
        Stopping::Prestop => Ok(tree),
        Stopping::CvPrune => super::prune(&tree, ds, config.folds, config.seed),
    }
}

impl TreeModel {
    /// Accuracy on a subset of the rows of `ds`.
    pub(crate) fn rows_accuracy(&self, ds: &Dataset, rows: &[usize]) -> Result<f64> {
        let sub = ds.features.select(rows);
        let pred = self.predict(&sub)?;
        let truth: Vec<usize> = rows.iter().map(|&r| ds.target[r]).collect();
        Ok(accuracy(&pred, &truth))
    }
}
