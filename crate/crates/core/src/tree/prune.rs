//! Weakest-link pruning by split strength, tuned by cross-validation.
//!
//! The weakest internal node is the one whose whole subtree improves least
//! on the node's own model, measured by the same z statistic that gates
//! growth. Collapsing it repeatedly gives a nested sequence of subtrees;
//! cross-validation picks one with the one-standard-error rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GrowConfig, Stopping, TreeModel};
use crate::dataset::{make_folds, Dataset};
use crate::error::Result;
use crate::stats::{normal_sf, split_strength, SplitStrength};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    /// Node id in the unpruned tree.
    pub node: usize,
    pub strength: SplitStrength,
    pub leaves_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    /// Internal nodes with subtree z below this are collapsed.
    #[serde(with = "crate::serde_f64")]
    pub threshold_z: f64,
    pub threshold_p: f64,
    pub leaves: usize,
    pub cv_accuracy: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningReport {
    pub sequence: Vec<PruneStep>,
    /// From the unpruned tree to the root alone.
    pub candidates: Vec<CvPoint>,
    pub chosen: usize,
    pub folds: usize,
    pub seed: u64,
}

/// Strength of keeping the subtree under `id` rather than collapsing it.
pub fn subtree_strength(tree: &TreeModel, id: usize) -> Result<SplitStrength> {
    let node = &tree.nodes[id];
    split_strength(node.n_rows, node.node_errors, tree.subtree_errors(id))
}

/// Weakest reachable internal node: smallest z, then deeper, then lower id.
fn weakest(tree: &TreeModel) -> Result<Option<(usize, SplitStrength)>> {
    // Children always have larger ids than their parent, so one reverse
    // sweep accumulates subtree errors.
    let n = tree.nodes.len();
    let mut errors = vec![0usize; n];
    for id in (0..n).rev() {
        let node = &tree.nodes[id];
        errors[id] = if node.is_leaf() {
            node.node_errors
        } else {
            node.children().map(|c| errors[c]).sum()
        };
    }
    let mut best: Option<(usize, SplitStrength)> = None;
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let node = &tree.nodes[id];
        if node.is_leaf() {
            continue;
        }
        stack.extend(node.children());
        let s = split_strength(node.n_rows, node.node_errors, errors[id])?;
        let better = match &best {
            None => true,
            Some((b, bs)) => {
                let bd = tree.nodes[*b].depth;
                s.z < bs.z || (s.z == bs.z && (node.depth > bd || (node.depth == bd && id < *b)))
            }
        };
        if better {
            best = Some((id, s));
        }
    }
    Ok(best)
}

/// The full weakest-link sequence down to the root.
pub fn pruning_sequence(tree: &TreeModel) -> Result<Vec<PruneStep>> {
    let mut work = tree.clone();
    let mut steps = Vec::new();
    while let Some((id, strength)) = weakest(&work)? {
        work.collapse(id);
        steps.push(PruneStep {
            node: id,
            strength,
            leaves_after: work.leaves_under(0).len(),
        });
    }
    Ok(steps)
}

/// Collapses weakest links while their z is below `threshold_z`. An infinite
/// positive threshold collapses everything.
pub fn prune_to(tree: &TreeModel, threshold_z: f64) -> Result<TreeModel> {
    let steps = pruning_sequence(tree)?;
    Ok(apply_prefix(tree, &steps, prefix_len(&steps, threshold_z)))
}

/// Number of leading sequence steps that a threshold collapses.
fn prefix_len(steps: &[PruneStep], threshold_z: f64) -> usize {
    if threshold_z == f64::INFINITY {
        return steps.len();
    }
    steps
        .iter()
        .position(|s| s.strength.z >= threshold_z)
        .unwrap_or(steps.len())
}

fn collapsed_mask(tree: &TreeModel, steps: &[PruneStep], len: usize) -> Vec<bool> {
    let mut mask = vec![false; tree.nodes.len()];
    for s in &steps[..len] {
        mask[s.node] = true;
    }
    mask
}

fn apply_prefix(tree: &TreeModel, steps: &[PruneStep], len: usize) -> TreeModel {
    let mut work = tree.clone();
    for s in &steps[..len] {
        work.collapse(s.node);
    }
    work.compact();
    work
}

/// z thresholds selecting each distinct subtree of the sequence, from no
/// pruning to the root alone.
fn candidate_thresholds(steps: &[PruneStep]) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for s in steps {
        running = running.max(s.strength.z);
        if levels.last() != Some(&running) {
            levels.push(running);
        }
    }
    let mut out = vec![f64::NEG_INFINITY];
    for (i, &l) in levels.iter().enumerate() {
        let t = match levels.get(i + 1) {
            None => f64::INFINITY,
            Some(&next) if next.is_finite() && l.is_finite() => 0.5 * (l + next),
            Some(_) if l.is_finite() => l + 1.0,
            Some(&next) => next - 1.0,
        };
        out.push(t);
    }
    out
}

/// Chooses a pruned subtree of `tree` (grown on all of `ds`) by k-fold
/// cross-validation.
///
/// Each fold grows a tree on the other folds with the same configuration,
/// prunes it at every candidate threshold of the main sequence and scores
/// the held-out fold. The smallest subtree whose accuracy is within one
/// binomial standard error of the best is kept.
pub fn prune(tree: &TreeModel, ds: &Dataset, folds: usize, seed: u64) -> Result<TreeModel> {
    let sequence = pruning_sequence(tree)?;
    let thresholds = candidate_thresholds(&sequence);
    let plan = make_folds(ds, folds, seed)?;
    let fold_config = GrowConfig {
        stopping: Stopping::CvPrune,
        ..tree.config
    };

    let per_fold: Vec<Vec<usize>> = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<usize>> {
            let train = plan.train_positions(f);
            let test = plan.test_positions(f);
            let fold_tree = super::grow_rows(ds, &train, &fold_config)?;
            let fold_steps = pruning_sequence(&fold_tree)?;
            let sub = ds.features.select(&test);
            thresholds
                .iter()
                .map(|&t| {
                    let mask = collapsed_mask(&fold_tree, &fold_steps, prefix_len(&fold_steps, t));
                    let pred = fold_tree.predict_masked(&sub, Some(&mask))?.labels;
                    Ok(pred
                        .iter()
                        .zip(&test)
                        .filter(|(p, &r)| **p == ds.target[r])
                        .count())
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = ds.n_rows() as f64;
    let mut candidates = Vec::with_capacity(thresholds.len());
    for (i, &t) in thresholds.iter().enumerate() {
        let correct: usize = per_fold.iter().map(|f| f[i]).sum();
        let acc = correct as f64 / n;
        let len = prefix_len(&sequence, t);
        candidates.push(CvPoint {
            threshold_z: t,
            threshold_p: normal_sf(t),
            leaves: if len == 0 { tree.n_leaves() } else { sequence[len - 1].leaves_after },
            cv_accuracy: acc,
            se: (acc * (1.0 - acc) / n).sqrt(),
        });
    }
    // max_by keeps the last maximum, so ties favour the smaller tree.
    let best = (0..candidates.len())
        .max_by(|&a, &b| candidates[a].cv_accuracy.total_cmp(&candidates[b].cv_accuracy))
        .unwrap_or(0);
    let floor = candidates[best].cv_accuracy - candidates[best].se;
    let chosen = (0..candidates.len())
        .rev()
        .find(|&i| candidates[i].cv_accuracy >= floor)
        .unwrap_or(best);

    let mut out = apply_prefix(tree, &sequence, prefix_len(&sequence, thresholds[chosen]));
    out.training_accuracy = out.rows_accuracy(ds, &ds.all_rows())?;
    out.pruning = Some(PruningReport {
        sequence,
        candidates,
        chosen,
        folds,
        seed,
    });
    Ok(out)
}
