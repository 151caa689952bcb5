use super::*;
use std::collections::BTreeMap;
use crate::dataset::{Column, Dataset, Table};
use crate::testutil::normal_matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(x: &nalgebra::DMatrix<f64>, y: Vec<usize>, j: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let table = Table::from_rows(&rows).unwrap();
    let classes: Vec<String> = (0..j).map(|c| format!("c{c}")).collect();
    Dataset::new(table, "y", y, classes).unwrap()
}

/// Four blobs in an XOR layout; no single linear rule separates them.
fn xor2(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = normal_matrix(&mut rng, n, 2) * 0.3;
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let (a, b) = (rng.random_bool(0.5), rng.random_bool(0.5));
        x[(r, 0)] += if a { 2.0 } else { -2.0 };
        x[(r, 1)] += if b { 2.0 } else { -2.0 };
        y.push((a ^ b) as usize);
    }
    dataset(&x, y, 2)
}

#[test]
fn separable_classes_give_single_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = normal_matrix(&mut rng, 200, 3);
    let y: Vec<usize> = (0..200).map(|r| r % 2).collect();
    for r in 0..200 {
        x[(r, 0)] += 10.0 * y[r] as f64;
    }
    let ds = dataset(&x, y, 2);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::Prestop)).unwrap();
    assert_eq!(tree.nodes.len(), 1);
    assert!(matches!(tree.root().node_model, NodeModel::Ulda { .. }));
    assert_eq!(tree.training_accuracy, 1.0);
}

#[test]
fn xor_needs_a_split() {
    let ds = xor2(2, 400);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::Prestop)).unwrap();
    tree.validate().unwrap();
    assert!(tree.n_leaves() >= 2);
    assert!(tree.training_accuracy > 0.95, "{}", tree.training_accuracy);
    assert!(tree.accuracy(&xor2(3, 400)).unwrap() > 0.95);
}

#[test]
fn foldtree_without_signal_at_root_stays_a_leaf() {
    // XOR has equal class means, so forward selection finds no column.
    let ds = xor2(2, 400);
    let cfg = GrowConfig {
        single_column_fallback: false,
        ..GrowConfig::new(Method::FoldTree, Stopping::Prestop)
    };
    let tree = grow(&ds, &cfg).unwrap();
    assert_eq!(tree.nodes.len(), 1);
    assert!(tree.root().selection.as_ref().unwrap().steps.is_empty());
}

/// Three overlapping classes along one axis, plus a noise column.
fn three_blobs(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = normal_matrix(&mut rng, n, 2);
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    for r in 0..n {
        x[(r, 0)] += 2.5 * y[r] as f64;
    }
    dataset(&x, y, 3)
}

#[test]
fn hidden_class_routes_to_best_remaining_branch() {
    let ds = three_blobs(15, 600);
    let mut cfg = GrowConfig::new(Method::LdaTree, Stopping::Prestop);
    cfg.prestop_p = 1.0;
    let mut tree = grow(&ds, &cfg).unwrap();
    let split = tree.nodes[0].split.as_mut().unwrap();
    assert_eq!(split.children.len(), 3);
    split.children.remove(&1);
    let pred = tree.predict_full(&ds.features).unwrap();
    let reach: BTreeMap<usize, usize> = pred.leaves.iter().fold(BTreeMap::new(), |mut m, &l| {
        *m.entry(l).or_default() += 1;
        m
    });
    let middle = tree.nodes[0].split.as_ref().unwrap().children.clone();
    for leaf in reach.keys() {
        let mut top = *leaf;
        while let Some(p) = tree.nodes[top].parent.filter(|&p| p != 0) {
            top = p;
        }
        assert!(middle.values().any(|&c| c == top));
    }
}

#[test]
fn child_counts_add_up() {
    let ds = xor2(4, 300);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::CvPrune)).unwrap();
    for node in &tree.nodes {
        if let Some(split) = &node.split {
            let total: usize = split.children.values().map(|&c| tree.nodes[c].n_rows).sum();
            assert_eq!(total, node.n_rows);
            let s = node.diagnostics.strength.unwrap();
            assert!(s.p_value <= tree.config.growth_p);
            for (c, k) in node.class_counts.iter().enumerate() {
                let kids: usize = split.children.values().map(|&i| tree.nodes[i].class_counts[c]).sum();
                assert_eq!(*k, kids);
            }
        }
    }
}

#[test]
fn pure_noise_prestop_is_a_stump() {
    let mut stumps = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(&mut rng, 300, 4);
        let y: Vec<usize> = (0..300).map(|_| rng.random_range(0..2)).collect();
        let ds = dataset(&x, y, 2);
        let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::Prestop)).unwrap();
        stumps += (tree.nodes.len() == 1) as usize;
    }
    assert!(stumps >= 18, "{stumps}/20");
}

#[test]
fn pruning_sequence_ends_at_root() {
    let ds = xor2(5, 300);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::CvPrune)).unwrap();
    let steps = pruning_sequence(&tree).unwrap();
    let internal = tree.nodes.iter().filter(|n| !n.is_leaf()).count();
    assert!(steps.len() <= internal);
    assert_eq!(steps.last().map(|s| s.leaves_after), Some(1));
    for w in steps.windows(2) {
        assert!(w[1].leaves_after < w[0].leaves_after);
    }
    let root_only = prune_to(&tree, f64::INFINITY).unwrap();
    assert_eq!(root_only.nodes.len(), 1);
    let untouched = prune_to(&tree, f64::NEG_INFINITY).unwrap();
    assert_eq!(untouched, tree);
}

#[test]
fn cv_pruned_tree_is_valid() {
    let ds = xor2(6, 400);
    let tree = fit_tree(&ds, &GrowConfig::new(Method::LdaTree, Stopping::CvPrune)).unwrap();
    tree.validate().unwrap();
    let report = tree.pruning.as_ref().unwrap();
    assert_eq!(report.candidates[report.chosen].leaves, tree.n_leaves());
    assert!(tree.accuracy(&xor2(7, 400)).unwrap() > 0.95);
}

#[test]
fn json_round_trip_is_exact() {
    let ds = xor2(8, 300);
    let tree = fit_tree(&ds, &GrowConfig::new(Method::LdaTree, Stopping::CvPrune)).unwrap();
    let text = tree.to_json().unwrap();
    let back = TreeModel::from_json(&text).unwrap();
    let test = xor2(9, 500);
    let a = tree.predict_full(&test.features).unwrap();
    let b = back.predict_full(&test.features).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.posteriors, b.posteriors);
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn bad_headers_are_rejected() {
    let ds = xor2(10, 100);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::Prestop)).unwrap();
    let text = tree.to_json().unwrap();
    let wrong_version = text.replace("\"version\":1", "\"version\":99");
    assert!(matches!(TreeModel::from_json(&wrong_version), Err(Error::ModelFormat(_))));
    let wrong_format = text.replace("foldtree-model", "something-else");
    assert!(matches!(TreeModel::from_json(&wrong_format), Err(Error::ModelFormat(_))));
    assert!(TreeModel::from_json("{").is_err());
}

#[test]
fn schema_mismatch_on_predict() {
    let ds = xor2(11, 100);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::Prestop)).unwrap();
    let other = Table::new(
        vec!["x1".into(), "z".into()],
        vec![Column::Numeric(vec![Some(0.0)]), Column::Numeric(vec![Some(0.0)])],
    )
    .unwrap();
    assert!(matches!(tree.predict(&other), Err(Error::SchemaMismatch(_))));
}

#[test]
fn lopsided_node_switches_to_equal_priors() {
    // 95:5 with heavy overlap: estimated priors predict almost everything
    // as the majority.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 400;
    let mut x = normal_matrix(&mut rng, n, 2);
    let y: Vec<usize> = (0..n).map(|r| (r % 20 == 0) as usize).collect();
    for r in 0..n {
        x[(r, 0)] += 1.0 * y[r] as f64;
    }
    let model = crate::ulda::fit_ulda(&x, &y, crate::ulda::PriorMode::Estimated).unwrap();
    let (cand, gini, switch) = find_split(&model, &x, &y, 2).unwrap();
    assert!(gini <= 0.1, "{gini}");
    assert!(switch.is_some());
    let cand = cand.unwrap();
    assert_eq!(cand.model.prior_mode, crate::ulda::PriorMode::Equal);
    assert_eq!(cand.prior_switch, switch);
    let minority = cand.predictions.iter().filter(|&&p| p == 1).count();
    assert!(minority > 20, "{minority}");
}

#[test]
fn every_row_reaches_a_leaf() {
    let ds = xor2(13, 200);
    let tree = grow(&ds, &GrowConfig::new(Method::LdaTree, Stopping::Prestop)).unwrap();
    let test = xor2(14, 300);
    let pred = tree.predict_full(&test.features).unwrap();
    for &leaf in &pred.leaves {
        assert!(tree.nodes[leaf].is_leaf());
    }
    for r in 0..test.n_rows() {
        let s: f64 = pred.posteriors.row(r).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
