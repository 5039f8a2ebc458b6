//! TreeSHAP against a permutation-order Shapley oracle written here from
//! scratch, plus the axioms the attributions must satisfy.

use credit_core::explain::{base_value, dependency_data, gain_importance, shap_summary, tree_shap, ShapMatrix};
use credit_core::models::{EnsembleMode, TreeEnsemble, TreeNode};
use credit_core::pipeline::{fit_pipeline, ModelSpec, PipelineSpec};
use credit_core::{Dataset, Matrix, ModelKind};
use rand::Rng;

fn random_tree<R: Rng>(r: &mut R, m: usize, depth: usize) -> Vec<TreeNode> {
    fn build<R: Rng>(r: &mut R, nodes: &mut Vec<TreeNode>, cover: u32, depth: usize, m: usize) -> usize {
        let id = nodes.len();
        nodes.push(TreeNode::leaf(r.gen_range(-1.0..1.0), cover as f64));
        if depth > 0 && cover >= 2 && r.gen_bool(0.85) {
            let lc = r.gen_range(1..cover);
            let f = r.gen_range(0..m);
            let thr = r.gen_range(0..3) as f64 + 0.5;
            let l = build(r, nodes, lc, depth - 1, m);
            let rr = build(r, nodes, cover - lc, depth - 1, m);
            nodes[id] = TreeNode::split(f, thr, l, rr, cover as f64, 1.0);
        }
        id
    }
    let mut nodes = Vec::new();
    let cover = r.gen_range(2..40);
    build(r, &mut nodes, cover, depth, m);
    nodes
}

/// E[f | x_S] with unknown features averaged by cover.
fn expect(t: &[TreeNode], i: usize, x: &[f64], known: &[bool]) -> f64 {
    let n = &t[i];
    match (n.feature, n.left, n.right) {
        (Some(f), Some(l), Some(r)) if known[f] => expect(t, if x[f] <= n.threshold { l } else { r }, x, known),
        (Some(_), Some(l), Some(r)) => {
            (t[l].cover * expect(t, l, x, known) + t[r].cover * expect(t, r, x, known)) / n.cover
        }
        _ => n.leaf_value,
    }
}

fn ensemble_value(e: &TreeEnsemble, x: &[f64], known: &[bool]) -> f64 {
    let sum: f64 = e.trees.iter().map(|t| expect(t, 0, x, known)).sum();
    match e.mode {
        EnsembleMode::AdditiveMargin => e.base_score + e.shrinkage * sum,
        EnsembleMode::AveragedProbability => sum / e.trees.len() as f64,
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Average marginal contribution over all feature orderings.
fn permutation_shap(e: &TreeEnsemble, x: &[f64]) -> Vec<f64> {
    let m = e.n_features;
    let perms = permutations(m);
    let mut phi = vec![0.0; m];
    for order in &perms {
        let mut known = vec![false; m];
        let mut prev = ensemble_value(e, x, &known);
        for &f in order {
            known[f] = true;
            let v = ensemble_value(e, x, &known);
            phi[f] += v - prev;
            prev = v;
        }
    }
    phi.iter().map(|v| v / perms.len() as f64).collect()
}

fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("f{j}")).collect()
}

#[test]
fn matches_permutation_oracle() {
    let mut r = credit_core::rng::stream(5, "shap-props", 0);
    for case in 0..200 {
        let m = r.gen_range(1..=5);
        let depth = r.gen_range(1..=4);
        let trees = (0..r.gen_range(1..=4)).map(|_| random_tree(&mut r, m, depth)).collect();
        let mode = if case % 2 == 0 { EnsembleMode::AdditiveMargin } else { EnsembleMode::AveragedProbability };
        let e = TreeEnsemble { mode, base_score: 0.25, shrinkage: 0.3, n_features: m, trees };
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..m).map(|_| r.gen_range(0..4) as f64).collect()).collect();
        let s = tree_shap(&e, &Matrix::from_rows(&rows).unwrap(), &names(m)).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let oracle = permutation_shap(&e, row);
            for j in 0..m {
                assert!((s.values.get(i, j) - oracle[j]).abs() < 1e-9, "case {case} row {i} feature {j}");
            }
            let none = vec![false; m];
            assert!((s.base_value - ensemble_value(&e, row, &none)).abs() < 1e-12);
        }
    }
}

#[test]
fn unused_feature_gets_zero() {
    let mut r = credit_core::rng::stream(6, "shap-props", 0);
    for _ in 0..50 {
        // feature 3 is never split on
        let trees = (0..3).map(|_| random_tree(&mut r, 3, 3)).collect();
        let e = TreeEnsemble { mode: EnsembleMode::AdditiveMargin, base_score: 0.0, shrinkage: 1.0, n_features: 4, trees };
        let row = [1.0, 2.0, 0.0, 7.0];
        let s = tree_shap(&e, &Matrix::new(1, 4, row.to_vec()).unwrap(), &names(4)).unwrap();
        assert_eq!(s.values.get(0, 3), 0.0);
    }
}

#[test]
fn single_feature_model_is_output_minus_mean() {
    let mut r = credit_core::rng::stream(7, "shap-props", 0);
    let trees = (0..4).map(|_| random_tree(&mut r, 1, 3)).collect();
    let e = TreeEnsemble { mode: EnsembleMode::AdditiveMargin, base_score: -0.4, shrinkage: 0.5, n_features: 1, trees };
    let mean = base_value(&e);
    for v in 0..4 {
        let x = [v as f64];
        let s = tree_shap(&e, &Matrix::new(1, 1, x.to_vec()).unwrap(), &names(1)).unwrap();
        assert!((s.values.get(0, 0) - (e.raw_output(&x) - mean)).abs() < 1e-12);
    }
}

fn synthetic(rows: usize) -> Dataset {
    credit_core::synth::generate(rows, 11).unwrap().application_dataset().unwrap()
}

#[test]
fn local_accuracy_for_every_tree_kind() {
    let d = synthetic(400);
    for kind in ModelKind::ALL.into_iter().filter(|k| k.is_tree_based()) {
        let t = fit_pipeline(&d, &PipelineSpec::new(ModelSpec::default_for(kind)), 3).unwrap();
        let x = t.preprocessing.transform(&d).unwrap();
        let e = t.model.tree_ensemble().unwrap();
        let s = tree_shap(e, x.values(), x.feature_names()).unwrap();
        for i in 0..x.n_rows() {
            let total = s.base_value + s.values.row(i).iter().sum::<f64>();
            assert!((total - e.raw_output(x.values().row(i))).abs() < 1e-9, "{kind} row {i}");
        }
    }
}

#[test]
fn gain_importance_is_tree_average() {
    let d = synthetic(300);
    let t = fit_pipeline(&d, &PipelineSpec::new(ModelSpec::default_for(ModelKind::Forest)), 3).unwrap();
    let e = t.model.tree_ensemble().unwrap();
    let all = gain_importance(e, &t.feature_names).unwrap();
    let mut acc = vec![0.0; e.n_features];
    for tree in &e.trees {
        let single = TreeEnsemble { trees: vec![tree.clone()], ..e.clone() };
        for (a, s) in acc.iter_mut().zip(gain_importance(&single, &t.feature_names).unwrap().scores) {
            *a += s;
        }
    }
    for (a, s) in acc.iter().zip(&all.scores) {
        assert!((a / e.n_trees() as f64 - s).abs() < 1e-9);
        assert!(*s >= 0.0);
    }
    let norm: f64 = all.normalized().scores.iter().sum();
    assert!((norm - 1.0).abs() < 1e-9);
}

#[test]
fn summary_ignores_row_order() {
    let mut r = credit_core::rng::stream(8, "shap-props", 0);
    let (n, m) = (30, 4);
    let data: Vec<f64> = (0..n * m).map(|_| r.gen_range(-1.0..1.0)).collect();
    let a = ShapMatrix { values: Matrix::new(n, m, data.clone()).unwrap(), base_value: 0.0, feature_names: names(m) };
    let rev: Vec<f64> = (0..n).rev().flat_map(|i| data[i * m..(i + 1) * m].to_vec()).collect();
    let b = ShapMatrix { values: Matrix::new(n, m, rev).unwrap(), ..a.clone() };
    let (sa, sb) = (shap_summary(&a).unwrap(), shap_summary(&b).unwrap());
    for (x, y) in sa.iter().zip(&sb) {
        assert_eq!(x.0, y.0);
        assert!((x.1 - y.1).abs() < 1e-12);
    }
}

#[test]
fn dependency_rows_sorted_and_complete() {
    let d = synthetic(500);
    let t = fit_pipeline(&d, &PipelineSpec::new(ModelSpec::default_for(ModelKind::Gbdt)), 3).unwrap();
    let x = t.preprocessing.transform(&d).unwrap();
    let raw = t.preprocessing.transform_unscaled(&d).unwrap();
    let s = tree_shap(t.model.tree_ensemble().unwrap(), x.values(), x.feature_names()).unwrap();
    let table = dependency_data(&s, &raw, "EXT_SOURCE_3", Some("EXT_SOURCE_1")).unwrap();
    assert_eq!(table.rows.len(), d.n_rows());
    assert!(table.rows.windows(2).all(|w| w[0].0 <= w[1].0));
    assert!(table.to_csv().starts_with("feature_value,shap_value,color_value\n"));
    let auto = dependency_data(&s, &raw, "EXT_SOURCE_3", None).unwrap();
    assert_ne!(auto.color_feature, "EXT_SOURCE_3");
    assert_eq!(auto, dependency_data(&s, &raw, "EXT_SOURCE_3", None).unwrap());
    assert_eq!(dependency_data(&s, &raw, "NOPE", None).unwrap_err().class(), "explain");
}

#[test]
fn constant_feature_gets_zero() {
    let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, 3.0, ((i * 5) % 11) as f64]).collect();
    let target: Vec<u8> = (0..60).map(|i| u8::from(i % 7 > 3)).collect();
    let d = Dataset::from_rows(&rows, &target).unwrap();
    let t = fit_pipeline(&d, &PipelineSpec::new(ModelSpec::default_for(ModelKind::Gbdt)), 1).unwrap();
    let x = t.preprocessing.transform(&d).unwrap();
    let s = tree_shap(t.model.tree_ensemble().unwrap(), x.values(), x.feature_names()).unwrap();
    assert!(s.values.column(1).iter().all(|&v| v == 0.0));
}
