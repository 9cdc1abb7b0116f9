//! Depth-constrained regression trees fitted to labels in [0, 1] by
//! maximizing the Bernoulli log-likelihood of each region.

use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset};
use crate::design::SplitDesign;
use crate::error::{param, Error, Result};
use crate::math::PROB_EPS;

/// Gains closer than this are treated as equal.
const GAIN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub d_max: u32,
    /// Each child of a split must hold strictly more rows than this.
    pub n_obs: usize,
    pub min_gain: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            d_max: 2,
            n_obs: 5,
            min_gain: 0.0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_max < 1 {
            return param("tree d_max must be at least 1");
        }
        if self.n_obs < 1 {
            return param("tree n_obs must be at least 1");
        }
        if !(self.min_gain >= 0.0 && self.min_gain.is_finite()) {
            return param("tree min_gain must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Region weight and objective `S ln w + (n - S) ln(1 - w)` where `S` is the
/// label sum, `w = S / n`, and `w` is clamped away from 0 and 1 inside the logs.
pub fn region_objective(labels: &[f64]) -> (f64, f64) {
    let s: f64 = labels.iter().sum();
    region_from_sums(labels.len() as f64, s)
}

fn region_from_sums(n: f64, s: f64) -> (f64, f64) {
    let w = s / n;
    let wc = w.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (w, s * wc.ln() + (n - s) * (1.0 - wc).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub cut: f64,
    pub gain: f64,
}

/// Column-major split features with a flag marking continuous columns.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub cols: &'a [Vec<f64>],
    pub continuous: &'a [bool],
}

/// Best admissible split of `rows`, scanning every feature and every cutoff
/// between consecutive distinct values. Continuous features cut at midpoints,
/// discrete ones at the lower value. Ties keep the earliest feature and the
/// lowest cutoff.
pub fn best_split(
    features: Features<'_>,
    labels: &[f64],
    rows: &[usize],
    cfg: &TreeConfig,
) -> Option<Split> {
    let n = rows.len();
    if n <= cfg.n_obs {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| labels[i]).sum();
    let (_, parent) = region_from_sums(n as f64, total);
    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for (j, col) in features.cols.iter().enumerate() {
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += labels[order[k]];
            let (v, next) = (col[order[k]], col[order[k + 1]]);
            if v == next {
                continue;
            }
            let nl = k + 1;
            if nl <= cfg.n_obs || n - nl <= cfg.n_obs {
                continue;
            }
            let (_, jl) = region_from_sums(nl as f64, left_sum);
            let (_, jr) = region_from_sums((n - nl) as f64, total - left_sum);
            let gain = jl + jr - parent;
            if gain <= cfg.min_gain + GAIN_TOL {
                continue;
            }
            if best.is_none_or(|b| gain > b.gain + GAIN_TOL) {
                let cut = if features.continuous[j] {
                    v + (next - v) / 2.0
                } else {
                    v
                };
                best = Some(Split {
                    feature: j,
                    cut,
                    gain,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        cut: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
        count: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> u32 {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    /// Leaf reached by a feature vector.
    pub fn route(&self, x: &[f64]) -> (f64, usize) {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight, count } => return (*weight, *count),
                TreeNode::Split {
                    feature,
                    cut,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *cut { left } else { right };
                }
            }
        }
    }

    /// Sum of region objectives over the leaves, evaluated on `labels`.
    pub fn objective(&self, features: Features<'_>, labels: &[f64]) -> f64 {
        let mut acc = Vec::new();
        self.collect_regions(features, &(0..labels.len()).collect::<Vec<_>>(), &mut acc);
        acc.iter()
            .map(|rows| region_objective(&rows.iter().map(|&i| labels[i]).collect::<Vec<_>>()).1)
            .sum()
    }

    fn collect_regions(&self, features: Features<'_>, rows: &[usize], out: &mut Vec<Vec<usize>>) {
        match self {
            TreeNode::Leaf { .. } => out.push(rows.to_vec()),
            TreeNode::Split {
                feature,
                cut,
                left,
                right,
            } => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| features.cols[*feature][i] <= *cut);
                left.collect_regions(features, &l, out);
                right.collect_regions(features, &r, out);
            }
        }
    }
}

/// Greedy top-down induction.
pub fn grow_tree(features: Features<'_>, labels: &[f64], cfg: &TreeConfig) -> Result<TreeNode> {
    cfg.validate()?;
    let n = labels.len();
    if features.cols.len() != features.continuous.len()
        || features.cols.iter().any(|c| c.len() != n)
    {
        return param("feature matrix shape does not match the labels");
    }
    if n <= cfg.n_obs {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot support a tree with n_obs = {}",
            cfg.n_obs
        )));
    }
    if labels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return param("tree labels must lie in [0, 1]");
    }
    if features.cols.iter().flatten().any(|v| !v.is_finite()) {
        return param("tree features must be finite");
    }
    let rows: Vec<usize> = (0..n).collect();
    Ok(grow_node(features, labels, &rows, 0, cfg))
}

fn grow_node(
    features: Features<'_>,
    labels: &[f64],
    rows: &[usize],
    depth: u32,
    cfg: &TreeConfig,
) -> TreeNode {
    let leaf = || {
        let s: f64 = rows.iter().map(|&i| labels[i]).sum();
        TreeNode::Leaf {
            weight: s / rows.len() as f64,
            count: rows.len(),
        }
    };
    if depth >= cfg.d_max {
        return leaf();
    }
    match best_split(features, labels, rows, cfg) {
        None => leaf(),
        Some(split) => {
            let col = &features.cols[split.feature];
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= split.cut);
            TreeNode::Split {
                feature: split.feature,
                cut: split.cut,
                left: Box::new(grow_node(features, labels, &l, depth + 1, cfg)),
                right: Box::new(grow_node(features, labels, &r, depth + 1, cfg)),
            }
        }
    }
}

/// Collapses sibling leaves with the same decision `1{w > 0.5}`, bottom-up,
/// until no such pair remains. The merged weight is the count-weighted mean.
pub fn merge_siblings(node: TreeNode) -> TreeNode {
    match node {
        leaf @ TreeNode::Leaf { .. } => leaf,
        TreeNode::Split {
            feature,
            cut,
            left,
            right,
        } => {
            let left = merge_siblings(*left);
            let right = merge_siblings(*right);
            match (&left, &right) {
                (
                    TreeNode::Leaf {
                        weight: wl,
                        count: nl,
                    },
                    TreeNode::Leaf {
                        weight: wr,
                        count: nr,
                    },
                ) if (*wl > 0.5) == (*wr > 0.5) => {
                    let count = nl + nr;
                    TreeNode::Leaf {
                        weight: (wl * *nl as f64 + wr * *nr as f64) / count as f64,
                        count,
                    }
                }
                _ => TreeNode::Split {
                    feature,
                    cut,
                    left: Box::new(left),
                    right: Box::new(right),
                },
            }
        }
    }
}

fn check_labels_len(n: usize, labels: &[f64]) -> Result<()> {
    if labels.len() != n {
        return param(format!("{} labels for {n} rows", labels.len()));
    }
    Ok(())
}

/// Tree distilled from soft labels over the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelTree {
    pub design: SplitDesign,
    pub config: TreeConfig,
    pub root: TreeNode,
}

impl SoftLabelTree {
    pub fn feature_names(&self) -> Vec<String> {
        self.design
            .features()
            .iter()
            .map(|f| f.name.clone())
            .collect()
    }

    /// Leaf weight for a raw covariate row.
    pub fn weight(&self, row: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.design.width());
        self.design.expand_row(row, &mut buf);
        self.root.route(&buf).0
    }

    /// Rule `1{w > 0.5}` for a raw covariate row.
    pub fn decide(&self, row: &[f64]) -> u8 {
        u8::from(self.weight(row) > 0.5)
    }

    pub fn assign(&self, columns: &[Column], x: &[f64]) -> Result<Vec<u8>> {
        if !self.design.same_schema(columns) {
            return Err(Error::Prediction(
                "covariate schema differs from the tree's".into(),
            ));
        }
        Ok(x.chunks_exact(columns.len().max(1))
            .map(|r| self.decide(r))
            .collect())
    }
}

fn continuous_flags(design: &SplitDesign) -> Vec<bool> {
    design.features().iter().map(|f| f.continuous).collect()
}

/// Fits a tree to soft labels and merges sibling leaves with equal decisions.
pub fn fit_soft_tree(dataset: &Dataset, labels: &[f64], cfg: &TreeConfig) -> Result<SoftLabelTree> {
    check_labels_len(dataset.n(), labels)?;
    let design = SplitDesign::new(dataset.columns());
    let cols = design.columns_of(dataset.x());
    let continuous = continuous_flags(&design);
    let root = grow_tree(
        Features {
            cols: &cols,
            continuous: &continuous,
        },
        labels,
        cfg,
    )?;
    Ok(SoftLabelTree {
        design,
        config: *cfg,
        root: merge_siblings(root),
    })
}

/// Outcome tree over the covariates and the treatment, fitted to observed
/// outcomes. Leaves are left unmerged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectTree {
    pub design: SplitDesign,
    pub config: TreeConfig,
    pub root: TreeNode,
}

impl DirectTree {
    /// Index of the treatment feature.
    pub fn treatment_feature(&self) -> usize {
        self.design.width()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .design
            .features()
            .iter()
            .map(|f| f.name.clone())
            .collect();
        names.push("T".into());
        names
    }

    /// `f(x, t)` for a raw covariate row.
    pub fn predict(&self, row: &[f64], t: u8) -> f64 {
        let mut buf = Vec::with_capacity(self.design.width() + 1);
        self.design.expand_row(row, &mut buf);
        buf.push(f64::from(t));
        self.root.route(&buf).0
    }
}

pub fn fit_direct_tree(dataset: &Dataset, cfg: &TreeConfig) -> Result<DirectTree> {
    let design = SplitDesign::new(dataset.columns());
    let mut cols = design.columns_of(dataset.x());
    cols.push(dataset.t().iter().map(|&t| f64::from(t)).collect());
    let mut continuous = continuous_flags(&design);
    continuous.push(false);
    let labels: Vec<f64> = dataset.y().iter().map(|&y| f64::from(y)).collect();
    let root = grow_tree(
        Features {
            cols: &cols,
            continuous: &continuous,
        },
        &labels,
        cfg,
    )?;
    Ok(DirectTree {
        design,
        config: *cfg,
        root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;
    use proptest::prelude::*;

    fn feats<'a>(cols: &'a [Vec<f64>], cont: &'a [bool]) -> Features<'a> {
        Features {
            cols,
            continuous: cont,
        }
    }

    #[test]
    fn region_objective_examples() {
        assert!((region_objective(&[0.2, 0.4, 0.9]).0 - 0.5).abs() < 1e-15);
        let (w, j) = region_objective(&[1.0, 1.0, 1.0]);
        assert_eq!(w, 1.0);
        assert!(j.abs() < 1e-11);
        let (w, j) = region_objective(&[0.5, 0.5]);
        assert_eq!(w, 0.5);
        assert!((j - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((j + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn leaf_weight_beats_grid() {
        let labels = [0.1, 0.35, 0.8, 0.95, 0.4, 0.0, 1.0];
        let (w, j) = region_objective(&labels);
        for k in 1..1000 {
            let g = k as f64 / 1000.0;
            let jg: f64 = labels
                .iter()
                .map(|p| p * g.ln() + (1.0 - p) * (1.0 - g).ln())
                .sum();
            assert!(j >= jg - 1e-12, "grid point {g} beats mean {w}");
        }
    }

    #[test]
    fn step_function_split() {
        let n = 40;
        let x1: Vec<f64> = (0..n).map(|i| i as f64 - 19.5).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
        let labels: Vec<f64> = x1
            .iter()
            .map(|&v| if v <= 0.0 { 0.1 } else { 0.9 })
            .collect();
        let cols = vec![x1, x2];
        let rows: Vec<usize> = (0..n).collect();
        let s = best_split(
            feats(&cols, &[true, false]),
            &labels,
            &rows,
            &TreeConfig::default(),
        )
        .unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.cut, 0.0);
    }

    #[test]
    fn constant_labels_and_tiny_nodes_do_not_split() {
        let cols = vec![(0..20).map(f64::from).collect::<Vec<_>>()];
        let rows: Vec<usize> = (0..20).collect();
        let cfg = TreeConfig::default();
        assert!(best_split(feats(&cols, &[true]), &[0.3; 20], &rows, &cfg).is_none());
        let labels: Vec<f64> = (0..20).map(|i| f64::from(i >= 10)).collect();
        assert!(best_split(feats(&cols, &[true]), &labels, &[0, 19], &cfg).is_none());
    }

    #[test]
    fn constant_soft_labels_give_single_leaf() {
        let cols = vec![(0..30).map(f64::from).collect::<Vec<_>>()];
        let root = grow_tree(feats(&cols, &[true]), &[0.3; 30], &TreeConfig::default()).unwrap();
        assert!(
            matches!(root, TreeNode::Leaf { count: 30, weight } if (weight - 0.3).abs() < 1e-12)
        );
    }

    #[test]
    fn stump_when_depth_one() {
        let x: Vec<f64> = (0..60).map(f64::from).collect();
        let labels: Vec<f64> = x.iter().map(|v| ((v / 15.0) as u32 % 2) as f64).collect();
        let cfg = TreeConfig {
            d_max: 1,
            ..TreeConfig::default()
        };
        let root = grow_tree(feats(&[x], &[true]), &labels, &cfg).unwrap();
        assert!(root.depth() <= 1);
    }

    #[test]
    fn rows_at_or_below_n_obs_are_refused() {
        let cols = vec![vec![0.0; 5]];
        assert!(matches!(
            grow_tree(feats(&cols, &[true]), &[0.5; 5], &TreeConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn merge_examples() {
        let leaf = |weight, count| Box::new(TreeNode::Leaf { weight, count });
        let merged = merge_siblings(TreeNode::Split {
            feature: 0,
            cut: 0.0,
            left: leaf(0.7, 10),
            right: leaf(0.9, 30),
        });
        match merged {
            TreeNode::Leaf { weight, count } => {
                assert_eq!(count, 40);
                assert!((weight - 0.85).abs() < 1e-15);
            }
            _ => panic!("siblings should merge"),
        }
        let kept = TreeNode::Split {
            feature: 0,
            cut: 0.0,
            left: leaf(0.7, 10),
            right: leaf(0.3, 10),
        };
        assert_eq!(merge_siblings(kept.clone()), kept);
        let cascade = TreeNode::Split {
            feature: 0,
            cut: 0.0,
            left: Box::new(TreeNode::Split {
                feature: 1,
                cut: 0.0,
                left: leaf(0.1, 6),
                right: leaf(0.4, 6),
            }),
            right: leaf(0.2, 8),
        };
        assert!(matches!(
            merge_siblings(cascade),
            TreeNode::Leaf { count: 20, .. }
        ));
    }

    #[test]
    fn leaf_decision_is_strict() {
        let design = SplitDesign::new(&[Column::new("a", ColumnKind::Binary)]);
        let mk = |w| SoftLabelTree {
            design: design.clone(),
            config: TreeConfig::default(),
            root: TreeNode::Leaf {
                weight: w,
                count: 10,
            },
        };
        assert_eq!(mk(0.85).decide(&[0.0]), 1);
        assert_eq!(mk(0.5).decide(&[0.0]), 0);
        assert_eq!(mk(0.49).decide(&[0.0]), 0);
    }

    fn binary_dataset(x: Vec<f64>, t: Vec<u8>, y: Vec<u8>) -> Dataset {
        Dataset::new(vec![Column::new("a", ColumnKind::Binary)], x, t, y).unwrap()
    }

    #[test]
    fn direct_tree_splits_on_treatment() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| f64::from(i % 3 == 0)).collect();
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let ds = binary_dataset(x, t.clone(), t);
        let tree = fit_direct_tree(&ds, &TreeConfig::default()).unwrap();
        match &tree.root {
            TreeNode::Split { feature, .. } => assert_eq!(*feature, tree.treatment_feature()),
            _ => panic!("expected a split"),
        }
        assert_eq!(tree.predict(&[0.0], 1), 1.0);
        assert_eq!(tree.predict(&[1.0], 0), 0.0);
        assert_eq!(fit_direct_tree(&ds, &TreeConfig::default()).unwrap(), tree);
    }

    #[test]
    fn direct_tree_constant_outcome() {
        let ds = binary_dataset(
            [0.0, 1.0].repeat(10),
            [0, 0, 1, 1].repeat(5),
            vec![1; 20],
        );
        let tree = fit_direct_tree(&ds, &TreeConfig::default()).unwrap();
        assert_eq!(
            tree.root,
            TreeNode::Leaf {
                weight: 1.0,
                count: 20
            }
        );
    }

    /// Exhaustive scan computed directly from the row partition.
    fn oracle_split(
        cols: &[Vec<f64>],
        cont: &[bool],
        labels: &[f64],
        cfg: &TreeConfig,
    ) -> Option<Split> {
        let n = labels.len();
        let parent = region_objective(labels).1;
        let mut best: Option<Split> = None;
        for (j, col) in cols.iter().enumerate() {
            let mut vals = col.clone();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let l: Vec<f64> = (0..n)
                    .filter(|&i| col[i] <= w[0])
                    .map(|i| labels[i])
                    .collect();
                let r: Vec<f64> = (0..n)
                    .filter(|&i| col[i] > w[0])
                    .map(|i| labels[i])
                    .collect();
                if l.len() <= cfg.n_obs || r.len() <= cfg.n_obs {
                    continue;
                }
                let gain = region_objective(&l).1 + region_objective(&r).1 - parent;
                if gain > cfg.min_gain + GAIN_TOL && best.is_none_or(|b| gain > b.gain + GAIN_TOL) {
                    let cut = if cont[j] { (w[0] + w[1]) / 2.0 } else { w[0] };
                    best = Some(Split {
                        feature: j,
                        cut,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn tiny_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>, Vec<f64>, usize)> {
        (2usize..=12, 1usize..=3).prop_flat_map(|(n, p)| {
            (
                proptest::collection::vec(proptest::collection::vec(0u8..4, n), p),
                proptest::collection::vec(any::<bool>(), p),
                proptest::collection::vec(0.0f64..=1.0, n),
                1usize..4,
            )
                .prop_map(|(cols, cont, labels, n_obs)| {
                    let cols = cols
                        .into_iter()
                        .map(|c| c.into_iter().map(f64::from).collect())
                        .collect();
                    (cols, cont, labels, n_obs)
                })
        })
    }

    proptest! {
        #[test]
        fn split_matches_exhaustive_scan((cols, cont, labels, n_obs) in tiny_data()) {
            let cfg = TreeConfig { n_obs, ..TreeConfig::default() };
            let rows: Vec<usize> = (0..labels.len()).collect();
            let got = best_split(feats(&cols, &cont), &labels, &rows, &cfg);
            let want = oracle_split(&cols, &cont, &labels, &cfg);
            prop_assert_eq!(got.map(|s| (s.feature, s.cut)), want.map(|s| (s.feature, s.cut)));
        }

        #[test]
        fn merging_preserves_decisions((cols, cont, labels, _) in tiny_data()) {
            let cfg = TreeConfig { n_obs: 1, d_max: 3, min_gain: 0.0 };
            prop_assume!(labels.len() > 1);
            let root = grow_tree(feats(&cols, &cont), &labels, &cfg).unwrap();
            let merged = merge_siblings(root.clone());
            for i in 0..labels.len() {
                let x: Vec<f64> = cols.iter().map(|c| c[i]).collect();
                prop_assert_eq!(root.route(&x).0 > 0.5, merged.route(&x).0 > 0.5);
            }
            for x0 in 0..4 {
                for x1 in 0..4 {
                    for x2 in 0..4 {
                        let x = [x0 as f64, x1 as f64, x2 as f64];
                        prop_assert_eq!(root.route(&x).0 > 0.5, merged.route(&x).0 > 0.5);
                    }
                }
            }
        }

        #[test]
        fn leaf_weights_are_region_means((cols, cont, labels, _) in tiny_data()) {
            prop_assume!(labels.len() > 1);
            let cfg = TreeConfig { n_obs: 1, d_max: 2, min_gain: 0.0 };
            let root = merge_siblings(grow_tree(feats(&cols, &cont), &labels, &cfg).unwrap());
            let mut regions = Vec::new();
            root.collect_regions(feats(&cols, &cont), &(0..labels.len()).collect::<Vec<_>>(), &mut regions);
            prop_assert_eq!(regions.iter().map(Vec::len).sum::<usize>(), labels.len());
            for rows in regions {
                let x: Vec<f64> = cols.iter().map(|c| c[rows[0]]).collect();
                let (w, count) = root.route(&x);
                prop_assert_eq!(count, rows.len());
                let mean = rows.iter().map(|&i| labels[i]).sum::<f64>() / rows.len() as f64;
                prop_assert!((w - mean).abs() < 1e-12);
            }
        }
    }
}
