//! Random forest of CART trees: bootstrap per tree, Gini-impurity splits
//! over a random feature subset per node, class histograms at the leaves.

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::util::substream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Class counts of the training samples that reached this leaf.
        histogram: Vec<u64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Samples with `x[feature] <= threshold`.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaf_for(&self, x: &[f64]) -> &Vec<u64> {
        match self {
            TreeNode::Leaf { histogram } => histogram,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.leaf_for(x)
                } else {
                    right.leaf_for(x)
                }
            }
        }
    }

    /// This tree's vote: the leaf's majority class, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_count(self.leaf_for(x))
    }
}

/// How many features each node considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// ⌈√d⌉ distinct features drawn per node.
    Sqrt,
    /// Every feature at every node.
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub max_depth: usize,
    pub feature_subsample: FeatureSubsample,
    pub seed: u64,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Majority vote over the trees, lowest class index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0u64; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1;
        }
        argmax_count(&votes)
    }
}

fn argmax_count(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[u64], n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / n;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

/// Exhaustively search the given features for the split with the largest
/// Gini-impurity decrease over the indexed samples. Candidate thresholds are
/// midpoints between consecutive distinct feature values. Ties keep the
/// first candidate in (feature order, ascending threshold) order. Returns
/// `(feature, threshold, decrease)`, or `None` when nothing improves.
pub fn best_split(
    data: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    indices: &[usize],
    features: &[usize],
) -> Option<(usize, f64, f64)> {
    if indices.len() < 2 {
        return None;
    }
    let n = indices.len() as f64;
    let mut parent_counts = vec![0u64; n_classes];
    for &i in indices {
        parent_counts[labels[i]] += 1;
    }
    let parent_gini = gini(&parent_counts, n);

    let mut best: Option<(usize, f64, f64)> = None;
    for &f in features {
        // Sort this node's samples by the feature once, then sweep the
        // boundary between distinct values, keeping running left counts.
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| data[a][f].partial_cmp(&data[b][f]).unwrap().then(a.cmp(&b)));
        let mut left_counts = vec![0u64; n_classes];
        let mut left_n = 0.0;
        for w in 0..order.len() - 1 {
            let cur = data[order[w]][f];
            let next = data[order[w + 1]][f];
            left_counts[labels[order[w]]] += 1;
            left_n += 1.0;
            if cur == next {
                continue;
            }
            let threshold = cur + (next - cur) / 2.0;
            let right_counts: Vec<u64> = parent_counts
                .iter()
                .zip(&left_counts)
                .map(|(p, l)| p - l)
                .collect();
            let right_n = n - left_n;
            let weighted =
                (left_n / n) * gini(&left_counts, left_n) + (right_n / n) * gini(&right_counts, right_n);
            let decrease = parent_gini - weighted;
            if decrease > best.map_or(0.0, |(_, _, d)| d) {
                best = Some((f, threshold, decrease));
            }
        }
    }
    best
}

fn grow(
    data: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    indices: &[usize],
    depth_left: usize,
    subsample: FeatureSubsample,
    rng: &mut impl Rng,
) -> TreeNode {
    let mut histogram = vec![0u64; n_classes];
    for &i in indices {
        histogram[labels[i]] += 1;
    }
    let pure = histogram.iter().filter(|&&c| c > 0).count() <= 1;
    if depth_left == 0 || pure || indices.len() < 2 {
        return TreeNode::Leaf { histogram };
    }

    let d = data[0].len();
    let features: Vec<usize> = match subsample {
        FeatureSubsample::All => (0..d).collect(),
        FeatureSubsample::Sqrt => {
            let k = (d as f64).sqrt().ceil() as usize;
            // Partial Fisher-Yates over the feature indices.
            let mut pool: Vec<usize> = (0..d).collect();
            for i in 0..k {
                let j = rng.gen_range(i..d);
                pool.swap(i, j);
            }
            pool.truncate(k);
            pool
        }
    };

    match best_split(data, labels, n_classes, indices, &features) {
        None => TreeNode::Leaf { histogram },
        Some((feature, threshold, _)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                indices.iter().partition(|&&i| data[i][feature] <= threshold);
            let left = grow(data, labels, n_classes, &left_idx, depth_left - 1, subsample, rng);
            let right = grow(data, labels, n_classes, &right_idx, depth_left - 1, subsample, rng);
            TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
        }
    }
}

/// Train a forest. Single-class data degenerates to constant trees rather
/// than erroring.
pub fn forest_train(
    data: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    n_estimators: usize,
    max_depth: usize,
    feature_subsample: FeatureSubsample,
    seed: u64,
) -> ForestModel {
    assert_eq!(data.len(), labels.len());
    assert!(!data.is_empty(), "forest needs training data");
    assert!(labels.iter().all(|&l| l < n_classes), "label out of range");
    let n = data.len();

    let trees = crate::par::map_indices(n_estimators, |t| {
        let mut rng = substream(seed, &format!("forest/tree/{t}"));
        let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        grow(data, labels, n_classes, &bootstrap, max_depth, feature_subsample, &mut rng)
    });

    ForestModel {
        n_classes,
        n_features: data[0].len(),
        max_depth,
        feature_subsample,
        seed,
        trees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Two well-separated Gaussian-ish blobs in 3 dimensions.
    fn blobs(seed: u64, per_class: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = substream(seed, "forest/blobs");
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            let center = if class == 0 { -2.0 } else { 2.0 };
            for _ in 0..per_class {
                data.push(vec![
                    center + rng.gen_range(-0.5..0.5),
                    rng.gen_range(-1.0..1.0),
                    center * 0.5 + rng.gen_range(-0.5..0.5),
                ]);
                labels.push(class);
            }
        }
        (data, labels)
    }

    #[test]
    fn separable_blobs_train_to_perfect_accuracy() {
        let (data, labels) = blobs(71, 40);
        let model = forest_train(&data, &labels, 2, 11, 4, FeatureSubsample::Sqrt, 5);
        let hits = data
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| model.predict(x) == y)
            .count();
        assert_eq!(hits, data.len());
        assert!(model.trees.iter().all(|t| t.depth() <= 4));
    }

    #[test]
    fn depth_zero_predicts_the_majority_class() {
        // 80/20 split so every bootstrap keeps class 1 in the majority.
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            data.push(vec![i as f64]);
            labels.push(usize::from(i < 80));
        }
        let model = forest_train(&data, &labels, 2, 15, 0, FeatureSubsample::All, 9);
        assert!(model.trees.iter().all(|t| matches!(t, TreeNode::Leaf { .. })));
        for x in &data {
            assert_eq!(model.predict(x), 1);
        }
    }

    #[test]
    fn single_class_data_gives_a_constant_model() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64)]).collect();
        let labels = vec![3usize; 20];
        let model = forest_train(&data, &labels, 5, 7, 15, FeatureSubsample::Sqrt, 2);
        for x in &data {
            assert_eq!(model.predict(x), 3);
        }
    }

    /// Brute-force enumeration oracle: every (feature, midpoint threshold)
    /// pair, Gini computed from scratch per candidate.
    fn exhaustive_best(
        data: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        indices: &[usize],
    ) -> Option<(usize, f64, f64)> {
        let gini_of = |ids: &[usize]| -> f64 {
            let mut counts = vec![0u64; n_classes];
            for &i in ids {
                counts[labels[i]] += 1;
            }
            gini(&counts, ids.len() as f64)
        };
        let n = indices.len() as f64;
        let parent = gini_of(indices);
        let d = data[0].len();
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..d {
            let mut values: Vec<f64> = indices.iter().map(|&i| data[i][f]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            for w in values.windows(2) {
                let threshold = w[0] + (w[1] - w[0]) / 2.0;
                let left: Vec<usize> =
                    indices.iter().copied().filter(|&i| data[i][f] <= threshold).collect();
                let right: Vec<usize> =
                    indices.iter().copied().filter(|&i| data[i][f] > threshold).collect();
                let weighted = left.len() as f64 / n * gini_of(&left)
                    + right.len() as f64 / n * gini_of(&right);
                let decrease = parent - weighted;
                if decrease > best.map_or(0.0, |(_, _, d)| d) {
                    best = Some((f, threshold, decrease));
                }
            }
        }
        best
    }

    #[test]
    fn split_search_matches_exhaustive_enumeration() {
        let mut rng = substream(72, "forest/oracle");
        for case in 0..20 {
            let n = 60;
            let d = 4;
            let n_classes = 3;
            let data: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| (rng.gen_range(0..12) as f64) / 3.0).collect())
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
            let indices: Vec<usize> = (0..n).collect();
            let features: Vec<usize> = (0..d).collect();

            let got = best_split(&data, &labels, n_classes, &indices, &features);
            let want = exhaustive_best(&data, &labels, n_classes, &indices);
            match (got, want) {
                (None, None) => {}
                (Some((gf, gt, gd)), Some((wf, wt, wd))) => {
                    assert_eq!(gf, wf, "case {case}: feature");
                    assert!((gt - wt).abs() < 1e-12, "case {case}: threshold");
                    assert!((gd - wd).abs() < 1e-12, "case {case}: decrease");
                }
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn prediction_is_invariant_to_tree_order() {
        let (data, labels) = blobs(73, 30);
        let mut model = forest_train(&data, &labels, 2, 9, 3, FeatureSubsample::Sqrt, 11);
        let before: Vec<usize> = data.iter().map(|x| model.predict(x)).collect();
        model.trees.reverse();
        let after: Vec<usize> = data.iter().map(|x| model.predict(x)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn same_seed_is_bit_reproducible_through_json() {
        let (data, labels) = blobs(74, 25);
        let a = forest_train(&data, &labels, 2, 6, 5, FeatureSubsample::Sqrt, 21);
        let b = forest_train(&data, &labels, 2, 6, 5, FeatureSubsample::Sqrt, 21);
        let ja = crate::util::to_json_f64_exact(&a).unwrap();
        let jb = crate::util::to_json_f64_exact(&b).unwrap();
        assert_eq!(ja, jb);
        let c = forest_train(&data, &labels, 2, 6, 5, FeatureSubsample::Sqrt, 22);
        assert_ne!(ja, crate::util::to_json_f64_exact(&c).unwrap());

        // Round trip preserves behavior.
        let parsed: ForestModel = serde_json::from_str(&ja).unwrap();
        for x in &data {
            assert_eq!(parsed.predict(x), a.predict(x));
        }
    }

    #[test]
    fn vote_ties_go_to_the_lowest_class_index() {
        assert_eq!(argmax_count(&[3, 3, 1]), 0);
        assert_eq!(argmax_count(&[1, 4, 4]), 1);
        assert_eq!(argmax_count(&[0, 0, 0]), 0);
    }
}
