use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::FeatureRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `floor(sqrt(D))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 16,
            max_features: None,
        }
    }
}

/// One node of a tree. Leaves have `left == right == 0`; samples with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Training samples per class index reaching this node.
    pub counts: Vec<u32>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.left == 0 && self.right == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Class index with the most training samples in the reached leaf.
    pub fn vote(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return argmax_low(&node.counts);
            }
            i = if x[node.feature] <= node.threshold {
                node.left
            } else {
                node.right
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(nodes, n.left).max(walk(nodes, n.right))
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Index of the largest count; ties go to the lowest index.
fn argmax_low(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = f64::from(total);
    1.0 - counts
        .iter()
        .map(|&c| (f64::from(c) / t).powi(2))
        .sum::<f64>()
}

struct Builder<'a> {
    xs: &'a [&'a [f64]],
    ys: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    mtry: usize,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.ys[i]] += 1;
        }
        c
    }

    /// Best `(feature, threshold, impurity)` over the first `mtry` features of
    /// a random permutation, continuing past `mtry` only while no valid split
    /// has been found.
    fn best_split(&self, idx: &mut [usize], rng: &mut Xoshiro256PlusPlus) -> Option<(usize, f64)> {
        let d = self.xs[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let total = idx.len() as u32;
        let parent = self.counts(idx);
        let mut best: Option<(usize, f64, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            idx.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            let mut left = vec![0u32; self.n_classes];
            for k in 0..idx.len() - 1 {
                left[self.ys[idx[k]]] += 1;
                let (lo, hi) = (self.xs[idx[k]][f], self.xs[idx[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = (k + 1) as u32;
                let right: Vec<u32> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let impurity = (f64::from(nl) * gini(&left, nl)
                    + f64::from(total - nl) * gini(&right, total - nl))
                    / f64::from(total);
                if best.is_none_or(|(_, _, b)| impurity < b) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((f, threshold, impurity));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Xoshiro256PlusPlus) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0,
            counts: counts.clone(),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return id;
        };
        let xs = self.xs;
        let mut left_idx: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| xs[i][feature] <= threshold)
            .collect();
        let mut right_idx: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| xs[i][feature] > threshold)
            .collect();
        let left = self.grow(&mut left_idx, depth + 1, rng);
        let right = self.grow(&mut right_idx, depth + 1, rng);
        let node = &mut self.nodes[id];
        node.feature = feature;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        id
    }
}

/// Bagged Gini decision trees with random feature subsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Every random draw derives from `seed`: tree `t` uses its own generator
    /// seeded with the `t`-th draw of a master generator.
    pub fn fit(
        records: &[FeatureRecord],
        classes: &[u32],
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        let xs: Vec<&[f64]> = records.iter().map(|r| r.features.as_slice()).collect();
        let ys: Vec<usize> = records
            .iter()
            .map(|r| {
                classes
                    .binary_search(&r.label)
                    .expect("label among classes")
            })
            .collect();
        let d = xs[0].len();
        let mtry = params
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d);
        let n = records.len();
        let mut master = Xoshiro256PlusPlus::seed_from_u64(seed);
        let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| master.random()).collect();

        let trees = tree_seeds
            .into_iter()
            .map(|s| {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(s);
                let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder {
                    xs: &xs,
                    ys: &ys,
                    n_classes: classes.len(),
                    max_depth: params.max_depth,
                    mtry,
                    nodes: Vec::new(),
                };
                b.grow(&mut sample, 0, &mut rng);
                Tree { nodes: b.nodes }
            })
            .collect();
        ForestModel { trees }
    }

    /// Plurality over tree votes; ties go to the smaller class id.
    pub fn predict(&self, x: &[f64], classes: &[u32]) -> u32 {
        let mut votes = vec![0u32; classes.len()];
        for t in &self.trees {
            votes[t.vote(x)] += 1;
        }
        classes[argmax_low(&votes)]
    }
}
