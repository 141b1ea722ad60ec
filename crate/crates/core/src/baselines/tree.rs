//! CART classification trees (Gini impurity) and random forests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numeric::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// Every feature is a split candidate at every node.
    All,
    /// A fresh random subset of ceil(sqrt(p)) features per node.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// Same-size resample with replacement.
    Resample,
    /// The training set itself, unchanged.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        p1: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    root: Node,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub max_features: MaxFeatures,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: TreeParams,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn candidates(&mut self) -> Vec<usize> {
        let p = self.x[0].len();
        let mut all: Vec<usize> = (0..p).collect();
        match self.params.max_features {
            MaxFeatures::All => all,
            MaxFeatures::Sqrt => {
                let m = ((p as f64).sqrt().ceil() as usize).clamp(1, p);
                all.shuffle(&mut self.rng);
                all.truncate(m);
                all.sort_unstable();
                all
            }
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Node {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        let leaf = Node::Leaf {
            p1: pos as f64 / n as f64,
        };
        if depth >= self.params.max_depth || n < 2 || pos == 0 || pos == n {
            return leaf;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for f in self.candidates() {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                if self.y[idx[k]] == 1 {
                    left_pos += 1;
                }
                let (lo, hi) = (self.x[idx[k]][f], self.x[idx[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                let impurity = (nl as f64 * gini(left_pos, nl)
                    + nr as f64 * gini(pos - left_pos, nr))
                    / n as f64;
                if best.is_none_or(|b| impurity < b.0) {
                    best = Some((impurity, f, lo + (hi - lo) / 2.0));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        let split = partition(idx, |i| self.x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(split);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.build(l, depth + 1)),
            right: Box::new(self.build(r, depth + 1)),
        }
    }
}

/// Stable partition of `idx`; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let k = yes.len();
    for (slot, v) in idx.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    k
}

impl Tree {
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: TreeParams, seed: u64) -> Tree {
        let mut b = Builder {
            x,
            y,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let mut idx: Vec<usize> = (0..x.len()).collect();
        Tree {
            root: b.build(&mut idx, 0),
        }
    }

    /// Fraction of class-1 training rows in the leaf reached by `row`.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { p1 } => return *p1,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }
}

/// Row indices of a bootstrap sample of size `n`.
pub fn bootstrap_indices(n: usize, mode: Bootstrap, rng: &mut impl Rng) -> Vec<usize> {
    match mode {
        Bootstrap::Identity => (0..n).collect(),
        Bootstrap::Resample => (0..n).map(|_| rng.random_range(0..n)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: Bootstrap,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: ForestParams, seed: u64) -> Forest {
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[t as u64, 0]));
                let idx = bootstrap_indices(x.len(), params.bootstrap, &mut rng);
                let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
                let by: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                let tree_seed = if params.n_trees == 1 {
                    seed
                } else {
                    mix_seed(seed, &[t as u64, 1])
                };
                Tree::fit(&bx, &by, params.tree, tree_seed)
            })
            .collect();
        Forest { trees }
    }

    /// Mean of the per-tree leaf probabilities.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_proba(row)).sum::<f64>() / self.trees.len() as f64
    }
}
