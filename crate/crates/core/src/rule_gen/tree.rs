//! Shallow CART regression trees grown on quantile-grid thresholds.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ForestConfig, QuantileGrid};
use crate::dataset::Dataset;
use crate::rules::Split;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub depth: usize,
    /// Mean of the (bootstrap) response in this node.
    pub value: f64,
    pub n_samples: usize,
    /// `(feature, threshold, left, right)`; left holds `x <= threshold`.
    pub split: Option<(usize, f64, usize, usize)>,
}

/// A fitted tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Row indices of the bootstrap sample the tree was grown on.
    pub bootstrap: Vec<usize>,
}

impl Tree {
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Every non-root node with the split path leading to it.
    pub fn paths(&self) -> Vec<(usize, Vec<Split>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            if id != 0 {
                out.push((id, path.clone()));
            }
            if let Some((f, t, left, right)) = self.nodes[id].split {
                let mut lp = path.clone();
                lp.push(Split::le(f, t));
                let mut rp = path;
                rp.push(Split::gt(f, t));
                stack.push((right, rp));
                stack.push((left, lp));
            }
        }
        out
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].split.is_none()
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    grid: &'a QuantileGrid,
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow<R: Rng>(&mut self, rows: Vec<(usize, f64)>, depth: usize, rng: &mut R) -> usize {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|r| r.1).sum();
        let id = self.nodes.len();
        self.nodes.push(Node {
            depth,
            value: sum / n as f64,
            n_samples: n,
            split: None,
        });
        if depth >= self.cfg.max_depth || n < 2 * self.cfg.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&rows, sum, rng) else {
            return id;
        };
        let (left, right): (Vec<_>, Vec<_>) = rows
            .into_iter()
            .partition(|&(i, _)| self.data.value(i, best.feature) <= best.threshold);
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[id].split = Some((best.feature, best.threshold, l, r));
        id
    }

    fn best_split<R: Rng>(&self, rows: &[(usize, f64)], sum: f64, rng: &mut R) -> Option<Candidate> {
        let p = self.data.n_features();
        let mut features = sample(rng, p, self.mtry).into_vec();
        features.sort_unstable();

        let n = rows.len() as f64;
        let parent = sum * sum / n;
        let min_leaf = self.cfg.min_leaf;
        let mut best: Option<Candidate> = None;
        for f in features {
            let thresholds = &self.grid.thresholds[f];
            if thresholds.is_empty() {
                continue;
            }
            // bin b holds rows with thresholds[b-1] < x <= thresholds[b]
            let mut counts = vec![0usize; thresholds.len() + 1];
            let mut sums = vec![0.0; thresholds.len() + 1];
            for &(i, y) in rows {
                let x = self.data.value(i, f);
                let b = thresholds.partition_point(|&t| t < x);
                counts[b] += 1;
                sums[b] += y;
            }
            let (mut n_left, mut s_left) = (0usize, 0.0);
            for (j, &t) in thresholds.iter().enumerate() {
                n_left += counts[j];
                s_left += sums[j];
                let n_right = rows.len() - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let s_right = sum - s_left;
                let gain = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64 - parent;
                if gain > 1e-12 * parent.abs().max(1e-300) && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: t,
                    });
                }
            }
        }
        best
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Grows one tree on a bootstrap sample of `data` drawn from `rng`.
pub(crate) fn fit_tree<R: Rng>(data: &Dataset, grid: &QuantileGrid, cfg: &ForestConfig, mtry: usize, rng: &mut R) -> Tree {
    let n = data.n_rows();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let y = data.target();
    let mut rows: Vec<(usize, f64)> = bootstrap.iter().map(|&i| (i, y[i])).collect();
    if cfg.response_noise_sigma > 0.0 {
        let sd = cfg.response_noise_sigma * std_dev(y);
        let noise = Normal::new(0.0, sd).expect("finite noise scale");
        for r in &mut rows {
            r.1 += noise.sample(rng);
        }
    }
    let mut grower = Grower {
        data,
        grid,
        cfg,
        mtry,
        nodes: Vec::new(),
    };
    grower.grow(rows, 0, rng);
    Tree {
        nodes: grower.nodes,
        bootstrap,
    }
}

pub(crate) fn target_is_constant(data: &Dataset) -> bool {
    let y = data.target();
    y.iter().all(|&v| v == y[0])
}
