//! Bayesian backfitting for a probit sum-of-trees model.
//!
//! Each iteration draws the latent utilities given the current fit, then
//! revisits every tree in turn: a grow, prune or change proposal is accepted
//! by Metropolis-Hastings on the tree's partial residuals (leaf values
//! integrated out), after which the leaf values are redrawn from their
//! conjugate normal posterior.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tree::{has_split, FlatTree, McmcTree};
use super::truncnorm;
use super::{split_prior_prob, BartConfig, Ensemble};
use crate::math::norm_quantile;

struct Sampler<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    cfg: &'a BartConfig,
    rng: &'a mut R,
    offset: f64,
    leaf_var: f64,
    trees: Vec<McmcTree>,
    total: Vec<f64>,
    z: Vec<f64>,
    resid: Vec<f64>,
    old_fit: Vec<f64>,
    rows: Vec<usize>,
    values: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<f64>,
}

/// Log marginal likelihood of a leaf holding `n` residuals summing to `s`
/// (unit noise variance, leaf prior variance `v`), up to terms common to
/// every tree structure.
#[inline]
fn leaf_loglik(n: f64, s: f64, v: f64) -> f64 {
    let a = 1.0 + n * v;
    -0.5 * a.ln() + 0.5 * v * s * s / a
}

pub(crate) fn fit_probit_ensemble<R: Rng>(
    x: &[Vec<f64>],
    y: &[u8],
    cfg: &BartConfig,
    rng: &mut R,
) -> Ensemble {
    let n = y.len();
    let ybar = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let lo = 0.5 / n as f64;
    let offset = norm_quantile(ybar.clamp(lo, 1.0 - lo));
    let sigma_mu = 3.0 / (cfg.k * (cfg.num_trees as f64).sqrt());
    let all: Vec<usize> = (0..n).collect();
    let root_growable = has_split(&all, x);
    let mut s = Sampler {
        x,
        y,
        cfg,
        rng,
        offset,
        leaf_var: sigma_mu * sigma_mu,
        trees: (0..cfg.num_trees)
            .map(|_| McmcTree::new(n, root_growable))
            .collect(),
        total: vec![0.0; n],
        z: vec![0.0; n],
        resid: vec![0.0; n],
        old_fit: vec![0.0; n],
        rows: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        sums: Vec::new(),
        counts: Vec::new(),
    };
    let mut draws = Vec::with_capacity(cfg.iterations - cfg.burn_in);
    for iter in 0..cfg.iterations {
        s.draw_latent();
        for j in 0..cfg.num_trees {
            s.update_tree(j);
        }
        if iter >= cfg.burn_in {
            draws.push(
                s.trees
                    .iter()
                    .map(McmcTree::flatten)
                    .collect::<Vec<FlatTree>>(),
            );
        }
    }
    Ensemble { offset, draws }
}

impl<'a, R: Rng> Sampler<'a, R> {
    fn draw_latent(&mut self) {
        for i in 0..self.z.len() {
            self.z[i] = truncnorm::latent(self.rng, self.offset + self.total[i], self.y[i]);
        }
    }

    fn update_tree(&mut self, j: usize) {
        let mut tree = std::mem::replace(&mut self.trees[j], McmcTree::new(0, false));
        for i in 0..self.z.len() {
            let f = tree.fitted(i);
            self.old_fit[i] = f;
            self.resid[i] = self.z[i] - self.offset - self.total[i] + f;
        }
        if tree.is_root_only() {
            self.grow(&mut tree, 1.0);
        } else {
            let u: f64 = self.rng.random();
            if u < self.cfg.p_grow {
                self.grow(&mut tree, self.cfg.p_grow);
            } else if u < self.cfg.p_grow + self.cfg.p_prune {
                self.prune(&mut tree);
            } else {
                self.change(&mut tree);
            }
        }
        self.draw_leaves(&mut tree);
        for i in 0..self.z.len() {
            self.total[i] += tree.fitted(i) - self.old_fit[i];
        }
        self.trees[j] = tree;
    }

    /// Draws a split rule uniformly over features with at least two distinct
    /// values among `self.rows`, then uniformly over those values minus the
    /// largest.
    fn draw_rule(&mut self) -> Option<(usize, f64)> {
        let rows = &self.rows;
        let avail: Vec<usize> = (0..self.x.len())
            .filter(|&v| {
                let col = &self.x[v];
                let first = col[rows[0]];
                rows.iter().any(|&i| col[i] != first)
            })
            .collect();
        if avail.is_empty() {
            return None;
        }
        let var = avail[self.rng.random_range(0..avail.len())];
        let col = &self.x[var];
        self.values.clear();
        self.values.extend(rows.iter().map(|&i| col[i]));
        self.values.sort_unstable_by(f64::total_cmp);
        self.values.dedup();
        let k = self.rng.random_range(0..self.values.len() - 1);
        Some((var, self.values[k]))
    }

    fn split_stats(&self, var: usize, cut: f64) -> (f64, f64, f64, f64, Vec<usize>, Vec<usize>) {
        let col = &self.x[var];
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let (mut sl, mut sr) = (0.0, 0.0);
        for &i in &self.rows {
            if col[i] <= cut {
                sl += self.resid[i];
                left.push(i);
            } else {
                sr += self.resid[i];
                right.push(i);
            }
        }
        (left.len() as f64, sl, right.len() as f64, sr, left, right)
    }

    fn accept(&mut self, log_ratio: f64) -> bool {
        let u: f64 = self.rng.random();
        u.ln() < log_ratio
    }

    fn grow(&mut self, tree: &mut McmcTree, p_grow_here: f64) {
        let candidates = tree.growable_leaves();
        if candidates.is_empty() {
            return;
        }
        let leaf = candidates[self.rng.random_range(0..candidates.len())];
        let mut rows = std::mem::take(&mut self.rows);
        tree.rows_in(leaf, &mut rows);
        self.rows = rows;
        let Some((var, cut)) = self.draw_rule() else {
            tree.nodes[leaf].growable = false;
            return;
        };
        let (nl, sl, nr, sr, left, right) = self.split_stats(var, cut);
        let depth = tree.nodes[leaf].depth as i32;
        let parent = tree.nodes[leaf].parent;
        let prunable_after = tree.prunable().len() + 1
            - usize::from(parent != super::tree::NONE && tree.is_prunable(parent));
        let p_here = split_prior_prob(self.cfg.alpha, self.cfg.beta, depth);
        let p_child = split_prior_prob(self.cfg.alpha, self.cfg.beta, depth + 1);
        let v = self.leaf_var;
        let log_ratio = (self.cfg.p_prune / p_grow_here).ln()
            + (candidates.len() as f64 / prunable_after as f64).ln()
            + p_here.ln()
            + 2.0 * (1.0 - p_child).ln()
            - (1.0 - p_here).ln()
            + leaf_loglik(nl, sl, v)
            + leaf_loglik(nr, sr, v)
            - leaf_loglik(nl + nr, sl + sr, v);
        if self.accept(log_ratio) {
            let g = (has_split(&left, self.x), has_split(&right, self.x));
            tree.split_leaf(leaf, var, cut, &self.rows, self.x, g);
        }
    }

    fn prune(&mut self, tree: &mut McmcTree) {
        let candidates = tree.prunable();
        if candidates.is_empty() {
            return;
        }
        let node = candidates[self.rng.random_range(0..candidates.len())];
        let (l, r) = (tree.nodes[node].left, tree.nodes[node].right);
        let mut rows = std::mem::take(&mut self.rows);
        tree.rows_in(node, &mut rows);
        self.rows = rows;
        let (mut nl, mut sl, mut nr, mut sr) = (0.0, 0.0, 0.0, 0.0);
        for &i in &self.rows {
            if tree.leaf_of[i] as usize == l {
                nl += 1.0;
                sl += self.resid[i];
            } else {
                nr += 1.0;
                sr += self.resid[i];
            }
        }
        let growable_after = tree.growable_leaves().len() + 1
            - usize::from(tree.nodes[l].growable)
            - usize::from(tree.nodes[r].growable);
        let p_grow_after = if node == 0 { 1.0 } else { self.cfg.p_grow };
        let depth = tree.nodes[node].depth as i32;
        let p_here = split_prior_prob(self.cfg.alpha, self.cfg.beta, depth);
        let p_child = split_prior_prob(self.cfg.alpha, self.cfg.beta, depth + 1);
        let v = self.leaf_var;
        let log_ratio = (p_grow_after / self.cfg.p_prune).ln()
            + (candidates.len() as f64 / growable_after as f64).ln()
            + (1.0 - p_here).ln()
            - p_here.ln()
            - 2.0 * (1.0 - p_child).ln()
            + leaf_loglik(nl + nr, sl + sr, v)
            - leaf_loglik(nl, sl, v)
            - leaf_loglik(nr, sr, v);
        if self.accept(log_ratio) {
            tree.collapse(node, &self.rows);
        }
    }

    fn change(&mut self, tree: &mut McmcTree) {
        let candidates = tree.prunable();
        if candidates.is_empty() {
            return;
        }
        let node = candidates[self.rng.random_range(0..candidates.len())];
        let l = tree.nodes[node].left;
        let mut rows = std::mem::take(&mut self.rows);
        tree.rows_in(node, &mut rows);
        self.rows = rows;
        let (mut nl, mut sl, mut nr, mut sr) = (0.0, 0.0, 0.0, 0.0);
        for &i in &self.rows {
            if tree.leaf_of[i] as usize == l {
                nl += 1.0;
                sl += self.resid[i];
            } else {
                nr += 1.0;
                sr += self.resid[i];
            }
        }
        let Some((var, cut)) = self.draw_rule() else {
            return;
        };
        let (ml, tl, mr, tr, left, right) = self.split_stats(var, cut);
        let v = self.leaf_var;
        let log_ratio = leaf_loglik(ml, tl, v) + leaf_loglik(mr, tr, v)
            - leaf_loglik(nl, sl, v)
            - leaf_loglik(nr, sr, v);
        if self.accept(log_ratio) {
            let g = (has_split(&left, self.x), has_split(&right, self.x));
            tree.resplit(node, var, cut, &self.rows, self.x, g);
        }
    }

    fn draw_leaves(&mut self, tree: &mut McmcTree) {
        let m = tree.nodes.len();
        self.sums.clear();
        self.sums.resize(m, 0.0);
        self.counts.clear();
        self.counts.resize(m, 0.0);
        for (i, &k) in tree.leaf_of.iter().enumerate() {
            self.sums[k as usize] += self.resid[i];
            self.counts[k as usize] += 1.0;
        }
        let prec0 = 1.0 / self.leaf_var;
        for k in 0..m {
            let node = &tree.nodes[k];
            if !(node.alive && node.leaf) {
                continue;
            }
            let post_var = 1.0 / (self.counts[k] + prec0);
            let mean = post_var * self.sums[k];
            let d = Normal::new(mean, post_var.sqrt()).expect("finite posterior");
            tree.nodes[k].value = d.sample(self.rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::norm_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leaf_loglik_matches_direct_marginal() {
        // residuals r ~ N(mu, 1), mu ~ N(0, v): log p(r) up to the
        // structure-independent term -0.5 * sum(r^2) - n/2 log(2 pi)
        let r = [0.3, -1.2, 2.0];
        let v = 0.04;
        let n = r.len() as f64;
        let s: f64 = r.iter().sum();
        // direct: multivariate normal with covariance I + v * 11'
        let det = 1.0 + n * v;
        let quad_full: f64 = r.iter().map(|x| x * x).sum::<f64>() - v * s * s / det;
        let direct = -0.5 * det.ln() - 0.5 * quad_full;
        let ours = leaf_loglik(n, s, v) - 0.5 * r.iter().map(|x| x * x).sum::<f64>();
        assert!((direct - ours).abs() < 1e-12);
    }

    #[test]
    fn single_tree_recovers_step_function() {
        let n = 400;
        let x = vec![(0..n).map(|i| (i % 2) as f64).collect::<Vec<f64>>()];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let p = if i % 2 == 1 { 0.85 } else { 0.2 };
                rng.random_bool(p) as u8
            })
            .collect();
        let cfg = BartConfig {
            num_trees: 10,
            iterations: 300,
            burn_in: 100,
            ..BartConfig::default()
        };
        let ens = fit_probit_ensemble(&x, &y, &cfg, &mut rng);
        assert_eq!(ens.draws.len(), 200);
        let mean_prob = |v: f64| {
            ens.draws
                .iter()
                .map(|d| norm_cdf(ens.offset + d.iter().map(|t| t.eval(&[v])).sum::<f64>()))
                .sum::<f64>()
                / ens.draws.len() as f64
        };
        assert!((mean_prob(1.0) - 0.85).abs() < 0.08, "{}", mean_prob(1.0));
        assert!((mean_prob(0.0) - 0.2).abs() < 0.08, "{}", mean_prob(0.0));
    }

    #[test]
    fn constant_features_never_split() {
        let x = vec![vec![1.0; 30]];
        let y: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        let cfg = BartConfig {
            num_trees: 5,
            iterations: 20,
            burn_in: 5,
            ..BartConfig::default()
        };
        let ens = fit_probit_ensemble(&x, &y, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(ens.draws.iter().flatten().all(|t| t.nodes.len() == 1));
    }
}
