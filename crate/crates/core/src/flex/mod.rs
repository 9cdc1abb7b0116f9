//! Flexible outcome model: probit sum-of-trees fitted by backfitting MCMC,
//! with an optional propensity sub-model whose posterior mean is appended as
//! an extra covariate.

mod sampler;
pub mod tree;
mod truncnorm;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset};
use crate::design::SplitDesign;
use crate::error::{param, Error, Result};
use crate::math::{clamp_prob, norm_cdf};
use crate::rng::{stream_rng, Stream};
pub use tree::{FlatNode, FlatTree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BartConfig {
    pub num_trees: usize,
    /// Base of the depth prior.
    pub alpha: f64,
    /// Power of the depth prior.
    pub beta: f64,
    /// Leaf-scale factor: leaf values have prior sd `3 / (k * sqrt(num_trees))`.
    pub k: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub p_grow: f64,
    pub p_prune: f64,
    pub p_change: f64,
}

impl Default for BartConfig {
    fn default() -> Self {
        Self {
            num_trees: 200,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            iterations: 1100,
            burn_in: 100,
            p_grow: 0.28,
            p_prune: 0.28,
            p_change: 0.44,
        }
    }
}

impl BartConfig {
    /// Smaller ensemble and chain for replication studies on a workstation.
    pub fn desk() -> Self {
        Self {
            num_trees: 50,
            iterations: 600,
            burn_in: 100,
            ..Self::default()
        }
    }

    pub fn draws(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return param("num_trees must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return param(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta > 0.0) || !(self.k > 0.0) {
            return param("beta and k must be positive");
        }
        if self.burn_in >= self.iterations {
            return param(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        let probs = [self.p_grow, self.p_prune, self.p_change];
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return param("proposal probabilities must be nonnegative and sum to 1");
        }
        if !(self.p_grow > 0.0 && self.p_prune > 0.0) {
            return param("grow and prune probabilities must be positive");
        }
        Ok(())
    }

    pub fn split_prior_prob(&self, depth: u32) -> f64 {
        split_prior_prob(self.alpha, self.beta, depth as i32)
    }
}

/// Prior probability that a node at `depth` is split: `alpha (1 + depth)^-beta`.
pub fn split_prior_prob(alpha: f64, beta: f64, depth: i32) -> f64 {
    alpha * (1.0 + depth as f64).powf(-beta)
}

/// Retained posterior draws of a probit tree ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub offset: f64,
    pub draws: Vec<Vec<FlatTree>>,
}

impl Ensemble {
    #[inline]
    pub fn latent(&self, draw: usize, x: &[f64]) -> f64 {
        self.offset + self.draws[draw].iter().map(|t| t.eval(x)).sum::<f64>()
    }

    #[inline]
    pub fn prob(&self, draw: usize, x: &[f64]) -> f64 {
        clamp_prob(norm_cdf(self.latent(draw, x)))
    }

    pub fn posterior_mean(&self, x: &[f64]) -> f64 {
        (0..self.draws.len()).map(|d| self.prob(d, x)).sum::<f64>() / self.draws.len() as f64
    }
}

/// `D x n x 2` outcome probabilities, `values[d][i][t] = f^(d)(x_i, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl PosteriorDraws {
    /// `values` laid out as draw-major, then individual, then arm.
    pub fn new(d: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * n * 2 || d == 0 || n == 0 {
            return param("draw array shape mismatch");
        }
        if values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return param("draw probabilities must lie strictly inside (0, 1)");
        }
        Ok(Self { n, d, values })
    }

    /// Single-draw table from point estimates.
    pub fn from_point(p1: &[f64], p0: &[f64]) -> Result<Self> {
        if p1.len() != p0.len() {
            return param("marginal vectors differ in length");
        }
        let values = p1
            .iter()
            .zip(p0)
            .flat_map(|(&a, &b)| [clamp_prob(b), clamp_prob(a)])
            .collect();
        Self::new(1, p1.len(), values)
    }

    pub fn from_draws(p1: &[Vec<f64>], p0: &[Vec<f64>]) -> Result<Self> {
        if p1.is_empty() || p1.len() != p0.len() {
            return param("draw sets differ in size");
        }
        let n = p1[0].len();
        let mut values = Vec::with_capacity(p1.len() * n * 2);
        for (a, b) in p1.iter().zip(p0) {
            if a.len() != n || b.len() != n {
                return param("ragged draw set");
            }
            values.extend(a.iter().zip(b).flat_map(|(&x1, &x0)| [x0, x1]));
        }
        Self::new(p1.len(), n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_draws(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, draw: usize, i: usize, t: usize) -> f64 {
        self.values[(draw * self.n + i) * 2 + t]
    }

    /// `(f(x_i, 1), f(x_i, 0))` for one draw.
    #[inline]
    pub fn pair(&self, draw: usize, i: usize) -> (f64, f64) {
        let k = (draw * self.n + i) * 2;
        (self.values[k + 1], self.values[k])
    }

    pub fn mean(&self, i: usize, t: usize) -> f64 {
        (0..self.d).map(|d| self.get(d, i, t)).sum::<f64>() / self.d as f64
    }

    /// Posterior-mean treatment effect per individual.
    pub fn mean_tau(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.mean(i, 1) - self.mean(i, 0))
            .collect()
    }

    pub fn select_draws(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.n * 2);
        for &d in idx {
            values.extend_from_slice(&self.values[d * self.n * 2..(d + 1) * self.n * 2]);
        }
        Self::new(idx.len(), self.n, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFlexModel {
    pub format_version: u32,
    pub design: SplitDesign,
    pub config: BartConfig,
    pub outcome: Ensemble,
    /// Present when the outcome model was augmented with an estimated propensity.
    pub propensity: Option<Ensemble>,
}

impl FittedFlexModel {
    pub fn columns(&self) -> &[Column] {
        self.design.columns()
    }

    pub fn num_draws(&self) -> usize {
        self.outcome.draws.len()
    }

    /// Feature names as seen by the outcome ensemble.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .design
            .features()
            .iter()
            .map(|f| f.name.clone())
            .collect();
        names.push("T".into());
        if self.propensity.is_some() {
            names.push("propensity".into());
        }
        names
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = std::io::BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = std::io::BufReader::new(fs::File::open(path)?);
        let m: Self = serde_json::from_reader(r)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Artifact(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// Fits the flexible outcome model `f(x, t) = Phi(G(x, t))`.
pub fn fit_flex(
    dataset: &Dataset,
    config: &BartConfig,
    seed: u64,
    augment_with_propensity: bool,
) -> Result<FittedFlexModel> {
    config.validate()?;
    if dataset.n() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 rows to fit the outcome model, got {}",
            dataset.n()
        )));
    }
    let design = SplitDesign::new(dataset.columns());
    let mut x = design.columns_of(dataset.x());
    let propensity = if augment_with_propensity {
        let mut rng = stream_rng(seed, Stream::Propensity);
        let ens = sampler::fit_probit_ensemble(&x, dataset.t(), config, &mut rng);
        let ps = propensity_column(&ens, &x);
        Some((ens, ps))
    } else {
        None
    };
    x.push(dataset.t().iter().map(|&t| t as f64).collect());
    let propensity = propensity.map(|(ens, ps)| {
        x.push(ps);
        ens
    });
    let mut rng = stream_rng(seed, Stream::Flex);
    let outcome = sampler::fit_probit_ensemble(&x, dataset.y(), config, &mut rng);
    Ok(FittedFlexModel {
        format_version: MODEL_FORMAT_VERSION,
        design,
        config: config.clone(),
        outcome,
        propensity,
    })
}

fn propensity_column(ens: &Ensemble, x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.first().map_or(0, Vec::len);
    let mut row = vec![0.0; x.len()];
    (0..n)
        .map(|i| {
            for (r, c) in row.iter_mut().zip(x) {
                *r = c[i];
            }
            ens.posterior_mean(&row)
        })
        .collect()
}

/// Evaluates every retained draw at `t = 0` and `t = 1` for each row of the
/// row-major covariate matrix `x` (training column layout, no treatment).
pub fn predict_draws(
    model: &FittedFlexModel,
    columns: &[Column],
    x: &[f64],
) -> Result<PosteriorDraws> {
    if !model.design.same_schema(columns) {
        return Err(Error::Prediction(
            "covariate columns do not match the training schema".into(),
        ));
    }
    let p = columns.len();
    if p == 0 || !x.len().is_multiple_of(p) || x.is_empty() {
        return Err(Error::Prediction(
            "covariate matrix has the wrong width".into(),
        ));
    }
    let n = x.len() / p;
    let width = model.design.width();
    let t_col = width;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for r in x.chunks_exact(p) {
        let mut f = Vec::with_capacity(width + 2);
        model.design.expand_row(r, &mut f);
        let ps = model.propensity.as_ref().map(|ens| ens.posterior_mean(&f));
        f.push(0.0);
        f.extend(ps);
        rows.push(f);
    }
    let d = model.num_draws();
    let mut values = vec![0.0; d * n * 2];
    values
        .par_chunks_mut(n * 2)
        .enumerate()
        .for_each(|(draw, out)| {
            let mut buf = vec![0.0; rows.first().map_or(0, Vec::len)];
            for (i, f) in rows.iter().enumerate() {
                buf.copy_from_slice(f);
                for t in 0..2 {
                    buf[t_col] = t as f64;
                    out[i * 2 + t] = model.outcome.prob(draw, &buf);
                }
            }
        });
    PosteriorDraws::new(d, n, values)
}

pub fn predict_dataset(model: &FittedFlexModel, dataset: &Dataset) -> Result<PosteriorDraws> {
    predict_draws(model, dataset.columns(), dataset.x())
}
