//! Logistic regression fitted by per-row stochastic gradient ascent on the
//! Bernoulli log-likelihood of labels in [0, 1].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset};
use crate::error::{param, Error, Result};
use crate::math::{clamp_prob, expit};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Passes over the data.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1000,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return param("learning rate must be positive");
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return param("epochs and batch size must be at least 1");
        }
        Ok(())
    }
}

/// Feature constructor: intercept plus dummy-coded covariates, optionally
/// followed by the treatment and its interactions with every covariate term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    columns: Vec<Column>,
    treatment: bool,
}

impl Basis {
    pub fn covariates(columns: &[Column]) -> Self {
        Self {
            columns: columns.to_vec(),
            treatment: false,
        }
    }

    pub fn with_treatment(columns: &[Column]) -> Self {
        Self {
            columns: columns.to_vec(),
            treatment: true,
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn has_treatment(&self) -> bool {
        self.treatment
    }

    /// Width of the dummy-expanded covariate block.
    pub fn covariate_width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Ordinal { levels } | ColumnKind::Categorical { levels } => {
                    levels as usize - 1
                }
                _ => 1,
            })
            .sum()
    }

    pub fn width(&self) -> usize {
        let p = self.covariate_width();
        if self.treatment {
            2 * p + 2
        } else {
            p + 1
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut cov = Vec::new();
        for c in &self.columns {
            match c.kind {
                ColumnKind::Ordinal { levels } | ColumnKind::Categorical { levels } => {
                    cov.extend((2..=levels).map(|l| format!("{}={l}", c.name)));
                }
                _ => cov.push(c.name.clone()),
            }
        }
        let mut names = vec!["(intercept)".to_string()];
        names.extend(cov.iter().cloned());
        if self.treatment {
            names.push("T".into());
            names.extend(cov.iter().map(|n| format!("{n}:T")));
        }
        names
    }

    /// Appends `phi(row, t)` to `out`; `t` is ignored without a treatment block.
    pub fn expand(&self, row: &[f64], t: u8, out: &mut Vec<f64>) {
        out.push(1.0);
        let start = out.len();
        for (c, &v) in self.columns.iter().zip(row) {
            match c.kind {
                ColumnKind::Ordinal { levels } | ColumnKind::Categorical { levels } => {
                    out.extend((2..=levels).map(|l| f64::from(v == f64::from(l))));
                }
                _ => out.push(v),
            }
        }
        if self.treatment {
            let t = f64::from(t);
            let end = out.len();
            out.push(t);
            for k in start..end {
                out.push(out[k] * t);
            }
        }
    }

    fn matrix(&self, n: usize, x: &[f64], t: Option<&[u8]>) -> Result<Vec<f64>> {
        let p = self.columns.len();
        let mut phi = Vec::with_capacity(n * self.width());
        for i in 0..n {
            self.expand(&x[i * p..(i + 1) * p], t.map_or(0, |t| t[i]), &mut phi);
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return param("logistic features must be finite");
        }
        Ok(phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub basis: Basis,
    pub weights: Vec<f64>,
}

impl LogisticModel {
    pub fn prob(&self, row: &[f64], t: u8) -> f64 {
        let mut phi = Vec::with_capacity(self.weights.len());
        self.basis.expand(row, t, &mut phi);
        expit(dot(&self.weights, &phi))
    }

    /// Rule `1{r(x) > 0.5}` for a covariate-only model.
    pub fn decide(&self, row: &[f64]) -> u8 {
        u8::from(self.prob(row, 0) > 0.5)
    }

    pub fn assign(&self, columns: &[Column], x: &[f64]) -> Result<Vec<u8>> {
        if self.basis.columns() != columns {
            return Err(Error::Prediction(
                "covariate schema differs from the model's".into(),
            ));
        }
        Ok(x.chunks_exact(columns.len().max(1))
            .map(|r| self.decide(r))
            .collect())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_i p_i ln r_i + (1 - p_i) ln(1 - r_i)` with `r_i = expit(w . phi_i)`,
/// `phi` row-major with `w.len()` columns.
pub fn soft_log_likelihood(w: &[f64], phi: &[f64], labels: &[f64]) -> f64 {
    phi.chunks_exact(w.len())
        .zip(labels)
        .map(|(row, &p)| {
            let r = clamp_prob(expit(dot(w, row)));
            p * r.ln() + (1.0 - p) * (1.0 - r).ln()
        })
        .sum()
}

/// Gradient of [`soft_log_likelihood`]: `sum_i (p_i - r_i) phi_i`.
pub fn soft_gradient(w: &[f64], phi: &[f64], labels: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for (row, &p) in phi.chunks_exact(w.len()).zip(labels) {
        let resid = p - expit(dot(w, row));
        for (gk, xk) in g.iter_mut().zip(row) {
            *gk += resid * xk;
        }
    }
    g
}

fn sgd(phi: &[f64], k: usize, labels: &[f64], cfg: &SgdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if labels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return param("logistic labels must lie in [0, 1]");
    }
    let n = labels.len();
    let mut rng = stream_rng(cfg.seed, Stream::Sgd);
    let mut w = vec![0.0; k];
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = vec![0.0; k];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            step.iter_mut().for_each(|s| *s = 0.0);
            for &i in batch {
                let row = &phi[i * k..(i + 1) * k];
                let resid = labels[i] - expit(dot(&w, row));
                for (s, x) in step.iter_mut().zip(row) {
                    *s += resid * x;
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (wk, s) in w.iter_mut().zip(&step) {
                *wk += scale * s;
            }
        }
    }
    Ok(w)
}

/// Covariate-only logistic model fitted to soft labels.
pub fn fit_soft_logistic(
    dataset: &Dataset,
    labels: &[f64],
    cfg: &SgdConfig,
) -> Result<LogisticModel> {
    if labels.len() != dataset.n() {
        return param(format!("{} labels for {} rows", labels.len(), dataset.n()));
    }
    let basis = Basis::covariates(dataset.columns());
    let phi = basis.matrix(dataset.n(), dataset.x(), None)?;
    let weights = sgd(&phi, basis.width(), labels, cfg)?;
    Ok(LogisticModel { basis, weights })
}

/// Outcome model over covariates, treatment and their interactions, fitted to
/// observed outcomes.
pub fn fit_direct_logistic(dataset: &Dataset, cfg: &SgdConfig) -> Result<LogisticModel> {
    let basis = Basis::with_treatment(dataset.columns());
    let phi = basis.matrix(dataset.n(), dataset.x(), Some(dataset.t()))?;
    let labels: Vec<f64> = dataset.y().iter().map(|&y| f64::from(y)).collect();
    let weights = sgd(&phi, basis.width(), &labels, cfg)?;
    Ok(LogisticModel { basis, weights })
}
