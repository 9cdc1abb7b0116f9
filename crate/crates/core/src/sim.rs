//! Synthetic confounded populations with known potential-outcome
//! probabilities.
//!
//! Covariates are five binary columns `X_A..X_E` (Bernoulli 0.5), five
//! ordinal columns `X_a..X_e` uniform on `{1,2,3,4}`, and two standard normal
//! columns `X_Ca`, `X_Cb`. Dummy terms in the scenario formulas are exact-level
//! indicators, so `X_a3` is `1{X_a = 3}`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset};
use crate::error::{param, Error, Result};
use crate::math::{expit, mean, sample_sd, PROB_EPS};
use crate::rng::{stream_rng, Stream};

pub const NUM_COVARIATES: usize = 12;

const XA: usize = 0;
const XB: usize = 1;
const XC: usize = 2;
const XLA: usize = 5;
const XLB: usize = 6;
const XLC: usize = 7;
const XCA: usize = 10;
const XCB: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 8] = [
        ScenarioId::A,
        ScenarioId::B,
        ScenarioId::C,
        ScenarioId::D,
        ScenarioId::E,
        ScenarioId::F,
        ScenarioId::G,
        ScenarioId::H,
    ];
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ScenarioId::A),
            "B" => Ok(ScenarioId::B),
            "C" => Ok(ScenarioId::C),
            "D" => Ok(ScenarioId::D),
            "E" => Ok(ScenarioId::E),
            "F" => Ok(ScenarioId::F),
            "G" => Ok(ScenarioId::G),
            "H" => Ok(ScenarioId::H),
            _ => param(format!("unknown scenario `{s}` (expected one of A..H)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    /// Confounding strength.
    pub lambda: f64,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId) -> Self {
        Self {
            id,
            lambda: 3f64.ln(),
        }
    }
}

/// A simulated population or sample together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPopulation {
    pub dataset: Dataset,
    pub true_p1: Vec<f64>,
    pub true_p0: Vec<f64>,
    pub true_tau: Vec<f64>,
    pub propensity: Vec<f64>,
}

impl SimPopulation {
    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn select(&self, idx: &[usize]) -> SimPopulation {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        SimPopulation {
            dataset: self.dataset.select_rows(idx),
            true_p1: pick(&self.true_p1),
            true_p0: pick(&self.true_p0),
            true_tau: pick(&self.true_tau),
            propensity: pick(&self.propensity),
        }
    }
}

pub fn sim_columns() -> Vec<Column> {
    let mut cols = Vec::with_capacity(NUM_COVARIATES);
    for s in ["A", "B", "C", "D", "E"] {
        cols.push(Column::new(format!("X_{s}"), ColumnKind::Binary));
    }
    for s in ["a", "b", "c", "d", "e"] {
        cols.push(Column::new(
            format!("X_{s}"),
            ColumnKind::Ordinal { levels: 4 },
        ));
    }
    cols.push(Column::new("X_Ca", ColumnKind::Continuous));
    cols.push(Column::new("X_Cb", ColumnKind::Continuous));
    cols
}

/// Row-major `n x 12` covariate matrix.
pub fn sample_covariates(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Covariates);
    let mut x = Vec::with_capacity(n * NUM_COVARIATES);
    for _ in 0..n {
        for _ in 0..5 {
            x.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        }
        for _ in 0..5 {
            x.push(rng.random_range(1..=4u32) as f64);
        }
        for _ in 0..2 {
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
    }
    x
}

#[inline]
fn is(x: &[f64], col: usize, level: f64) -> f64 {
    if x[col] == level {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn ind(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

/// Logit of P(Y = 1 | x, t) under `scenario`.
pub fn true_logit(scenario: ScenarioId, x: &[f64], t: u8) -> f64 {
    debug_assert_eq!(x.len(), NUM_COVARIATES);
    let t = t as f64;
    let xa1 = is(x, XA, 1.0);
    let xb1 = is(x, XB, 1.0);
    match scenario {
        ScenarioId::A => 0.5 * is(x, XC, 1.0) + 2.0 * (xb1 + is(x, XLA, 3.0) * xa1) * t,
        ScenarioId::B => {
            0.5 * is(x, XC, 1.0)
                + 2.0 * (xb1 + is(x, XLA, 3.0) * (is(x, XLB, 2.0) + is(x, XLB, 3.0))) * t
        }
        ScenarioId::C => {
            0.05 * (-xa1 + xb1)
                + ((is(x, XLA, 2.0) + is(x, XLA, 3.0))
                    + (is(x, XLB, 2.0) + is(x, XLB, 3.0)) * x[XCA])
                    * t
        }
        ScenarioId::D => {
            let inner = (is(x, XLB, 3.0) + is(x, XLC, 3.0))
                + 5.0 * (is(x, XLA, 2.0) + is(x, XLA, 3.0) + xa1 * xb1) * t
                + 20.0;
            (inner * inner).ln().ln()
        }
        ScenarioId::E => (xa1 + xb1) + 2.0 * t,
        ScenarioId::F => 0.5 * xa1 + 0.5 * xb1 + 2.0 * ind(x[XCA] < 5.0 && x[XLA] < 2.0) * t,
        ScenarioId::G => 0.5 * xa1 + 0.5 * xb1 + 2.0 * ind(x[XCA] < 5.0 && x[XCB] < 2.0) * t,
        ScenarioId::H => 0.5 * x[XCA] + 0.5 * x[XCB] + 2.0 * ind(x[XCA] < -2.0 && x[XCB] > 2.0) * t,
    }
}

pub fn true_prob(scenario: ScenarioId, x: &[f64], t: u8) -> f64 {
    expit(true_logit(scenario, x, t))
}

pub fn true_cate(scenario: ScenarioId, x: &[f64]) -> f64 {
    true_prob(scenario, x, 1) - true_prob(scenario, x, 0)
}

/// `expit(lambda * standardized tau)`, kept strictly inside (0, 1).
pub fn propensity(tau: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if tau.len() < 2 {
        return Err(Error::DegenerateCate);
    }
    let m = mean(tau);
    let sd = sample_sd(tau);
    if !(sd > 0.0) {
        return Err(Error::DegenerateCate);
    }
    Ok(tau
        .iter()
        .map(|t| expit(lambda * (t - m) / sd).clamp(PROB_EPS, 1.0 - PROB_EPS))
        .collect())
}

/// Simulates a full population: covariates, truth, confounded treatment and
/// realized outcomes. A population without CATE variation gets propensity 0.5.
pub fn generate_population(spec: &ScenarioSpec, size: usize, seed: u64) -> Result<SimPopulation> {
    if size < 2 {
        return param(format!("population size must be >= 2, got {size}"));
    }
    if !spec.lambda.is_finite() {
        return param("lambda must be finite");
    }
    let x = sample_covariates(size, seed);
    let rows = x.chunks_exact(NUM_COVARIATES);
    let true_p1: Vec<f64> = rows.clone().map(|r| true_prob(spec.id, r, 1)).collect();
    let true_p0: Vec<f64> = rows.map(|r| true_prob(spec.id, r, 0)).collect();
    let true_tau: Vec<f64> = true_p1.iter().zip(&true_p0).map(|(a, b)| a - b).collect();
    let propensity = match propensity(&true_tau, spec.lambda) {
        Ok(p) => p,
        Err(Error::DegenerateCate) => vec![0.5; size],
        Err(e) => return Err(e),
    };
    let mut t_rng = stream_rng(seed, Stream::Assignment);
    let t: Vec<u8> = propensity
        .iter()
        .map(|&p| t_rng.random_bool(p) as u8)
        .collect();
    let mut y_rng = stream_rng(seed, Stream::Outcome);
    let y: Vec<u8> = (0..size)
        .map(|i| {
            let p = if t[i] == 1 { true_p1[i] } else { true_p0[i] };
            y_rng.random_bool(p) as u8
        })
        .collect();
    Ok(SimPopulation {
        dataset: Dataset::new(sim_columns(), x, t, y)?,
        true_p1,
        true_p0,
        true_tau,
        propensity,
    })
}

/// Simple random sample without replacement, in draw order.
pub fn draw_sample(population: &SimPopulation, n: usize, seed: u64) -> Result<SimPopulation> {
    if n == 0 || n > population.n() {
        return param(format!("sample size {n} must be in 1..={}", population.n()));
    }
    let mut rng = stream_rng(seed, Stream::Sample);
    let idx = rand::seq::index::sample(&mut rng, population.n(), n).into_vec();
    Ok(population.select(&idx))
}

pub fn write_truth(pop: &SimPopulation, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["true_p1", "true_p0", "true_tau", "propensity"])?;
    for i in 0..pop.n() {
        w.write_record(&[
            pop.true_p1[i].to_string(),
            pop.true_p0[i].to_string(),
            pop.true_tau[i].to_string(),
            pop.propensity[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reattaches a ground-truth CSV to a dataset.
pub fn read_truth(dataset: Dataset, path: &Path) -> Result<SimPopulation> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        for (c, dst) in cols.iter_mut().enumerate() {
            let v: f64 = rec
                .get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    Error::Parameter(format!("bad ground-truth value in {}", path.display()))
                })?;
            dst.push(v);
        }
    }
    if cols[0].len() != dataset.n() {
        return param(format!(
            "ground truth has {} rows but dataset has {}",
            cols[0].len(),
            dataset.n()
        ));
    }
    let [true_p1, true_p0, true_tau, propensity] = cols;
    Ok(SimPopulation {
        dataset,
        true_p1,
        true_p0,
        true_tau,
        propensity,
    })
}
