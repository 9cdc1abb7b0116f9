//! Rule scores: average loss, average outcome and agreement with the true
//! optimal rule.

use serde::{Deserialize, Serialize};

use crate::decision::{expected_loss, joint_po};
use crate::error::{param, Result};
use crate::flex::PosteriorDraws;
use crate::loss::{AdditiveLoss, LossTable};
use crate::sim::SimPopulation;

/// `d*(x_i) = 1{tau_i > c_t / c_d}` from the true effects.
pub fn true_optimal_rule(population: &SimPopulation, loss: &AdditiveLoss) -> Vec<u8> {
    let c = loss.threshold();
    population
        .true_tau
        .iter()
        .map(|&t| u8::from(t > c))
        .collect()
}

fn check_len(assign: &[u8], n: usize) -> Result<()> {
    if assign.len() != n {
        return param(format!("{} assignments for {n} individuals", assign.len()));
    }
    Ok(())
}

/// Mean expected loss of `assign` under marginals `p1`, `p0` and independent
/// potential outcomes.
pub fn loss_under(assign: &[u8], p1: &[f64], p0: &[f64], loss: &LossTable) -> Result<f64> {
    check_len(assign, p1.len())?;
    let mut acc = 0.0;
    for ((&a, &t1), &t0) in assign.iter().zip(p1).zip(p0) {
        acc += expected_loss(&joint_po(t1, t0, 0.0)?, loss, usize::from(a));
    }
    Ok(acc / assign.len() as f64)
}

/// Mean of `p1` where treated and `p0` elsewhere.
pub fn outcome_under(assign: &[u8], p1: &[f64], p0: &[f64]) -> Result<f64> {
    check_len(assign, p1.len())?;
    let s: f64 = assign
        .iter()
        .zip(p1.iter().zip(p0))
        .map(|(&a, (&t1, &t0))| if a == 1 { t1 } else { t0 })
        .sum();
    Ok(s / assign.len() as f64)
}

/// Average loss `R` against the true outcome probabilities.
pub fn average_loss(assign: &[u8], population: &SimPopulation, loss: &LossTable) -> Result<f64> {
    loss_under(assign, &population.true_p1, &population.true_p0, loss)
}

/// Average outcome `V` against the true outcome probabilities.
pub fn average_outcome(assign: &[u8], population: &SimPopulation) -> Result<f64> {
    outcome_under(assign, &population.true_p1, &population.true_p0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// `None` when the rule treats nobody.
    pub precision: Option<f64>,
    /// `None` when nobody should be treated.
    pub recall: Option<f64>,
}

pub fn classification_metrics(rule: &[u8], truth: &[u8]) -> Result<ClassificationMetrics> {
    check_len(rule, truth.len())?;
    if rule.is_empty() {
        return param("cannot score an empty rule");
    }
    let (mut agree, mut pred, mut pos, mut both) = (0usize, 0usize, 0usize, 0usize);
    for (&d, &t) in rule.iter().zip(truth) {
        agree += usize::from(d == t);
        pred += usize::from(d == 1);
        pos += usize::from(t == 1);
        both += usize::from(d == 1 && t == 1);
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(ClassificationMetrics {
        accuracy: agree as f64 / rule.len() as f64,
        precision: ratio(both, pred),
        recall: ratio(both, pos),
    })
}

/// Posterior-averaged `(R, V)`: each draw acts as the truth, results are
/// averaged over draws.
pub fn eval_against_draws(
    assign: &[u8],
    draws: &PosteriorDraws,
    loss: &LossTable,
) -> Result<(f64, f64)> {
    check_len(assign, draws.n())?;
    let (mut r, mut v) = (0.0, 0.0);
    let mut p1 = vec![0.0; draws.n()];
    let mut p0 = vec![0.0; draws.n()];
    for d in 0..draws.num_draws() {
        for i in 0..draws.n() {
            (p1[i], p0[i]) = draws.pair(d, i);
        }
        r += loss_under(assign, &p1, &p0, loss)?;
        v += outcome_under(assign, &p1, &p0)?;
    }
    let k = draws.num_draws() as f64;
    Ok((r / k, v / k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub r: f64,
    pub v: f64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl RuleScore {
    pub const METRICS: [&'static str; 5] = ["R", "V", "accuracy", "precision", "recall"];

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "R" => Some(self.r),
            "V" => Some(self.v),
            "accuracy" => self.accuracy,
            "precision" => self.precision,
            "recall" => self.recall,
            _ => None,
        }
    }
}

/// Full score of `assign` against simulated ground truth.
pub fn score_against_truth(
    assign: &[u8],
    population: &SimPopulation,
    loss: &AdditiveLoss,
) -> Result<RuleScore> {
    let table = loss.expand();
    let m = classification_metrics(assign, &true_optimal_rule(population, loss))?;
    Ok(RuleScore {
        r: average_loss(assign, population, &table)?,
        v: average_outcome(assign, population)?,
        accuracy: Some(m.accuracy),
        precision: m.precision,
        recall: m.recall,
    })
}
