//! Loss-optimal treatment assignment from potential-outcome probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flex::PosteriorDraws;
use crate::loss::LossTable;

const NEG_TOL: f64 = 1e-12;

/// Joint probabilities `theta[j][k] = P(Y(1) = j, Y(0) = k)` for one individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointPo {
    pub theta: [[f64; 2]; 2],
}

impl JointPo {
    pub fn p00(&self) -> f64 {
        self.theta[0][0]
    }
    pub fn p01(&self) -> f64 {
        self.theta[0][1]
    }
    pub fn p10(&self) -> f64 {
        self.theta[1][0]
    }
    pub fn p11(&self) -> f64 {
        self.theta[1][1]
    }

    /// `P(Y(1) = 1)`.
    pub fn treated_marginal(&self) -> f64 {
        self.theta[1][0] + self.theta[1][1]
    }

    /// `P(Y(0) = 1)`.
    pub fn control_marginal(&self) -> f64 {
        self.theta[0][1] + self.theta[1][1]
    }

    pub fn tau(&self) -> f64 {
        self.treated_marginal() - self.control_marginal()
    }
}

/// Range of correlations admissible for Bernoulli marginals `theta1`, `theta0`.
pub fn feasible_rho(theta1: f64, theta0: f64) -> (f64, f64) {
    let s = (theta1 * (1.0 - theta1) * theta0 * (1.0 - theta0)).sqrt();
    let base = theta1 * theta0;
    let lo = ((theta1 + theta0 - 1.0).max(0.0) - base) / s;
    let hi = (theta1.min(theta0) - base) / s;
    (lo.max(-1.0), hi.min(1.0))
}

/// Builds the joint table from the marginals `theta1 = f(x, 1)`,
/// `theta0 = f(x, 0)` and the potential-outcome correlation `rho`.
pub fn joint_po(theta1: f64, theta0: f64, rho: f64) -> Result<JointPo> {
    if !(theta1 > 0.0 && theta1 < 1.0 && theta0 > 0.0 && theta0 < 1.0) {
        return Err(Error::Parameter(format!(
            "marginals must lie in (0, 1), got ({theta1}, {theta0})"
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!(
            "rho must lie in [-1, 1], got {rho}"
        )));
    }
    let s = (theta1 * (1.0 - theta1) * theta0 * (1.0 - theta0)).sqrt();
    let p11 = rho * s + theta1 * theta0;
    let p10 = theta1 - p11;
    let p01 = theta0 - p11;
    let p00 = 1.0 - p11 - p10 - p01;
    if [p00, p01, p10, p11].iter().any(|&v| v < -NEG_TOL) {
        let (lo, hi) = feasible_rho(theta1, theta0);
        return Err(Error::InfeasibleCorrelation {
            rho,
            theta1,
            theta0,
            lo,
            hi,
        });
    }
    Ok(JointPo {
        theta: [[p00.max(0.0), p01.max(0.0)], [p10.max(0.0), p11.max(0.0)]],
    })
}

/// `sum_{j,k} l[j][k][t] * theta[j][k]`.
pub fn expected_loss(joint: &JointPo, loss: &LossTable, t: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..2 {
        for k in 0..2 {
            acc += loss.get(j, k, t) * joint.theta[j][k];
        }
    }
    acc
}

/// Arm with the smaller expected loss; equal losses go to control.
pub fn argmin_arm(joint: &JointPo, loss: &LossTable) -> u8 {
    u8::from(expected_loss(joint, loss, 1) < expected_loss(joint, loss, 0))
}

/// `1{tau_hat > c_t / c_d}`.
pub fn additive_threshold_rule(tau_hat: f64, c_t: f64, c_d: f64) -> u8 {
    u8::from(tau_hat > c_t / c_d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDistribution {
    /// Arg-min assignments from the draw-averaged joint table.
    pub assignments: Vec<u8>,
    /// Fraction of draws in which treating has strictly lower expected loss.
    pub p_treat: Vec<f64>,
    /// Posterior-mean treatment effect.
    pub tau_hat: Vec<f64>,
}

/// Optimal rule and its posterior uncertainty from Monte Carlo draws.
pub fn optimal_rule(
    draws: &PosteriorDraws,
    loss: &LossTable,
    rho: f64,
) -> Result<RuleDistribution> {
    let (n, d) = (draws.n(), draws.num_draws());
    let mut assignments = Vec::with_capacity(n);
    let mut p_treat = Vec::with_capacity(n);
    let mut tau_hat = Vec::with_capacity(n);
    for i in 0..n {
        let mut wins = 0usize;
        let mut avg = [[0.0f64; 2]; 2];
        let mut tau = 0.0;
        for draw in 0..d {
            let (t1, t0) = draws.pair(draw, i);
            let joint = joint_po(t1, t0, rho).map_err(|e| Error::InfeasibleAt {
                draw,
                individual: i,
                source: Box::new(e),
            })?;
            if expected_loss(&joint, loss, 1) < expected_loss(&joint, loss, 0) {
                wins += 1;
            }
            for j in 0..2 {
                for k in 0..2 {
                    avg[j][k] += joint.theta[j][k];
                }
            }
            tau += t1 - t0;
        }
        for row in avg.iter_mut() {
            for v in row.iter_mut() {
                *v /= d as f64;
            }
        }
        assignments.push(argmin_arm(&JointPo { theta: avg }, loss));
        p_treat.push(wins as f64 / d as f64);
        tau_hat.push(tau / d as f64);
    }
    Ok(RuleDistribution {
        assignments,
        p_treat,
        tau_hat,
    })
}
