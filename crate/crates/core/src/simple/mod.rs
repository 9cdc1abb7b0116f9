//! Interpretable model families: depth-limited trees and logistic
//! regressions, fitted either to soft labels or directly to outcomes.

pub mod export;
pub mod logistic;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::data::Column;
use crate::decision::{optimal_rule, RuleDistribution};
use crate::error::{Error, Result};
use crate::flex::PosteriorDraws;
use crate::loss::LossTable;

pub use logistic::{fit_direct_logistic, fit_soft_logistic, Basis, LogisticModel, SgdConfig};
pub use tree::{fit_direct_tree, fit_soft_tree, DirectTree, SoftLabelTree, TreeConfig, TreeNode};

/// Outcome model `f(x, t)` fitted to observed data by a simple family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DirectModel {
    Tree(DirectTree),
    Logistic(LogisticModel),
}

impl DirectModel {
    pub fn columns(&self) -> &[Column] {
        match self {
            DirectModel::Tree(t) => t.design.columns(),
            DirectModel::Logistic(m) => m.basis.columns(),
        }
    }

    pub fn predict(&self, row: &[f64], t: u8) -> f64 {
        match self {
            DirectModel::Tree(tree) => tree.predict(row, t),
            DirectModel::Logistic(m) => m.prob(row, t),
        }
    }

    /// Single-draw outcome table for the rows of `x`.
    pub fn point_draws(&self, columns: &[Column], x: &[f64]) -> Result<PosteriorDraws> {
        if self.columns() != columns {
            return Err(Error::Prediction(
                "covariate schema differs from the model's".into(),
            ));
        }
        let p = columns.len().max(1);
        let rows: Vec<&[f64]> = x.chunks_exact(p).collect();
        let p1: Vec<f64> = rows.iter().map(|r| self.predict(r, 1)).collect();
        let p0: Vec<f64> = rows.iter().map(|r| self.predict(r, 0)).collect();
        PosteriorDraws::from_point(&p1, &p0)
    }
}

/// Plug-in rule from a direct outcome model: imputes both arms and takes the
/// loss-minimizing one.
pub fn direct_rule(
    model: &DirectModel,
    columns: &[Column],
    x: &[f64],
    loss: &LossTable,
) -> Result<RuleDistribution> {
    optimal_rule(&model.point_draws(columns, x)?, loss, 0.0)
}
