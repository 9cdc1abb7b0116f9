//! Treatment rules as assignment producers.

use serde::{Deserialize, Serialize};

use crate::data::Column;
use crate::error::{param, Error, Result};
use crate::simple::{LogisticModel, SoftLabelTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreatmentRule {
    /// Fixed per-individual assignments, optionally with `P(treat)`.
    Assignments {
        assignments: Vec<u8>,
        p: Option<Vec<f64>>,
    },
    Tree(SoftLabelTree),
    Logistic(LogisticModel),
}

impl TreatmentRule {
    pub fn from_assignments(assignments: Vec<u8>) -> Result<Self> {
        if assignments.iter().any(|&a| a > 1) {
            return param("assignments must be 0 or 1");
        }
        Ok(TreatmentRule::Assignments {
            assignments,
            p: None,
        })
    }

    /// Assignments `1{p > 0.5}` carrying their probabilities.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return param("treatment probabilities must lie in [0, 1]");
        }
        let assignments = p.iter().map(|&v| u8::from(v > 0.5)).collect();
        Ok(TreatmentRule::Assignments {
            assignments,
            p: Some(p),
        })
    }

    /// Decision for a single covariate row. Assignment-vector rules have no
    /// covariate map and report an error.
    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        match self {
            TreatmentRule::Assignments { .. } => Err(Error::Prediction(
                "an assignment vector cannot be evaluated at new covariates".into(),
            )),
            TreatmentRule::Tree(t) => Ok(t.decide(row)),
            TreatmentRule::Logistic(m) => Ok(m.decide(row)),
        }
    }

    /// Decisions for every row of `x`.
    pub fn assign(&self, columns: &[Column], x: &[f64]) -> Result<Vec<u8>> {
        match self {
            TreatmentRule::Assignments { assignments, .. } => {
                let n = if columns.is_empty() {
                    assignments.len()
                } else {
                    x.len() / columns.len()
                };
                if n != assignments.len() {
                    return Err(Error::Prediction(format!(
                        "rule holds {} assignments for {n} rows",
                        assignments.len()
                    )));
                }
                Ok(assignments.clone())
            }
            TreatmentRule::Tree(t) => t.assign(columns, x),
            TreatmentRule::Logistic(m) => m.assign(columns, x),
        }
    }
}
