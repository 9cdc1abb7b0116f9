//! Dataset model: covariate columns with declared kinds, a binary treatment
//! and a binary outcome.

use serde::{Deserialize, Serialize};

use crate::error::{IngestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Binary,
    Ordinal { levels: u32 },
    Continuous,
    Categorical { levels: u32 },
}

impl ColumnKind {
    /// Checks a single value against the kind; returns a reason on failure.
    pub fn check(&self, v: f64) -> std::result::Result<(), String> {
        if !v.is_finite() {
            return Err("is not a finite number".into());
        }
        match *self {
            ColumnKind::Binary => {
                if v == 0.0 || v == 1.0 {
                    Ok(())
                } else {
                    Err("is not 0 or 1".into())
                }
            }
            ColumnKind::Ordinal { levels } | ColumnKind::Categorical { levels } => {
                if v.fract() == 0.0 && v >= 1.0 && v <= levels as f64 {
                    Ok(())
                } else {
                    Err(format!("is not an integer level in 1..={levels}"))
                }
            }
            ColumnKind::Continuous => Ok(()),
        }
    }

    pub fn is_integer_coded(&self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// An observational dataset. Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    x: Vec<f64>,
    t: Vec<u8>,
    y: Vec<u8>,
    treatment_name: String,
    outcome_name: String,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, x: Vec<f64>, t: Vec<u8>, y: Vec<u8>) -> Result<Self> {
        let ds = Self {
            columns,
            x,
            t,
            y,
            treatment_name: "T".into(),
            outcome_name: "Y".into(),
        };
        ds.validate().map_err(|reason| crate::Error::Ingest {
            path: "<memory>".into(),
            reason,
        })?;
        Ok(ds)
    }

    pub fn with_role_names(
        mut self,
        treatment: impl Into<String>,
        outcome: impl Into<String>,
    ) -> Self {
        self.treatment_name = treatment.into();
        self.outcome_name = outcome.into();
        self
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), IngestError> {
        let n = self.t.len();
        if n == 0 {
            return Err(IngestError::Empty);
        }
        let p = self.columns.len();
        if self.y.len() != n || self.x.len() != n * p {
            return Err(IngestError::Schema(format!(
                "row counts disagree: X has {} values for {p} columns, T has {n}, Y has {}",
                self.x.len(),
                self.y.len()
            )));
        }
        for i in 0..n {
            for (j, col) in self.columns.iter().enumerate() {
                let v = self.x[i * p + j];
                if let Err(reason) = col.kind.check(v) {
                    return Err(IngestError::InvalidValue {
                        row: i + 1,
                        column: col.name.clone(),
                        value: v.to_string(),
                        reason,
                    });
                }
            }
            for (name, v) in [
                (&self.treatment_name, self.t[i]),
                (&self.outcome_name, self.y[i]),
            ] {
                if v > 1 {
                    return Err(IngestError::InvalidValue {
                        row: i + 1,
                        column: name.clone(),
                        value: v.to_string(),
                        reason: "is not 0 or 1".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn t(&self) -> &[u8] {
        &self.t
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    /// Rows in `idx` order, as a new dataset.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let p = self.p();
        let mut x = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            columns: self.columns.clone(),
            x,
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Same covariates and treatment, replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<u8>) -> Result<Dataset> {
        let mut ds = self.clone();
        ds.y = y;
        ds.validate().map_err(|reason| crate::Error::Ingest {
            path: "<memory>".into(),
            reason,
        })?;
        Ok(ds)
    }
}
