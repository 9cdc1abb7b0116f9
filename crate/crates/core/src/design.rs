//! Expansion of dataset columns into numeric split features for tree models.
//! Binary, ordinal and continuous columns pass through; a categorical column
//! becomes one 0/1 indicator per level.

use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFeature {
    pub name: String,
    pub source: usize,
    pub level: Option<u32>,
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDesign {
    columns: Vec<Column>,
    features: Vec<SplitFeature>,
}

impl SplitDesign {
    pub fn new(columns: &[Column]) -> Self {
        let mut features = Vec::new();
        for (j, c) in columns.iter().enumerate() {
            match c.kind {
                ColumnKind::Categorical { levels } => {
                    for l in 1..=levels {
                        features.push(SplitFeature {
                            name: format!("{}={l}", c.name),
                            source: j,
                            level: Some(l),
                            continuous: false,
                        });
                    }
                }
                kind => features.push(SplitFeature {
                    name: c.name.clone(),
                    source: j,
                    level: None,
                    continuous: kind == ColumnKind::Continuous,
                }),
            }
        }
        Self {
            columns: columns.to_vec(),
            features,
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn features(&self) -> &[SplitFeature] {
        &self.features
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn expand_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(self.features.iter().map(|f| match f.level {
            Some(l) => (row[f.source] == l as f64) as u8 as f64,
            None => row[f.source],
        }));
    }

    /// Column-major feature matrix for row-major covariates `x`.
    pub fn columns_of(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let p = self.columns.len();
        let n = x.len().checked_div(p).unwrap_or(0);
        let mut cols = vec![Vec::with_capacity(n); self.width()];
        let mut buf = Vec::with_capacity(self.width());
        for row in x.chunks_exact(p.max(1)) {
            buf.clear();
            self.expand_row(row, &mut buf);
            for (c, v) in cols.iter_mut().zip(&buf) {
                c.push(*v);
            }
        }
        cols
    }

    pub fn same_schema(&self, columns: &[Column]) -> bool {
        self.columns == columns
    }
}
