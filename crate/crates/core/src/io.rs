//! CSV dataset files and their schema sidecars.
//!
//! A schema is a TOML file with one `[[column]]` table per CSV column:
//!
//! ```toml
//! [[column]]
//! name = "age_band"
//! role = "covariate"
//! kind = "ordinal"
//! levels = 4
//!
//! [[column]]
//! name = "T"
//! role = "treatment"
//!
//! [[column]]
//! name = "Y"
//! role = "outcome"
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset};
use crate::error::{Error, IngestError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Role {
    Covariate {
        #[serde(flatten)]
        kind: ColumnKind,
    },
    Treatment,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    #[serde(flatten)]
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "column")]
    pub columns: Vec<SchemaEntry>,
}

impl Schema {
    pub fn for_dataset(ds: &Dataset) -> Self {
        let mut columns: Vec<SchemaEntry> = ds
            .columns()
            .iter()
            .map(|c| SchemaEntry {
                name: c.name.clone(),
                role: Role::Covariate { kind: c.kind },
            })
            .collect();
        columns.push(SchemaEntry {
            name: ds.treatment_name().into(),
            role: Role::Treatment,
        });
        columns.push(SchemaEntry {
            name: ds.outcome_name().into(),
            role: Role::Outcome,
        });
        Schema { columns }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))
    }

    fn role_name(
        &self,
        want: &Role,
        label: &'static str,
    ) -> std::result::Result<String, IngestError> {
        let mut found = self.columns.iter().filter(|c| &c.role == want);
        let first = found.next().ok_or(IngestError::MissingRole(label))?;
        if found.next().is_some() {
            return Err(IngestError::DuplicateRole(label));
        }
        Ok(first.name.clone())
    }

    /// Covariate columns in schema order.
    pub fn covariates(&self) -> Vec<Column> {
        self.columns
            .iter()
            .filter_map(|c| match &c.role {
                Role::Covariate { kind } => Some(Column::new(c.name.clone(), *kind)),
                _ => None,
            })
            .collect()
    }
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path)?;
    Schema::from_toml(&text).map_err(|reason| Error::Ingest {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_schema(schema: &Schema, path: &Path) -> Result<()> {
    fs::write(path, toml::to_string(schema)?)?;
    Ok(())
}

/// Loads and validates a dataset from a CSV file and its schema sidecar.
pub fn load_dataset(path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = read_schema(schema_path)?;
    let fail = |reason| Error::Ingest {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let pos: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();

    let treat = schema
        .role_name(&Role::Treatment, "treatment")
        .map_err(fail)?;
    let outcome = schema.role_name(&Role::Outcome, "outcome").map_err(fail)?;
    for h in &header {
        if !schema.columns.iter().any(|c| &c.name == h) {
            return Err(fail(IngestError::UnknownColumn(h.clone())));
        }
    }
    let lookup = |name: &str| {
        pos.get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let covariates = schema.covariates();
    let cov_pos = covariates
        .iter()
        .map(|c| lookup(&c.name))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(fail)?;
    let t_pos = lookup(&treat).map_err(fail)?;
    let y_pos = lookup(&outcome).map_err(fail)?;

    let mut x = Vec::new();
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => fail(IngestError::RaggedRow {
                row,
                expected: *expected_len as usize,
                found: *len as usize,
            }),
            _ => Error::Csv(e),
        })?;
        let parse = |idx: usize, name: &str| -> std::result::Result<f64, IngestError> {
            let raw = rec.get(idx).unwrap_or("").trim();
            let bad = |reason: &str| IngestError::InvalidValue {
                row,
                column: name.to_string(),
                value: raw.to_string(),
                reason: reason.to_string(),
            };
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(bad("is missing"));
            }
            raw.parse::<f64>().map_err(|_| bad("is not a number"))
        };
        for (c, &idx) in covariates.iter().zip(&cov_pos) {
            let v = parse(idx, &c.name).map_err(fail)?;
            c.kind.check(v).map_err(|reason| {
                fail(IngestError::InvalidValue {
                    row,
                    column: c.name.clone(),
                    value: v.to_string(),
                    reason,
                })
            })?;
            x.push(v);
        }
        for (idx, name, dst) in [(t_pos, &treat, &mut t), (y_pos, &outcome, &mut y)] {
            let v = parse(idx, name).map_err(fail)?;
            if v != 0.0 && v != 1.0 {
                return Err(fail(IngestError::InvalidValue {
                    row,
                    column: name.clone(),
                    value: v.to_string(),
                    reason: "is not 0 or 1".into(),
                }));
            }
            dst.push(v as u8);
        }
    }
    if t.is_empty() {
        return Err(fail(IngestError::Empty));
    }
    let ds = Dataset::new(covariates, x, t, y).map_err(|e| match e {
        Error::Ingest { reason, .. } => fail(reason),
        other => other,
    })?;
    Ok(ds.with_role_names(treat, outcome))
}

/// Writes `ds` as CSV plus schema sidecar. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset(ds: &Dataset, path: &Path, schema_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.columns().iter().map(|c| c.name.as_str()).collect();
    header.push(ds.treatment_name());
    header.push(ds.outcome_name());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        rec.clear();
        rec.extend(ds.row(i).iter().map(|v| v.to_string()));
        rec.push(ds.t()[i].to_string());
        rec.push(ds.y()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_schema(&Schema::for_dataset(ds), schema_path)
}
