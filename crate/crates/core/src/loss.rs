//! Loss specifications over (Y(1), Y(0), t).

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Eight-entry loss `l[j][k][t]` with `j = Y(1)`, `k = Y(0)`, `t` the arm given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    l: [[[f64; 2]; 2]; 2],
}

impl LossTable {
    pub fn new(l: [[[f64; 2]; 2]; 2]) -> Result<Self> {
        if l.iter()
            .flatten()
            .flatten()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return param("loss entries must be finite and nonnegative");
        }
        Ok(Self { l })
    }

    pub fn zero() -> Self {
        Self {
            l: [[[0.0; 2]; 2]; 2],
        }
    }

    /// Parses the flat order `l000,l001,l010,l011,l100,l101,l110,l111`
    /// (index order j, k, t).
    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() != 8 {
            return param(format!("loss table needs 8 entries, got {}", v.len()));
        }
        let mut l = [[[0.0; 2]; 2]; 2];
        for (idx, val) in v.iter().enumerate() {
            l[idx >> 2][(idx >> 1) & 1][idx & 1] = *val;
        }
        Self::new(l)
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, t: usize) -> f64 {
        self.l[j][k][t]
    }

    pub fn entries(&self) -> &[[[f64; 2]; 2]; 2] {
        &self.l
    }
}

/// Loss decomposed into a treatment cost `c_t` and an undesirable-outcome cost `c_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditiveLoss {
    pub c_t: f64,
    pub c_d: f64,
}

impl AdditiveLoss {
    pub fn new(c_t: f64, c_d: f64) -> Result<Self> {
        if !(c_t.is_finite() && c_t >= 0.0) {
            return param(format!("c_t must be finite and >= 0, got {c_t}"));
        }
        if !(c_d.is_finite() && c_d > 0.0) {
            return param(format!("c_d must be finite and > 0, got {c_d}"));
        }
        if !(c_t / c_d).is_finite() {
            return param("threshold c_t/c_d is not finite");
        }
        Ok(Self { c_t, c_d })
    }

    /// `c_d = 1`, `c_t = percent / 100`.
    pub fn from_percent(percent: u32) -> Result<Self> {
        if percent > 100 {
            return param(format!("threshold {percent}% is outside 0..=100"));
        }
        Self::new(percent as f64 / 100.0, 1.0)
    }

    pub fn threshold(&self) -> f64 {
        self.c_t / self.c_d
    }

    pub fn expand(&self) -> LossTable {
        expand_additive(self)
    }
}

/// Expands an additive loss into its full table. Treating adds `c_t`; an
/// outcome of 0 under the chosen arm adds `c_d`.
pub fn expand_additive(loss: &AdditiveLoss) -> LossTable {
    let (ct, cd) = (loss.c_t, loss.c_d);
    let mut l = [[[0.0; 2]; 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            l[j][k][1] = ct + if j == 0 { cd } else { 0.0 };
            l[j][k][0] = if k == 0 { cd } else { 0.0 };
        }
    }
    LossTable { l }
}
