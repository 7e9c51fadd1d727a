//! Per-epoch training records shared by every trainer, written as JSONL.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Method-specific objective: mean energy gap for the contrastive
    /// trainers, mean tracking loss for Nelder-Mead.
    pub objective: f64,
    pub train_trans_rmse: f64,
    pub train_rot_rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_trans_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_rot_rmse: Option<f64>,
    /// Flattened parameters after this epoch's update.
    pub theta: Vec<f64>,
    /// Cumulative graph-optimizer calls.
    pub fevals: usize,
    pub skipped: usize,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub method: String,
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            records: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn fevals(&self) -> usize {
        self.last().map_or(0, |r| r.fevals)
    }

    /// One JSON object per epoch. With `include_timing = false` the
    /// wall-clock field is zeroed so logs compare byte-for-byte.
    pub fn to_jsonl(&self, include_timing: bool) -> String {
        let mut out = String::new();
        for r in &self.records {
            let mut r = r.clone();
            if !include_timing {
                r.wall_clock_s = 0.0;
            }
            let mut v = serde_json::to_value(&r).expect("record serializes");
            v.as_object_mut()
                .unwrap()
                .insert("method".into(), self.method.clone().into());
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path, include_timing: bool) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| LeoError::io(path, e))?;
        f.write_all(self.to_jsonl(include_timing).as_bytes())
            .map_err(|e| LeoError::io(path, e))
    }

    /// Records with timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> TrainLog {
        let mut out = self.clone();
        for r in &mut out.records {
            r.wall_clock_s = 0.0;
        }
        out
    }
}
