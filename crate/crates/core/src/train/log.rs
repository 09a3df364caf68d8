use std::path::Path;

use super::TrainError;

pub const LOG_HEADER: &str = "step,d_loss_real,d_loss_fake,d_loss_mismatch,g_loss,s_real,s_fake,s_mismatch";

/// One training step. `d_loss_mismatch` is the unweighted term.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub d_loss_real: f64,
    pub d_loss_fake: f64,
    pub d_loss_mismatch: f64,
    pub g_loss: f64,
    pub s_real: f64,
    pub s_fake: f64,
    pub s_mismatch: f64,
}

impl LogRecord {
    pub fn d_loss(&self, lambda_mis: f64) -> f64 {
        self.d_loss_real + self.d_loss_fake + lambda_mis * self.d_loss_mismatch
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.step, r.d_loss_real, r.d_loss_fake, r.d_loss_mismatch, r.g_loss, r.s_real, r.s_fake, r.s_mismatch
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_csv()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }
}
