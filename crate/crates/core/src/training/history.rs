use std::io::Write;

use serde::{Deserialize, Serialize};

/// One completed epoch. Absent values are epochs where the quantity was not
/// measured (no noisy loss during warm-up, no gate for the baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub noisy_loss: Option<f64>,
    pub clean_loss: Option<f64>,
    pub gate_fraction: Option<f64>,
    pub val_acc: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_val_acc(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.val_acc).fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    /// CSV with columns `epoch,noisy_loss,clean_loss,gate_fraction,val_acc,lr`.
    /// Floats use shortest round-trip formatting; absent values are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,noisy_loss,clean_loss,gate_fraction,val_acc,lr")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{},{}", r.epoch, field(r.noisy_loss), field(r.clean_loss), field(r.gate_fraction), field(r.val_acc), r.lr)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }
}
