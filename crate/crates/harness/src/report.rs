//! Evaluation records and their CSV, markdown and JSON renderings.
//!
//! `report.csv` and `report.md` hold only quantities that are fixed by the
//! config, data and checkpoints (no timings), so repeated evaluations give
//! byte-identical files. Wall-clock timings live in `report.json`.

use crate::error::{HarnessError, Result};
use serde::{Deserialize, Serialize};
use specvit_core::metrics::Summary;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok(Scores),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignScore {
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub tasks: usize,
    pub smape: Summary,
    pub mase: Summary,
    pub sign: Vec<SignScore>,
    /// Method-specific settings worth reporting (the chosen EMA alpha, the
    /// checkpoint's best epoch).
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub dataset: String,
    pub method: String,
    pub outcome: Outcome,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub seed: u64,
    pub sign_thresholds: Vec<f64>,
    pub records: Vec<MethodRecord>,
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn record(&self, dataset: &str, method: &str) -> Option<&MethodRecord> {
        self.records.iter().find(|r| r.dataset == dataset && r.method == method)
    }

    pub fn scores(&self, dataset: &str, method: &str) -> Option<&Scores> {
        match &self.record(dataset, method)?.outcome {
            Outcome::Ok(s) => Some(s),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataset,method,status,tasks,smape_mean,smape_std,smape_n,mase_mean,mase_std,mase_n,mase_excluded",
        );
        for t in &self.sign_thresholds {
            let _ = write!(out, ",sign_acc_{t:.2}");
        }
        let _ = writeln!(out, ",notes,config_hash");
        for r in &self.records {
            let _ = write!(out, "{},{},", r.dataset, r.method);
            match &r.outcome {
                Outcome::Ok(s) => {
                    let _ = write!(
                        out,
                        "ok,{},{},{},{},{},{},{},{}",
                        s.tasks,
                        fixed(s.smape.mean),
                        fixed(s.smape.std),
                        s.smape.count,
                        fixed(s.mase.mean),
                        fixed(s.mase.std),
                        s.mase.count,
                        s.mase.excluded
                    );
                    for t in &self.sign_thresholds {
                        let acc = s.sign.iter().find(|x| x.threshold == *t).map(|x| x.accuracy);
                        let _ = write!(out, ",{}", fixed(acc));
                    }
                    let _ = write!(out, ",{}", csv_field(&s.notes));
                }
                Outcome::Failed { reason } => {
                    out.push_str("failed,,,,,,,,");
                    for _ in &self.sign_thresholds {
                        out.push(',');
                    }
                    let _ = write!(out, ",{}", csv_field(reason));
                }
            }
            let _ = writeln!(out, ",{}", self.config_hash);
        }
        out
    }

    /// One table per dataset: mean ± std for SMAPE and MASE, pooled sign
    /// accuracy per threshold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Evaluation summary\n\n");
        let _ = writeln!(out, "Config hash `{}`, seed {}.\n", self.config_hash, self.seed);
        let mut datasets: Vec<&str> = Vec::new();
        for r in &self.records {
            if !datasets.contains(&r.dataset.as_str()) {
                datasets.push(&r.dataset);
            }
        }
        for ds in datasets {
            let _ = writeln!(out, "## {ds}\n");
            out.push_str("| Method | SMAPE | MASE |");
            for t in &self.sign_thresholds {
                if *t == 0.0 {
                    out.push_str(" Sign acc. (strict) |");
                } else {
                    let _ = write!(out, " Sign acc. ({:.0}% std) |", t * 100.0);
                }
            }
            out.push_str("\n|---|---|---|");
            for _ in &self.sign_thresholds {
                out.push_str("---|");
            }
            out.push('\n');
            for r in self.records.iter().filter(|r| r.dataset == ds) {
                let _ = write!(out, "| {} |", r.method);
                match &r.outcome {
                    Outcome::Ok(s) => {
                        let _ = write!(out, " {} | {} |", pm(&s.smape), pm(&s.mase));
                        for t in &self.sign_thresholds {
                            match s.sign.iter().find(|x| x.threshold == *t) {
                                Some(x) => {
                                    let _ = write!(out, " {:.1}% |", x.accuracy * 100.0);
                                }
                                None => out.push_str(" n/a |"),
                            }
                        }
                    }
                    Outcome::Failed { reason } => {
                        let _ = write!(out, " failed: {} | |", reason.replace('|', "/"));
                        for _ in &self.sign_thresholds {
                            out.push_str(" |");
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::stage("report", e))?;
        write(&dir.join("report.json"), &json)?;
        self.save_tables(dir)
    }

    pub fn save_tables(&self, dir: &Path) -> Result<()> {
        write(&dir.join("report.csv"), &self.to_csv())?;
        write(&dir.join("report.md"), &self.to_markdown())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::Data(format!("{}: {e} (run `eval` first)", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
    }
}

fn pm(s: &Summary) -> String {
    match (s.mean, s.std) {
        (Some(m), Some(sd)) => format!("{m:.3} ± {sd:.3}"),
        _ => "n/a".into(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::stage("report", format!("{}: {e}", path.display())))
}
