//! Step-indexed CSV loss log.

use std::io::Write;
use std::path::Path;

use crate::config::{LossTerm, TurboConfig};
use crate::error::{Error, Result};
use crate::trainer::train::StepRecord;

/// Column names: step, enabled terms, path totals, then one loss column per critic.
pub fn csv_header(cfg: &TurboConfig) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend(cfg.enabled_terms.iter().map(|t| t.key().to_string()));
    h.extend(["direct_total", "reverse_total", "grand_total"].map(String::from));
    h.extend(
        cfg.adversarial_terms()
            .map(|t| format!("critic_{}", t.key())),
    );
    h
}

/// Floats use the shortest round-trip representation, so equal runs give equal bytes.
pub fn csv_row(cfg: &TurboConfig, r: &StepRecord) -> Vec<String> {
    let num = |v: Option<&f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut row = vec![r.step.to_string()];
    row.extend(cfg.enabled_terms.iter().map(|t| num(r.losses.terms.get(t))));
    row.extend(
        [
            r.losses.direct_total,
            r.losses.reverse_total,
            r.losses.grand_total,
        ]
        .map(|v| v.to_string()),
    );
    row.extend(
        cfg.adversarial_terms()
            .map(|t| num(r.critic_losses.get(&t))),
    );
    row
}

pub struct LossLog {
    writer: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
    cfg: TurboConfig,
}

impl LossLog {
    /// Starts a new log, or appends to an existing one when `append` is set.
    pub fn open(path: &Path, cfg: &TurboConfig, append: bool) -> Result<LossLog> {
        let exists = append && path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(exists)
            .truncate(!exists)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        if !exists {
            writer
                .write_record(csv_header(cfg))
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        Ok(LossLog {
            writer,
            path: path.to_path_buf(),
            cfg: cfg.clone(),
        })
    }

    pub fn append(&mut self, r: &StepRecord) -> Result<()> {
        self.writer
            .write_record(csv_row(&self.cfg, r))
            .map_err(|e| Error::Parse(e.to_string()))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Drops rows at or after `step`, so a resumed run can rewrite them.
pub fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0
            || line
                .split(',')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s < step);
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads one column of a loss CSV by name.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let headers = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Parse(format!("no column {column}")))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            rec[idx]
                .parse::<f64>()
                .map_err(|e| Error::Parse(e.to_string()))
        })
        .collect()
}

pub fn has_term_column(path: &Path, term: LossTerm) -> Result<bool> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(headers.iter().any(|h| h == term.key()))
}
