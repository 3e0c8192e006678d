//! Model evaluation and comparison tables.

use serde::{Deserialize, Serialize};

use crate::backbones::Translator;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::fid::{feature_stats, frechet_distance, FeatureExtractor};
use crate::eval::metrics::{
    hamming_metric, mse_metric, ssim_metric, SsimParams, BINARIZE_THRESHOLD,
};
use crate::grid::{DigitalTemplate, Grid};
use crate::trainer::TrainState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid_y_to_t: f64,
    pub hamming: f64,
    pub fid_t_to_y: f64,
    pub mse: f64,
    pub ssim: f64,
    pub n_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Lower,
    Higher,
}

/// Metric columns in table order, with the direction that counts as better.
pub const COLUMNS: [(&str, Orientation); 5] = [
    ("fid_y_to_t", Orientation::Lower),
    ("hamming", Orientation::Lower),
    ("fid_t_to_y", Orientation::Lower),
    ("mse", Orientation::Lower),
    ("ssim", Orientation::Higher),
];

impl MetricReport {
    pub fn values(&self) -> [f64; 5] {
        [
            self.fid_y_to_t,
            self.hamming,
            self.fid_t_to_y,
            self.mse,
            self.ssim,
        ]
    }

    pub fn check(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
            && (0.0..=1.0).contains(&self.hamming)
            && self.ssim <= 1.0
            && self.fid_y_to_t >= 0.0
            && self.fid_t_to_y >= 0.0
            && self.mse >= 0.0
    }
}

/// Encoder over prints and decoder over templates, raw outputs only.
///
/// Samples are processed in id order, so the report does not depend on the order of `test`.
pub fn evaluate_translators(
    encoder: &Translator,
    decoder: &Translator,
    test: &Dataset,
    extractor: &dyn FeatureExtractor,
) -> Result<MetricReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut samples: Vec<_> = test.samples().iter().collect();
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let ssim_params = SsimParams::default();
    let mut templates = Vec::with_capacity(samples.len());
    let mut prints = Vec::with_capacity(samples.len());
    let mut t_est = Vec::with_capacity(samples.len());
    let mut y_est = Vec::with_capacity(samples.len());
    let mut hamming = 0.0;
    let mut ssim = 0.0;
    for s in &samples {
        let t_tilde = encoder.forward(&s.print)?;
        let y_tilde = decoder.forward(&s.template)?;
        let t = DigitalTemplate::new(s.id.clone(), s.template.clone())?;
        hamming += hamming_metric(&t, &t_tilde, BINARIZE_THRESHOLD)?;
        ssim += ssim_metric(&s.print, &y_tilde, &ssim_params)?;
        templates.push(s.template.clone());
        prints.push(s.print.clone());
        t_est.push(t_tilde);
        y_est.push(y_tilde);
    }
    let n = samples.len();
    Ok(MetricReport {
        fid_y_to_t: fid(&templates, &t_est, extractor)?,
        hamming: hamming / n as f64,
        fid_t_to_y: fid(&prints, &y_est, extractor)?,
        mse: mse_metric(&prints, &y_est)?,
        ssim: ssim / n as f64,
        n_samples: n,
    })
}

fn fid(real: &[Grid], generated: &[Grid], extractor: &dyn FeatureExtractor) -> Result<f64> {
    frechet_distance(
        &feature_stats(real, extractor)?,
        &feature_stats(generated, extractor)?,
    )
}

pub fn evaluate_model(
    state: &TrainState,
    test: &Dataset,
    extractor: &dyn FeatureExtractor,
) -> Result<MetricReport> {
    evaluate_translators(&state.encoder, &state.decoder, test, extractor)
}

/// Index of the best row per metric column; ties go to the earliest row.
pub fn best_per_column(reports: &[MetricReport]) -> Option<[usize; 5]> {
    if reports.is_empty() {
        return None;
    }
    let mut best = [0usize; 5];
    for (c, (_, orient)) in COLUMNS.iter().enumerate() {
        for (r, rep) in reports.iter().enumerate() {
            let v = rep.values()[c];
            let cur = reports[best[c]].values()[c];
            let better = match orient {
                Orientation::Lower => v < cur,
                Orientation::Higher => v > cur,
            };
            if better {
                best[c] = r;
            }
        }
    }
    Some(best)
}

pub fn csv_table(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::from("run");
    for (name, _) in COLUMNS {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",n_samples\n");
    for (run, r) in rows {
        out.push_str(run);
        for v in r.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", r.n_samples));
    }
    out
}

/// Aligned text table; the best value of each column is marked with `*`.
pub fn text_table(rows: &[(String, MetricReport)]) -> String {
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let best = best_per_column(&reports);
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("run".to_string())
        .chain(COLUMNS.iter().map(|(n, _)| n.to_string()))
        .collect()];
    for (i, (run, r)) in rows.iter().enumerate() {
        let mut row = vec![run.clone()];
        for (c, v) in r.values().iter().enumerate() {
            let mark = if best.is_some_and(|b| b[c] == i) {
                "*"
            } else {
                ""
            };
            row.push(format!("{v:.4}{mark}"));
        }
        cells.push(row);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(h: f64, s: f64) -> MetricReport {
        MetricReport {
            fid_y_to_t: h * 10.0,
            hamming: h,
            fid_t_to_y: 1.0,
            mse: 0.1,
            ssim: s,
            n_samples: 4,
        }
    }

    #[test]
    fn best_marks_follow_orientation() {
        let rows = vec![rep(0.3, 0.9), rep(0.1, 0.5)];
        assert_eq!(best_per_column(&rows).unwrap(), [1, 1, 0, 0, 0]);
    }

    #[test]
    fn tables_have_one_row_per_run() {
        let rows = vec![
            ("a".to_string(), rep(0.3, 0.9)),
            ("b".to_string(), rep(0.1, 0.5)),
        ];
        assert_eq!(csv_table(&rows).lines().count(), 3);
        let text = text_table(&rows);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().contains("0.1000*"));
    }
}
