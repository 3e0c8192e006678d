//! Sample grids and 2-D embeddings for visual inspection.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::backbones::Translator;
use crate::data::image_io::{to_u8, write_gray_png};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// An 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_gray_png(path, self.width, self.height, &self.pixels)
    }
}

/// Lays out one block per sample, left to right. Each block has two rows:
/// `(y, t̃ per model)` on top and `(t, ỹ per model)` below.
pub fn render_sample_grid(
    models: &[(&Translator, &Translator)],
    samples: &[Sample],
) -> Result<Raster> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m = samples[0].template.side();
    let cols_per_block = 1 + models.len();
    let width = m * cols_per_block * samples.len();
    let height = 2 * m;
    let mut pixels = vec![0u8; width * height];
    let mut blit = |g: &Grid, col: usize, row: usize| -> Result<()> {
        if g.side() != m {
            return Err(Error::ShapeMismatch(format!(
                "grid cell {} vs {m}",
                g.side()
            )));
        }
        for i in 0..m {
            for j in 0..m {
                pixels[(row * m + i) * width + col * m + j] = to_u8(g.get(i, j));
            }
        }
        Ok(())
    };
    for (s_idx, s) in samples.iter().enumerate() {
        let base = s_idx * cols_per_block;
        blit(&s.print, base, 0)?;
        blit(&s.template, base, 1)?;
        for (k, (enc, dec)) in models.iter().enumerate() {
            blit(&enc.forward(&s.print)?, base + 1 + k, 0)?;
            blit(&dec.forward(&s.template)?, base + 1 + k, 1)?;
        }
    }
    Ok(Raster {
        width,
        height,
        pixels,
    })
}

pub fn sample_grid(
    models: &[(&Translator, &Translator)],
    samples: &[Sample],
    out: &Path,
) -> Result<Raster> {
    let r = render_sample_grid(models, samples)?;
    r.save(out)?;
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedLabel {
    TemplateReal,
    TemplateGenerated,
    PrintReal,
    PrintGenerated,
}

impl EmbedLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedLabel::TemplateReal => "template_real",
            EmbedLabel::TemplateGenerated => "template_generated",
            EmbedLabel::PrintReal => "print_real",
            EmbedLabel::PrintGenerated => "print_generated",
        }
    }
}

/// Any reduction of row vectors to 2-D points.
pub trait Projector {
    fn project(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>>;
}

/// Top-2 principal components, computed from the Gram matrix of the centered rows so the
/// cost depends on the number of images rather than on the number of pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pca;

impl Projector for Pca {
    fn project(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimMismatch(d, r.len()));
        }
        let mean: Vec<f64> = (0..d)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .sum();
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let e = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let mut out = vec![[0.0; 2]; n];
        for (axis, &k) in order.iter().take(2).enumerate() {
            let scale = e.eigenvalues[k].max(0.0).sqrt();
            let col = e.eigenvectors.column(k);
            // fix the sign so the largest-magnitude entry is positive
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                out[i][axis] = sign * col[i] * scale;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub x: f64,
    pub y: f64,
    pub label: EmbedLabel,
}

pub fn embed_2d(
    images: &[Grid],
    labels: &[EmbedLabel],
    projector: &dyn Projector,
) -> Result<Vec<EmbeddedPoint>> {
    if images.len() < 3 {
        return Err(Error::BatchTooSmall {
            needed: 3,
            got: images.len(),
        });
    }
    if labels.len() != images.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} images",
            labels.len(),
            images.len()
        )));
    }
    let rows: Vec<Vec<f64>> = images.iter().map(|g| g.data().to_vec()).collect();
    let pts = projector.project(&rows)?;
    Ok(pts
        .into_iter()
        .zip(labels)
        .map(|(p, &label)| EmbeddedPoint {
            x: p[0],
            y: p[1],
            label,
        })
        .collect())
}

pub fn embedding_csv(points: &[EmbeddedPoint]) -> String {
    let mut s = String::from("x,y,label\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.x, p.y, p.label.as_str()));
    }
    s
}
