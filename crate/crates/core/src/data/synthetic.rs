use std::path::{Path, PathBuf};

use rand::Rng;

use crate::config::{ConfigIssue, Pairing};
use crate::data::channel::{synth_channel, ChannelParams};
use crate::data::image_io::write_grid_png;
use crate::data::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::grid::{Authenticity, DigitalTemplate, Grid, MIN_SIDE};
use crate::rng;

pub const SYNTHETIC_DEVICE: &str = "synthetic";

pub fn sample_id(i: usize) -> String {
    format!("s{i:06}")
}

/// Binary template with i.i.d. Bernoulli(`density`) pixels.
pub fn random_template(id: &str, m: usize, density: f64, seed: u64) -> Result<DigitalTemplate> {
    let mut r = rng::stream(seed, &["template", id]);
    let data = (0..m * m)
        .map(|_| {
            if r.random::<f64>() < density {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    DigitalTemplate::new(id, Grid::new(m, data)?)
}

/// Channel parameters for one sample: the configured channel with a per-sample seed.
pub fn sample_channel(params: &ChannelParams, id: &str) -> ChannelParams {
    ChannelParams {
        seed: rng::derive_seed(params.seed, &["print", id]),
        ..params.clone()
    }
}

pub fn check_synthetic_args(
    n: usize,
    m: usize,
    density: f64,
    params: &ChannelParams,
) -> Result<()> {
    let mut issues = Vec::new();
    let mut bad = |field: &str, reason: &str| {
        issues.push(ConfigIssue::RangeError {
            field: field.into(),
            reason: reason.into(),
        })
    };
    if n == 0 {
        bad("dataset.n", "must be >= 1");
    }
    if m < MIN_SIDE {
        bad("dataset.m", "must be >= 8");
    }
    if !(density > 0.0 && density < 1.0) {
        bad("dataset.density", "must lie in (0,1)");
    }
    if let Err(reason) = params.check() {
        issues.push(ConfigIssue::RangeError {
            field: reason.split_whitespace().next().unwrap_or("channel").into(),
            reason,
        });
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(issues))
    }
}

/// Writes `n` templates and their simulated prints under `root` and returns the manifest.
pub fn make_synthetic_dataset(
    root: &Path,
    n: usize,
    m: usize,
    density: f64,
    params: &ChannelParams,
    seed: u64,
) -> Result<DatasetManifest> {
    check_synthetic_args(n, m, density, params)?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let id = sample_id(i);
        let t = random_template(&id, m, density, seed)?;
        let y = synth_channel(&t, &sample_channel(params, &id));
        let template = PathBuf::from("templates").join(format!("{id}.png"));
        let printed = PathBuf::from("printed")
            .join(SYNTHETIC_DEVICE)
            .join(Authenticity::Original.as_str())
            .join(format!("{id}.png"));
        write_grid_png(&root.join(&template), t.grid())?;
        write_grid_png(&root.join(&printed), y.grid())?;
        entries.push(ManifestEntry {
            id,
            template,
            printed: Some(printed),
            authenticity: Authenticity::Original,
            split: Split::Unassigned,
        });
    }
    let manifest = DatasetManifest::new(root, entries, Pairing::Paired, seed)?;
    manifest.save()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_controls_template_mean() {
        for i in 0..10 {
            let t = random_template(&sample_id(i), 64, 0.5, 1).unwrap();
            // 4096 pixels: sd of the mean is 0.0078, so [0.4, 0.6] is > 12 sd wide
            assert!((0.4..=0.6).contains(&t.grid().mean()));
        }
    }

    #[test]
    fn rejects_bad_density_naming_field() {
        let err = check_synthetic_args(10, 64, 1.5, &ChannelParams::default()).unwrap_err();
        assert!(err.to_string().contains("dataset.density"));
    }
}
