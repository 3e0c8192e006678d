//! Dataset layout, splitting, cropping, pairing regimes and the synthetic channel.

pub mod batches;
pub mod channel;
pub mod crop;
pub mod image_io;
pub mod manifest;
pub mod synthetic;

pub use batches::{make_batches, BatchStream, EpochPlan};
pub use channel::{gaussian_blur, synth_channel, ChannelParams};
pub use crop::{corner_anchors, crop_four};
pub use manifest::{split_train_test, tag_split, DatasetManifest, ManifestEntry, Split};
pub use synthetic::{make_synthetic_dataset, random_template, sample_id};

use crate::error::{Error, Result};
use crate::grid::{Authenticity, DigitalTemplate, Grid};

/// One template with the print acquired from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub template: Grid,
    pub print: Grid,
    pub authenticity: Authenticity,
}

/// Training batch. When `paired` is false, `prints[i]` has no relation to `templates[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub template_ids: Vec<String>,
    pub print_ids: Vec<String>,
    pub templates: Vec<Grid>,
    pub prints: Vec<Grid>,
    pub paired: bool,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Dataset { samples }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn side(&self) -> Option<usize> {
        self.samples.first().map(|s| s.template.side())
    }

    pub fn assemble(&self, t_idx: &[usize], y_idx: &[usize], paired: bool) -> Batch {
        Batch {
            template_ids: t_idx.iter().map(|&i| self.samples[i].id.clone()).collect(),
            print_ids: y_idx.iter().map(|&i| self.samples[i].id.clone()).collect(),
            templates: t_idx
                .iter()
                .map(|&i| self.samples[i].template.clone())
                .collect(),
            prints: y_idx
                .iter()
                .map(|&i| self.samples[i].print.clone())
                .collect(),
            paired,
        }
    }

    /// The whole dataset as one paired batch.
    pub fn as_batch(&self) -> Batch {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.assemble(&idx, &idx, true)
    }

    /// Replaces each sample by its four corner crops, cropping template and print at
    /// identical anchors. Crop `k` of sample `id` is named `id#k`.
    pub fn crop_four(&self, crop: usize) -> Result<Dataset> {
        let mut out = Vec::with_capacity(self.len() * 4);
        for s in &self.samples {
            let t = crop_four(&s.template, crop)?;
            let y = crop_four(&s.print, crop)?;
            for (k, (t, y)) in t.into_iter().zip(y).enumerate() {
                out.push(Sample {
                    id: format!("{}#{k}", s.id),
                    template: t,
                    print: y,
                    authenticity: s.authenticity,
                });
            }
        }
        Ok(Dataset::new(out))
    }

    /// Loads every entry of `manifest` into memory. Entries must have a printed file.
    pub fn load(manifest: &DatasetManifest) -> Result<Dataset> {
        let mut samples = Vec::with_capacity(manifest.len());
        for e in &manifest.entries {
            let printed = e.printed.as_ref().ok_or_else(|| {
                Error::InvalidManifest(format!("entry `{}` has no printed file", e.id))
            })?;
            let t = image_io::read_grid_png(&manifest.root.join(&e.template))?;
            // 8-bit storage of a binary template reads back as exact 0/1
            let t =
                DigitalTemplate::new(e.id.clone(), t.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))?;
            let y = image_io::read_grid_png(&manifest.root.join(printed))?;
            t.grid().check_same_side(&y)?;
            samples.push(Sample {
                id: e.id.clone(),
                template: t.grid().clone(),
                print: y,
                authenticity: e.authenticity,
            });
        }
        Ok(Dataset::new(samples))
    }
}
