//! Seeded, random-access batch streams over an in-memory dataset.
//!
//! Batch `k` belongs to epoch `k / batches_per_epoch`; each epoch draws fresh
//! permutations from the stream seed, so any batch can be regenerated without
//! replaying the ones before it. This is what makes checkpoint resume exact.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::Pairing;
use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug)]
pub struct BatchStream<'a> {
    data: &'a Dataset,
    batch_size: usize,
    pairing: Pairing,
    paired_fraction: f64,
    seed: u64,
}

/// Index plan for one epoch: template order, print order and per-batch pairing tags.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochPlan {
    pub templates: Vec<usize>,
    pub prints: Vec<usize>,
    pub paired: Vec<bool>,
}

pub fn make_batches(
    data: &Dataset,
    batch_size: usize,
    pairing: Pairing,
    paired_fraction: f64,
    seed: u64,
) -> Result<BatchStream<'_>> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::BatchTooLarge {
            batch: batch_size,
            available: data.len(),
        });
    }
    Ok(BatchStream {
        data,
        batch_size,
        pairing,
        paired_fraction: paired_fraction.clamp(0.0, 1.0),
        seed,
    })
}

impl<'a> BatchStream<'a> {
    pub fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    pub fn epoch_plan(&self, epoch: u64) -> EpochPlan {
        let n = self.data.len();
        let e = epoch.to_string();
        let mut templates: Vec<usize> = (0..n).collect();
        templates.shuffle(&mut rng::stream(self.seed, &["epoch", &e, "templates"]));
        let nb = self.batches_per_epoch();
        match self.pairing {
            Pairing::Paired => EpochPlan {
                prints: templates.clone(),
                templates,
                paired: vec![true; nb],
            },
            Pairing::Unpaired => {
                let mut prints: Vec<usize> = (0..n).collect();
                prints.shuffle(&mut rng::stream(self.seed, &["epoch", &e, "prints"]));
                EpochPlan {
                    templates,
                    prints,
                    paired: vec![false; nb],
                }
            }
            Pairing::Hybrid => {
                let mut r = rng::stream(self.seed, &["epoch", &e, "mask"]);
                let paired: Vec<bool> = (0..nb)
                    .map(|_| r.random::<f64>() < self.paired_fraction)
                    .collect();
                let mut prints = templates.clone();
                // prints at unpaired positions are shuffled among themselves only
                let slots: Vec<usize> = (0..n).filter(|&p| !paired[p / self.batch_size]).collect();
                let mut pool: Vec<usize> = slots.iter().map(|&p| templates[p]).collect();
                pool.shuffle(&mut rng::stream(self.seed, &["epoch", &e, "prints"]));
                for (&p, v) in slots.iter().zip(pool) {
                    prints[p] = v;
                }
                EpochPlan {
                    templates,
                    prints,
                    paired,
                }
            }
        }
    }

    pub fn batch(&self, index: u64) -> Batch {
        let nb = self.batches_per_epoch() as u64;
        let plan = self.epoch_plan(index / nb);
        let k = (index % nb) as usize;
        let lo = k * self.batch_size;
        let hi = (lo + self.batch_size).min(self.data.len());
        self.data.assemble(
            &plan.templates[lo..hi],
            &plan.prints[lo..hi],
            plan.paired[k],
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = Batch> + '_ {
        (0u64..).map(move |i| self.batch(i))
    }
}
