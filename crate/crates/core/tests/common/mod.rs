#![allow(dead_code)]

pub mod oracles;

use rand::Rng;

use turbo_twin::config::{reduction_preset, CriticKind, TurboConfig};
use turbo_twin::data::synthetic::sample_channel;
use turbo_twin::data::{random_template, synth_channel, ChannelParams, Dataset, Sample};
use turbo_twin::grid::{Authenticity, Grid};
use turbo_twin::rng::stream;

/// Uniform random grid in [lo, hi).
pub fn random_grid(side: usize, seed: u64, lo: f64, hi: f64) -> Grid {
    let mut r = stream(seed, &["test-grid"]);
    Grid::new(
        side,
        (0..side * side)
            .map(|_| lo + (hi - lo) * r.random::<f64>())
            .collect(),
    )
    .unwrap()
}

pub fn random_binary(side: usize, seed: u64) -> Grid {
    let mut r = stream(seed, &["test-binary"]);
    Grid::new(
        side,
        (0..side * side)
            .map(|_| if r.random::<bool>() { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

/// In-memory synthetic dataset; ids are `"{seed}-{i}"`.
pub fn synthetic(n: usize, side: usize, seed: u64, params: &ChannelParams) -> Dataset {
    Dataset::new(
        (0..n)
            .map(|i| {
                let id = format!("{seed}-{i}");
                let t = random_template(&id, side, 0.5, seed).unwrap();
                let y = synth_channel(&t, &sample_channel(params, &id));
                Sample {
                    id,
                    template: t.grid().clone(),
                    print: y.grid().clone(),
                    authenticity: Authenticity::Synthetic,
                }
            })
            .collect(),
    )
}

/// A preset shrunk to run in milliseconds on 32x32 inputs.
pub fn tiny(preset: &str, seed: u64) -> TurboConfig {
    let mut c = reduction_preset(preset).unwrap();
    c.seed = seed;
    c.network.base_width = 4;
    c.network.residual_blocks = 1;
    c.critic.base_width = 4;
    c.optimizer.batch_size = 2;
    c.optimizer.learning_rate = 1e-3;
    c
}

/// Image critic variant of `tiny`, usable on 8x8 inputs.
pub fn tiny_image_critic(preset: &str, seed: u64) -> TurboConfig {
    let mut c = tiny(preset, seed);
    c.critic_kind = CriticKind::Image;
    c.critic.image_stages = 2;
    c
}

/// `|a - b| <= rel * max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}
