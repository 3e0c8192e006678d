//! Synthetic printing-imaging channel standing in for a physical printer and scanner.
//!
//! Template pixels equal to 1 are treated as printed dots. The pipeline is
//! probabilistic dot gain (dilation or erosion of the dot set), Gaussian blur,
//! tone curve `v^gamma`, additive Gaussian noise and clipping to [0,1].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grid::{Authenticity, DigitalTemplate, Grid, PrintedCode};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub blur_sigma: f64,
    /// Positive spreads dots, negative shrinks them; magnitude is the per-pixel probability.
    pub dot_gain: f64,
    pub gamma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            blur_sigma: 1.0,
            dot_gain: 0.0,
            gamma: 1.0,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl ChannelParams {
    pub fn identity() -> Self {
        ChannelParams {
            blur_sigma: 0.0,
            dot_gain: 0.0,
            gamma: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err("channel.blur_sigma must be >= 0".into());
        }
        if !(-1.0..=1.0).contains(&self.dot_gain) {
            return Err("channel.dot_gain must lie in [-1,1]".into());
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err("channel.gamma must be > 0".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err("channel.noise_sigma must be >= 0".into());
        }
        Ok(())
    }
}

fn dot_gain(g: &Grid, strength: f64, r: &mut impl Rng) -> Grid {
    let m = g.side();
    let target = if strength > 0.0 { 0.0 } else { 1.0 };
    let p = strength.abs();
    let mut out = g.clone();
    for i in 0..m {
        for j in 0..m {
            // one draw per pixel keeps the stream aligned regardless of content
            let u: f64 = r.random();
            if g.get(i, j) != target || u >= p {
                continue;
            }
            let touches = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|(di, dj)| {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    (0..m as isize).contains(&a)
                        && (0..m as isize).contains(&b)
                        && g.get(a as usize, b as usize) != target
                });
            if touches {
                out.set(i, j, 1.0 - target);
            }
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(g: &Grid, sigma: f64) -> Grid {
    if sigma <= 0.0 {
        return g.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let m = g.side() as isize;
    let idx = |x: isize| -> usize {
        let mut x = x;
        // mirror repeatedly for radii larger than the grid
        loop {
            if x < 0 {
                x = -x - 1;
            } else if x >= m {
                x = 2 * m - x - 1;
            } else {
                return x as usize;
            }
        }
    };
    let mut tmp = Grid::filled(g.side(), 0.0);
    for i in 0..m {
        for j in 0..m {
            let v = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * g.get(i as usize, idx(j + t as isize - r)))
                .sum();
            tmp.set(i as usize, j as usize, v);
        }
    }
    let mut out = Grid::filled(g.side(), 0.0);
    for i in 0..m {
        for j in 0..m {
            let v = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp.get(idx(i + t as isize - r), j as usize))
                .sum();
            out.set(i as usize, j as usize, v);
        }
    }
    out
}

/// Simulates printing and acquiring `t`; deterministic given `(t, params)`.
pub fn synth_channel(t: &DigitalTemplate, params: &ChannelParams) -> PrintedCode {
    let mut r = rng::stream(params.seed, &["channel"]);
    let mut g = if params.dot_gain != 0.0 {
        dot_gain(t.grid(), params.dot_gain, &mut r)
    } else {
        t.grid().clone()
    };
    g = gaussian_blur(&g, params.blur_sigma);
    if params.gamma != 1.0 {
        g = g.map(|v| v.max(0.0).powf(params.gamma));
    }
    if params.noise_sigma > 0.0 {
        let n = Normal::new(0.0, params.noise_sigma).expect("finite sigma");
        for v in g.data_mut() {
            *v += n.sample(&mut r);
        }
    }
    let g = g.map(|v| v.clamp(0.0, 1.0));
    PrintedCode::new(t.id.clone(), g, Authenticity::Synthetic).expect("clipped to [0,1]")
}
