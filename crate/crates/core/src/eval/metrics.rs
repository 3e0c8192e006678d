//! Pixel metrics: Hamming distance, MSE and windowed SSIM (with its gradient).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DigitalTemplate, Grid};

pub const BINARIZE_THRESHOLD: f64 = 0.5;

/// Fraction of pixels where `t` differs from `[t_tilde >= threshold]`.
pub fn hamming_metric(t: &DigitalTemplate, t_tilde: &Grid, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside (0,1)"
        )));
    }
    t.grid().check_same_side(t_tilde)?;
    let wrong = t
        .grid()
        .data()
        .iter()
        .zip(t_tilde.data())
        .filter(|(&a, &b)| (a == 1.0) != (b >= threshold))
        .count();
    Ok(wrong as f64 / t_tilde.data().len() as f64)
}

/// Mean squared pixel difference over a batch.
pub fn mse_metric(a: &[Grid], b: &[Grid]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} images",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in a.iter().zip(b) {
        x.check_same_side(y)?;
        sum += x
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>();
        n += x.data().len();
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

/// Summed-area table with a zero border: `s[(i, j)]` is the sum over `[0, i) x [0, j)`.
struct Integral {
    n: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(side: usize, f: impl Fn(usize) -> f64) -> Self {
        let n = side + 1;
        let mut s = vec![0.0; n * n];
        for i in 0..side {
            let mut row = 0.0;
            for j in 0..side {
                row += f(i * side + j);
                s[(i + 1) * n + j + 1] = s[i * n + j + 1] + row;
            }
        }
        Integral { n, s }
    }

    fn window(&self, i: usize, j: usize, w: usize) -> f64 {
        let n = self.n;
        self.s[(i + w) * n + j + w] - self.s[i * n + j + w] - self.s[(i + w) * n + j]
            + self.s[i * n + j]
    }
}

struct WindowStats {
    mu_a: f64,
    mu_b: f64,
    var_a: f64,
    var_b: f64,
    cov: f64,
}

fn check_ssim(a: &Grid, b: &Grid, p: &SsimParams) -> Result<()> {
    a.check_same_side(b)?;
    if p.window < 3 || p.window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "ssim window {} must be odd and >= 3",
            p.window
        )));
    }
    if p.window > a.side() {
        return Err(Error::WindowTooLarge {
            window: p.window,
            side: a.side(),
        });
    }
    Ok(())
}

fn window_stats(a: &Grid, b: &Grid, w: usize) -> Vec<WindowStats> {
    let (ad, bd) = (a.data(), b.data());
    let m = a.side();
    let sa = Integral::new(m, |k| ad[k]);
    let sb = Integral::new(m, |k| bd[k]);
    let saa = Integral::new(m, |k| ad[k] * ad[k]);
    let sbb = Integral::new(m, |k| bd[k] * bd[k]);
    let sab = Integral::new(m, |k| ad[k] * bd[k]);
    let nw = m - w + 1;
    let area = (w * w) as f64;
    let mut out = Vec::with_capacity(nw * nw);
    for i in 0..nw {
        for j in 0..nw {
            let mu_a = sa.window(i, j, w) / area;
            let mu_b = sb.window(i, j, w) / area;
            out.push(WindowStats {
                mu_a,
                mu_b,
                // clamp cancellation noise; variances are nonnegative by definition
                var_a: (saa.window(i, j, w) / area - mu_a * mu_a).max(0.0),
                var_b: (sbb.window(i, j, w) / area - mu_b * mu_b).max(0.0),
                cov: sab.window(i, j, w) / area - mu_a * mu_b,
            });
        }
    }
    out
}

/// Mean SSIM over all fully contained square windows with uniform weights.
pub fn ssim_metric(a: &Grid, b: &Grid, p: &SsimParams) -> Result<f64> {
    check_ssim(a, b, p)?;
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let stats = window_stats(a, b, p.window);
    let total: f64 = stats
        .iter()
        .map(|s| {
            (2.0 * s.mu_a * s.mu_b + c1) * (2.0 * s.cov + c2)
                / ((s.mu_a * s.mu_a + s.mu_b * s.mu_b + c1) * (s.var_a + s.var_b + c2))
        })
        .sum();
    Ok(total / stats.len() as f64)
}

/// SSIM and its gradient with respect to `b`.
pub fn ssim_with_grad(a: &Grid, b: &Grid, p: &SsimParams) -> Result<(f64, Grid)> {
    check_ssim(a, b, p)?;
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let w = p.window;
    let m = a.side();
    let nw = m - w + 1;
    let stats = window_stats(a, b, w);
    let count = stats.len() as f64;
    let area = (w * w) as f64;
    // per-window coefficients of d s / d b_p = (alpha + beta * a_p + gamma * b_p) / area
    let mut alpha = vec![0.0; stats.len()];
    let mut beta = vec![0.0; stats.len()];
    let mut gamma = vec![0.0; stats.len()];
    let mut total = 0.0;
    for (k, s) in stats.iter().enumerate() {
        let a1 = 2.0 * s.mu_a * s.mu_b + c1;
        let a2 = 2.0 * s.cov + c2;
        let b1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + c1;
        let b2 = s.var_a + s.var_b + c2;
        let v = a1 * a2 / (b1 * b2);
        total += v;
        let d_mu_b = v * (2.0 * s.mu_a / a1 - 2.0 * s.mu_b / b1);
        let d_cov = 2.0 * v / a2;
        let d_var_b = -v / b2;
        beta[k] = d_cov;
        gamma[k] = 2.0 * d_var_b;
        alpha[k] = d_mu_b - d_cov * s.mu_a - 2.0 * d_var_b * s.mu_b;
    }
    // each pixel collects the coefficients of every window covering it
    let cover = |coef: &[f64]| -> Vec<f64> {
        let si = Integral::new(nw, |k| coef[k]);
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            let i0 = i.saturating_sub(w - 1);
            let i1 = i.min(nw - 1);
            for j in 0..m {
                let j0 = j.saturating_sub(w - 1);
                let j1 = j.min(nw - 1);
                let n = si.n;
                out[i * m + j] =
                    si.s[(i1 + 1) * n + j1 + 1] - si.s[i0 * n + j1 + 1] - si.s[(i1 + 1) * n + j0]
                        + si.s[i0 * n + j0];
            }
        }
        out
    };
    let (ca, cb, cg) = (cover(&alpha), cover(&beta), cover(&gamma));
    let grad: Vec<f64> = (0..m * m)
        .map(|k| (ca[k] + cb[k] * a.data()[k] + cg[k] * b.data()[k]) / (area * count))
        .collect();
    Ok((total / count, Grid::new(m, grad)?))
}

/// `1 - SSIM` as a loss on `prediction` against `target`, with its gradient.
pub fn ssim_loss_with_grad(
    target: &Grid,
    prediction: &Grid,
    p: &SsimParams,
) -> Result<(f64, Grid)> {
    let (s, g) = ssim_with_grad(target, prediction, p)?;
    Ok((1.0 - s, g.map(|v| -v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(side: usize, seed: u64) -> Grid {
        let mut r = crate::rng::stream(seed, &["ssim"]);
        Grid::new(side, (0..side * side).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn hamming_counts_pixels() {
        let t = DigitalTemplate::new("t", Grid::filled(8, 1.0)).unwrap();
        let mut est = Grid::filled(8, 0.9);
        est.set(0, 0, 0.1);
        assert_eq!(hamming_metric(&t, &est, 0.5).unwrap(), 1.0 / 64.0);
        assert!(hamming_metric(&t, &est, 1.0).is_err());
    }

    #[test]
    fn mse_constant_case() {
        let a = vec![Grid::filled(8, 0.0)];
        let b = vec![Grid::filled(8, 0.2)];
        assert!((mse_metric(&a, &b).unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn ssim_identity_and_constant_closed_form() {
        let p = SsimParams::default();
        let a = random(16, 1);
        assert!((ssim_metric(&a, &a, &p).unwrap() - 1.0).abs() < 1e-12);
        let z = Grid::filled(16, 0.0);
        let o = Grid::filled(16, 1.0);
        let c1: f64 = 1e-4;
        assert!((ssim_metric(&z, &o, &p).unwrap() - c1 / (1.0 + c1)).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_large_window() {
        let a = Grid::filled(8, 0.0);
        assert!(matches!(
            ssim_metric(&a, &a, &SsimParams::default()),
            Err(Error::WindowTooLarge {
                window: 11,
                side: 8
            })
        ));
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let p = SsimParams {
            window: 3,
            ..SsimParams::default()
        };
        let a = random(8, 2);
        let b = random(8, 3);
        let (_, g) = ssim_with_grad(&a, &b, &p).unwrap();
        let h = 1e-6;
        for k in 0..64 {
            let mut bp = b.clone();
            bp.data_mut()[k] += h;
            let mut bm = b.clone();
            bm.data_mut()[k] -= h;
            let num =
                (ssim_metric(&a, &bp, &p).unwrap() - ssim_metric(&a, &bm, &p).unwrap()) / (2.0 * h);
            assert!(
                (num - g.data()[k]).abs() <= 1e-6 * (1.0 + num.abs()),
                "{k}: {num} vs {}",
                g.data()[k]
            );
        }
    }
}
