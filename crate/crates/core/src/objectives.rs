//! Scalar losses and their analytic gradients.
//!
//! The direct path loss is `L_t̃ + D_tt̃ + α·L_ŷ + α·D_yŷ` and the reverse path
//! loss is `L_ỹ + D_yỹ + β·L_t̂ + β·D_tt̂`. Reconstruction terms stand in for
//! the expected log-likelihoods and the `D` terms for the divergences, realized
//! through critics. Disabled terms contribute exactly zero.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Derived, GanLoss, LossTerm, Pairing, Path, ReconKind, TurboConfig};
use crate::critics::{CriticSet, ScoreNet};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::grid::{Grid, PathOutputs};
use crate::nn::Grads;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Critic,
    Generator,
}

/// Probability clamp keeping the cross-entropy finite.
const BCE_EPS: f64 = 1e-12;
/// Step of the central difference used for the penalty's parameter gradient.
const GP_STEP: f64 = 1e-5;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Critic-side contribution of the scores of real samples, with its gradient.
pub fn critic_real_part(kind: GanLoss, real: &[f64]) -> Result<(f64, Vec<f64>)> {
    if real.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = real.len() as f64;
    Ok(match kind {
        GanLoss::Lsgan => (
            0.5 * mean(
                &real
                    .iter()
                    .map(|r| (r - 1.0) * (r - 1.0))
                    .collect::<Vec<_>>(),
            ),
            real.iter().map(|r| (r - 1.0) / n).collect(),
        ),
        GanLoss::Hinge => (
            mean(&real.iter().map(|r| (1.0 - r).max(0.0)).collect::<Vec<_>>()),
            real.iter()
                .map(|r| if 1.0 - r > 0.0 { -1.0 / n } else { 0.0 })
                .collect(),
        ),
        GanLoss::WganGp => (-mean(real), vec![-1.0 / n; real.len()]),
    })
}

/// Critic-side contribution of the scores of generated samples, with its gradient.
pub fn critic_fake_part(kind: GanLoss, fake: &[f64]) -> Result<(f64, Vec<f64>)> {
    if fake.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = fake.len() as f64;
    Ok(match kind {
        GanLoss::Lsgan => (
            0.5 * mean(&fake.iter().map(|f| f * f).collect::<Vec<_>>()),
            fake.iter().map(|f| f / n).collect(),
        ),
        GanLoss::Hinge => (
            mean(&fake.iter().map(|f| (1.0 + f).max(0.0)).collect::<Vec<_>>()),
            fake.iter()
                .map(|f| if 1.0 + f > 0.0 { 1.0 / n } else { 0.0 })
                .collect(),
        ),
        GanLoss::WganGp => (mean(fake), vec![1.0 / n; fake.len()]),
    })
}

/// Generator loss on the scores of its samples, with its gradient.
pub fn generator_part(kind: GanLoss, fake: &[f64]) -> Result<(f64, Vec<f64>)> {
    if fake.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = fake.len() as f64;
    Ok(match kind {
        GanLoss::Lsgan => (
            0.5 * mean(
                &fake
                    .iter()
                    .map(|f| (f - 1.0) * (f - 1.0))
                    .collect::<Vec<_>>(),
            ),
            fake.iter().map(|f| (f - 1.0) / n).collect(),
        ),
        GanLoss::Hinge | GanLoss::WganGp => (-mean(fake), vec![-1.0 / n; fake.len()]),
    })
}

/// Adversarial loss over flattened score batches (patch maps contribute every position).
pub fn adversarial_loss(kind: GanLoss, role: Role, real: &[f64], fake: &[f64]) -> Result<f64> {
    Ok(match role {
        Role::Critic => critic_real_part(kind, real)?.0 + critic_fake_part(kind, fake)?.0,
        Role::Generator => generator_part(kind, fake)?.0,
    })
}

/// `λ · mean((‖∇D(x̂)‖₂ − 1)²)` over per-sample interpolates, with its critic-parameter gradient.
///
/// `D` is the mean of the critic's score map. The parameter gradient needs the
/// derivative of the input gradient with respect to the parameters; it is taken
/// as a central difference of parameter gradients along the unit input-gradient
/// direction, which is exact for piecewise-linear critics away from kinks.
pub fn gradient_penalty_with_grads<S: ScoreNet>(
    critic: &S,
    real: &[Tensor],
    fake: &[Tensor],
    lambda: f64,
    seed: u64,
) -> Result<(f64, Grads)> {
    if real.len() != fake.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} real vs {} fake samples",
            real.len(),
            fake.len()
        )));
    }
    if real.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grads = critic.zero_grads();
    if lambda == 0.0 {
        return Ok((0.0, grads));
    }
    let mut r = rng::stream(seed, &["gradient_penalty"]);
    let n = real.len() as f64;
    let mut total = 0.0;
    for (xr, xf) in real.iter().zip(fake) {
        if xr.shape() != xf.shape() {
            return Err(Error::ShapeMismatch(format!("{xr:?} vs {xf:?}")));
        }
        let eps: f64 = r.random();
        let mut xi = xr.clone();
        for (v, f) in xi.data_mut().iter_mut().zip(xf.data()) {
            *v = eps * *v + (1.0 - eps) * f;
        }
        let (gx, _) = mean_score_grads(critic, &xi)?;
        let norm = gx.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        total += (norm - 1.0) * (norm - 1.0);
        if norm > 0.0 {
            let unit = gx.map(|v| v / norm);
            let shifted = |sign: f64| {
                let mut x = xi.clone();
                for (v, u) in x.data_mut().iter_mut().zip(unit.data()) {
                    *v += sign * GP_STEP * u;
                }
                x
            };
            let (_, gp) = mean_score_grads(critic, &shifted(1.0))?;
            let (_, gm) = mean_score_grads(critic, &shifted(-1.0))?;
            let coef = 2.0 * lambda / n * (norm - 1.0) / (2.0 * GP_STEP);
            grads.add_scaled(&gp, coef);
            grads.add_scaled(&gm, -coef);
        }
    }
    Ok((lambda * total / n, grads))
}

pub fn gradient_penalty<S: ScoreNet>(
    critic: &S,
    real: &[Tensor],
    fake: &[Tensor],
    lambda: f64,
    seed: u64,
) -> Result<f64> {
    Ok(gradient_penalty_with_grads(critic, real, fake, lambda, seed)?.0)
}

/// Gradients of the spatially averaged score w.r.t. the input and the parameters.
fn mean_score_grads<S: ScoreNet>(critic: &S, x: &Tensor) -> Result<(Tensor, Grads)> {
    let (s, cache) = critic.score_forward(x)?;
    let k = s.len() as f64;
    let g = s.map(|_| 1.0 / k);
    let mut grads = critic.zero_grads();
    let gx = critic.score_backward(&cache, &g, &mut grads);
    Ok((gx, grads))
}

/// Mean reconstruction distance over every pixel of the batch, with per-sample gradients.
pub fn reconstruction_loss_with_grad(
    kind: ReconKind,
    prediction: &[&Grid],
    target: &[&Grid],
) -> Result<(f64, Vec<Grid>)> {
    if prediction.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            prediction.len(),
            target.len()
        )));
    }
    if prediction.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for (p, t) in prediction.iter().zip(target) {
        p.check_same_side(t)?;
        if kind == ReconKind::Bce {
            if let Some(&v) = t.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinaryTarget(v));
            }
        }
    }
    let count: usize = prediction.iter().map(|p| p.data().len()).sum();
    let n = count as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(prediction.len());
    for (p, t) in prediction.iter().zip(target) {
        let mut g = Grid::filled(p.side(), 0.0);
        for ((pv, tv), gv) in p.data().iter().zip(t.data()).zip(g.data_mut()) {
            let d = pv - tv;
            match kind {
                ReconKind::L1 => {
                    total += d.abs();
                    *gv = if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    };
                }
                ReconKind::L2 => {
                    total += d * d;
                    *gv = 2.0 * d / n;
                }
                ReconKind::Bce => {
                    let q = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    total -= tv * q.ln() + (1.0 - tv) * (1.0 - q).ln();
                    *gv = (q - tv) / (q * (1.0 - q)) / n;
                }
            }
        }
        grads.push(g);
    }
    Ok((total / n, grads))
}

pub fn reconstruction_loss(kind: ReconKind, prediction: &[&Grid], target: &[&Grid]) -> Result<f64> {
    Ok(reconstruction_loss_with_grad(kind, prediction, target)?.0)
}

/// Per-term values and the weighted path totals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: BTreeMap<LossTerm, f64>,
    pub direct_total: f64,
    pub reverse_total: f64,
    pub grand_total: f64,
}

impl LossBreakdown {
    /// Joins a direct-path and a reverse-path partial breakdown.
    pub fn combine(direct: &LossBreakdown, reverse: &LossBreakdown) -> LossBreakdown {
        let mut terms = direct.terms.clone();
        terms.extend(reverse.terms.iter().map(|(k, v)| (*k, *v)));
        LossBreakdown {
            terms,
            direct_total: direct.direct_total,
            reverse_total: reverse.reverse_total,
            grand_total: direct.direct_total + reverse.reverse_total,
        }
    }

    pub fn all_finite(&self) -> Option<String> {
        self.terms
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(k, _)| k.key().to_string())
            .or_else(|| (!self.grand_total.is_finite()).then(|| "grand_total".to_string()))
    }
}

/// Gradients of a path loss w.r.t. the four derived images, one grid per sample.
#[derive(Clone, Debug)]
pub struct OutputGrads {
    pub t_tilde: Vec<Grid>,
    pub y_hat: Vec<Grid>,
    pub y_tilde: Vec<Grid>,
    pub t_hat: Vec<Grid>,
}

impl OutputGrads {
    fn zeros(outputs: &[PathOutputs]) -> Self {
        let z = |f: fn(&PathOutputs) -> &Grid| {
            outputs
                .iter()
                .map(|o| Grid::filled(f(o).side(), 0.0))
                .collect::<Vec<_>>()
        };
        OutputGrads {
            t_tilde: z(|o| &o.t_tilde),
            y_hat: z(|o| &o.y_hat),
            y_tilde: z(|o| &o.y_tilde),
            t_hat: z(|o| &o.t_hat),
        }
    }

    fn slot(&mut self, d: Derived) -> &mut Vec<Grid> {
        match d {
            Derived::TTilde => &mut self.t_tilde,
            Derived::YHat => &mut self.y_hat,
            Derived::YTilde => &mut self.y_tilde,
            Derived::THat => &mut self.t_hat,
        }
    }

    pub fn add_assign(&mut self, other: &OutputGrads) {
        let pairs = [
            (&mut self.t_tilde, &other.t_tilde),
            (&mut self.y_hat, &other.y_hat),
            (&mut self.y_tilde, &other.y_tilde),
            (&mut self.t_hat, &other.t_hat),
        ];
        for (dst, src) in pairs {
            for (a, b) in dst.iter_mut().zip(src) {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
        }
    }
}

pub fn derived_image(o: &PathOutputs, d: Derived) -> &Grid {
    match d {
        Derived::TTilde => &o.t_tilde,
        Derived::YHat => &o.y_hat,
        Derived::YTilde => &o.y_tilde,
        Derived::THat => &o.t_hat,
    }
}

fn recon_target(batch: &Batch, term: LossTerm, i: usize) -> &Grid {
    match term {
        // direct path inputs are the prints, reverse path inputs are the templates
        LossTerm::TRecon | LossTerm::TReconReverse => &batch.templates[i],
        _ => &batch.prints[i],
    }
}

/// Value and output-gradient of one term.
pub fn term_loss(
    term: LossTerm,
    outputs: &[PathOutputs],
    batch: &Batch,
    critics: &CriticSet,
    cfg: &TurboConfig,
) -> Result<(f64, Vec<Grid>)> {
    let images: Vec<&Grid> = outputs
        .iter()
        .map(|o| derived_image(o, term.derived()))
        .collect();
    if term.is_adversarial() {
        let critic = critics
            .get(term)
            .ok_or_else(|| Error::InvalidSpec(format!("no critic for {term}")))?;
        let mut maps = Vec::with_capacity(images.len());
        let mut scores = Vec::new();
        for img in &images {
            let (s, cache) = critic.score_forward(&img.to_tensor())?;
            scores.extend_from_slice(s.data());
            maps.push((s, cache));
        }
        let (value, dscores) = generator_part(cfg.gan_loss, &scores)?;
        let mut grads = Vec::with_capacity(images.len());
        let mut offset = 0;
        let mut scratch = critic.zero_grads();
        for (s, cache) in &maps {
            let (c, h, w) = s.shape();
            let g = Tensor::from_vec(c, h, w, dscores[offset..offset + s.len()].to_vec());
            offset += s.len();
            let dx = critic.score_backward(cache, &g, &mut scratch);
            grads.push(Grid::from_tensor(&dx)?);
        }
        Ok((value, grads))
    } else {
        let kind = match term.domain() {
            crate::config::Domain::Template => cfg.objective.template_recon,
            crate::config::Domain::Print => cfg.objective.print_recon,
        };
        let targets: Vec<&Grid> = (0..outputs.len())
            .map(|i| recon_target(batch, term, i))
            .collect();
        reconstruction_loss_with_grad(kind, &images, &targets)
    }
}

/// Weighted loss of one path plus the gradient w.r.t. the derived images.
pub fn path_loss_with_grads(
    path: Path,
    outputs: &[PathOutputs],
    batch: &Batch,
    critics: &CriticSet,
    cfg: &TurboConfig,
) -> Result<(LossBreakdown, OutputGrads)> {
    if outputs.len() != batch.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} outputs for a batch of {}",
            outputs.len(),
            batch.len()
        )));
    }
    let mut breakdown = LossBreakdown::default();
    let mut grads = OutputGrads::zeros(outputs);
    let mut total = 0.0;
    for term in cfg
        .enabled_terms
        .iter()
        .copied()
        .filter(|t| t.path() == path)
    {
        if term.needs_pairing() && !batch.paired {
            if cfg.pairing == Pairing::Hybrid {
                breakdown.terms.insert(term, 0.0);
                continue;
            }
            return Err(Error::MissingPairing(term.key()));
        }
        let (value, g) = term_loss(term, outputs, batch, critics, cfg)?;
        let w = cfg.weight(term);
        total += w * value;
        breakdown.terms.insert(term, value);
        for (dst, src) in grads.slot(term.derived()).iter_mut().zip(&g) {
            for (x, y) in dst.data_mut().iter_mut().zip(src.data()) {
                *x += w * y;
            }
        }
    }
    match path {
        Path::Direct => breakdown.direct_total = total,
        Path::Reverse => breakdown.reverse_total = total,
    }
    breakdown.grand_total = total;
    Ok((breakdown, grads))
}

/// Direct-path partial breakdown.
pub fn direct_loss(
    outputs: &[PathOutputs],
    batch: &Batch,
    critics: &CriticSet,
    cfg: &TurboConfig,
) -> Result<LossBreakdown> {
    Ok(path_loss_with_grads(Path::Direct, outputs, batch, critics, cfg)?.0)
}

/// Reverse-path partial breakdown.
pub fn reverse_loss(
    outputs: &[PathOutputs],
    batch: &Batch,
    critics: &CriticSet,
    cfg: &TurboConfig,
) -> Result<LossBreakdown> {
    Ok(path_loss_with_grads(Path::Reverse, outputs, batch, critics, cfg)?.0)
}

/// Full breakdown of both paths.
pub fn turbo_loss(
    outputs: &[PathOutputs],
    batch: &Batch,
    critics: &CriticSet,
    cfg: &TurboConfig,
) -> Result<LossBreakdown> {
    let d = direct_loss(outputs, batch, critics, cfg)?;
    let r = reverse_loss(outputs, batch, critics, cfg)?;
    Ok(LossBreakdown::combine(&d, &r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lsgan_examples() {
        assert_eq!(
            adversarial_loss(GanLoss::Lsgan, Role::Critic, &[1.0], &[0.0]).unwrap(),
            0.0
        );
        let v = adversarial_loss(GanLoss::Lsgan, Role::Critic, &[0.5], &[0.5]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hinge_clamps() {
        assert_eq!(
            adversarial_loss(GanLoss::Hinge, Role::Critic, &[2.0], &[-2.0]).unwrap(),
            0.0
        );
        assert_eq!(
            adversarial_loss(GanLoss::Hinge, Role::Generator, &[], &[0.5, 1.5]).unwrap(),
            -1.0
        );
    }

    #[test]
    fn wgan_critic_is_mean_difference() {
        let v = adversarial_loss(GanLoss::WganGp, Role::Critic, &[1.0, 3.0], &[0.5]).unwrap();
        assert!((v - (0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_batches_error() {
        assert!(matches!(
            adversarial_loss(GanLoss::Lsgan, Role::Critic, &[], &[0.0]),
            Err(Error::EmptyBatch)
        ));
        assert!(matches!(
            adversarial_loss(GanLoss::Hinge, Role::Generator, &[1.0], &[]),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn reconstruction_examples() {
        let z = Grid::filled(8, 0.0);
        let h = Grid::filled(8, 0.5);
        assert_eq!(
            reconstruction_loss(ReconKind::L2, &[&z], &[&z]).unwrap(),
            0.0
        );
        assert!((reconstruction_loss(ReconKind::L1, &[&h], &[&z]).unwrap() - 0.5).abs() < 1e-15);
        let t = Grid::from_fn(8, |i, j| ((i + j) % 2) as f64);
        let bce = reconstruction_loss(ReconKind::Bce, &[&h], &[&t]).unwrap();
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            reconstruction_loss(ReconKind::Bce, &[&h], &[&h]),
            Err(Error::NonBinaryTarget(_))
        ));
        assert!(matches!(
            reconstruction_loss(ReconKind::L1, &[&h], &[&Grid::filled(4, 0.0)]),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
