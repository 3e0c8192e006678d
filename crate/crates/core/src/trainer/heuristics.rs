//! Critic scheduling and input perturbation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{GanLoss, HeuristicParams};
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

/// Whether schedule slot `slot` is a critic update.
///
/// Without thresholds, slots cycle through `n_d` critic updates followed by one
/// generator update. With thresholds (lsgan only), the critic is updated when its
/// loss is above `d_threshold` or the generator loss is below `g_threshold`.
pub fn should_update_critic(
    loss: GanLoss,
    d_loss: f64,
    g_loss: f64,
    h: &HeuristicParams,
    slot: u64,
) -> Result<bool> {
    if h.has_thresholds() {
        if loss != GanLoss::Lsgan {
            return Err(Error::ThresholdUnsupported(loss.as_str()));
        }
        let d = h.d_threshold.is_some_and(|t| d_loss > t);
        let g = h.g_threshold.is_some_and(|t| g_loss < t);
        return Ok(d || g);
    }
    let cycle = h.n_d as u64 + 1;
    Ok(slot % cycle != h.n_d as u64)
}

/// Flips each label with probability `p_flip` and, with probability `p_noise`, mixes
/// each image with clipped unit Gaussian noise at weight `w_noise`.
pub fn perturb_critic_inputs(
    images: &[Grid],
    labels: &[Label],
    h: &HeuristicParams,
    r: &mut impl Rng,
) -> (Vec<Grid>, Vec<Label>) {
    let labels = labels
        .iter()
        .map(|&l| {
            if h.p_flip > 0.0 && r.random::<f64>() < h.p_flip {
                l.flipped()
            } else {
                l
            }
        })
        .collect();
    let images = images
        .iter()
        .map(|img| {
            if h.p_noise > 0.0 && r.random::<f64>() < h.p_noise {
                let w = h.w_noise;
                img.map(|v| {
                    let n: f64 = StandardNormal.sample(r);
                    (1.0 - w) * v + w * n.clamp(0.0, 1.0)
                })
            } else {
                img.clone()
            }
        })
        .collect();
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn thresholds(d: Option<f64>, g: Option<f64>) -> HeuristicParams {
        HeuristicParams {
            d_threshold: d,
            g_threshold: g,
            ..HeuristicParams::default()
        }
    }

    #[test]
    fn threshold_examples() {
        let h = thresholds(Some(0.5), Some(0.3));
        assert!(should_update_critic(GanLoss::Lsgan, 0.6, 0.9, &h, 0).unwrap());
        assert!(!should_update_critic(GanLoss::Lsgan, 0.1, 0.9, &h, 0).unwrap());
        assert!(should_update_critic(GanLoss::Lsgan, 0.1, 0.2, &h, 0).unwrap());
        assert!(matches!(
            should_update_critic(GanLoss::Hinge, 0.1, 0.2, &h, 0),
            Err(Error::ThresholdUnsupported("hinge"))
        ));
    }

    #[test]
    fn schedule_without_thresholds() {
        let h = HeuristicParams {
            n_d: 5,
            ..HeuristicParams::default()
        };
        let critic = (0..60)
            .filter(|&s| should_update_critic(GanLoss::WganGp, 0.0, 0.0, &h, s).unwrap())
            .count();
        assert_eq!(critic, 50);
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let h = HeuristicParams {
            p_flip: 0.0,
            p_noise: 0.0,
            ..HeuristicParams::default()
        };
        let imgs = vec![Grid::filled(8, 0.3), Grid::filled(8, 0.7)];
        let labels = vec![Label::Real, Label::Fake];
        let (i2, l2) = perturb_critic_inputs(&imgs, &labels, &h, &mut rng::stream(0, &[]));
        assert_eq!((i2, l2), (imgs, labels));
    }
}
