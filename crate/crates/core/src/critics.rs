//! Discriminators realizing the adversarial terms.
//!
//! `Patch` is the 70x70-receptive-field construction: three stride-2 4x4
//! convolutions, one stride-1 4x4 convolution and a stride-1 4x4 head,
//! producing one raw score per overlapping patch. `Image` is a residual
//! network with average-pool downsampling stages, a global average pool and
//! a linear head producing a single scalar per input.

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use crate::config::{CriticKind, CriticParams, GanLoss, LossTerm, TurboConfig};
use crate::error::{Error, Result};
use crate::nn::layers::{backward_seq, forward_seq};
use crate::nn::{
    Activation, Cache, Container, Conv2d, Dense, Grads, Initializer, InstanceNorm, Layer, PadMode,
    ParamStore,
};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

const PATCH_KERNEL: usize = 4;
const LEAK: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticSpec {
    pub kind: CriticKind,
    pub in_channels: usize,
    pub base_width: usize,
    pub image_stages: usize,
    pub instance_norm: bool,
}

impl CriticSpec {
    /// Normalization is dropped for the gradient-penalty loss, which needs per-sample gradients.
    pub fn new(kind: CriticKind, params: &CriticParams, loss: GanLoss) -> Self {
        CriticSpec {
            kind,
            in_channels: 1,
            base_width: params.base_width,
            image_stages: params.image_stages,
            instance_norm: loss != GanLoss::WganGp,
        }
    }
}

/// Anything that maps an image to a score map and can be differentiated.
pub trait ScoreNet {
    type Cache;

    fn score_forward(&self, x: &Tensor) -> Result<(Tensor, Self::Cache)>;

    /// Gradient w.r.t. the input; parameter gradients are accumulated into `grads`.
    fn score_backward(&self, cache: &Self::Cache, g: &Tensor, grads: &mut Grads) -> Tensor;

    fn zero_grads(&self) -> Grads;
}

#[derive(Clone, Debug)]
pub struct Critic {
    spec: CriticSpec,
    seed: u64,
    store: ParamStore,
    layers: Vec<Layer>,
}

/// Output side of the patch critic for an input side `n`, if the input is large enough.
pub fn patch_output_side(n: usize) -> Option<usize> {
    let mut s = n;
    for stride in [2, 2, 2, 1, 1] {
        let padded = s + 2;
        if padded < PATCH_KERNEL {
            return None;
        }
        s = (padded - PATCH_KERNEL) / stride + 1;
    }
    (s >= 1).then_some(s)
}

fn build_patch(spec: &CriticSpec, store: &mut ParamStore, init: &mut Initializer) -> Vec<Layer> {
    let w = spec.base_width;
    let plan = [
        (spec.in_channels, w, 2, false),
        (w, 2 * w, 2, true),
        (2 * w, 4 * w, 2, true),
        (4 * w, 8 * w, 1, true),
    ];
    let mut layers = Vec::new();
    for (i, (cin, cout, stride, norm)) in plan.into_iter().enumerate() {
        layers.push(Layer::Conv(Conv2d::new(
            store,
            init,
            &format!("conv{i}"),
            cin,
            cout,
            PATCH_KERNEL,
            stride,
            1,
            PadMode::Zero,
        )));
        if norm && spec.instance_norm {
            layers.push(Layer::Norm(InstanceNorm { channels: cout }));
        }
        layers.push(Layer::Act(Activation::LeakyRelu(LEAK)));
    }
    layers.push(Layer::Conv(Conv2d::new(
        store,
        init,
        "head",
        8 * w,
        1,
        PATCH_KERNEL,
        1,
        1,
        PadMode::Zero,
    )));
    layers
}

fn build_image(spec: &CriticSpec, store: &mut ParamStore, init: &mut Initializer) -> Vec<Layer> {
    let w = spec.base_width;
    let mut layers = vec![Layer::Conv(Conv2d::new_scaled(
        store,
        init,
        "stem",
        spec.in_channels,
        w,
        3,
        1,
        1,
    ))];
    let mut ch = w;
    for s in 0..spec.image_stages {
        let cout = w << (s + 1).min(3);
        let mut main = vec![
            Layer::Act(Activation::LeakyRelu(LEAK)),
            Layer::Conv(Conv2d::new_scaled(
                store,
                init,
                &format!("stage{s}.conv0"),
                ch,
                cout,
                3,
                1,
                1,
            )),
        ];
        if spec.instance_norm {
            main.push(Layer::Norm(InstanceNorm { channels: cout }));
        }
        main.push(Layer::Act(Activation::LeakyRelu(LEAK)));
        main.push(Layer::Conv(Conv2d::new_scaled(
            store,
            init,
            &format!("stage{s}.conv1"),
            cout,
            cout,
            3,
            1,
            1,
        )));
        main.push(Layer::AvgPool2);
        let skip = vec![
            Layer::Conv(Conv2d::new_scaled(
                store,
                init,
                &format!("stage{s}.skip"),
                ch,
                cout,
                1,
                1,
                0,
            )),
            Layer::AvgPool2,
        ];
        layers.push(Layer::Branch { main, skip });
        ch = cout;
    }
    layers.push(Layer::Act(Activation::LeakyRelu(LEAK)));
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Dense(Dense::new(store, init, "head", ch, 1)));
    layers
}

pub fn build_critic(spec: &CriticSpec, seed: u64) -> Result<Critic> {
    if spec.in_channels == 0 || spec.base_width == 0 {
        return Err(Error::InvalidSpec(
            "critic channel counts must be positive".into(),
        ));
    }
    if spec.kind == CriticKind::Image && !(1..=10).contains(&spec.image_stages) {
        return Err(Error::InvalidSpec(format!(
            "image stages {}",
            spec.image_stages
        )));
    }
    let mut store = ParamStore::new();
    let layers = match spec.kind {
        CriticKind::Patch => build_patch(spec, &mut store, &mut Initializer::new(seed, 0.02)),
        CriticKind::Image => build_image(spec, &mut store, &mut Initializer::new(seed, 0.02)),
    };
    Ok(Critic {
        spec: spec.clone(),
        seed,
        store,
        layers,
    })
}

impl Critic {
    pub fn spec(&self) -> &CriticSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.shape();
        if c != self.spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "critic expects {} channels, got {c}",
                self.spec.in_channels
            )));
        }
        match self.spec.kind {
            CriticKind::Patch => {
                for side in [h, w] {
                    if patch_output_side(side).is_none() {
                        return Err(Error::ShapeError { side, factor: 8 });
                    }
                }
            }
            CriticKind::Image => {
                let f = 1 << self.spec.image_stages;
                for side in [h, w] {
                    if side == 0 || side % f != 0 {
                        return Err(Error::ShapeError { side, factor: f });
                    }
                }
            }
        }
        Ok(())
    }

    /// Raw scores: an `h' x w'` map for the patch critic, a `1 x 1` value for the image critic.
    pub fn scores(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.score_forward(x)?.0)
    }

    pub fn to_container(&self, prefix: &str) -> Container {
        let mut c = Container::new(serde_json::json!({
            "kind": "critic",
            "critic_spec": self.spec,
            "seed": self.seed,
        }));
        c.tensors = self.store.to_named(prefix);
        c
    }
}

impl ScoreNet for Critic {
    type Cache = Vec<Cache>;

    fn score_forward(&self, x: &Tensor) -> Result<(Tensor, Vec<Cache>)> {
        self.check_input(x)?;
        Ok(forward_seq(&self.layers, &self.store, x))
    }

    fn score_backward(&self, cache: &Vec<Cache>, g: &Tensor, grads: &mut Grads) -> Tensor {
        backward_seq(&self.layers, &self.store, cache, g, grads)
    }

    fn zero_grads(&self) -> Grads {
        self.store.zeros_like()
    }
}

/// One critic per enabled adversarial term, each seeded independently.
#[derive(Clone, Debug)]
pub struct CriticSet {
    critics: BTreeMap<LossTerm, Critic>,
}

impl CriticSet {
    pub fn for_config(cfg: &TurboConfig) -> Result<Self> {
        let spec = CriticSpec::new(cfg.critic_kind, &cfg.critic, cfg.gan_loss);
        let critics = cfg
            .adversarial_terms()
            .map(|t| {
                let seed = derive_seed(cfg.seed, &["critic", t.key()]);
                build_critic(&spec, seed).map(|c| (t, c))
            })
            .collect::<Result<_>>()?;
        Ok(CriticSet { critics })
    }

    pub fn from_map(critics: BTreeMap<LossTerm, Critic>) -> Self {
        CriticSet { critics }
    }

    pub fn get(&self, t: LossTerm) -> Option<&Critic> {
        self.critics.get(&t)
    }

    pub fn get_mut(&mut self, t: LossTerm) -> Option<&mut Critic> {
        self.critics.get_mut(&t)
    }

    pub fn terms(&self) -> impl Iterator<Item = LossTerm> + '_ {
        self.critics.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LossTerm, &Critic)> {
        self.critics.iter().map(|(t, c)| (*t, c))
    }

    pub fn len(&self) -> usize {
        self.critics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.critics.is_empty()
    }
}
