//! Encoder `y -> t` and decoder `t -> y` image-to-image networks.
//!
//! Two families are provided. `CnnResnetCnn` is a 7x7 stem, two stride-2
//! downsampling convolutions, a stack of residual blocks and two transposed
//! convolutions back to full resolution. `Unet` is a symmetric
//! encoder/decoder with a skip concatenation at every intermediate
//! resolution. Both use instance normalization and end in an activation
//! mapping onto [0, 1].

use serde::{Deserialize, Serialize};

use crate::config::{Backbone, NetworkParams, OutputActivation};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nn::layers::{backward_seq, forward_seq};
use crate::nn::{
    Activation, Cache, Container, Conv2d, ConvTranspose2d, Grads, Initializer, InstanceNorm, Layer,
    PadMode, ParamStore,
};
use crate::tensor::Tensor;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: Backbone,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub residual_blocks: usize,
    pub unet_depth: usize,
    pub output_activation: OutputActivation,
}

impl NetworkSpec {
    pub fn new(kind: Backbone, params: &NetworkParams) -> Self {
        NetworkSpec {
            kind,
            in_channels: 1,
            out_channels: 1,
            base_width: params.base_width,
            residual_blocks: params.residual_blocks,
            unet_depth: params.unet_depth,
            output_activation: params.output_activation,
        }
    }

    /// Factor the input side must be divisible by.
    pub fn downsampling_factor(&self) -> usize {
        match self.kind {
            Backbone::CnnResnetCnn => 4,
            Backbone::Unet => 1 << self.unet_depth,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return Err(Error::InvalidSpec("channel counts must be positive".into()));
        }
        if self.kind == Backbone::Unet && !(1..=12).contains(&self.unet_depth) {
            return Err(Error::InvalidSpec(format!(
                "unet depth {}",
                self.unet_depth
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Unet {
    down: Vec<Vec<Layer>>,
    /// `up[0]` consumes the bottleneck; the last entry produces the output.
    up: Vec<Vec<Layer>>,
}

#[derive(Clone, Debug)]
enum Body {
    Resnet(Vec<Layer>),
    Unet(Unet),
}

/// Cache of one training-mode forward pass.
#[derive(Clone, Debug)]
pub enum TranslatorCache {
    Resnet(Vec<Cache>),
    Unet {
        down: Vec<Vec<Cache>>,
        up: Vec<Vec<Cache>>,
        /// Channel count of the decoder half of each concatenated input.
        split: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub struct Translator {
    spec: NetworkSpec,
    seed: u64,
    store: ParamStore,
    body: Body,
}

fn output_layer(a: OutputActivation) -> Layer {
    Layer::Act(match a {
        OutputActivation::Sigmoid => Activation::Sigmoid,
        OutputActivation::TanhRescaled => Activation::TanhRescaled,
    })
}

fn build_resnet(spec: &NetworkSpec, store: &mut ParamStore, init: &mut Initializer) -> Vec<Layer> {
    let w = spec.base_width;
    let mut layers = vec![
        Layer::Conv(Conv2d::new(
            store,
            init,
            "stem",
            spec.in_channels,
            w,
            7,
            1,
            3,
            PadMode::Reflect,
        )),
        Layer::Norm(InstanceNorm { channels: w }),
        Layer::Act(Activation::Relu),
    ];
    let mut ch = w;
    for i in 0..2 {
        layers.push(Layer::Conv(Conv2d::new(
            store,
            init,
            &format!("down{i}"),
            ch,
            ch * 2,
            3,
            2,
            1,
            PadMode::Zero,
        )));
        ch *= 2;
        layers.push(Layer::Norm(InstanceNorm { channels: ch }));
        layers.push(Layer::Act(Activation::Relu));
    }
    for b in 0..spec.residual_blocks {
        layers.push(Layer::Residual(vec![
            Layer::Conv(Conv2d::new(
                store,
                init,
                &format!("res{b}.conv0"),
                ch,
                ch,
                3,
                1,
                1,
                PadMode::Reflect,
            )),
            Layer::Norm(InstanceNorm { channels: ch }),
            Layer::Act(Activation::Relu),
            Layer::Conv(Conv2d::new(
                store,
                init,
                &format!("res{b}.conv1"),
                ch,
                ch,
                3,
                1,
                1,
                PadMode::Reflect,
            )),
            Layer::Norm(InstanceNorm { channels: ch }),
        ]));
    }
    for i in 0..2 {
        layers.push(Layer::ConvT(ConvTranspose2d::new(
            store,
            init,
            &format!("up{i}"),
            ch,
            ch / 2,
            3,
            2,
            1,
            1,
        )));
        ch /= 2;
        layers.push(Layer::Norm(InstanceNorm { channels: ch }));
        layers.push(Layer::Act(Activation::Relu));
    }
    layers.push(Layer::Conv(Conv2d::new(
        store,
        init,
        "head",
        ch,
        spec.out_channels,
        7,
        1,
        3,
        PadMode::Reflect,
    )));
    layers.push(output_layer(spec.output_activation));
    layers
}

fn build_unet(spec: &NetworkSpec, store: &mut ParamStore, init: &mut Initializer) -> Unet {
    let depth = spec.unet_depth;
    let width = |level: usize| spec.base_width << (level - 1).min(3);
    let mut down = Vec::with_capacity(depth);
    for level in 1..=depth {
        let cin = if level == 1 {
            spec.in_channels
        } else {
            width(level - 1)
        };
        let mut block = vec![Layer::Conv(Conv2d::new(
            store,
            init,
            &format!("down{level}"),
            cin,
            width(level),
            4,
            2,
            1,
            PadMode::Zero,
        ))];
        if level > 1 && level < depth {
            block.push(Layer::Norm(InstanceNorm {
                channels: width(level),
            }));
        }
        block.push(Layer::Act(Activation::LeakyRelu(0.2)));
        down.push(block);
    }
    let mut up = Vec::with_capacity(depth);
    for level in (1..=depth).rev() {
        let cin = if level == depth {
            width(level)
        } else {
            2 * width(level)
        };
        let cout = if level == 1 {
            spec.out_channels
        } else {
            width(level - 1)
        };
        let mut block = vec![
            Layer::Act(Activation::Relu),
            Layer::ConvT(ConvTranspose2d::new(
                store,
                init,
                &format!("up{level}"),
                cin,
                cout,
                4,
                2,
                1,
                0,
            )),
        ];
        if level > 1 {
            block.push(Layer::Norm(InstanceNorm { channels: cout }));
        } else {
            block.push(output_layer(spec.output_activation));
        }
        up.push(block);
    }
    Unet { down, up }
}

/// Builds an encoder or decoder with deterministic initialization from `seed`.
pub fn build_translator(spec: &NetworkSpec, seed: u64) -> Result<Translator> {
    spec.validate()?;
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed, INIT_STD);
    let body = match spec.kind {
        Backbone::CnnResnetCnn => Body::Resnet(build_resnet(spec, &mut store, &mut init)),
        Backbone::Unet => Body::Unet(build_unet(spec, &mut store, &mut init)),
    };
    Ok(Translator {
        spec: spec.clone(),
        seed,
        store,
        body,
    })
}

/// Number of residual blocks in a `CnnResnetCnn` network.
pub fn count_residual_blocks(net: &Translator) -> Result<usize> {
    match &net.body {
        Body::Resnet(layers) => Ok(layers
            .iter()
            .filter(|l| matches!(l, Layer::Residual(_)))
            .count()),
        Body::Unet(_) => Err(Error::WrongKind {
            expected: "cnn_resnet_cnn",
        }),
    }
}

impl Translator {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn zero_grads(&self) -> Grads {
        self.store.zeros_like()
    }

    /// Number of resolution levels joined by a skip concatenation (UNet only).
    pub fn skip_levels(&self) -> usize {
        match &self.body {
            Body::Resnet(_) => 0,
            Body::Unet(u) => u.down.len() - 1,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.shape();
        if c != self.spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        let f = self.spec.downsampling_factor();
        for side in [h, w] {
            if side == 0 || side % f != 0 {
                return Err(Error::ShapeError { side, factor: f });
            }
        }
        if self.spec.kind == Backbone::CnnResnetCnn && h.min(w) < 8 {
            return Err(Error::ShapeError {
                side: h.min(w),
                factor: 8,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Grid) -> Result<Grid> {
        let (y, _) = self.forward_train(&x.to_tensor())?;
        Grid::from_tensor(&y)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, TranslatorCache)> {
        self.check_input(x)?;
        let p = &self.store;
        Ok(match &self.body {
            Body::Resnet(layers) => {
                let (y, c) = forward_seq(layers, p, x);
                (y, TranslatorCache::Resnet(c))
            }
            Body::Unet(u) => {
                let mut enc = vec![x.clone()];
                let mut down = Vec::with_capacity(u.down.len());
                for block in &u.down {
                    let (y, c) = forward_seq(block, p, enc.last().unwrap());
                    enc.push(y);
                    down.push(c);
                }
                let depth = u.down.len();
                let mut cur = enc[depth].clone();
                let mut up = Vec::with_capacity(depth);
                let mut split = Vec::with_capacity(depth);
                for (k, block) in u.up.iter().enumerate() {
                    let level = depth - k;
                    let inp = if level == depth {
                        split.push(cur.channels());
                        cur
                    } else {
                        split.push(cur.channels());
                        cur.concat_channels(&enc[level])
                    };
                    let (y, c) = forward_seq(block, p, &inp);
                    up.push(c);
                    cur = y;
                }
                (cur, TranslatorCache::Unet { down, up, split })
            }
        })
    }

    /// Back-propagates `g` (gradient w.r.t. the output), accumulating into `grads`.
    pub fn backward(&self, cache: &TranslatorCache, g: &Tensor, grads: &mut Grads) -> Tensor {
        let p = &self.store;
        match (&self.body, cache) {
            (Body::Resnet(layers), TranslatorCache::Resnet(c)) => {
                backward_seq(layers, p, c, g, grads)
            }
            (Body::Unet(u), TranslatorCache::Unet { down, up, split }) => {
                let depth = u.down.len();
                let mut genc: Vec<Option<Tensor>> = vec![None; depth + 1];
                let mut cur = g.clone();
                for k in (0..depth).rev() {
                    let level = depth - k;
                    let ginp = backward_seq(&u.up[k], p, &up[k], &cur, grads);
                    if level == depth {
                        cur = ginp;
                    } else {
                        let (gd, gs) = ginp.split_channels(split[k]);
                        accumulate(&mut genc[level], gs);
                        cur = gd;
                    }
                }
                accumulate(&mut genc[depth], cur);
                for level in (1..=depth).rev() {
                    let gl = genc[level].take().expect("gradient reaches every level");
                    let gprev = backward_seq(&u.down[level - 1], p, &down[level - 1], &gl, grads);
                    accumulate(&mut genc[level - 1], gprev);
                }
                genc[0].take().unwrap()
            }
            _ => panic!("cache does not belong to this network"),
        }
    }

    pub fn to_container(&self, prefix: &str) -> Container {
        let mut c = Container::new(serde_json::json!({
            "kind": "translator",
            "network_spec": self.spec,
            "seed": self.seed,
        }));
        c.tensors = self.store.to_named(prefix);
        c
    }

    pub fn load_params(&mut self, prefix: &str, c: &Container) -> Result<()> {
        self.store
            .load_named(prefix, &c.tensors)
            .map_err(Error::Checkpoint)
    }

    /// Rebuilds a network from a standalone checkpoint written by [`Translator::to_container`].
    pub fn from_container(c: &Container) -> Result<Translator> {
        let spec: NetworkSpec = serde_json::from_value(c.meta["network_spec"].clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let seed = c.meta["seed"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("missing seed".into()))?;
        let mut net = build_translator(&spec, seed)?;
        net.load_params("", c)?;
        Ok(net)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: Backbone) -> NetworkSpec {
        NetworkSpec {
            kind,
            in_channels: 1,
            out_channels: 1,
            base_width: 4,
            residual_blocks: 2,
            unet_depth: 2,
            output_activation: OutputActivation::Sigmoid,
        }
    }

    fn input(side: usize) -> Grid {
        Grid::from_fn(side, |i, j| (((i * 31 + j * 17) % 11) as f64) / 10.0)
    }

    #[test]
    fn default_resnet_has_nine_blocks() {
        let spec = NetworkSpec::new(
            Backbone::CnnResnetCnn,
            &NetworkParams {
                base_width: 2,
                ..Default::default()
            },
        );
        let net = build_translator(&spec, 0).unwrap();
        assert_eq!(count_residual_blocks(&net).unwrap(), 9);
        let mut s3 = spec.clone();
        s3.residual_blocks = 3;
        assert_eq!(
            count_residual_blocks(&build_translator(&s3, 0).unwrap()).unwrap(),
            3
        );
        let unet = build_translator(&tiny(Backbone::Unet), 0).unwrap();
        assert!(matches!(
            count_residual_blocks(&unet),
            Err(Error::WrongKind { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        let net = build_translator(&tiny(Backbone::CnnResnetCnn), 0).unwrap();
        assert!(matches!(
            net.forward(&input(10)),
            Err(Error::ShapeError {
                side: 10,
                factor: 4
            })
        ));
        let mut spec = tiny(Backbone::Unet);
        spec.unet_depth = 3;
        let unet = build_translator(&spec, 0).unwrap();
        assert!(matches!(
            unet.forward(&input(12)),
            Err(Error::ShapeError { factor: 8, .. })
        ));
        let mut bad = tiny(Backbone::Unet);
        bad.base_width = 0;
        assert!(matches!(
            build_translator(&bad, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn unet_skips_every_intermediate_level() {
        let mut spec = tiny(Backbone::Unet);
        spec.unet_depth = 4;
        let net = build_translator(&spec, 1).unwrap();
        assert_eq!(net.skip_levels(), 3);
        let y = net.forward(&input(16)).unwrap();
        assert_eq!(y.side(), 16);
    }

    #[test]
    fn tanh_rescaled_output_in_unit_range() {
        let mut spec = tiny(Backbone::CnnResnetCnn);
        spec.output_activation = OutputActivation::TanhRescaled;
        let y = build_translator(&spec, 2)
            .unwrap()
            .forward(&input(8))
            .unwrap();
        assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = build_translator(&tiny(Backbone::Unet), 5).unwrap();
        let c = Container::from_bytes(&net.to_container("").to_bytes()).unwrap();
        let back = Translator::from_container(&c).unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.spec(), net.spec());
    }
}
