//! The alternating critic / generator optimization loop.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbones::{build_translator, NetworkSpec, Translator, TranslatorCache};
use crate::config::{Domain, GanLoss, LossTerm, Path as LossPath, TurboConfig};
use crate::critics::{CriticSet, ScoreNet};
use crate::data::{make_batches, Batch, Dataset};
use crate::error::{Error, Result};
use crate::grid::{Grid, PathOutputs};
use crate::nn::{Adam, AdamParams, Container, Grads, ParamStore};
use crate::objectives::{
    critic_fake_part, critic_real_part, derived_image, gradient_penalty_with_grads,
    path_loss_with_grads, LossBreakdown, OutputGrads,
};
use crate::rng;
use crate::tensor::Tensor;
use crate::trainer::heuristics::{perturb_critic_inputs, should_update_critic, Label};
use crate::trainer::pool::ImagePool;

const STATE_KIND: &str = "train_state";
const STATE_SCHEMA: u64 = 1;

/// Everything that evolves during training. Randomness is keyed by `(seed, step)`,
/// so this struct alone determines the rest of a run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub cfg: TurboConfig,
    pub step: u64,
    /// Maps prints to templates.
    pub encoder: Translator,
    /// Maps templates to prints.
    pub decoder: Translator,
    pub critics: CriticSet,
    pub encoder_opt: Adam,
    pub decoder_opt: Adam,
    pub critic_opts: BTreeMap<LossTerm, Adam>,
    pub pools: BTreeMap<LossTerm, ImagePool>,
    pub last_d_loss: BTreeMap<LossTerm, f64>,
    pub last_g_loss: BTreeMap<LossTerm, f64>,
    pub critic_updates: u64,
    pub generator_updates: u64,
}

/// One row of the loss log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub losses: LossBreakdown,
    /// Loss of each critic updated during this step (last update wins).
    pub critic_losses: BTreeMap<LossTerm, f64>,
    pub critic_updates: u32,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub checkpoint_every: Option<u64>,
    pub checkpoint_dir: Option<PathBuf>,
}

struct SampleCaches {
    enc_y: TranslatorCache,
    dec_t_tilde: TranslatorCache,
    dec_t: TranslatorCache,
    enc_y_tilde: TranslatorCache,
}

fn adam_params(cfg: &TurboConfig) -> AdamParams {
    AdamParams {
        learning_rate: cfg.optimizer.learning_rate,
        beta1: cfg.optimizer.momentum_pair[0],
        beta2: cfg.optimizer.momentum_pair[1],
        eps: 1e-8,
    }
}

fn grids_to_tensors(g: &[Grid]) -> Vec<Tensor> {
    g.iter().map(Grid::to_tensor).collect()
}

impl TrainState {
    pub fn init(cfg: &TurboConfig) -> Result<TrainState> {
        let spec = NetworkSpec::new(cfg.backbone, &cfg.network);
        let encoder = build_translator(&spec, rng::derive_seed(cfg.seed, &["encoder"]))?;
        let decoder = build_translator(&spec, rng::derive_seed(cfg.seed, &["decoder"]))?;
        let critics = CriticSet::for_config(cfg)?;
        let h = cfg.heuristics.effective();
        let ap = adam_params(cfg);
        Ok(TrainState {
            encoder_opt: Adam::new(ap, encoder.params()),
            decoder_opt: Adam::new(ap, decoder.params()),
            critic_opts: critics
                .iter()
                .map(|(t, c)| (t, Adam::new(ap, c.params())))
                .collect(),
            pools: critics
                .terms()
                .map(|t| (t, ImagePool::new(h.pool_size, seed_of_pool(cfg, t))))
                .collect(),
            cfg: cfg.clone(),
            step: 0,
            encoder,
            decoder,
            critics,
            last_d_loss: BTreeMap::new(),
            last_g_loss: BTreeMap::new(),
            critic_updates: 0,
            generator_updates: 0,
        })
    }

    /// Number of batches consumed per step; slot `k` of step `s` uses batch `s * this + k`.
    fn batches_per_step(&self) -> u64 {
        self.cfg.heuristics.n_d.max(1) as u64
    }

    fn forward_sample(&self, t: &Grid, y: &Grid) -> Result<(PathOutputs, SampleCaches)> {
        let (t_tilde, enc_y) = self.encoder.forward_train(&y.to_tensor())?;
        let (y_hat, dec_t_tilde) = self.decoder.forward_train(&t_tilde)?;
        let (y_tilde, dec_t) = self.decoder.forward_train(&t.to_tensor())?;
        let (t_hat, enc_y_tilde) = self.encoder.forward_train(&y_tilde)?;
        Ok((
            PathOutputs {
                t_tilde: Grid::from_tensor(&t_tilde)?,
                y_hat: Grid::from_tensor(&y_hat)?,
                y_tilde: Grid::from_tensor(&y_tilde)?,
                t_hat: Grid::from_tensor(&t_hat)?,
            },
            SampleCaches {
                enc_y,
                dec_t_tilde,
                dec_t,
                enc_y_tilde,
            },
        ))
    }

    fn forward_batch(&self, batch: &Batch) -> Result<(Vec<PathOutputs>, Vec<SampleCaches>)> {
        let mut outs = Vec::with_capacity(batch.len());
        let mut caches = Vec::with_capacity(batch.len());
        for (t, y) in batch.templates.iter().zip(&batch.prints) {
            let (o, c) = self.forward_sample(t, y)?;
            outs.push(o);
            caches.push(c);
        }
        Ok((outs, caches))
    }

    /// Updates the critic of `term` once; returns its loss.
    fn critic_update(
        &mut self,
        term: LossTerm,
        slot: u64,
        batch: &Batch,
        outputs: &[PathOutputs],
    ) -> Result<f64> {
        let h = self.cfg.heuristics.effective();
        let real: Vec<Grid> = match term.domain() {
            Domain::Template => batch.templates.clone(),
            Domain::Print => batch.prints.clone(),
        };
        let fresh: Vec<Grid> = outputs
            .iter()
            .map(|o| derived_image(o, term.derived()).clone())
            .collect();
        let fake = self
            .pools
            .get_mut(&term)
            .expect("pool per critic")
            .query(&fresh);

        let mut images = real.clone();
        images.extend(fake.iter().cloned());
        let labels: Vec<Label> = real
            .iter()
            .map(|_| Label::Real)
            .chain(fake.iter().map(|_| Label::Fake))
            .collect();
        let slot_s = slot.to_string();
        let mut r = rng::stream(self.cfg.seed, &["perturb", &slot_s, term.key()]);
        let (images, labels) = perturb_critic_inputs(&images, &labels, &h, &mut r);

        let critic = self.critics.get(term).expect("critic per term");
        let mut runs = Vec::with_capacity(images.len());
        for img in &images {
            runs.push(critic.score_forward(&img.to_tensor())?);
        }
        let gather = |want: Label| -> Vec<f64> {
            runs.iter()
                .zip(&labels)
                .filter(|(_, &l)| l == want)
                .flat_map(|((s, _), _)| s.data().iter().copied())
                .collect()
        };
        let (real_scores, fake_scores) = (gather(Label::Real), gather(Label::Fake));
        let kind = self.cfg.gan_loss;
        let mut loss = 0.0;
        let mut d_real = Vec::new();
        let mut d_fake = Vec::new();
        if !real_scores.is_empty() {
            let (v, g) = critic_real_part(kind, &real_scores)?;
            loss += v;
            d_real = g;
        }
        if !fake_scores.is_empty() {
            let (v, g) = critic_fake_part(kind, &fake_scores)?;
            loss += v;
            d_fake = g;
        }
        let mut grads = critic.zero_grads();
        let (mut ir, mut if_) = (0, 0);
        for ((s, cache), &l) in runs.iter().zip(&labels) {
            let (src, off) = match l {
                Label::Real => (&d_real, &mut ir),
                Label::Fake => (&d_fake, &mut if_),
            };
            let (c, hh, w) = s.shape();
            let g = Tensor::from_vec(c, hh, w, src[*off..*off + s.len()].to_vec());
            *off += s.len();
            critic.score_backward(cache, &g, &mut grads);
        }
        if kind == GanLoss::WganGp {
            let seed = rng::derive_seed(self.cfg.seed, &["gp", &slot_s, term.key()]);
            let (gp, gg) = gradient_penalty_with_grads(
                critic,
                &grids_to_tensors(&real),
                &grids_to_tensors(&fake),
                self.cfg.objective.lambda_gp,
                seed,
            )?;
            loss += gp;
            grads.add_assign(&gg);
        }
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                term: format!("critic {}", term.key()),
            });
        }
        let critic = self.critics.get_mut(term).expect("critic per term");
        self.critic_opts
            .get_mut(&term)
            .expect("optimizer per critic")
            .update(critic.params_mut(), &grads);
        self.critic_updates += 1;
        Ok(loss)
    }

    fn generator_grads(&self, caches: &[SampleCaches], g: &OutputGrads) -> (Grads, Grads) {
        let mut ge = self.encoder.zero_grads();
        let mut gd = self.decoder.zero_grads();
        for (i, c) in caches.iter().enumerate() {
            // reverse path: t -> D -> ỹ -> E -> t̂
            let extra = self
                .encoder
                .backward(&c.enc_y_tilde, &g.t_hat[i].to_tensor(), &mut ge);
            let mut gy = g.y_tilde[i].to_tensor();
            gy.add_assign(&extra);
            self.decoder.backward(&c.dec_t, &gy, &mut gd);
            // direct path: y -> E -> t̃ -> D -> ŷ
            let extra = self
                .decoder
                .backward(&c.dec_t_tilde, &g.y_hat[i].to_tensor(), &mut gd);
            let mut gt = g.t_tilde[i].to_tensor();
            gt.add_assign(&extra);
            self.encoder.backward(&c.enc_y, &gt, &mut ge);
        }
        (ge, gd)
    }

    /// Runs one full step on the batches drawn for it. A failed step leaves the state untouched.
    pub fn train_step(&mut self, draw: &dyn Fn(u64) -> Batch) -> Result<StepRecord> {
        let before = self.clone();
        let res = self.try_step(draw);
        if res.is_err() {
            *self = before;
        }
        res
    }

    fn try_step(&mut self, draw: &dyn Fn(u64) -> Batch) -> Result<StepRecord> {
        let h = self.cfg.heuristics.effective();
        let per = self.batches_per_step();
        let base = self.step * per;
        let batch = draw(base);
        if batch.is_empty() {
            return Err(Error::DataExhausted);
        }
        let (outputs, caches) = self.forward_batch(&batch)?;

        let mut record = StepRecord {
            step: self.step,
            losses: LossBreakdown::default(),
            critic_losses: BTreeMap::new(),
            critic_updates: 0,
        };
        let terms: Vec<LossTerm> = self.critics.terms().collect();
        let cycle = h.n_d as u64 + 1;
        for k in 0..h.n_d as u64 {
            let slot = self.step * cycle + k;
            let mut due = Vec::new();
            for &t in &terms {
                let d = self.last_d_loss.get(&t).copied().unwrap_or(f64::INFINITY);
                let g = self.last_g_loss.get(&t).copied().unwrap_or(f64::INFINITY);
                if should_update_critic(self.cfg.gan_loss, d, g, &h, slot)? {
                    due.push(t);
                }
            }
            if due.is_empty() {
                continue;
            }
            let extra;
            let (b, outs) = if k == 0 {
                (&batch, &outputs)
            } else {
                let b = draw(base + k);
                let o = self.forward_batch(&b)?.0;
                extra = (b, o);
                (&extra.0, &extra.1)
            };
            for t in due {
                let loss = self.critic_update(t, slot, b, outs)?;
                self.last_d_loss.insert(t, loss);
                record.critic_losses.insert(t, loss);
                record.critic_updates += 1;
            }
        }

        let (direct, g_direct) =
            path_loss_with_grads(LossPath::Direct, &outputs, &batch, &self.critics, &self.cfg)?;
        let (reverse, g_reverse) = path_loss_with_grads(
            LossPath::Reverse,
            &outputs,
            &batch,
            &self.critics,
            &self.cfg,
        )?;
        let losses = LossBreakdown::combine(&direct, &reverse);
        if let Some(term) = losses.all_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                term,
            });
        }
        let g = match (self.cfg.objective.alternate_paths, self.step % 2) {
            (true, 0) => g_direct,
            (true, _) => g_reverse,
            (false, _) => {
                let mut g = g_direct;
                g.add_assign(&g_reverse);
                g
            }
        };
        let (ge, gd) = self.generator_grads(&caches, &g);
        if !ge.all_finite() || !gd.all_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                term: "generator gradient".into(),
            });
        }
        self.encoder_opt.update(self.encoder.params_mut(), &ge);
        self.decoder_opt.update(self.decoder.params_mut(), &gd);
        self.generator_updates += 1;
        for (&t, &v) in &losses.terms {
            if t.is_adversarial() {
                self.last_g_loss.insert(t, v);
            }
        }
        record.losses = losses;
        self.step += 1;
        Ok(record)
    }

    /// Trains until `self.step == until`, calling `on_step` after every step.
    pub fn run(
        &mut self,
        data: &Dataset,
        until: u64,
        mut on_step: impl FnMut(&TrainState, &StepRecord) -> Result<()>,
    ) -> Result<()> {
        if self.step >= until {
            return Ok(());
        }
        if data.is_empty() {
            return Err(Error::DataExhausted);
        }
        let stream = make_batches(
            data,
            self.cfg.optimizer.batch_size,
            self.cfg.pairing,
            self.cfg.hybrid_paired_fraction,
            rng::derive_seed(self.cfg.seed, &["batches"]),
        )?;
        let draw = |i: u64| stream.batch(i);
        while self.step < until {
            let rec = self.train_step(&draw)?;
            on_step(self, &rec)?;
        }
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(serde_json::json!({
            "kind": STATE_KIND,
            "schema": STATE_SCHEMA,
            "step": self.step,
            "config": self.cfg,
            "config_hash": self.cfg.content_hash(),
            "encoder_adam_step": self.encoder_opt.step,
            "decoder_adam_step": self.decoder_opt.step,
            "critic_adam_steps": self.critic_opts.iter().map(|(t, a)| (t.key(), a.step)).collect::<BTreeMap<_, _>>(),
            "pool_queries": self.pools.iter().map(|(t, p)| (t.key(), p.queries())).collect::<BTreeMap<_, _>>(),
            "pool_lengths": self.pools.iter().map(|(t, p)| (t.key(), p.len())).collect::<BTreeMap<_, _>>(),
            "last_d_loss": self.last_d_loss.iter().map(|(t, v)| (t.key(), v)).collect::<BTreeMap<_, _>>(),
            "last_g_loss": self.last_g_loss.iter().map(|(t, v)| (t.key(), v)).collect::<BTreeMap<_, _>>(),
            "critic_updates": self.critic_updates,
            "generator_updates": self.generator_updates,
        }));
        let t = &mut c.tensors;
        t.extend(self.encoder.params().to_named("encoder/"));
        t.extend(self.decoder.params().to_named("decoder/"));
        put_moments(t, "adam/encoder/", self.encoder.params(), &self.encoder_opt);
        put_moments(t, "adam/decoder/", self.decoder.params(), &self.decoder_opt);
        for (term, critic) in self.critics.iter() {
            t.extend(critic.params().to_named(&format!("critic/{}/", term.key())));
            put_moments(
                t,
                &format!("adam/critic/{}/", term.key()),
                critic.params(),
                &self.critic_opts[&term],
            );
        }
        for (term, pool) in &self.pools {
            for (i, g) in pool.buffer().iter().enumerate() {
                t.insert(
                    format!("pool/{}/{i:06}", term.key()),
                    (vec![g.side(), g.side()], g.data().to_vec()),
                );
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<TrainState> {
        let bad = |what: &str| Error::Checkpoint(format!("missing or invalid {what}"));
        if c.meta["kind"] != STATE_KIND {
            return Err(bad("kind"));
        }
        if c.meta["schema"].as_u64() != Some(STATE_SCHEMA) {
            return Err(Error::Checkpoint(format!(
                "unsupported schema {}",
                c.meta["schema"]
            )));
        }
        let cfg: TurboConfig = serde_json::from_value(c.meta["config"].clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut s = TrainState::init(&cfg)?;
        s.step = c.meta["step"].as_u64().ok_or_else(|| bad("step"))?;
        s.critic_updates = c.meta["critic_updates"]
            .as_u64()
            .ok_or_else(|| bad("critic_updates"))?;
        s.generator_updates = c.meta["generator_updates"]
            .as_u64()
            .ok_or_else(|| bad("generator_updates"))?;
        let ck = |e: String| Error::Checkpoint(e);
        s.encoder
            .params_mut()
            .load_named("encoder/", &c.tensors)
            .map_err(ck)?;
        s.decoder
            .params_mut()
            .load_named("decoder/", &c.tensors)
            .map_err(ck)?;
        get_moments(
            &c.tensors,
            "adam/encoder/",
            s.encoder.params(),
            &mut s.encoder_opt,
        )?;
        get_moments(
            &c.tensors,
            "adam/decoder/",
            s.decoder.params(),
            &mut s.decoder_opt,
        )?;
        s.encoder_opt.step = c.meta["encoder_adam_step"]
            .as_u64()
            .ok_or_else(|| bad("encoder_adam_step"))?;
        s.decoder_opt.step = c.meta["decoder_adam_step"]
            .as_u64()
            .ok_or_else(|| bad("decoder_adam_step"))?;
        let terms: Vec<LossTerm> = s.critics.terms().collect();
        for term in terms {
            let key = term.key();
            let critic = s.critics.get_mut(term).expect("critic per term");
            critic
                .params_mut()
                .load_named(&format!("critic/{key}/"), &c.tensors)
                .map_err(ck)?;
            let opt = s.critic_opts.get_mut(&term).expect("optimizer per critic");
            get_moments(
                &c.tensors,
                &format!("adam/critic/{key}/"),
                critic.params(),
                opt,
            )?;
            opt.step = c.meta["critic_adam_steps"][key]
                .as_u64()
                .ok_or_else(|| bad("critic_adam_steps"))?;
            let len = c.meta["pool_lengths"][key]
                .as_u64()
                .ok_or_else(|| bad("pool_lengths"))? as usize;
            let queries = c.meta["pool_queries"][key]
                .as_u64()
                .ok_or_else(|| bad("pool_queries"))?;
            let mut buffer = Vec::with_capacity(len);
            for i in 0..len {
                let (shape, v) = c
                    .tensors
                    .get(&format!("pool/{key}/{i:06}"))
                    .ok_or_else(|| bad("pool image"))?;
                buffer.push(Grid::new(shape[0], v.clone())?);
            }
            let old = &s.pools[&term];
            if len > old.capacity() {
                return Err(bad("pool length"));
            }
            let pool =
                ImagePool::restore(old.capacity(), seed_of_pool(&cfg, term), buffer, queries);
            s.pools.insert(term, pool);
            for (map, field) in [
                (&mut s.last_d_loss, "last_d_loss"),
                (&mut s.last_g_loss, "last_g_loss"),
            ] {
                if let Some(v) = c.meta[field][key].as_f64() {
                    map.insert(term, v);
                }
            }
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<TrainState> {
        TrainState::from_container(&Container::load(path)?)
    }

    /// Parameter hashes of the generator pair and of every critic, for detach checks.
    pub fn fingerprints(&self) -> (String, String) {
        let g = format!(
            "{}{}",
            self.encoder.params().fingerprint(),
            self.decoder.params().fingerprint()
        );
        let c: String = self
            .critics
            .iter()
            .map(|(_, c)| c.params().fingerprint())
            .collect();
        (g, c)
    }
}

fn seed_of_pool(cfg: &TurboConfig, t: LossTerm) -> u64 {
    rng::derive_seed(cfg.seed, &["pool", t.key()])
}

fn put_moments(t: &mut crate::nn::TensorMap, prefix: &str, store: &ParamStore, opt: &Adam) {
    for ((e, m), v) in store.entries().iter().zip(&opt.m.0).zip(&opt.v.0) {
        t.insert(
            format!("{prefix}m/{}", e.name),
            (e.shape.clone(), m.clone()),
        );
        t.insert(
            format!("{prefix}v/{}", e.name),
            (e.shape.clone(), v.clone()),
        );
    }
}

fn get_moments(
    t: &crate::nn::TensorMap,
    prefix: &str,
    store: &ParamStore,
    opt: &mut Adam,
) -> Result<()> {
    for (i, e) in store.entries().iter().enumerate() {
        for (which, dst) in [("m", &mut opt.m.0[i]), ("v", &mut opt.v.0[i])] {
            let key = format!("{prefix}{which}/{}", e.name);
            let (_, v) = t
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if v.len() != dst.len() {
                return Err(Error::Checkpoint(format!("size mismatch for {key}")));
            }
            dst.copy_from_slice(v);
        }
    }
    Ok(())
}

/// Trains a fresh state for `steps` steps and returns it with the loss log.
pub fn train(
    cfg: &TurboConfig,
    data: &Dataset,
    steps: u64,
) -> Result<(TrainState, Vec<StepRecord>)> {
    train_with_options(cfg, data, steps, &TrainOptions::default())
}

pub fn train_with_options(
    cfg: &TurboConfig,
    data: &Dataset,
    steps: u64,
    opts: &TrainOptions,
) -> Result<(TrainState, Vec<StepRecord>)> {
    let mut state = TrainState::init(cfg)?;
    let mut log = Vec::with_capacity(steps as usize);
    state.run(data, steps, |s, rec| {
        log.push(rec.clone());
        checkpoint_if_due(s, opts)
    })?;
    Ok((state, log))
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:08}.ckpt"))
}

/// Writes `checkpoints/step_XXXXXXXX.ckpt` and `latest.ckpt` when the interval divides the step.
pub fn checkpoint_if_due(s: &TrainState, opts: &TrainOptions) -> Result<()> {
    if let (Some(every), Some(dir)) = (opts.checkpoint_every, &opts.checkpoint_dir) {
        if every > 0 && s.step.is_multiple_of(every) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let bytes = s.to_container().to_bytes();
            for p in [checkpoint_path(dir, s.step), dir.join("latest.ckpt")] {
                std::fs::write(&p, &bytes).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    Ok(())
}
