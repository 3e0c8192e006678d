//! Independent re-derivations used as test oracles.

use turbo_twin::config::{GanLoss, LossTerm, ReconKind, TurboConfig};
use turbo_twin::critics::{CriticSet, ScoreNet};
use turbo_twin::data::Batch;
use turbo_twin::eval::{ssim_loss_with_grad, ssim_metric, SsimParams};
use turbo_twin::grid::{Grid, PathOutputs};
use turbo_twin::nn::Grads;
use turbo_twin::objectives::{
    critic_fake_part, critic_real_part, generator_part, gradient_penalty,
    gradient_penalty_with_grads, reconstruction_loss_with_grad, term_loss, turbo_loss,
};
use turbo_twin::tensor::Tensor;

use super::{random_binary, random_grid, tiny_image_critic};

pub fn l1(a: &Grid, b: &Grid) -> f64 {
    let d = a.data();
    d.iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / d.len() as f64
}

pub fn bce(p: &Grid, t: &Grid) -> f64 {
    let n = p.data().len() as f64;
    -p.data()
        .iter()
        .zip(t.data())
        .map(|(&q, &v)| if v == 1.0 { q.ln() } else { (1.0 - q).ln() })
        .sum::<f64>()
        / n
}

/// Least-squares generator loss computed straight from the critic's score maps.
pub fn lsgan_generator(critics: &CriticSet, term: LossTerm, images: &[&Grid]) -> f64 {
    let c = critics.get(term).unwrap();
    let mut s = Vec::new();
    for g in images {
        s.extend_from_slice(c.scores(&g.to_tensor()).unwrap().data());
    }
    0.5 * s.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / s.len() as f64
}

/// Random outputs in (0,1) for a batch of `n` samples of side `m`.
pub fn random_case(n: usize, m: usize, seed: u64, paired: bool) -> (Vec<PathOutputs>, Batch) {
    let mut outs = Vec::new();
    let mut templates = Vec::new();
    let mut prints = Vec::new();
    for i in 0..n as u64 {
        let s = seed * 100 + i * 10;
        outs.push(PathOutputs {
            t_tilde: random_grid(m, s + 1, 0.02, 0.98),
            y_hat: random_grid(m, s + 2, 0.02, 0.98),
            y_tilde: random_grid(m, s + 3, 0.02, 0.98),
            t_hat: random_grid(m, s + 4, 0.02, 0.98),
        });
        templates.push(random_binary(m, s + 5));
        prints.push(random_grid(m, s + 6, 0.0, 1.0));
    }
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    (
        outs,
        Batch {
            template_ids: ids.clone(),
            print_ids: ids,
            templates,
            prints,
            paired,
        },
    )
}

/// CycleGAN objective: two adversarial terms on the translations plus two cycle losses.
pub fn hand_cyclegan(
    outs: &[PathOutputs],
    b: &Batch,
    critics: &CriticSet,
    cfg: &TurboConfig,
) -> f64 {
    let t_tilde: Vec<&Grid> = outs.iter().map(|o| &o.t_tilde).collect();
    let y_tilde: Vec<&Grid> = outs.iter().map(|o| &o.y_tilde).collect();
    let n = outs.len() as f64;
    let cyc_y = outs
        .iter()
        .zip(&b.prints)
        .map(|(o, y)| l1(&o.y_hat, y))
        .sum::<f64>()
        / n;
    let cyc_t = outs
        .iter()
        .zip(&b.templates)
        .map(|(o, t)| bce(&o.t_hat, t))
        .sum::<f64>()
        / n;
    let w = cfg.objective.adversarial_weight;
    w * lsgan_generator(critics, LossTerm::DTTilde, &t_tilde)
        + cfg.alpha * cyc_y
        + w * lsgan_generator(critics, LossTerm::DYTilde, &y_tilde)
        + cfg.beta * cyc_t
}

/// Adversarial autoencoder: a prior-matching term on the code plus reconstruction.
pub fn hand_aae(outs: &[PathOutputs], b: &Batch, critics: &CriticSet, cfg: &TurboConfig) -> f64 {
    let t_tilde: Vec<&Grid> = outs.iter().map(|o| &o.t_tilde).collect();
    let n = outs.len() as f64;
    let rec = outs
        .iter()
        .zip(&b.prints)
        .map(|(o, y)| l1(&o.y_hat, y))
        .sum::<f64>()
        / n;
    cfg.objective.adversarial_weight * lsgan_generator(critics, LossTerm::DTTilde, &t_tilde)
        + cfg.alpha * rec
}

/// Largest `|a - n| / (max(|a|, |n|) + floor)` over all coordinates.
pub fn max_rel(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs().max(n.abs()) + floor))
        .fold(0.0, f64::max)
}

const H: f64 = 1e-6;
const FLOOR: f64 = 1e-6;

fn fd_vec(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut p = x.to_vec();
            p[k] += H;
            let mut m = x.to_vec();
            m[k] -= H;
            (f(&p) - f(&m)) / (2.0 * H)
        })
        .collect()
}

fn fd_grid(x: &Grid, f: impl Fn(&Grid) -> f64) -> Vec<f64> {
    fd_vec(x.data(), |v| f(&Grid::new(x.side(), v.to_vec()).unwrap()))
}

/// Scores away from the hinge kinks at ±1.
fn scores(seed: u64) -> Vec<f64> {
    random_grid(4, seed, -3.0, 3.0)
        .data()
        .iter()
        .map(|&v| {
            if (v.abs() - 1.0).abs() < 1e-2 {
                v + 0.05
            } else {
                v
            }
        })
        .collect()
}

/// Worst relative error of the critic/generator parts as functions of the scores.
pub fn score_part_error(kind: GanLoss) -> f64 {
    let s = scores(7);
    type Part = fn(GanLoss, &[f64]) -> turbo_twin::Result<(f64, Vec<f64>)>;
    let parts: [Part; 3] = [critic_real_part, critic_fake_part, generator_part];
    parts
        .iter()
        .map(|part| {
            let (_, g) = part(kind, &s).unwrap();
            let n = fd_vec(&s, |v| part(kind, v).unwrap().0);
            max_rel(&g, &n, FLOOR)
        })
        .fold(0.0, f64::max)
}

/// Worst relative error of an adversarial generator term's gradient w.r.t. the generated image.
pub fn adversarial_image_error(cfg: &TurboConfig, term: LossTerm) -> f64 {
    let critics = CriticSet::for_config(cfg).unwrap();
    let (outs, batch) = random_case(
        2,
        8,
        3,
        cfg.pairing != turbo_twin::config::Pairing::Unpaired,
    );
    let (_, grads) = term_loss(term, &outs, &batch, &critics, cfg).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..outs.len() {
        let img = turbo_twin::objectives::derived_image(&outs[i], term.derived()).clone();
        let num = fd_grid(&img, |g| {
            let mut o = outs.clone();
            match term.derived() {
                turbo_twin::config::Derived::TTilde => o[i].t_tilde = g.clone(),
                turbo_twin::config::Derived::YHat => o[i].y_hat = g.clone(),
                turbo_twin::config::Derived::YTilde => o[i].y_tilde = g.clone(),
                turbo_twin::config::Derived::THat => o[i].t_hat = g.clone(),
            }
            term_loss(term, &o, &batch, &critics, cfg).unwrap().0
        });
        worst = worst.max(max_rel(grads[i].data(), &num, FLOOR));
    }
    worst
}

/// Worst relative error of the penalty's critic-parameter gradient.
pub fn penalty_param_error(cfg: &TurboConfig, term: LossTerm) -> f64 {
    let critics = CriticSet::for_config(cfg).unwrap();
    let critic = critics.get(term).unwrap().clone();
    let real: Vec<Tensor> = (0..2)
        .map(|k| random_grid(8, 40 + k, 0.0, 1.0).to_tensor())
        .collect();
    let fake: Vec<Tensor> = (0..2)
        .map(|k| random_grid(8, 50 + k, 0.0, 1.0).to_tensor())
        .collect();
    let lambda = cfg.objective.lambda_gp;
    let (_, g) = gradient_penalty_with_grads(&critic, &real, &fake, lambda, 11).unwrap();
    let mut worst: f64 = 0.0;
    for (e_idx, entry) in critic.params().entries().iter().enumerate() {
        let num = fd_vec(&entry.value, |v| {
            let mut c = critic.clone();
            c.params_mut().entries_mut()[e_idx].value = v.to_vec();
            gradient_penalty(&c, &real, &fake, lambda, 11).unwrap()
        });
        worst = worst.max(max_rel(&g.0[e_idx], &num, FLOOR));
    }
    worst
}

pub fn recon_error(kind: ReconKind) -> f64 {
    let p = [
        random_grid(8, 21, 0.05, 0.95),
        random_grid(8, 22, 0.05, 0.95),
    ];
    let t = [random_binary(8, 23), random_binary(8, 24)];
    let pr: Vec<&Grid> = p.iter().collect();
    let tr: Vec<&Grid> = t.iter().collect();
    let (_, g) = reconstruction_loss_with_grad(kind, &pr, &tr).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let num = fd_grid(&p[i], |x| {
            let mut q = pr.clone();
            q[i] = x;
            reconstruction_loss_with_grad(kind, &q, &tr).unwrap().0
        });
        worst = worst.max(max_rel(g[i].data(), &num, FLOOR));
    }
    worst
}

pub fn ssim_loss_error() -> f64 {
    let p = SsimParams {
        window: 5,
        ..SsimParams::default()
    };
    let target = random_grid(8, 31, 0.0, 1.0);
    let pred = random_grid(8, 32, 0.0, 1.0);
    let (_, g) = ssim_loss_with_grad(&target, &pred, &p).unwrap();
    let num = fd_grid(&pred, |x| 1.0 - ssim_metric(&target, x, &p).unwrap());
    max_rel(g.data(), &num, FLOOR)
}

/// `D(x) = a·x + b` over a flattened single-channel image.
#[derive(Clone, Debug)]
pub struct LinearCritic {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearCritic {
    /// Weight vector of norm `w` on an `m x m` input.
    pub fn with_norm(m: usize, w: f64) -> Self {
        let raw: Vec<f64> = (0..m * m).map(|k| ((k * 37 % 11) as f64) - 4.5).collect();
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        LinearCritic {
            a: raw.iter().map(|v| v * w / n).collect(),
            b: 0.3,
        }
    }
}

impl ScoreNet for LinearCritic {
    type Cache = Tensor;

    fn score_forward(&self, x: &Tensor) -> turbo_twin::Result<(Tensor, Tensor)> {
        let s = self.a.iter().zip(x.data()).map(|(a, v)| a * v).sum::<f64>() + self.b;
        Ok((Tensor::from_vec(1, 1, 1, vec![s]), x.clone()))
    }

    fn score_backward(&self, x: &Tensor, g: &Tensor, grads: &mut Grads) -> Tensor {
        let gs = g.data()[0];
        for (d, v) in grads.0[0].iter_mut().zip(x.data()) {
            *d += gs * v;
        }
        grads.0[1][0] += gs;
        let (c, h, w) = x.shape();
        Tensor::from_vec(c, h, w, self.a.iter().map(|a| gs * a).collect())
    }

    fn zero_grads(&self) -> Grads {
        Grads(vec![vec![0.0; self.a.len()], vec![0.0]])
    }
}

/// Penalty of a linear critic with weight norm `w`; the oracle is `λ(w − 1)²`.
pub fn linear_penalty(w: f64, lambda: f64) -> f64 {
    let c = LinearCritic::with_norm(8, w);
    let real: Vec<Tensor> = (0..3)
        .map(|k| random_grid(8, 60 + k, 0.0, 1.0).to_tensor())
        .collect();
    let fake: Vec<Tensor> = (0..3)
        .map(|k| random_grid(8, 70 + k, 0.0, 1.0).to_tensor())
        .collect();
    gradient_penalty(&c, &real, &fake, lambda, 5).unwrap()
}

pub fn brute_hamming(t: &Grid, est: &Grid) -> f64 {
    let m = t.side();
    let mut wrong = 0usize;
    for i in 0..m {
        for j in 0..m {
            let b = if est.get(i, j) >= 0.5 { 1.0 } else { 0.0 };
            if b != t.get(i, j) {
                wrong += 1;
            }
        }
    }
    wrong as f64 / (m * m) as f64
}

pub fn brute_mse(a: &Grid, b: &Grid) -> f64 {
    let m = a.side();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            let d = a.get(i, j) - b.get(i, j);
            s += d * d;
        }
    }
    s / (m * m) as f64
}

/// Relative gaps between the cyclegan and aae presets and their hand-assembled objectives.
pub fn reduction_gap(alpha: f64, beta: f64, adv: f64, seed: u64) -> (f64, f64) {
    let mut cyc = tiny_image_critic("cyclegan", seed);
    cyc.alpha = alpha;
    cyc.beta = beta;
    cyc.objective.adversarial_weight = adv;
    let critics = CriticSet::for_config(&cyc).unwrap();
    let (outs, batch) = random_case(2, 8, seed, false);
    let got = turbo_loss(&outs, &batch, &critics, &cyc)
        .unwrap()
        .grand_total;
    let want = hand_cyclegan(&outs, &batch, &critics, &cyc);

    let mut aae = tiny_image_critic("aae", seed);
    aae.alpha = alpha;
    aae.objective.adversarial_weight = adv;
    let critics = CriticSet::for_config(&aae).unwrap();
    let got_aae = turbo_loss(&outs, &batch, &critics, &aae)
        .unwrap()
        .grand_total;
    let want_aae = hand_aae(&outs, &batch, &critics, &aae);
    (
        (got - want).abs() / want.abs(),
        (got_aae - want_aae).abs() / want_aae.abs(),
    )
}
