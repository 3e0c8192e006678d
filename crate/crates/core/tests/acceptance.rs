//! Prints one PASS/FAIL line per acceptance criterion and exits nonzero if any fail.
//!
//! The training criteria run six 64x64 models on one core; set `ACCEPTANCE_STEPS`
//! to change the per-run budget (default 1000, the criterion allows up to 2000).

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::oracles::*;
use common::{random_binary, random_grid, synthetic, tiny, tiny_image_critic};
use turbo_twin::backbones::Translator;
use turbo_twin::config::{
    reduction_preset, validate_config, ConfigIssue, CriticKind, GanLoss, HeuristicParams, LossTerm,
    ReconKind,
};
use turbo_twin::data::{
    corner_anchors, split_train_test, ChannelParams, Dataset, DatasetManifest, ManifestEntry, Split,
};
use turbo_twin::eval::{
    frechet_distance, hamming_metric, mse_metric, ssim_metric, FeatureStats, SsimParams,
    BINARIZE_THRESHOLD,
};
use turbo_twin::grid::{Authenticity, DigitalTemplate, Grid};
use turbo_twin::trainer::{
    perturb_critic_inputs, should_update_critic, ImagePool, Label, LossLog, TrainState,
};

type Outcome = (bool, String);

fn reductions() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let f = |k: u64| ((i * 7919 + k * 104729) % 1000) as f64 / 1000.0;
        let (c, a) = reduction_gap(4.0 * f(1), 4.0 * f(2), 0.01 + 2.0 * f(3), i);
        worst = worst.max(c).max(a);
    }
    (
        worst < 1e-6,
        format!("max relative gap {worst:.2e} over 50 random cases (tol 1e-6)"),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut errs: Vec<(String, f64)> = Vec::new();
    for kind in [GanLoss::Lsgan, GanLoss::Hinge, GanLoss::WganGp] {
        errs.push((format!("{kind:?} scores"), score_part_error(kind)));
        let mut cfg = tiny_image_critic("turbo_paired", 2);
        cfg.gan_loss = kind;
        for term in [LossTerm::DTTilde, LossTerm::DYHat] {
            errs.push((
                format!("{kind:?} {term} image"),
                adversarial_image_error(&cfg, term),
            ));
        }
    }
    let mut cfg = tiny_image_critic("turbo_paired", 4);
    cfg.gan_loss = GanLoss::WganGp;
    errs.push((
        "penalty".into(),
        penalty_param_error(&cfg, LossTerm::DTTilde),
    ));
    for kind in [ReconKind::L1, ReconKind::L2, ReconKind::Bce] {
        errs.push((format!("{kind:?}"), recon_error(kind)));
    }
    errs.push(("ssim loss".into(), ssim_loss_error()));
    let secs = start.elapsed().as_secs_f64();
    let (name, worst) =
        errs.iter()
            .cloned()
            .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    (
        worst < 1e-3 && secs < 60.0,
        format!(
            "{} checks, worst {worst:.2e} ({name}), {secs:.1}s",
            errs.len()
        ),
    )
}

fn penalty_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for w in [0.5, 1.0, 2.0] {
        for lambda in [0.0, 10.0] {
            worst = worst.max((linear_penalty(w, lambda) - lambda * (w - 1.0) * (w - 1.0)).abs());
        }
    }
    (
        worst < 1e-6,
        format!("max |penalty - λ(w-1)²| = {worst:.2e}"),
    )
}

fn metric_oracles() -> Outcome {
    let stats = |mu: f64, var: f64| FeatureStats {
        mean: vec![mu],
        cov: vec![var],
        n: 2,
    };
    let mut fid_err: f64 = 0.0;
    for (m1, v1, m2, v2) in [
        (0.0, 1.0, 1.0, 4.0),
        (-2.0, 0.25, 3.0, 9.0),
        (0.5, 2.0, 0.5, 2.0),
    ] {
        let got = frechet_distance(&stats(m1, v1), &stats(m2, v2)).unwrap();
        let want = (m1 - m2) * (m1 - m2) + (v1.sqrt() - v2.sqrt()).powi(2);
        fid_err = fid_err.max((got - want).abs());
    }
    let fid_self = frechet_distance(&stats(0.3, 1.7), &stats(0.3, 1.7)).unwrap();

    let p = SsimParams::default();
    let a = random_grid(16, 1, 0.0, 1.0);
    let ssim_self = (ssim_metric(&a, &a, &p).unwrap() - 1.0).abs();
    let (c1, c2) = (0.2, 0.7);
    let k1 = (p.k1 * p.dynamic_range).powi(2);
    let want = (2.0 * c1 * c2 + k1) / (c1 * c1 + c2 * c2 + k1);
    let ssim_const =
        (ssim_metric(&Grid::filled(16, c1), &Grid::filled(16, c2), &p).unwrap() - want).abs();

    let mut exact = true;
    for seed in 0..20 {
        let t = random_binary(16, seed);
        let est = random_grid(16, seed + 100, 0.0, 1.0);
        let h = hamming_metric(&DigitalTemplate::new("t", t.clone()).unwrap(), &est, 0.5).unwrap();
        exact &= h == brute_hamming(&t, &est);
        exact &= mse_metric(std::slice::from_ref(&t), std::slice::from_ref(&est)).unwrap()
            == brute_mse(&t, &est);
    }
    (
        fid_err < 1e-8 && fid_self == 0.0 && ssim_self < 1e-6 && ssim_const < 1e-6 && exact,
        format!(
            "fid closed form {fid_err:.1e}, fid(self) {fid_self}, |ssim(a,a)-1| {ssim_self:.1e}, \
             constant ssim {ssim_const:.1e}, hamming/mse exact: {exact}"
        ),
    )
}

fn held_out_hamming(enc: &Translator, test: &Dataset) -> f64 {
    let total: f64 = test
        .samples()
        .iter()
        .map(|s| {
            let t = DigitalTemplate::new(s.id.clone(), s.template.clone()).unwrap();
            hamming_metric(&t, &enc.forward(&s.print).unwrap(), BINARIZE_THRESHOLD).unwrap()
        })
        .sum();
    total / test.len() as f64
}

struct Trained {
    baseline: f64,
    hamming: f64,
    secs: f64,
}

fn train_small(preset: &str, seed: u64, steps: u64, train: &Dataset, test: &Dataset) -> Trained {
    let mut cfg = reduction_preset(preset).unwrap();
    cfg.seed = seed;
    cfg.network.base_width = 8;
    cfg.network.residual_blocks = 3;
    cfg.critic.base_width = 8;
    cfg.optimizer.batch_size = 1;
    cfg.optimizer.learning_rate = 2e-3;
    cfg.objective.adversarial_weight = 0.01;
    let cfg = validate_config(cfg).unwrap();
    let start = Instant::now();
    let mut s = TrainState::init(&cfg).unwrap();
    let baseline = held_out_hamming(&s.encoder, test);
    s.run(train, steps, |_, _| Ok(())).unwrap();
    Trained {
        baseline,
        hamming: held_out_hamming(&s.encoder, test),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn smoke_and_ordering(steps: u64) -> (Outcome, Outcome) {
    let channel = ChannelParams {
        blur_sigma: 1.0,
        noise_sigma: 0.05,
        ..ChannelParams::default()
    };
    let train = synthetic(256, 64, 1, &channel);
    let test = synthetic(32, 64, 2, &channel);
    let seeds = [0u64, 1, 2];
    let paired: Vec<Trained> = seeds
        .iter()
        .map(|&s| train_small("turbo_paired", s, steps, &train, &test))
        .collect();
    let unpaired: Vec<Trained> = seeds
        .iter()
        .map(|&s| train_small("turbo_unpaired", s, steps, &train, &test))
        .collect();

    let p0 = &paired[0];
    let smoke = (
        p0.hamming < 0.25 && p0.hamming <= 0.5 * p0.baseline && p0.secs <= 1800.0,
        format!(
            "turbo_paired seed 0: hamming {:.4} after {steps} steps (untrained {:.4}, limit min(0.25, {:.4})), {:.0}s; \
             seeds 1-2: {:.4}, {:.4}",
            p0.hamming,
            p0.baseline,
            0.5 * p0.baseline,
            p0.secs,
            paired[1].hamming,
            paired[2].hamming
        ),
    );

    let wins = paired
        .iter()
        .zip(&unpaired)
        .filter(|(p, u)| p.hamming <= u.hamming)
        .count();
    let detail: Vec<String> = paired
        .iter()
        .zip(&unpaired)
        .zip(seeds)
        .map(|((p, u), s)| {
            format!(
                "seed {s}: {:.4} vs {:.4} ({:.2}x)",
                p.hamming,
                u.hamming,
                u.hamming / p.hamming
            )
        })
        .collect();
    let ordering = (
        wins >= 2,
        format!(
            "paired <= unpaired on {wins}/3 seeds; {}",
            detail.join("; ")
        ),
    );
    (smoke, ordering)
}

fn heuristics() -> Outcome {
    // pool: fill with distinct values, then count how often a fresh image is swapped out
    let mut pool = ImagePool::new(50, 7);
    let one = |v: f64| Grid::new(1, vec![v]).unwrap();
    for i in 0..50 {
        pool.query(&[one(i as f64)]);
    }
    let n = 10_000;
    let swapped = (0..n)
        .filter(|i| {
            let fresh = one(1e6 + *i as f64);
            pool.query(std::slice::from_ref(&fresh))[0] != fresh
        })
        .count();
    let freq = swapped as f64 / n as f64;

    let mut cfg = tiny("turbo_paired", 0);
    cfg.heuristics.n_d = 3;
    let mut s = TrainState::init(&cfg).unwrap();
    s.run(
        &synthetic(8, 32, 1, &ChannelParams::default()),
        4,
        |_, _| Ok(()),
    )
    .unwrap();
    let alternation =
        s.generator_updates == 4 && s.critic_updates == 3 * 4 * s.critics.len() as u64;

    let h = HeuristicParams {
        d_threshold: Some(0.5),
        g_threshold: Some(0.2),
        ..HeuristicParams::default()
    };
    let table = [
        (0.6, 0.3, true),
        (0.4, 0.1, true),
        (0.6, 0.1, true),
        (0.4, 0.3, false),
        (0.5, 0.2, false),
    ];
    let gating = table
        .iter()
        .all(|&(d, g, want)| should_update_critic(GanLoss::Lsgan, d, g, &h, 0).unwrap() == want);

    let flip = HeuristicParams {
        p_flip: 1.0,
        p_noise: 0.0,
        ..HeuristicParams::default()
    };
    let labels = [
        Label::Real,
        Label::Fake,
        Label::Real,
        Label::Fake,
        Label::Fake,
    ];
    let imgs: Vec<Grid> = (0..5).map(|i| random_grid(4, i, 0.0, 1.0)).collect();
    let (out_imgs, out_labels) = perturb_critic_inputs(
        &imgs,
        &labels,
        &flip,
        &mut turbo_twin::rng::stream(1, &["t"]),
    );
    let inverted = out_imgs == imgs
        && out_labels
            .iter()
            .zip(&labels)
            .all(|(a, b)| *a == b.flipped());

    (
        (freq - 0.5).abs() <= 0.02 && alternation && gating && inverted,
        format!(
            "pool swap frequency {freq:.4}; n_D=3 alternation exact: {alternation}; \
             threshold table exact: {gating}; p_flip=1 inverts: {inverted}"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = synthetic(8, 32, 1, &ChannelParams::default());
    let cfg = tiny("turbo_paired", 3);
    let log = |state: &mut TrainState, until: u64, name: &str, append: bool| {
        let p = dir.path().join(name);
        let mut l = LossLog::open(&p, &state.cfg, append).unwrap();
        state.run(&d, until, |_, r| l.append(r)).unwrap();
        p
    };
    let a = log(&mut TrainState::init(&cfg).unwrap(), 6, "a.csv", false);
    let b = log(&mut TrainState::init(&cfg).unwrap(), 6, "b.csv", false);
    let same = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let mut s = TrainState::init(&cfg).unwrap();
    log(&mut s, 3, "c.csv", false);
    let ckpt = dir.path().join("mid.ckpt");
    s.save(&ckpt).unwrap();
    let mut resumed = TrainState::load(&ckpt).unwrap();
    let c = log(&mut resumed, 6, "c.csv", true);
    let resume = std::fs::read(&a).unwrap() == std::fs::read(&c).unwrap();
    (
        same && resume,
        format!("identical runs byte-identical: {same}; resume at step 3 reproduces 6-step log: {resume}"),
    )
}

fn validation_gate() -> Outcome {
    let mut wgan_patch = reduction_preset("turbo_paired").unwrap();
    wgan_patch.gan_loss = GanLoss::WganGp;
    wgan_patch.critic_kind = CriticKind::Patch;
    let combo = matches!(validate_config(wgan_patch), Err(v) if matches!(v.as_slice(), [ConfigIssue::InvalidCombination(_)]));

    let mut unpaired = reduction_preset("turbo_paired").unwrap();
    unpaired.pairing = turbo_twin::config::Pairing::Unpaired;
    let pairing = match validate_config(unpaired) {
        Err(issues) => {
            issues.len() == 2
                && issues
                    .iter()
                    .all(|i| matches!(i, ConfigIssue::InconsistentPairing(_)))
        }
        Ok(_) => false,
    };
    (
        combo && pairing,
        format!("wgan_gp+patch rejected: {combo}; unpaired with paired terms rejected: {pairing}"),
    )
}

fn data_protocol() -> Outcome {
    let entries: Vec<ManifestEntry> = (0..720)
        .map(|i| ManifestEntry {
            id: format!("{i:05}"),
            template: format!("templates/{i:05}.png").into(),
            printed: Some(format!("printed/{i:05}.png").into()),
            authenticity: Authenticity::Original,
            split: Split::Unassigned,
        })
        .collect();
    let m =
        DatasetManifest::new("unused", entries, turbo_twin::config::Pairing::Paired, 1).unwrap();
    let (train, test) = split_train_test(&m, 0.8).unwrap();
    let (train2, test2) = split_train_test(&m, 0.8).unwrap();
    let split = train.len() == 576 && test.len() == 144 && train == train2 && test == test2;

    // template pixel (i, j) carries a unique code and the print is a fixed function of it,
    // so aligned crops are recognized by content
    let side = 684;
    let t = Grid::from_fn(side, |i, j| ((i * side + j) % 2) as f64);
    let y = Grid::from_fn(side, |i, j| (i * side + j) as f64 / (side * side) as f64);
    let sample = turbo_twin::data::Sample {
        id: "s".into(),
        template: t.clone(),
        print: y.clone(),
        authenticity: Authenticity::Synthetic,
    };
    let crops = Dataset::new(vec![sample]).crop_four(256).unwrap();
    let anchors = corner_anchors(side, 256).unwrap();
    let mut aligned = crops.len() == 4;
    for (c, &(i0, j0)) in crops.samples().iter().zip(&anchors) {
        aligned &= c.template == t.window(i0, j0, 256) && c.print == y.window(i0, j0, 256);
    }
    let disjoint = anchors.iter().enumerate().all(|(k, a)| {
        anchors[k + 1..]
            .iter()
            .all(|b| a.0.abs_diff(b.0) >= 256 || a.1.abs_diff(b.1) >= 256)
    });
    (
        split && aligned && disjoint,
        format!(
            "720 -> {}/{} deterministic: {split}; 684 -> four 256 crops at {anchors:?}, disjoint: {disjoint}, aligned: {aligned}",
            train.len(),
            test.len()
        ),
    )
}

fn main() -> ExitCode {
    let steps: u64 = std::env::var("ACCEPTANCE_STEPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1000);
    let mut results: Vec<(usize, Outcome)> = vec![
        (1, reductions()),
        (2, gradients()),
        (3, penalty_oracle()),
        (4, metric_oracles()),
    ];
    let (smoke, ordering) = smoke_and_ordering(steps);
    results.push((5, smoke));
    results.push((6, ordering));
    results.push((7, heuristics()));
    results.push((8, determinism()));
    results.push((9, validation_gate()));
    results.push((10, data_protocol()));
    let mut failed = 0;
    for (n, (pass, detail)) in &results {
        println!(
            "criterion {n}: {} - {detail}",
            if *pass { "PASS" } else { "FAIL" }
        );
        failed += !pass as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
