use proptest::prelude::*;

use turbo_twin::config::{
    reduction_preset, validate_config, Backbone, CriticKind, GanLoss, LossTerm, Pairing, Preset,
    TurboConfig,
};

fn arb_config() -> impl Strategy<Value = TurboConfig> {
    (
        0usize..6,
        proptest::collection::vec(any::<bool>(), 8),
        (0usize..3, 0usize..2, 0usize..3, 0usize..2),
        (-1.0f64..4.0, -1.0f64..4.0, -0.5f64..1.5),
        (0u32..4, proptest::option::of(-1.0f64..2.0)),
    )
        .prop_map(
            |(p, mask, (g, c, pair, b), (alpha, beta, frac), (n_d, thr))| {
                let mut cfg = reduction_preset(Preset::ALL[p].name()).unwrap();
                cfg.enabled_terms = LossTerm::ALL
                    .into_iter()
                    .zip(mask)
                    .filter(|(_, on)| *on)
                    .map(|(t, _)| t)
                    .collect();
                cfg.gan_loss = [GanLoss::Lsgan, GanLoss::Hinge, GanLoss::WganGp][g];
                cfg.critic_kind = [CriticKind::Patch, CriticKind::Image][c];
                cfg.pairing = [Pairing::Paired, Pairing::Unpaired, Pairing::Hybrid][pair];
                cfg.backbone = [Backbone::CnnResnetCnn, Backbone::Unet][b];
                cfg.alpha = alpha;
                cfg.beta = beta;
                cfg.hybrid_paired_fraction = frac;
                cfg.heuristics.n_d = n_d;
                cfg.heuristics.d_threshold = thr;
                cfg
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn validation_is_idempotent(cfg in arb_config()) {
        match validate_config(cfg.clone()) {
            Ok(v) => {
                prop_assert_eq!(&v, &cfg);
                prop_assert_eq!(validate_config(v.clone()), Ok(v));
            }
            Err(issues) => {
                prop_assert!(!issues.is_empty());
                prop_assert_eq!(validate_config(cfg), Err(issues));
            }
        }
    }

    #[test]
    fn unpaired_configs_never_keep_paired_terms(cfg in arb_config()) {
        if let Ok(v) = validate_config(cfg) {
            if v.pairing == Pairing::Unpaired {
                prop_assert!(!v.is_enabled(LossTerm::TRecon) && !v.is_enabled(LossTerm::YReconReverse));
            }
        }
    }

    #[test]
    fn configs_round_trip_through_toml(cfg in arb_config()) {
        let text = toml::to_string(&cfg).unwrap();
        let back: TurboConfig = toml::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.content_hash(), cfg.content_hash());
    }
}

#[test]
fn every_preset_validates() {
    for p in Preset::ALL {
        let cfg = reduction_preset(p.name()).unwrap();
        assert_eq!(validate_config(cfg.clone()), Ok(cfg), "{}", p.name());
    }
}
