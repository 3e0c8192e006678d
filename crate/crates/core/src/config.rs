//! Experiment configuration, validation and the preset algebra over loss terms.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Version of the on-disk configuration schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    CnnResnetCnn,
    Unet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    Patch,
    Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanLoss {
    Lsgan,
    Hinge,
    WganGp,
}

impl GanLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            GanLoss::Lsgan => "lsgan",
            GanLoss::Hinge => "hinge",
            GanLoss::WganGp => "wgan_gp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    Paired,
    Unpaired,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    L1,
    L2,
    Bce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    TanhRescaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Path {
    Direct,
    Reverse,
}

/// Image domain a term compares in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Template,
    Print,
}

/// Which derived image a term is evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Derived {
    TTilde,
    YHat,
    YTilde,
    THat,
}

/// The eight independently toggleable terms of the direct and reverse losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossTerm {
    #[serde(rename = "L_t_recon")]
    TRecon,
    #[serde(rename = "D_t_tilde")]
    DTTilde,
    #[serde(rename = "L_y_recon_direct")]
    YReconDirect,
    #[serde(rename = "D_y_hat")]
    DYHat,
    #[serde(rename = "L_y_recon_reverse")]
    YReconReverse,
    #[serde(rename = "D_y_tilde")]
    DYTilde,
    #[serde(rename = "L_t_recon_reverse")]
    TReconReverse,
    #[serde(rename = "D_t_hat")]
    DTHat,
}

impl LossTerm {
    pub const ALL: [LossTerm; 8] = [
        LossTerm::TRecon,
        LossTerm::DTTilde,
        LossTerm::YReconDirect,
        LossTerm::DYHat,
        LossTerm::YReconReverse,
        LossTerm::DYTilde,
        LossTerm::TReconReverse,
        LossTerm::DTHat,
    ];

    pub fn key(self) -> &'static str {
        match self {
            LossTerm::TRecon => "L_t_recon",
            LossTerm::DTTilde => "D_t_tilde",
            LossTerm::YReconDirect => "L_y_recon_direct",
            LossTerm::DYHat => "D_y_hat",
            LossTerm::YReconReverse => "L_y_recon_reverse",
            LossTerm::DYTilde => "D_y_tilde",
            LossTerm::TReconReverse => "L_t_recon_reverse",
            LossTerm::DTHat => "D_t_hat",
        }
    }

    pub fn is_adversarial(self) -> bool {
        matches!(
            self,
            LossTerm::DTTilde | LossTerm::DYHat | LossTerm::DYTilde | LossTerm::DTHat
        )
    }

    /// Terms comparing an estimate against its aligned counterpart.
    pub fn needs_pairing(self) -> bool {
        matches!(self, LossTerm::TRecon | LossTerm::YReconReverse)
    }

    pub fn path(self) -> Path {
        match self {
            LossTerm::TRecon | LossTerm::DTTilde | LossTerm::YReconDirect | LossTerm::DYHat => {
                Path::Direct
            }
            _ => Path::Reverse,
        }
    }

    /// True for the α- or β-weighted half of each path loss.
    pub fn is_weighted(self) -> bool {
        matches!(
            self,
            LossTerm::YReconDirect | LossTerm::DYHat | LossTerm::TReconReverse | LossTerm::DTHat
        )
    }

    pub fn derived(self) -> Derived {
        match self {
            LossTerm::TRecon | LossTerm::DTTilde => Derived::TTilde,
            LossTerm::YReconDirect | LossTerm::DYHat => Derived::YHat,
            LossTerm::YReconReverse | LossTerm::DYTilde => Derived::YTilde,
            LossTerm::TReconReverse | LossTerm::DTHat => Derived::THat,
        }
    }

    pub fn domain(self) -> Domain {
        match self.derived() {
            Derived::TTilde | Derived::THat => Domain::Template,
            Derived::YHat | Derived::YTilde => Domain::Print,
        }
    }
}

impl fmt::Display for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for LossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossTerm::ALL
            .into_iter()
            .find(|t| t.key() == s)
            .ok_or_else(|| Error::Parse(format!("unknown loss term `{s}`")))
    }
}

pub type TermSet = BTreeSet<LossTerm>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicParams {
    /// Master switch; off disables the pool, label flipping, input noise and thresholds.
    pub enabled: bool,
    pub n_d: u32,
    pub d_threshold: Option<f64>,
    pub g_threshold: Option<f64>,
    pub pool_size: usize,
    pub p_flip: f64,
    pub p_noise: f64,
    pub w_noise: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            enabled: true,
            n_d: 1,
            d_threshold: None,
            g_threshold: None,
            pool_size: 50,
            p_flip: 0.05,
            p_noise: 0.1,
            w_noise: 0.1,
        }
    }
}

impl HeuristicParams {
    /// The parameters actually in force once the master switch is applied.
    pub fn effective(&self) -> HeuristicParams {
        if self.enabled {
            self.clone()
        } else {
            HeuristicParams {
                enabled: false,
                n_d: self.n_d,
                d_threshold: None,
                g_threshold: None,
                pool_size: 0,
                p_flip: 0.0,
                p_noise: 0.0,
                w_noise: 0.0,
            }
        }
    }

    pub fn has_thresholds(&self) -> bool {
        self.d_threshold.is_some() || self.g_threshold.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerParams {
    pub learning_rate: f64,
    pub momentum_pair: [f64; 2],
    pub batch_size: usize,
    pub total_steps: u64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            learning_rate: 2e-4,
            momentum_pair: [0.5, 0.999],
            batch_size: 4,
            total_steps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub base_width: usize,
    pub residual_blocks: usize,
    pub unet_depth: usize,
    pub output_activation: OutputActivation,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            base_width: 64,
            residual_blocks: 9,
            unet_depth: 5,
            output_activation: OutputActivation::Sigmoid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticParams {
    pub base_width: usize,
    /// Residual downsampling stages of the image critic.
    pub image_stages: usize,
}

impl Default for CriticParams {
    fn default() -> Self {
        CriticParams {
            base_width: 64,
            image_stages: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveParams {
    pub lambda_gp: f64,
    /// Scale of every critic-realized term in the generator objective; 1 is the plain sum.
    pub adversarial_weight: f64,
    /// Distance used by the template-side reconstruction terms.
    pub template_recon: ReconKind,
    /// Distance used by the print-side reconstruction terms.
    pub print_recon: ReconKind,
    /// Optimize the direct and reverse losses on alternating steps instead of their sum.
    pub alternate_paths: bool,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        ObjectiveParams {
            lambda_gp: 10.0,
            adversarial_weight: 1.0,
            template_recon: ReconKind::Bce,
            print_recon: ReconKind::L1,
            alternate_paths: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurboConfig {
    pub backbone: Backbone,
    pub critic_kind: CriticKind,
    pub gan_loss: GanLoss,
    pub alpha: f64,
    pub beta: f64,
    pub pairing: Pairing,
    /// Fraction of paired batches under hybrid pairing.
    pub hybrid_paired_fraction: f64,
    pub enabled_terms: TermSet,
    pub seed: u64,
    pub network: NetworkParams,
    pub critic: CriticParams,
    pub objective: ObjectiveParams,
    pub heuristics: HeuristicParams,
    pub optimizer: OptimizerParams,
}

impl Default for TurboConfig {
    fn default() -> Self {
        TurboConfig {
            backbone: Backbone::CnnResnetCnn,
            critic_kind: CriticKind::Patch,
            gan_loss: GanLoss::Lsgan,
            alpha: 1.0,
            beta: 1.0,
            pairing: Pairing::Paired,
            hybrid_paired_fraction: 0.5,
            enabled_terms: LossTerm::ALL.into_iter().collect(),
            seed: 0,
            network: NetworkParams::default(),
            critic: CriticParams::default(),
            objective: ObjectiveParams::default(),
            heuristics: HeuristicParams::default(),
            optimizer: OptimizerParams::default(),
        }
    }
}

impl TurboConfig {
    pub fn is_enabled(&self, t: LossTerm) -> bool {
        self.enabled_terms.contains(&t)
    }

    pub fn adversarial_terms(&self) -> impl Iterator<Item = LossTerm> + '_ {
        self.enabled_terms
            .iter()
            .copied()
            .filter(|t| t.is_adversarial())
    }

    /// Weight of a term inside its path total.
    pub fn weight(&self, t: LossTerm) -> f64 {
        let path = match (t.is_weighted(), t.path()) {
            (false, _) => 1.0,
            (true, Path::Direct) => self.alpha,
            (true, Path::Reverse) => self.beta,
        };
        if t.is_adversarial() {
            path * self.objective.adversarial_weight
        } else {
            path
        }
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn content_hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

/// One violated configuration invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfigIssue {
    InvalidCombination(String),
    InconsistentPairing(LossTerm),
    RangeError { field: String, reason: String },
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::InvalidCombination(m) => write!(f, "InvalidCombination: {m}"),
            ConfigIssue::InconsistentPairing(t) => write!(
                f,
                "InconsistentPairing: {t} requires paired data but pairing is unpaired"
            ),
            ConfigIssue::RangeError { field, reason } => write!(f, "RangeError: {field} {reason}"),
        }
    }
}

fn range(issues: &mut Vec<ConfigIssue>, ok: bool, field: &str, reason: &str) {
    if !ok {
        issues.push(ConfigIssue::RangeError {
            field: field.to_string(),
            reason: reason.to_string(),
        });
    }
}

fn probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// Returns the config unchanged when every invariant holds, otherwise all violations.
pub fn validate_config(cfg: TurboConfig) -> std::result::Result<TurboConfig, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    if cfg.gan_loss == GanLoss::WganGp && cfg.critic_kind == CriticKind::Patch {
        issues.push(ConfigIssue::InvalidCombination(
            "wgan_gp with a patch critic does not converge; use critic_kind = image".into(),
        ));
    }
    if cfg.pairing == Pairing::Unpaired {
        for t in cfg.enabled_terms.iter().filter(|t| t.needs_pairing()) {
            issues.push(ConfigIssue::InconsistentPairing(*t));
        }
    }
    range(
        &mut issues,
        cfg.alpha.is_finite() && cfg.alpha >= 0.0,
        "alpha",
        "must be >= 0",
    );
    range(
        &mut issues,
        cfg.beta.is_finite() && cfg.beta >= 0.0,
        "beta",
        "must be >= 0",
    );
    range(
        &mut issues,
        probability(cfg.hybrid_paired_fraction),
        "hybrid_paired_fraction",
        "must lie in [0,1]",
    );

    let h = &cfg.heuristics;
    range(&mut issues, h.n_d >= 1, "heuristics.n_d", "must be >= 1");
    range(
        &mut issues,
        probability(h.p_flip),
        "heuristics.p_flip",
        "must lie in [0,1]",
    );
    range(
        &mut issues,
        probability(h.p_noise),
        "heuristics.p_noise",
        "must lie in [0,1]",
    );
    range(
        &mut issues,
        h.w_noise.is_finite() && h.w_noise >= 0.0,
        "heuristics.w_noise",
        "must be >= 0",
    );
    if h.has_thresholds() && cfg.gan_loss != GanLoss::Lsgan {
        range(
            &mut issues,
            false,
            "heuristics.d_threshold",
            "thresholds are only permitted for the bounded lsgan loss",
        );
    }
    for (name, v) in [
        ("heuristics.d_threshold", h.d_threshold),
        ("heuristics.g_threshold", h.g_threshold),
    ] {
        if let Some(v) = v {
            range(&mut issues, v.is_finite(), name, "must be finite");
        }
    }

    let o = &cfg.optimizer;
    range(
        &mut issues,
        o.learning_rate.is_finite() && o.learning_rate > 0.0,
        "optimizer.learning_rate",
        "must be > 0",
    );
    for (i, m) in o.momentum_pair.iter().enumerate() {
        range(
            &mut issues,
            (0.0..1.0).contains(m),
            &format!("optimizer.momentum_pair[{i}]"),
            "must lie in [0,1)",
        );
    }
    range(
        &mut issues,
        o.batch_size >= 1,
        "optimizer.batch_size",
        "must be >= 1",
    );
    range(
        &mut issues,
        o.total_steps >= 1,
        "optimizer.total_steps",
        "must be >= 1",
    );

    range(
        &mut issues,
        cfg.network.base_width >= 1,
        "network.base_width",
        "must be >= 1",
    );
    range(
        &mut issues,
        cfg.network.unet_depth >= 1,
        "network.unet_depth",
        "must be >= 1",
    );
    range(
        &mut issues,
        cfg.critic.base_width >= 1,
        "critic.base_width",
        "must be >= 1",
    );
    range(
        &mut issues,
        cfg.critic.image_stages >= 1,
        "critic.image_stages",
        "must be >= 1",
    );
    range(
        &mut issues,
        cfg.objective.lambda_gp.is_finite() && cfg.objective.lambda_gp >= 0.0,
        "objective.lambda_gp",
        "must be >= 0",
    );
    range(
        &mut issues,
        cfg.objective.adversarial_weight.is_finite() && cfg.objective.adversarial_weight >= 0.0,
        "objective.adversarial_weight",
        "must be >= 0",
    );

    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Cyclegan,
    Pix2pixT2y,
    Pix2pixY2t,
    Aae,
    TurboPaired,
    TurboUnpaired,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Cyclegan,
        Preset::Pix2pixT2y,
        Preset::Pix2pixY2t,
        Preset::Aae,
        Preset::TurboPaired,
        Preset::TurboUnpaired,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cyclegan => "cyclegan",
            Preset::Pix2pixT2y => "pix2pix_t2y",
            Preset::Pix2pixY2t => "pix2pix_y2t",
            Preset::Aae => "aae",
            Preset::TurboPaired => "turbo_paired",
            Preset::TurboUnpaired => "turbo_unpaired",
        }
    }

    pub fn terms(self) -> TermSet {
        use LossTerm::*;
        let all: TermSet = LossTerm::ALL.into_iter().collect();
        let minus = |base: &TermSet, drop: &[LossTerm]| -> TermSet {
            base.iter().copied().filter(|t| !drop.contains(t)).collect()
        };
        match self {
            Preset::TurboPaired => all,
            Preset::TurboUnpaired => minus(&all, &[TRecon, YReconReverse]),
            Preset::Cyclegan => minus(&Preset::TurboUnpaired.terms(), &[DTHat, DYHat]),
            Preset::Pix2pixT2y => [YReconReverse, DYTilde].into_iter().collect(),
            Preset::Pix2pixY2t => [TRecon, DTTilde].into_iter().collect(),
            Preset::Aae => [DTTilde, YReconDirect].into_iter().collect(),
        }
    }

    pub fn pairing(self) -> Pairing {
        match self {
            Preset::TurboPaired | Preset::Pix2pixT2y | Preset::Pix2pixY2t => Pairing::Paired,
            Preset::TurboUnpaired | Preset::Cyclegan | Preset::Aae => Pairing::Unpaired,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Default configuration realizing the named special case of the objective.
pub fn reduction_preset(name: &str) -> Result<TurboConfig> {
    let preset: Preset = name.parse()?;
    Ok(TurboConfig {
        pairing: preset.pairing(),
        enabled_terms: preset.terms(),
        ..TurboConfig::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use LossTerm::*;

    #[test]
    fn default_paired_config_is_returned_unchanged() {
        let cfg = TurboConfig::default();
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn wgan_gp_with_patch_is_invalid_combination() {
        let cfg = TurboConfig {
            gan_loss: GanLoss::WganGp,
            critic_kind: CriticKind::Patch,
            ..TurboConfig::default()
        };
        let errs = validate_config(cfg).unwrap_err();
        assert!(matches!(
            errs.as_slice(),
            [ConfigIssue::InvalidCombination(_)]
        ));
    }

    #[test]
    fn unpaired_with_paired_term_is_inconsistent() {
        let mut cfg = reduction_preset("turbo_unpaired").unwrap();
        cfg.enabled_terms.insert(TRecon);
        let errs = validate_config(cfg).unwrap_err();
        assert_eq!(errs, vec![ConfigIssue::InconsistentPairing(TRecon)]);
    }

    #[test]
    fn every_violation_is_reported() {
        let cfg = TurboConfig {
            gan_loss: GanLoss::WganGp,
            pairing: Pairing::Unpaired,
            alpha: -1.0,
            heuristics: HeuristicParams {
                p_flip: 1.5,
                d_threshold: Some(0.5),
                ..HeuristicParams::default()
            },
            optimizer: OptimizerParams {
                learning_rate: 0.0,
                batch_size: 0,
                ..OptimizerParams::default()
            },
            ..TurboConfig::default()
        };
        let errs = validate_config(cfg).unwrap_err();
        let ranges: Vec<_> = errs
            .iter()
            .filter_map(|e| match e {
                ConfigIssue::RangeError { field, .. } => Some(field.as_str()),
                _ => None,
            })
            .collect();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ConfigIssue::InvalidCombination(_))));
        assert_eq!(
            errs.iter()
                .filter(|e| matches!(e, ConfigIssue::InconsistentPairing(_)))
                .count(),
            2
        );
        for f in [
            "alpha",
            "heuristics.p_flip",
            "heuristics.d_threshold",
            "optimizer.learning_rate",
            "optimizer.batch_size",
        ] {
            assert!(ranges.contains(&f), "missing {f}");
        }
    }

    #[test]
    fn presets_realize_the_reductions() {
        let paired = Preset::TurboPaired.terms();
        let unpaired = Preset::TurboUnpaired.terms();
        let cyc = Preset::Cyclegan.terms();
        assert!(cyc.is_subset(&unpaired) && cyc.len() < unpaired.len());
        assert!(unpaired.is_subset(&paired) && unpaired.len() < paired.len());
        let d1: TermSet = paired.difference(&unpaired).copied().collect();
        assert_eq!(d1, [TRecon, YReconReverse].into_iter().collect());
        let d2: TermSet = unpaired.difference(&cyc).copied().collect();
        assert_eq!(d2, [DTHat, DYHat].into_iter().collect());
        assert_eq!(
            Preset::Pix2pixT2y.terms(),
            [YReconReverse, DYTilde].into_iter().collect()
        );
        assert!(Preset::Aae.terms().iter().all(|t| t.path() == Path::Direct));
        for p in Preset::ALL {
            let cfg = reduction_preset(p.name()).unwrap();
            assert!(validate_config(cfg).is_ok(), "{}", p.name());
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            reduction_preset("stargan"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn term_keys_round_trip() {
        for t in LossTerm::ALL {
            assert_eq!(t.key().parse::<LossTerm>().unwrap(), t);
        }
    }

    #[test]
    fn content_hash_is_stable_and_sensitive() {
        let a = TurboConfig::default();
        assert_eq!(a.content_hash(), a.clone().content_hash());
        let b = TurboConfig {
            seed: 1,
            ..a.clone()
        };
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
