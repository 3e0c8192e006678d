//! Config-driven experiment commands: simulate, train, evaluate and report.
//!
//! An experiment file is TOML:
//!
//! ```toml
//! schema_version = 1
//! run_name = "paired-small"        # optional; defaults to <preset>-<hash prefix>
//!
//! [dataset]
//! root = "data/synth"              # relative paths resolve against the config file
//! n = 720
//! m = 64
//! density = 0.5
//! seed = 1
//! train_fraction = 0.8
//! # crop = 256                     # optional four-corner cropping
//!
//! [channel]
//! blur_sigma = 1.0
//! noise_sigma = 0.05
//!
//! [model]
//! preset = "turbo_paired"          # any other key overrides the preset's TurboConfig
//! network = { base_width = 8, residual_blocks = 3 }
//!
//! [train]
//! checkpoint_every = 100
//!
//! [eval]
//! grid = 4
//! ```
//!
//! A run directory holds `config.echo`, `losses.csv`, `checkpoints/`, `report.json`,
//! `grids/` and `run.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{reduction_preset, validate_config, TurboConfig, SCHEMA_VERSION};
use crate::data::manifest::MANIFEST_FILE;
use crate::data::{
    make_synthetic_dataset, split_train_test, tag_split, ChannelParams, Dataset, DatasetManifest,
    Split,
};
use crate::error::Error;
use crate::eval::{
    csv_table, embed_2d, embedding_csv, evaluate_model, sample_grid, text_table, EmbedLabel,
    MetricReport, Pca, RandomConvExtractor, DEFAULT_EXTRACTOR_SEED,
};
use crate::grid::Grid;
use crate::trainer::{checkpoint_if_due, truncate_log, LossLog, TrainOptions, TrainState};

/// Overrides the directory under which `train` creates run directories.
pub const RUN_ROOT_ENV: &str = "TURBO_TWIN_RUN_ROOT";
pub const DEFAULT_RUN_ROOT: &str = "runs";
pub const RUN_RECORD_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub root: PathBuf,
    pub n: usize,
    pub m: usize,
    pub density: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub crop: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            root: PathBuf::from("data/synth"),
            n: 720,
            m: 64,
            density: 0.5,
            seed: 1,
            train_fraction: 0.8,
            crop: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            checkpoint_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Samples shown in the sample grid.
    pub grid: usize,
    pub extractor_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            grid: 4,
            extractor_seed: DEFAULT_EXTRACTOR_SEED,
        }
    }
}

/// The experiment file as written by the user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema_version: u32,
    #[serde(default)]
    pub run_name: Option<String>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub model: toml::Table,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// An experiment with the model section expanded into a full, validated config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub schema_version: u32,
    pub run_name: Option<String>,
    pub preset: Option<String>,
    pub dataset: DatasetSection,
    pub channel: ChannelParams,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub model: TurboConfig,
}

impl Experiment {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment serializes")
    }

    /// Content hash of the canonical TOML echo.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn run_id(&self) -> String {
        match &self.run_name {
            Some(n) => n.clone(),
            None => format!(
                "{}-{}",
                self.preset.as_deref().unwrap_or("custom"),
                &self.config_hash()[..12]
            ),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses an experiment file; `base_dir` anchors a relative dataset root.
pub fn parse_experiment(text: &str, base_dir: &Path) -> anyhow::Result<Experiment> {
    let file: ExperimentFile = toml::from_str(text).context("parsing experiment file")?;
    if file.schema_version != SCHEMA_VERSION {
        bail!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        );
    }
    let mut model = file.model;
    let preset = match model.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(other) => bail!("model.preset must be a string, got {other}"),
        None => None,
    };
    let base = match &preset {
        Some(p) => reduction_preset(p)?,
        None => TurboConfig::default(),
    };
    let mut value = toml::Value::try_from(&base).expect("config serializes");
    merge(&mut value, toml::Value::Table(model));
    let cfg: TurboConfig = value.try_into().context("parsing [model]")?;
    let cfg = validate_config(cfg).map_err(Error::Config)?;
    let mut dataset = file.dataset;
    if dataset.root.is_relative() {
        dataset.root = base_dir.join(&dataset.root);
    }
    Ok(Experiment {
        schema_version: file.schema_version,
        run_name: file.run_name,
        preset,
        dataset,
        channel: file.channel,
        train: file.train,
        eval: file.eval,
        model: cfg,
    })
}

pub fn load_experiment(path: &Path) -> anyhow::Result<Experiment> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_experiment(&text, dir).with_context(|| format!("in {}", path.display()))
}

/// Generates the synthetic dataset described by the experiment and tags its train/test split.
pub fn cmd_simulate(exp: &Experiment) -> anyhow::Result<DatasetManifest> {
    let d = &exp.dataset;
    let manifest = make_synthetic_dataset(&d.root, d.n, d.m, d.density, &exp.channel, d.seed)?;
    let manifest = tag_split(&manifest, d.train_fraction)?;
    manifest.save()?;
    Ok(manifest)
}

pub fn manifest_summary(m: &DatasetManifest) -> String {
    let count = |s: Split| m.entries.iter().filter(|e| e.split == s).count();
    format!(
        "{} entries in {} (train {}, test {}, unassigned {})",
        m.len(),
        m.root.display(),
        count(Split::Train),
        count(Split::Test),
        count(Split::Unassigned)
    )
}

/// Train and test splits of an experiment's dataset, cropped when configured.
pub fn load_splits(exp: &Experiment) -> anyhow::Result<(Dataset, Dataset)> {
    let root = &exp.dataset.root;
    if !root.join(MANIFEST_FILE).exists() {
        bail!("no dataset at {} (run `simulate` first)", root.display());
    }
    let manifest = DatasetManifest::load(root, exp.model.pairing, exp.dataset.seed)?;
    let (train, test) = if manifest
        .entries
        .iter()
        .all(|e| e.split == Split::Unassigned)
    {
        split_train_test(&manifest, exp.dataset.train_fraction)?
    } else {
        (
            manifest.with_split(Split::Train),
            manifest.with_split(Split::Test),
        )
    };
    let (mut train, mut test) = (Dataset::load(&train)?, Dataset::load(&test)?);
    if let Some(c) = exp.dataset.crop {
        train = train.crop_four(c)?;
        test = test.crop_four(c)?;
    }
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_hash: String,
    pub config_echo: String,
    pub started: String,
    pub finished: String,
    pub steps: u64,
    pub report: MetricReport,
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> crate::error::Result<RunRecord> {
        let path = run_dir.join(RUN_RECORD_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|_| Error::MissingRunRecord(run_dir.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainFlags {
    /// Parent of the run directory; falls back to the environment override, then `runs/`.
    pub run_root: Option<PathBuf>,
    pub resume: bool,
    pub overwrite: bool,
}

pub fn resolve_run_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_ROOT))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Trains the experiment's model, checkpointing along the way, then evaluates it on the test split.
pub fn cmd_train(exp: &Experiment, flags: &TrainFlags) -> anyhow::Result<(PathBuf, RunRecord)> {
    let started = now();
    let (train, test) = load_splits(exp)?;
    let run_dir = resolve_run_root(flags.run_root.as_deref()).join(exp.run_id());
    let ckpt_dir = run_dir.join("checkpoints");
    let echo_path = run_dir.join("config.echo");
    let log_path = run_dir.join("losses.csv");
    let echo = exp.to_toml();

    let mut state = if flags.resume {
        let latest = ckpt_dir.join("latest.ckpt");
        if !latest.exists() {
            return Err(Error::MissingCheckpoint(latest).into());
        }
        let previous = fs::read_to_string(&echo_path).unwrap_or_default();
        if previous != echo {
            bail!(
                "config differs from the one recorded in {}",
                echo_path.display()
            );
        }
        let state = TrainState::load(&latest)?;
        truncate_log(&log_path, state.step)?;
        log::info!("resuming {} at step {}", exp.run_id(), state.step);
        state
    } else {
        if run_dir.exists() {
            if !flags.overwrite {
                bail!(
                    "run directory {} exists; pass --resume to continue or --overwrite to start over",
                    run_dir.display()
                );
            }
            fs::remove_dir_all(&run_dir)
                .with_context(|| format!("removing {}", run_dir.display()))?;
        }
        fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
        fs::write(&echo_path, &echo)?;
        TrainState::init(&exp.model)?
    };

    let mut losses = LossLog::open(&log_path, &exp.model, flags.resume)?;
    let opts = TrainOptions {
        checkpoint_every: Some(exp.train.checkpoint_every),
        checkpoint_dir: Some(ckpt_dir.clone()),
    };
    let total = exp.model.optimizer.total_steps;
    let outcome = state.run(&train, total, |s, rec| {
        losses.append(rec)?;
        if s.step % 100 == 0 {
            log::info!("step {}: total {:.5}", s.step, rec.losses.grand_total);
        }
        checkpoint_if_due(s, &opts)
    });
    if let Err(e) = outcome {
        if matches!(e, Error::NonFiniteLoss { .. }) {
            let snap = ckpt_dir.join(format!("nonfinite_step_{:08}.ckpt", state.step));
            fs::create_dir_all(&ckpt_dir)?;
            state.save(&snap)?;
            return Err(
                anyhow!(e).context(format!("diagnostic snapshot saved to {}", snap.display()))
            );
        }
        return Err(e.into());
    }
    checkpoint_if_due(
        &state,
        &TrainOptions {
            checkpoint_every: Some(1),
            checkpoint_dir: Some(ckpt_dir.clone()),
        },
    )?;

    let extractor = RandomConvExtractor::new(exp.eval.extractor_seed);
    let report = evaluate_model(&state, &test, &extractor)?;
    let report_path = run_dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let grid_path = run_dir.join("grids").join("final.png");
    let shown = exp.eval.grid.min(test.len()).max(1);
    sample_grid(
        &[(&state.encoder, &state.decoder)],
        &sorted(&test)[..shown],
        &grid_path,
    )?;

    let artifacts = BTreeMap::from([
        ("config_echo".to_string(), PathBuf::from("config.echo")),
        ("losses".to_string(), PathBuf::from("losses.csv")),
        (
            "checkpoint".to_string(),
            PathBuf::from("checkpoints/latest.ckpt"),
        ),
        ("report".to_string(), PathBuf::from("report.json")),
        ("grid".to_string(), PathBuf::from("grids/final.png")),
    ]);
    let record = RunRecord {
        run_id: exp.run_id(),
        config_hash: exp.config_hash(),
        config_echo: echo,
        started,
        finished: now(),
        steps: state.step,
        report,
        artifacts,
    };
    fs::write(
        run_dir.join(RUN_RECORD_FILE),
        serde_json::to_string_pretty(&record)?,
    )?;
    Ok((run_dir, record))
}

fn sorted(d: &Dataset) -> Vec<crate::data::Sample> {
    let mut s = d.samples().to_vec();
    s.sort_by(|a, b| a.id.cmp(&b.id));
    s
}

#[derive(Clone, Debug)]
pub struct EvalFlags {
    pub checkpoint: PathBuf,
    /// Additional checkpoints shown next to the main one in the sample grid.
    pub compare: Vec<PathBuf>,
    /// Directory holding `manifest.csv`.
    pub data: PathBuf,
    pub split: Split,
    pub crop: Option<usize>,
    pub out: PathBuf,
    pub grid: usize,
    pub embed: bool,
    pub extractor_seed: u64,
}

fn load_checkpoint(path: &Path) -> crate::error::Result<TrainState> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    TrainState::load(path)
}

/// Writes `report.json`, `report.csv`, `grid.png` and, with `embed`, `embedding.csv` under `out`.
pub fn cmd_evaluate(flags: &EvalFlags) -> anyhow::Result<MetricReport> {
    let state = load_checkpoint(&flags.checkpoint)?;
    let others = flags
        .compare
        .iter()
        .map(|p| load_checkpoint(p))
        .collect::<crate::error::Result<Vec<_>>>()?;
    if !flags.data.join(MANIFEST_FILE).exists() {
        return Err(anyhow!(Error::EmptyTestSet)
            .context(format!("no manifest in {}", flags.data.display())));
    }
    let manifest = DatasetManifest::load(&flags.data, state.cfg.pairing, 0)?;
    let manifest = if flags.split == Split::Unassigned {
        manifest
    } else {
        manifest.with_split(flags.split)
    };
    let mut data = Dataset::load(&manifest)?;
    if let Some(c) = flags.crop {
        data = data.crop_four(c)?;
    }
    let extractor = RandomConvExtractor::new(flags.extractor_seed);
    let report = evaluate_model(&state, &data, &extractor)?;
    fs::create_dir_all(&flags.out)?;
    fs::write(
        flags.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    fs::write(
        flags.out.join("report.csv"),
        csv_table(&[(state.cfg.content_hash(), report.clone())]),
    )?;
    let samples = sorted(&data);
    let mut models = vec![(&state.encoder, &state.decoder)];
    models.extend(others.iter().map(|s| (&s.encoder, &s.decoder)));
    let shown = flags.grid.clamp(1, samples.len());
    sample_grid(&models, &samples[..shown], &flags.out.join("grid.png"))?;
    if flags.embed {
        let mut images: Vec<Grid> = Vec::with_capacity(4 * samples.len());
        let mut labels = Vec::with_capacity(4 * samples.len());
        for s in &samples {
            images.push(s.template.clone());
            labels.push(EmbedLabel::TemplateReal);
            images.push(state.encoder.forward(&s.print)?);
            labels.push(EmbedLabel::TemplateGenerated);
            images.push(s.print.clone());
            labels.push(EmbedLabel::PrintReal);
            images.push(state.decoder.forward(&s.template)?);
            labels.push(EmbedLabel::PrintGenerated);
        }
        let points = embed_2d(&images, &labels, &Pca)?;
        fs::write(flags.out.join("embedding.csv"), embedding_csv(&points))?;
    }
    Ok(report)
}

/// Comparison table across run directories as `(csv, aligned text)`.
pub fn cmd_report(run_dirs: &[PathBuf]) -> anyhow::Result<(String, String)> {
    if run_dirs.is_empty() {
        bail!("report needs at least one run directory");
    }
    let rows = run_dirs
        .iter()
        .map(|d| RunRecord::load(d).map(|r| (r.run_id, r.report)))
        .collect::<crate::error::Result<Vec<_>>>()?;
    Ok((csv_table(&rows), text_table(&rows)))
}
