//! On-disk dataset layout and its CSV manifest.
//!
//! ```text
//! root/
//!   manifest.csv
//!   templates/{id}.png
//!   printed/{device}/{original|fake}/{id}.png
//! ```

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::Pairing;
use crate::error::{Error, Result};
use crate::grid::Authenticity;
use crate::rng;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "" => Ok(Split::Unassigned),
            other => Err(Error::InvalidManifest(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest root.
    pub template: PathBuf,
    pub printed: Option<PathBuf>,
    pub authenticity: Authenticity,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub pairing: Pairing,
    pub split_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    id: String,
    template: String,
    printed: String,
    authenticity: String,
    split: String,
}

impl DatasetManifest {
    pub fn new(
        root: impl Into<PathBuf>,
        entries: Vec<ManifestEntry>,
        pairing: Pairing,
        split_seed: u64,
    ) -> Result<Self> {
        let m = DatasetManifest {
            root: root.into(),
            entries,
            pairing,
            split_seed,
        };
        m.check()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.pairing == Pairing::Paired {
            if let Some(e) = self.entries.iter().find(|e| e.printed.is_none()) {
                return Err(Error::InvalidManifest(format!(
                    "paired manifest entry `{}` has no printed file",
                    e.id
                )));
            }
        }
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidManifest(format!("duplicate id `{}`", w[0])));
        }
        Ok(())
    }

    pub fn with_split(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Template and print paths as two separate collections. In unpaired mode the print
    /// order is a seeded shuffle so the position carries no linkage to the templates.
    pub fn collections(&self) -> (Vec<PathBuf>, Vec<PathBuf>) {
        let templates = self
            .entries
            .iter()
            .map(|e| self.root.join(&e.template))
            .collect();
        let mut prints: Vec<PathBuf> = self
            .entries
            .iter()
            .filter_map(|e| e.printed.as_ref().map(|p| self.root.join(p)))
            .collect();
        if self.pairing != Pairing::Paired {
            prints.shuffle(&mut rng::stream(self.split_seed, &["unpaired_collection"]));
        }
        (templates, prints)
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for e in &self.entries {
            w.serialize(Row {
                id: e.id.clone(),
                template: slash(&e.template),
                printed: e.printed.as_deref().map(slash).unwrap_or_default(),
                authenticity: e.authenticity.as_str().into(),
                split: e.split.as_str().into(),
            })
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: impl Into<PathBuf>, pairing: Pairing, split_seed: u64) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "manifest missing"),
            ));
        }
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut entries = Vec::new();
        for row in r.deserialize::<Row>() {
            let row = row.map_err(|e| csv_err(&path, e))?;
            entries.push(ManifestEntry {
                id: row.id,
                template: PathBuf::from(row.template),
                printed: (!row.printed.is_empty()).then(|| PathBuf::from(row.printed)),
                authenticity: Authenticity::parse(&row.authenticity)?,
                split: Split::parse(&row.split)?,
            });
        }
        DatasetManifest::new(root, entries, pairing, split_seed)
    }
}

fn slash(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::InvalidManifest(format!("{}: {e}", path.display()))
}

/// Seeded, non-intersecting split; `round(n * train_fraction)` entries go to train.
pub fn split_train_test(
    manifest: &DatasetManifest,
    train_fraction: f64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidManifest(format!(
            "train fraction {train_fraction} outside (0,1)"
        )));
    }
    let n = manifest.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(manifest.split_seed, &["split"]));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let part = |want: bool, tag: Split| -> DatasetManifest {
        let entries = manifest
            .entries
            .iter()
            .zip(&is_train)
            .filter(|(_, &t)| t == want)
            .map(|(e, _)| ManifestEntry {
                split: tag,
                ..e.clone()
            })
            .collect();
        DatasetManifest {
            entries,
            ..manifest.clone()
        }
    };
    Ok((part(true, Split::Train), part(false, Split::Test)))
}

/// Writes the split tags back into a combined manifest.
pub fn tag_split(manifest: &DatasetManifest, train_fraction: f64) -> Result<DatasetManifest> {
    let (train, test) = split_train_test(manifest, train_fraction)?;
    let mut out = manifest.clone();
    for e in &mut out.entries {
        e.split = if train.entries.iter().any(|t| t.id == e.id) {
            Split::Train
        } else {
            debug_assert!(test.entries.iter().any(|t| t.id == e.id));
            Split::Test
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fake_manifest(n: usize, seed: u64) -> DatasetManifest {
        let entries = (0..n)
            .map(|i| ManifestEntry {
                id: format!("s{i:06}"),
                template: PathBuf::from(format!("templates/s{i:06}.png")),
                printed: Some(PathBuf::from(format!(
                    "printed/synthetic/original/s{i:06}.png"
                ))),
                authenticity: Authenticity::Original,
                split: Split::Unassigned,
            })
            .collect();
        DatasetManifest::new("/nonexistent", entries, Pairing::Paired, seed).unwrap()
    }

    #[test]
    fn split_counts_follow_rounding() {
        let (tr, te) = split_train_test(&fake_manifest(720, 3), 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (576, 144));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let m = fake_manifest(10, 5);
        let a = split_train_test(&m, 0.8).unwrap();
        let b = split_train_test(&m, 0.8).unwrap();
        assert_eq!(a, b);
        for e in &a.0.entries {
            assert!(!a.1.entries.iter().any(|t| t.id == e.id));
        }
        let c = split_train_test(&fake_manifest(10, 6), 0.8).unwrap();
        assert_ne!(a.0.entries, c.0.entries);
    }

    #[test]
    fn empty_manifest_rejected() {
        let m = DatasetManifest::new("/x", vec![], Pairing::Paired, 0).unwrap();
        assert!(matches!(
            split_train_test(&m, 0.8),
            Err(Error::EmptyManifest)
        ));
    }

    #[test]
    fn paired_requires_prints() {
        let mut m = fake_manifest(3, 0);
        m.entries[1].printed = None;
        assert!(m.check().is_err());
        m.pairing = Pairing::Unpaired;
        assert!(m.check().is_ok());
    }

    #[test]
    fn unpaired_collections_erase_linkage() {
        let mut m = fake_manifest(20, 1);
        let (_, paired) = m.collections();
        m.pairing = Pairing::Unpaired;
        let (_, unpaired) = m.collections();
        assert_ne!(paired, unpaired);
        let mut sorted = unpaired.clone();
        sorted.sort();
        assert_eq!(sorted, paired);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = fake_manifest(4, 2);
        m.root = dir.path().to_path_buf();
        m.entries[2].printed = None;
        m.entries[0].split = Split::Test;
        m.pairing = Pairing::Unpaired;
        m.save().unwrap();
        let back = DatasetManifest::load(dir.path(), Pairing::Unpaired, 2).unwrap();
        assert_eq!(back, m);
    }
}
