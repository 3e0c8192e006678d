use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

/// Index of a parameter tensor inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

/// Owned, named parameter tensors of one network.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.entries.push(ParamEntry {
            name: name.into(),
            shape,
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads(
            self.entries
                .iter()
                .map(|e| vec![0.0; e.value.len()])
                .collect(),
        )
    }

    /// Name → (shape, values) view used by checkpoints.
    pub fn to_named(&self, prefix: &str) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        self.entries
            .iter()
            .map(|e| {
                (
                    format!("{prefix}{}", e.name),
                    (e.shape.clone(), e.value.clone()),
                )
            })
            .collect()
    }

    /// Overwrites values from a named map; every entry must be present with a matching shape.
    pub fn load_named(
        &mut self,
        prefix: &str,
        map: &BTreeMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> Result<(), String> {
        for e in &mut self.entries {
            let key = format!("{prefix}{}", e.name);
            let (shape, value) = map
                .get(&key)
                .ok_or_else(|| format!("missing tensor {key}"))?;
            if *shape != e.shape {
                return Err(format!(
                    "shape mismatch for {key}: {shape:?} vs {:?}",
                    e.shape
                ));
            }
            e.value.copy_from_slice(value);
        }
        Ok(())
    }

    /// Content hash over names, shapes and exact bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.name.as_bytes());
            for d in &e.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &e.value {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Gradient buffers laid out like the owning [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Grads, s: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            for x in a {
                *x *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Deterministic parameter initializer shared by all network constructors.
pub struct Initializer {
    rng: ChaCha8Rng,
    std: f64,
}

impl Initializer {
    pub fn new(seed: u64, std: f64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std,
        }
    }

    pub fn normal(&mut self, n: usize) -> Vec<f64> {
        let dist = Normal::new(0.0, self.std).expect("finite std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }

    /// He-style scaled normal, used by critics that have no normalization layers.
    pub fn scaled_normal(&mut self, n: usize, fan_in: usize) -> Vec<f64> {
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }
}
