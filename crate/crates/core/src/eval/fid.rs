//! Fréchet distance between Gaussian fits of image features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nn::{Activation, Conv2d, Initializer, Layer, ParamStore};

/// Eigenvalues above `-PSD_TOL * scale` count as nonnegative.
const PSD_TOL: f64 = 1e-8;

/// Maps an image to a fixed-length feature vector.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, image: &Grid) -> Result<Vec<f64>>;
}

/// Uses the raw pixels as features.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn dim(&self) -> usize {
        0
    }

    fn extract(&self, image: &Grid) -> Result<Vec<f64>> {
        Ok(image.data().to_vec())
    }
}

/// Frozen, randomly initialized convolutional embedder. The weights depend only on
/// the seed, so distances are reproducible but not comparable to published FIDs.
#[derive(Clone, Debug)]
pub struct RandomConvExtractor {
    store: ParamStore,
    layers: Vec<Layer>,
    features: usize,
}

pub const DEFAULT_EXTRACTOR_SEED: u64 = 0x05ee_df1d;

impl RandomConvExtractor {
    pub fn new(seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed, 1.0);
        let widths = [(1, 8), (8, 16), (16, 16)];
        let mut layers = Vec::new();
        for (k, &(cin, cout)) in widths.iter().enumerate() {
            let name = format!("embed{k}");
            layers.push(Layer::Conv(Conv2d::new_scaled(
                &mut store, &mut init, &name, cin, cout, 3, 2, 1,
            )));
            layers.push(Layer::Act(Activation::Relu));
        }
        layers.push(Layer::GlobalAvgPool);
        RandomConvExtractor {
            store,
            layers,
            features: widths[widths.len() - 1].1,
        }
    }
}

impl Default for RandomConvExtractor {
    fn default() -> Self {
        RandomConvExtractor::new(DEFAULT_EXTRACTOR_SEED)
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn dim(&self) -> usize {
        self.features
    }

    fn extract(&self, image: &Grid) -> Result<Vec<f64>> {
        let mut x = image.to_tensor();
        for l in &self.layers {
            x = l.forward(&self.store, &x).0;
        }
        Ok(x.into_vec())
    }
}

/// Empirical mean and unbiased covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub cov: Vec<f64>,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn from_features(features: &[Vec<f64>]) -> Result<FeatureStats> {
        if features.len() < 2 {
            return Err(Error::BatchTooSmall {
                needed: 2,
                got: features.len(),
            });
        }
        let d = features[0].len();
        if let Some(f) = features.iter().find(|f| f.len() != d) {
            return Err(Error::DimMismatch(d, f.len()));
        }
        let n = features.len();
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; d * d];
        for f in features {
            for i in 0..d {
                let di = f[i] - mean[i];
                for j in i..d {
                    cov[i * d + j] += di * (f[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / (n - 1) as f64;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        Ok(FeatureStats { mean, cov, n })
    }
}

pub fn feature_stats(images: &[Grid], extractor: &dyn FeatureExtractor) -> Result<FeatureStats> {
    if images.len() < 2 {
        return Err(Error::BatchTooSmall {
            needed: 2,
            got: images.len(),
        });
    }
    let feats = images
        .iter()
        .map(|g| extractor.extract(g))
        .collect::<Result<Vec<_>>>()?;
    FeatureStats::from_features(&feats)
}

fn matrix(s: &FeatureStats) -> DMatrix<f64> {
    let d = s.dim();
    let m = DMatrix::from_row_slice(d, d, &s.cov);
    // symmetrize away accumulated round-off
    (&m + m.transpose()) * 0.5
}

fn eigen_checked(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = SymmetricEigen::new(m);
    let scale = e.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let min = e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL * scale {
        return Err(Error::NonPsd(min));
    }
    Ok(e)
}

fn psd_sqrt(e: &SymmetricEigen<f64, nalgebra::Dyn>) -> DMatrix<f64> {
    let s = DVector::from_iterator(
        e.eigenvalues.len(),
        e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()),
    );
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

/// `‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2(Σ1Σ2)^{1/2})`, with the trace of the root taken as
/// the trace of `(Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2}` (same eigenvalues, but symmetric).
pub fn frechet_distance(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimMismatch(s1.dim(), s2.dim()));
    }
    let (c1, c2) = (matrix(s1), matrix(s2));
    let e1 = eigen_checked(c1.clone())?;
    eigen_checked(c2.clone())?;
    let r1 = psd_sqrt(&e1);
    let inner = &r1 * &c2 * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_root: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let dmu: f64 = s1
        .mean
        .iter()
        .zip(&s2.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let fid = dmu + c1.trace() + c2.trace() - 2.0 * tr_root;
    Ok(fid.max(0.0))
}
