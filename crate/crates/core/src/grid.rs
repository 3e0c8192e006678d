//! Square single-channel images and the domain types built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest admissible template side.
pub const MIN_SIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    side: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {side}x{side} grid",
                data.len()
            )));
        }
        Ok(Grid { side, data })
    }

    pub fn filled(side: usize, v: f64) -> Self {
        Grid {
            side,
            data: vec![v; side * side],
        }
    }

    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..side * side).map(|k| f(k / side, k % side)).collect();
        Grid { side, data }
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.side + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.side + j] = v;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Grid {
        Grid {
            side: self.side,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the `crop x crop` window whose top-left corner is `(i0, j0)`.
    pub fn window(&self, i0: usize, j0: usize, crop: usize) -> Grid {
        assert!(i0 + crop <= self.side && j0 + crop <= self.side);
        let mut data = Vec::with_capacity(crop * crop);
        for i in i0..i0 + crop {
            data.extend_from_slice(&self.data[i * self.side + j0..i * self.side + j0 + crop]);
        }
        Grid { side: crop, data }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(1, self.side, self.side, self.data.clone())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.shape();
        if c != 1 || h != w {
            return Err(Error::ShapeMismatch(format!(
                "expected a 1xNxN tensor, got {c}x{h}x{w}"
            )));
        }
        Ok(Grid {
            side: h,
            data: t.data().to_vec(),
        })
    }

    pub fn check_same_side(&self, other: &Grid) -> Result<()> {
        if self.side != other.side {
            return Err(Error::ShapeMismatch(format!(
                "{}x{0} vs {}x{1}",
                self.side, other.side
            )));
        }
        Ok(())
    }
}

/// Binary `m x m` code sent to the printer.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitalTemplate {
    pub id: String,
    grid: Grid,
}

impl DigitalTemplate {
    pub fn new(id: impl Into<String>, grid: Grid) -> Result<Self> {
        if grid.side() < MIN_SIDE {
            return Err(Error::ShapeMismatch(format!(
                "template side {} below minimum {MIN_SIDE}",
                grid.side()
            )));
        }
        if let Some(&v) = grid.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryTarget(v));
        }
        Ok(DigitalTemplate {
            id: id.into(),
            grid,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn side(&self) -> usize {
        self.grid.side()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Authenticity {
    Original,
    Fake,
    Synthetic,
}

impl Authenticity {
    pub fn as_str(self) -> &'static str {
        match self {
            Authenticity::Original => "original",
            Authenticity::Fake => "fake",
            Authenticity::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Authenticity::Original),
            "fake" => Ok(Authenticity::Fake),
            "synthetic" => Ok(Authenticity::Synthetic),
            other => Err(Error::Parse(format!("unknown authenticity `{other}`"))),
        }
    }
}

/// Continuous-valued acquisition of a printed code.
#[derive(Clone, Debug, PartialEq)]
pub struct PrintedCode {
    pub id: String,
    pub authenticity: Authenticity,
    grid: Grid,
}

impl PrintedCode {
    pub fn new(id: impl Into<String>, grid: Grid, authenticity: Authenticity) -> Result<Self> {
        if let Some(&v) = grid.data().iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Parse(format!("printed value {v} outside [0,1]")));
        }
        Ok(PrintedCode {
            id: id.into(),
            authenticity,
            grid,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn side(&self) -> usize {
        self.grid.side()
    }
}

/// The four images derived in one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutputs {
    /// Direct path: encoder(y).
    pub t_tilde: Grid,
    /// Direct path: decoder(t̃).
    pub y_hat: Grid,
    /// Reverse path: decoder(t).
    pub y_tilde: Grid,
    /// Reverse path: encoder(ỹ).
    pub t_hat: Grid,
}

impl PathOutputs {
    pub fn all_finite(&self) -> bool {
        [&self.t_tilde, &self.y_hat, &self.y_tilde, &self.t_hat]
            .iter()
            .all(|g| g.all_finite())
    }
}
