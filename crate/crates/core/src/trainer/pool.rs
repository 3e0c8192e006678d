//! Replay buffer of generated images for critic updates.

use rand::Rng;

use crate::grid::Grid;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePool {
    capacity: usize,
    buffer: Vec<Grid>,
    seed: u64,
    /// Number of queries served; keys the random stream of the next query.
    queries: u64,
}

impl ImagePool {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ImagePool {
            capacity,
            buffer: Vec::with_capacity(capacity),
            seed,
            queries: 0,
        }
    }

    /// Rebuilds a pool from checkpointed contents.
    pub fn restore(capacity: usize, seed: u64, buffer: Vec<Grid>, queries: u64) -> Self {
        assert!(buffer.len() <= capacity, "pool buffer exceeds capacity");
        ImagePool {
            capacity,
            buffer,
            seed,
            queries,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn buffer(&self) -> &[Grid] {
        &self.buffer
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Returns one image per fresh image. While filling, fresh images are stored and
    /// returned. Once full, each fresh image is swapped with probability ½ for a random
    /// stored one (which is returned), otherwise returned directly.
    pub fn query(&mut self, fresh: &[Grid]) -> Vec<Grid> {
        let mut r = rng::stream(self.seed, &["pool", &self.queries.to_string()]);
        self.queries += 1;
        if self.capacity == 0 {
            return fresh.to_vec();
        }
        fresh
            .iter()
            .map(|img| {
                if self.buffer.len() < self.capacity {
                    self.buffer.push(img.clone());
                    img.clone()
                } else if r.random::<f64>() < 0.5 {
                    let k = r.random_range(0..self.buffer.len());
                    std::mem::replace(&mut self.buffer[k], img.clone())
                } else {
                    img.clone()
                }
            })
            .collect()
    }
}

pub fn pool_query(pool: &mut ImagePool, fresh: &[Grid]) -> Vec<Grid> {
    pool.query(fresh)
}
