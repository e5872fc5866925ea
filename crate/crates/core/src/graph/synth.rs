use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{split_train_test, Graph, SplitSpec};
use crate::numerics::Matrix;

/// Stochastic block model with block-indicator features.
///
/// Node `i` belongs to block `i / per_block`; its label is the block id and
/// its feature vector is `signal · e_block + N(0, noise_std²)` noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub blocks: usize,
    pub per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub noise_std: f64,
    pub signal: f64,
    pub train_frac: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            blocks: 5,
            per_block: 100,
            p_in: 0.1,
            p_out: 0.005,
            feat_dim: 16,
            noise_std: 1.0,
            signal: 1.0,
            train_frac: 0.9,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.per_block == 0 {
            return Err(Error::InvalidRequest(
                "sbm needs at least one non-empty block".into(),
            ));
        }
        if self.feat_dim < self.blocks {
            return Err(Error::InvalidRequest(format!(
                "feat_dim {} cannot hold {} block indicators",
                self.feat_dim, self.blocks
            )));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::InvalidRequest(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidRequest(
                "noise_std must be finite and >= 0".into(),
            ));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidRequest(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            )));
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<(Graph, SplitSpec)> {
        self.validate()?;
        let n = self.blocks * self.per_block;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = |i: usize| i / self.per_block;

        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if block(u) == block(v) {
                    self.p_in
                } else {
                    self.p_out
                };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }

        let noise =
            Normal::new(0.0, self.noise_std).map_err(|e| Error::InvalidRequest(e.to_string()))?;
        let mut features = Matrix::zeros(n, self.feat_dim);
        for i in 0..n {
            for (k, x) in features.row_mut(i).iter_mut().enumerate() {
                *x = noise.sample(&mut rng);
                if k == block(i) {
                    *x += self.signal;
                }
            }
        }
        let labels = (0..n).map(block).collect();
        let name = format!("sbm-{}x{}", self.blocks, self.per_block);
        let g = Graph::new(name, features, labels, self.blocks, edges)?;
        let split = split_train_test(n, self.train_frac, seed.wrapping_add(0x5eed))?;
        Ok((g, split))
    }
}

/// SBM with unit signal, unit noise and a 90/10 split.
pub fn gen_sbm(
    blocks: usize,
    per_block: usize,
    p_in: f64,
    p_out: f64,
    feat_dim: usize,
    seed: u64,
) -> Result<(Graph, SplitSpec)> {
    SbmConfig {
        blocks,
        per_block,
        p_in,
        p_out,
        feat_dim,
        ..SbmConfig::default()
    }
    .generate(seed)
}
