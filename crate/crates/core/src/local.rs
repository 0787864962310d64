//! Local SGD: per-worker mini-batch sampling and the H-step update loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Shard};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::vector::DenseVector;

/// Derives an independent sub-seed from a run seed and a role tag
/// (splitmix64 steps; stable across platforms).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Epoch-wise sampling without replacement inside one shard: the shard order
/// is reshuffled by the worker's own generator each time it is exhausted.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<u32>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(shard_len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if shard_len == 0 {
            return Err(Error::invalid("shard is empty"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        let mut sampler = Self {
            order: (0..shard_len as u32).collect(),
            cursor: 0,
            batch_size: batch_size.min(shard_len),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        sampler.reshuffle();
        Ok(sampler)
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    /// Next mini-batch as dataset indices. The final batch of an epoch may be
    /// smaller than `batch_size`.
    pub fn next_batch(&mut self, shard: &Shard) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.reshuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end]
            .iter()
            .map(|&pos| shard.sample(pos as usize))
            .collect();
        self.cursor = end;
        batch
    }
}

/// Runs `h` SGD steps from the model's current parameters over batches drawn
/// from `shard`, and returns the accumulated parameter difference. The input
/// model is not mutated; the sampler's state advances.
pub fn local_steps<F: Scalar>(
    model: &Model<F>,
    data: &Dataset<F>,
    shard: &Shard,
    h: u32,
    lr: F,
    sampler: &mut BatchSampler,
) -> Result<DenseVector<F>> {
    if h < 1 {
        return Err(Error::invalid("local step count must be at least 1"));
    }
    if lr < F::zero() {
        return Err(Error::invalid("learning rate must be nonnegative"));
    }
    let mut scratch = model.clone();
    let mut delta = DenseVector::zeros(model.dim());
    for _ in 0..h {
        let batch = sampler.next_batch(shard);
        let grad = scratch.gradient(data, &batch)?;
        let params = scratch.params_mut();
        for i in 0..grad.dim() {
            let step = lr * grad[i];
            params[i] -= step;
            delta[i] -= step;
        }
    }
    Ok(delta)
}
