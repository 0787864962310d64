//! Synthetic datasets and IID sharding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::DenseVector;

/// Row-major feature matrix plus a target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    inputs: Vec<F>,
    targets: Vec<F>,
    input_dim: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(inputs: Vec<F>, targets: Vec<F>, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if inputs.len() != targets.len() * input_dim {
            return Err(Error::invalid(format!(
                "inputs length {} does not match {} samples x {} features",
                inputs.len(),
                targets.len(),
                input_dim
            )));
        }
        Ok(Self {
            inputs,
            targets,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> F {
        self.targets[i]
    }

    /// Maps targets to 0/1 by sign; lets the logistic model train on the
    /// regression generator's output.
    pub fn binarize_targets(&mut self) {
        for t in &mut self.targets {
            *t = if *t > F::zero() { F::one() } else { F::zero() };
        }
    }
}

/// The sample indices owned by one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub owner: usize,
    indices: Vec<u32>,
}

impl Shard {
    pub fn new(owner: usize, indices: Vec<u32>) -> Self {
        Self { owner, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn sample(&self, pos: usize) -> usize {
        self.indices[pos] as usize
    }
}

/// Gaussian features, targets `X . truth + noise`; deterministic in `seed`.
pub fn make_synthetic_regression<F: Scalar>(
    seed: u64,
    n: usize,
    d_in: usize,
    noise_std: f64,
) -> Result<(Dataset<F>, DenseVector<F>)> {
    if n == 0 || d_in == 0 {
        return Err(Error::invalid("n and d_in must be positive"));
    }
    if noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = DenseVector::from_vec(
        (0..d_in)
            .map(|_| F::sample_standard_normal(&mut rng))
            .collect(),
    );
    let data = synthetic_regression_from_truth(&mut rng, n, &truth, noise_std)?;
    Ok((data, truth))
}

/// Fresh samples from an existing ground-truth vector (e.g. an eval split).
pub fn make_eval_split<F: Scalar>(
    seed: u64,
    n: usize,
    truth: &DenseVector<F>,
    noise_std: f64,
) -> Result<Dataset<F>> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthetic_regression_from_truth(&mut rng, n, truth, noise_std)
}

fn synthetic_regression_from_truth<F: Scalar>(
    rng: &mut ChaCha8Rng,
    n: usize,
    truth: &DenseVector<F>,
    noise_std: f64,
) -> Result<Dataset<F>> {
    let d_in = truth.dim();
    let noise = F::from_config(noise_std);
    let mut inputs = Vec::with_capacity(n * d_in);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let start = inputs.len();
        for _ in 0..d_in {
            inputs.push(F::sample_standard_normal(rng));
        }
        let x = &inputs[start..];
        let mut y = x
            .iter()
            .zip(truth.iter())
            .map(|(a, b)| *a * *b)
            .sum::<F>();
        if noise_std > 0.0 {
            y += noise * F::sample_standard_normal(rng);
        }
        targets.push(y);
    }
    Dataset::new(inputs, targets, d_in)
}

/// Random permutation split round-robin into `n_workers` disjoint shards.
pub fn shard_iid<F: Scalar>(
    dataset: &Dataset<F>,
    n_workers: usize,
    seed: u64,
) -> Result<Vec<Shard>> {
    if n_workers == 0 || n_workers > dataset.len() {
        return Err(Error::invalid(format!(
            "worker count {n_workers} out of range for {} samples",
            dataset.len()
        )));
    }
    let mut perm: Vec<u32> = (0..dataset.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut shards: Vec<Shard> = (0..n_workers)
        .map(|owner| Shard {
            owner,
            indices: Vec::with_capacity(dataset.len() / n_workers + 1),
        })
        .collect();
    for (i, idx) in perm.into_iter().enumerate() {
        shards[i % n_workers].indices.push(idx);
    }
    Ok(shards)
}
