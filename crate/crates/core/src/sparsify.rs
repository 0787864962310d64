//! Sparsity masks, magnitude-based selection, and error-feedback bookkeeping.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::DenseVector;

/// A sorted set of coordinate indices in `[0, dim)`; the 0/1 mask in sparse
/// form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMask {
    dim: usize,
    indices: Vec<u32>,
}

impl SparseMask {
    /// Builds a mask from arbitrary indices; sorts and deduplicates.
    pub fn from_indices(dim: usize, mut indices: Vec<u32>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= dim) {
            return Err(Error::invalid(format!(
                "mask index {bad} out of range for dim {dim}"
            )));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { dim, indices })
    }

    /// Builds from indices already known to be strictly increasing and in
    /// range.
    pub(crate) fn from_sorted(dim: usize, indices: Vec<u32>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().is_none_or(|&i| (i as usize) < dim));
        Self { dim, indices }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
        }
    }

    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            indices: (0..dim as u32).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn contains(&self, index: u32) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &SparseMask) -> bool {
        self.dim == other.dim && self.indices.iter().all(|&i| other.contains(i))
    }

    /// Indices present in `self` but not in `other`.
    pub fn difference(&self, other: &SparseMask) -> SparseMask {
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&i| !other.contains(i))
            .collect();
        SparseMask {
            dim: self.dim,
            indices,
        }
    }

    pub fn union(&self, other: &SparseMask) -> SparseMask {
        let mut merged = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                Ordering::Less => {
                    merged.push(self.indices[a]);
                    a += 1;
                }
                Ordering::Greater => {
                    merged.push(other.indices[b]);
                    b += 1;
                }
                Ordering::Equal => {
                    merged.push(self.indices[a]);
                    a += 1;
                    b += 1;
                }
            }
        }
        merged.extend_from_slice(&self.indices[a..]);
        merged.extend_from_slice(&other.indices[b..]);
        SparseMask {
            dim: self.dim,
            indices: merged,
        }
    }

    /// Cardinality of the symmetric difference; the round-to-round churn
    /// measure.
    pub fn sym_diff_len(&self, other: &SparseMask) -> usize {
        let shared = self.indices.iter().filter(|&&i| other.contains(i)).count();
        self.len() + other.len() - 2 * shared
    }
}

/// A mask plus the values at the masked positions; the transmitted payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate<F> {
    pub mask: SparseMask,
    pub values: Vec<F>,
}

impl<F: Scalar> SparseUpdate<F> {
    pub fn new(mask: SparseMask, values: Vec<F>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::invalid(format!(
                "value count {} does not match mask cardinality {}",
                values.len(),
                mask.len()
            )));
        }
        Ok(Self { mask, values })
    }

    /// Expands to a dense vector with zeros off the mask.
    pub fn densify(&self) -> DenseVector<F> {
        let mut out = DenseVector::zeros(self.mask.dim());
        for (&i, &v) in self.mask.indices().iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }
}

/// Per-worker residual of untransmitted update mass.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator<F> {
    pub residual: DenseVector<F>,
}

impl<F: Scalar> ErrorAccumulator<F> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            residual: DenseVector::zeros(dim),
        }
    }
}

/// Indices of the `k` largest-magnitude entries; ties break toward the lower
/// index.
pub fn top_k_mask<F: Scalar>(v: &DenseVector<F>, k: usize) -> Result<SparseMask> {
    if k < 1 || k > v.dim() {
        return Err(Error::invalid(format!(
            "k = {k} out of range for dim {}",
            v.dim()
        )));
    }
    let candidates: Vec<u32> = (0..v.dim() as u32).collect();
    Ok(select_by_magnitude(v, k, candidates, Extreme::Largest))
}

/// The `k` smallest-magnitude indices within `support`; ties toward the lower
/// index.
pub fn bottom_k_mask<F: Scalar>(
    v: &DenseVector<F>,
    k: usize,
    support: &SparseMask,
) -> Result<SparseMask> {
    if support.dim() != v.dim() {
        return Err(Error::invalid("support dim does not match vector dim"));
    }
    if k > support.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds support cardinality {}",
            support.len()
        )));
    }
    Ok(select_by_magnitude(
        v,
        k,
        support.indices().to_vec(),
        Extreme::Smallest,
    ))
}

/// Like [`top_k_mask`] but restricted to `support`.
pub fn top_k_mask_within<F: Scalar>(
    v: &DenseVector<F>,
    k: usize,
    support: &SparseMask,
) -> Result<SparseMask> {
    if support.dim() != v.dim() {
        return Err(Error::invalid("support dim does not match vector dim"));
    }
    if k > support.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds support cardinality {}",
            support.len()
        )));
    }
    Ok(select_by_magnitude(
        v,
        k,
        support.indices().to_vec(),
        Extreme::Largest,
    ))
}

#[derive(Clone, Copy)]
enum Extreme {
    Largest,
    Smallest,
}

fn select_by_magnitude<F: Scalar>(
    v: &DenseVector<F>,
    k: usize,
    mut candidates: Vec<u32>,
    extreme: Extreme,
) -> SparseMask {
    let dim = v.dim();
    if k == 0 {
        return SparseMask::empty(dim);
    }
    let magnitude = |i: u32| v[i as usize].abs();
    let better = |a: u32, b: u32| -> Ordering {
        let (ma, mb) = (magnitude(a), magnitude(b));
        let primary = match extreme {
            Extreme::Largest => mb.partial_cmp(&ma),
            Extreme::Smallest => ma.partial_cmp(&mb),
        };
        primary.unwrap_or(Ordering::Equal).then(a.cmp(&b))
    };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, |&a, &b| better(a, b));
        candidates.truncate(k);
    }
    candidates.sort_unstable();
    SparseMask::from_sorted(dim, candidates)
}

/// Extracts the masked values; densifying the result and adding the residual
/// against `v` reconstructs `v` exactly.
pub fn apply_mask<F: Scalar>(v: &DenseVector<F>, mask: &SparseMask) -> Result<SparseUpdate<F>> {
    if mask.dim() != v.dim() {
        return Err(Error::invalid(format!(
            "mask dim {} does not match vector dim {}",
            mask.dim(),
            v.dim()
        )));
    }
    let values = mask.indices().iter().map(|&i| v[i as usize]).collect();
    Ok(SparseUpdate {
        mask: mask.clone(),
        values,
    })
}

/// Error-feedback accumulation: `delta + residual`.
pub fn accumulate<F: Scalar>(
    delta: &DenseVector<F>,
    acc: &ErrorAccumulator<F>,
) -> Result<DenseVector<F>> {
    delta.add(&acc.residual)
}

/// The next residual: `delta_bar` minus whatever `sent` delivered. With
/// unquantized values the masked positions become exactly zero; with
/// quantized values they hold the quantization error.
pub fn residual<F: Scalar>(
    delta_bar: &DenseVector<F>,
    sent: &SparseUpdate<F>,
) -> Result<DenseVector<F>> {
    if sent.mask.dim() != delta_bar.dim() {
        return Err(Error::invalid("sent mask dim does not match delta dim"));
    }
    let mut out = delta_bar.clone();
    for (&i, &v) in sent.mask.indices().iter().zip(&sent.values) {
        out[i as usize] -= v;
    }
    Ok(out)
}
