//! Consensus-mask construction: vote tallies, top-K and random-weighted
//! selection, and the incremental add-drop vote updates.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparsify::{bottom_k_mask, top_k_mask_within, SparseMask};
use crate::vector::DenseVector;

/// Per-coordinate vote totals held by the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteCount {
    dim: usize,
    counts: Vec<u32>,
}

impl VoteCount {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            counts: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// One worker's incremental vote change: indices entering and leaving its
/// vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddDrop {
    pub adds: SparseMask,
    pub drops: SparseMask,
}

/// Counts, for every coordinate, how many masks contain it.
pub fn tally_votes(masks: &[SparseMask]) -> Result<VoteCount> {
    let dim = match masks.first() {
        Some(m) => m.dim(),
        None => return Err(Error::invalid("no masks to tally")),
    };
    let mut counts = vec![0u32; dim];
    for mask in masks {
        if mask.dim() != dim {
            return Err(Error::invalid("masks have mismatched dims"));
        }
        for &i in mask.indices() {
            counts[i as usize] += 1;
        }
    }
    Ok(VoteCount { dim, counts })
}

/// The `k` most-voted coordinates; ties break toward the lower index.
pub fn select_topk_mask(counts: &VoteCount, k: usize) -> Result<SparseMask> {
    if k < 1 || k > counts.dim {
        return Err(Error::invalid(format!(
            "k = {k} out of range for dim {}",
            counts.dim
        )));
    }
    let mut order: Vec<u32> = (0..counts.dim as u32).collect();
    let rank = |a: u32, b: u32| {
        let (ca, cb) = (counts.counts[a as usize], counts.counts[b as usize]);
        cb.cmp(&ca).then(a.cmp(&b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, |&a, &b| rank(a, b));
        order.truncate(k);
    }
    order.sort_unstable();
    SparseMask::from_indices(counts.dim, order)
}

/// Samples up to `k` distinct coordinates without replacement, each draw
/// proportional to the remaining vote counts. Returns fewer than `k` indices
/// only when fewer coordinates have positive counts.
pub fn select_random_weighted<R: Rng + ?Sized>(
    counts: &VoteCount,
    k: usize,
    rng: &mut R,
) -> Result<SparseMask> {
    if k < 1 || k > counts.dim {
        return Err(Error::invalid(format!(
            "k = {k} out of range for dim {}",
            counts.dim
        )));
    }
    let mut total = counts.total();
    if total == 0 {
        return Err(Error::invalid("all vote counts are zero"));
    }
    // Fenwick tree over the counts supports O(log d) weighted draws and
    // removals.
    let mut tree = Fenwick::from_counts(&counts.counts);
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k && total > 0 {
        let u = rng.random_range(0..total);
        let idx = tree.find_prefix(u);
        let weight = tree.value(idx);
        debug_assert!(weight > 0);
        tree.add(idx, -(weight as i64));
        total -= weight;
        picked.push(idx as u32);
    }
    SparseMask::from_indices(counts.dim, picked)
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn from_counts(counts: &[u32]) -> Self {
        let n = counts.len();
        let mut tree = vec![0u64; n + 1];
        for (i, &c) in counts.iter().enumerate() {
            let mut pos = i + 1;
            // direct construction: push each value up its update path
            while pos <= n {
                tree[pos] += c as u64;
                pos += pos & pos.wrapping_neg();
            }
        }
        Self { tree }
    }

    fn add(&mut self, index: usize, delta: i64) {
        let mut pos = index + 1;
        while pos < self.tree.len() {
            self.tree[pos] = (self.tree[pos] as i64 + delta) as u64;
            pos += pos & pos.wrapping_neg();
        }
    }

    fn prefix(&self, mut pos: usize) -> u64 {
        let mut sum = 0;
        while pos > 0 {
            sum += self.tree[pos];
            pos -= pos & pos.wrapping_neg();
        }
        sum
    }

    fn value(&self, index: usize) -> u64 {
        self.prefix(index + 1) - self.prefix(index)
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find_prefix(&self, mut target: u64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }
}

/// Builds a worker's add/drop proposal: the strongest new top-K entrants and
/// the weakest leavers, at most `k_ad` of each and always in equal number.
pub fn ad_propose<F: Scalar>(
    prev_vote: &SparseMask,
    cur_topk: &SparseMask,
    delta_bar: &DenseVector<F>,
    k_ad: usize,
) -> Result<AddDrop> {
    if prev_vote.len() != cur_topk.len() {
        return Err(Error::invalid(format!(
            "previous vote cardinality {} does not match current top-k {}",
            prev_vote.len(),
            cur_topk.len()
        )));
    }
    if prev_vote.dim() != cur_topk.dim() || prev_vote.dim() != delta_bar.dim() {
        return Err(Error::invalid("mask/vector dims mismatch"));
    }
    let add_pool = cur_topk.difference(prev_vote);
    let drop_pool = prev_vote.difference(cur_topk);
    debug_assert_eq!(add_pool.len(), drop_pool.len());
    let change = k_ad.min(add_pool.len());
    let adds = top_k_mask_within(delta_bar, change, &add_pool)?;
    let drops = bottom_k_mask(delta_bar, change, &drop_pool)?;
    Ok(AddDrop { adds, drops })
}

/// Applies every worker's add/drop deltas to the running vote sum.
pub fn ad_apply(sum: &mut VoteCount, changes: &[AddDrop]) -> Result<()> {
    for change in changes {
        if change.adds.dim() != sum.dim || change.drops.dim() != sum.dim {
            return Err(Error::invalid("add/drop dim does not match vote sum"));
        }
        for &i in change.drops.indices() {
            let c = &mut sum.counts[i as usize];
            if *c == 0 {
                return Err(Error::ProtocolViolation(format!(
                    "drop for index {i} would take its vote count below zero"
                )));
            }
            *c -= 1;
        }
        for &i in change.adds.indices() {
            sum.counts[i as usize] += 1;
        }
    }
    Ok(())
}
