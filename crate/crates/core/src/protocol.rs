//! Round-based worker/server state machines over an in-memory channel that
//! meters every transmitted bit.
//!
//! One round: workers run `H` local SGD steps, add their error residual,
//! vote on coordinates (scheme-dependent), the server builds and broadcasts
//! the consensus mask, workers send masked (optionally quantized) values, the
//! server averages them, and everyone applies the aggregate. Mask streams go
//! through the position codec in both directions; the ledger records the
//! exact encoded lengths, never estimates.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec;
use crate::config::ExperimentConfig;
use crate::data::{Dataset, Shard};
use crate::error::{Error, Result};
use crate::local::{derive_seed, local_steps, BatchSampler};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::sparsify::{
    accumulate, apply_mask, residual, top_k_mask, ErrorAccumulator, SparseMask, SparseUpdate,
};
use crate::vector::DenseVector;
use crate::voting::{ad_apply, ad_propose, select_random_weighted, select_topk_mask, tally_votes,
    AddDrop, VoteCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Dense 32-bit DSGD; no sparsification, no voting.
    BaselineDsgd,
    /// Per-worker top-K with error feedback; downlink carries the support
    /// union.
    TopkLocal,
    /// Majority voting with deterministic top-K selection at the server.
    Mv,
    /// Majority voting with random weighted selection at the server.
    MvRs,
    /// Majority voting with incremental add-drop votes.
    MvAd,
}

impl Scheme {
    pub fn is_sparse(self) -> bool {
        !matches!(self, Scheme::BaselineDsgd)
    }

    pub fn uses_consensus_mask(self) -> bool {
        matches!(self, Scheme::Mv | Scheme::MvRs | Scheme::MvAd)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::BaselineDsgd => "baseline-dsgd",
            Scheme::TopkLocal => "topk-local",
            Scheme::Mv => "mv",
            Scheme::MvRs => "mv-rs",
            Scheme::MvAd => "mv-ad",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-dsgd" => Ok(Scheme::BaselineDsgd),
            "topk-local" => Ok(Scheme::TopkLocal),
            "mv" => Ok(Scheme::Mv),
            "mv-rs" => Ok(Scheme::MvRs),
            "mv-ad" => Ok(Scheme::MvAd),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Wire block size for a sparsity ratio: the nominal block covers
/// `round(1 / ratio)` coordinates, so one block per expected nonzero.
pub fn block_size_for_ratio(ratio: f64) -> usize {
    (1.0 / ratio).round().max(1.0) as usize
}

/// Bit counters for one direction-split round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundBits {
    pub up_loc: u64,
    pub up_val: u64,
    pub up_overhead: u64,
    pub down_loc: u64,
    pub down_val: u64,
    pub down_overhead: u64,
}

impl RoundBits {
    pub fn up_total(&self) -> u64 {
        self.up_loc + self.up_val + self.up_overhead
    }

    pub fn down_total(&self) -> u64 {
        self.down_loc + self.down_val + self.down_overhead
    }

    fn add(&mut self, other: &RoundBits) {
        self.up_loc += other.up_loc;
        self.up_val += other.up_val;
        self.up_overhead += other.up_overhead;
        self.down_loc += other.down_loc;
        self.down_val += other.down_val;
        self.down_overhead += other.down_overhead;
    }
}

/// Per-round communication records plus running totals. Uplink figures are
/// per-worker (the maximum across workers, which coincides with every
/// worker's cost except under add-drop voting); downlink figures count the
/// broadcast once.
#[derive(Debug, Clone, Default)]
pub struct CommLedger {
    rounds: Vec<RoundBits>,
    totals: RoundBits,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, bits: RoundBits) {
        self.totals.add(&bits);
        self.rounds.push(bits);
    }

    pub fn rounds(&self) -> &[RoundBits] {
        &self.rounds
    }

    pub fn totals(&self) -> RoundBits {
        self.totals
    }

    /// Totals over rounds `[from, to)`.
    pub fn totals_in(&self, from: usize, to: usize) -> RoundBits {
        let mut acc = RoundBits::default();
        for r in &self.rounds[from.min(self.rounds.len())..to.min(self.rounds.len())] {
            acc.add(r);
        }
        acc
    }
}

/// One row of the per-round metrics file. The consensus mask rides along for
/// inspection but is not part of the CSV schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u32,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub mask_churn: u64,
    pub bits: RoundBits,
    pub mask: Option<SparseMask>,
}

impl RoundReport {
    pub const CSV_HEADER: &'static str = "round,train_loss,eval_loss,mask_churn,up_loc_bits,\
up_val_bits,up_overhead_bits,down_loc_bits,down_val_bits,down_overhead_bits";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.train_loss,
            self.eval_loss,
            self.mask_churn,
            self.bits.up_loc,
            self.bits.up_val,
            self.bits.up_overhead,
            self.bits.down_loc,
            self.bits.down_val,
            self.bits.down_overhead
        )
    }
}

/// Seed of worker `id`'s batch sampler for a given run seed; lets dense
/// reference implementations replay the exact batch sequences.
pub fn worker_sampler_seed(run_seed: u64, id: usize) -> u64 {
    derive_seed(run_seed, 0x1000 + id as u64)
}

#[derive(Debug, Clone)]
pub struct WorkerState<F> {
    pub id: usize,
    pub model: Model<F>,
    pub shard: Shard,
    pub error: ErrorAccumulator<F>,
    prev_vote: Option<SparseMask>,
    sampler: BatchSampler,
}

impl<F: Scalar> WorkerState<F> {
    pub fn new(
        id: usize,
        model: Model<F>,
        shard: Shard,
        batch_size: usize,
        run_seed: u64,
    ) -> Result<Self> {
        let dim = model.dim();
        let sampler = BatchSampler::new(shard.len(), batch_size, worker_sampler_seed(run_seed, id))?;
        Ok(Self {
            id,
            model,
            shard,
            error: ErrorAccumulator::zeros(dim),
            prev_vote: None,
            sampler,
        })
    }

    /// The worker's current vote under add-drop voting.
    pub fn prev_vote(&self) -> Option<&SparseMask> {
        self.prev_vote.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct ServerState<F> {
    pub scheme: Scheme,
    pub model: Model<F>,
    vote_sum: Option<VoteCount>,
    prev_mask: Option<SparseMask>,
    round: u32,
    rng: ChaCha8Rng,
}

impl<F: Scalar> ServerState<F> {
    pub fn new(scheme: Scheme, model: Model<F>, run_seed: u64) -> Self {
        Self {
            scheme,
            model,
            vote_sum: None,
            prev_mask: None,
            round: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(run_seed, 0x5e41)),
        }
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// The running vote sum maintained under add-drop voting.
    pub fn vote_sum(&self) -> Option<&VoteCount> {
        self.vote_sum.as_ref()
    }
}

/// Shared read-only data for a run.
pub struct SimData<'a, F> {
    pub train: &'a Dataset<F>,
    pub eval: Option<&'a Dataset<F>>,
}

/// Averages updates that share one mask: elementwise sum divided by the
/// worker count.
pub fn server_aggregate<F: Scalar>(
    updates: &[SparseUpdate<F>],
    n_workers: usize,
) -> Result<SparseUpdate<F>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::invalid("no updates to aggregate"))?;
    for u in updates {
        if u.mask != first.mask {
            return Err(Error::ProtocolViolation(
                "update supports do not match the consensus mask".to_string(),
            ));
        }
    }
    let scale = F::one() / F::from_config(n_workers as f64);
    let mut values = vec![F::zero(); first.values.len()];
    for u in updates {
        for (acc, &v) in values.iter_mut().zip(&u.values) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v *= scale;
    }
    SparseUpdate::new(first.mask.clone(), values)
}

/// Adds the aggregate into the masked coordinates; every other coordinate is
/// untouched.
pub fn apply_update<F: Scalar>(model: &mut Model<F>, agg: &SparseUpdate<F>) -> Result<()> {
    if agg.mask.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "update dim {} does not match model dim {}",
            agg.mask.dim(),
            model.dim()
        )));
    }
    let params = model.params_mut();
    for (&i, &v) in agg.mask.indices().iter().zip(&agg.values) {
        params[i as usize] += v;
    }
    Ok(())
}

struct VoteOutcome {
    /// Consensus mask, or `None` for schemes without one (dense rounds and
    /// per-worker top-K).
    consensus: Option<SparseMask>,
    per_worker_masks: Option<Vec<SparseMask>>,
    up_loc: Vec<u64>,
}

/// Executes one full protocol round and advances every piece of state.
pub fn run_round<F: Scalar>(
    server: &mut ServerState<F>,
    workers: &mut [WorkerState<F>],
    data: &SimData<'_, F>,
    cfg: &ExperimentConfig,
    ledger: &mut CommLedger,
) -> Result<RoundReport> {
    let n = workers.len();
    if n == 0 {
        return Err(Error::invalid("no workers"));
    }
    let dim = server.model.dim();
    let round = server.round;
    let lr = F::from_config(cfg.schedule().lr_at(round));
    // warmup rounds run dense: no sparsification, no quantization
    let compress = server.scheme.is_sparse() && round >= cfg.warmup_rounds;
    let quantize = compress.then_some(cfg.q).flatten();
    let k = cfg.k();

    // -- local compute phase --
    let mut delta_bars = Vec::with_capacity(n);
    for w in workers.iter_mut() {
        let delta = local_steps(&w.model, data.train, &w.shard, cfg.local_steps, lr, &mut w.sampler)?;
        let delta_bar = if compress && cfg.error_feedback {
            accumulate(&delta, &w.error)?
        } else {
            delta
        };
        delta_bars.push(delta_bar);
    }

    // -- voting phase --
    let vote = if !compress {
        VoteOutcome {
            consensus: None,
            per_worker_masks: None,
            up_loc: vec![0; n],
        }
    } else {
        match server.scheme {
            Scheme::BaselineDsgd => unreachable!("baseline rounds are dense"),
            Scheme::Mv | Scheme::MvRs => {
                vote_full(server, workers, &delta_bars, k, cfg.phi, dim)?
            }
            Scheme::MvAd => vote_add_drop(server, workers, &delta_bars, k, cfg)?,
            Scheme::TopkLocal => {
                let mut masks = Vec::with_capacity(n);
                let mut up_loc = Vec::with_capacity(n);
                let bs = block_size_for_ratio(cfg.phi);
                for bar in &delta_bars {
                    let mask = top_k_mask(bar, k)?;
                    let stream = codec::encode_mask_blocked(&mask, bs)?;
                    up_loc.push(stream.len() as u64);
                    masks.push(codec::decode_mask_blocked(&stream, dim, bs)?);
                }
                VoteOutcome {
                    consensus: None,
                    per_worker_masks: Some(masks),
                    up_loc,
                }
            }
        }
    };

    // -- sparse value exchange, uplink --
    let full_mask = SparseMask::full(dim);
    let mut received = Vec::with_capacity(n);
    let mut up_val = vec![0u64; n];
    let mut up_overhead = vec![0u64; n];
    for (i, bar) in delta_bars.iter().enumerate() {
        let mask = match (&vote.consensus, &vote.per_worker_masks) {
            (Some(m), _) => m,
            (None, Some(ms)) => &ms[i],
            (None, None) => &full_mask,
        };
        let sent = apply_mask(bar, mask)?;
        if let Some(m) = &vote.consensus {
            if !sent.mask.is_subset_of(m) {
                return Err(Error::ProtocolViolation(format!(
                    "worker {i} support is not contained in the consensus mask"
                )));
            }
        }
        let effective = match quantize {
            Some(q) => {
                let block = match codec::quantize_values(&sent.values, q) {
                    Ok(b) => b,
                    Err(Error::DegenerateInput(_)) => {
                        codec::QuantizedBlock::all_zero(sent.values.len(), q)?
                    }
                    Err(e) => return Err(e),
                };
                up_val[i] = block.codes().len() as u64;
                up_overhead[i] = block.means_stream().len() as u64;
                SparseUpdate::new(mask.clone(), block.dequantize()?)?
            }
            None => {
                up_val[i] = codec::encode_values_f32(&sent.values).len() as u64;
                sent.clone()
            }
        };
        // error feedback: by default the residual tracks the sparsification
        // error only; opt-in, it also folds in the quantization error
        if compress && cfg.error_feedback {
            let fed_back = if cfg.quant_error_feedback { &effective } else { &sent };
            workers[i].error = ErrorAccumulator {
                residual: residual(bar, fed_back)?,
            };
        }
        received.push(effective);
    }

    // -- aggregation and downlink --
    let mut down = RoundBits::default();
    let agg = match server.scheme {
        Scheme::TopkLocal if compress => {
            // dense accumulate over the union of supports
            let mut acc = DensityAcc::new(dim);
            for u in &received {
                acc.add(u);
            }
            let agg = acc.mean(n)?;
            let ratio = (cfg.phi * n as f64).min(1.0);
            let bs = block_size_for_ratio(ratio);
            let stream = codec::encode_mask_blocked(&agg.mask, bs)?;
            down.down_loc = stream.len() as u64;
            let decoded = codec::decode_mask_blocked(&stream, dim, bs)?;
            debug_assert_eq!(decoded, agg.mask);
            agg
        }
        _ => server_aggregate(&received, n)?,
    };
    if let Some(m) = &vote.consensus {
        // broadcast of the consensus mask, decoded on the worker side
        let bs = block_size_for_ratio(cfg.phi);
        let stream = codec::encode_mask_blocked(m, bs)?;
        down.down_loc = stream.len() as u64;
        let decoded = codec::decode_mask_blocked(&stream, dim, bs)?;
        if decoded != *m {
            return Err(Error::ProtocolViolation(
                "broadcast mask did not survive the codec".to_string(),
            ));
        }
    }
    down.down_val = codec::encode_values_f32(&agg.values).len() as u64;

    apply_update(&mut server.model, &agg)?;
    for w in workers.iter_mut() {
        apply_update(&mut w.model, &agg)?;
        debug_assert!(w.model.params().bitwise_eq(server.model.params()));
    }

    // -- bookkeeping --
    let churn = match (&vote.consensus, &server.prev_mask) {
        (Some(cur), Some(prev)) => cur.sym_diff_len(prev) as u64,
        _ => 0,
    };
    if let Some(cur) = &vote.consensus {
        server.prev_mask = Some(cur.clone());
    }

    let bits = RoundBits {
        up_loc: vote.up_loc.iter().copied().max().unwrap_or(0),
        up_val: up_val.iter().copied().max().unwrap_or(0),
        up_overhead: up_overhead.iter().copied().max().unwrap_or(0),
        down_loc: down.down_loc,
        down_val: down.down_val,
        down_overhead: down.down_overhead,
    };
    ledger.record(bits);

    let all_train: Vec<usize> = (0..data.train.len()).collect();
    let train_loss = server
        .model
        .data_loss(data.train, &all_train)?
        .to_f64()
        .unwrap_or(f64::NAN);
    let eval_loss = match data.eval {
        Some(eval) => {
            let all: Vec<usize> = (0..eval.len()).collect();
            server.model.data_loss(eval, &all)?.to_f64().unwrap_or(f64::NAN)
        }
        None => train_loss,
    };

    server.round += 1;
    Ok(RoundReport {
        round,
        train_loss,
        eval_loss,
        mask_churn: churn,
        bits,
        mask: vote.consensus,
    })
}

/// Full-support voting (plain majority voting and random-weighted selection).
fn vote_full<F: Scalar>(
    server: &mut ServerState<F>,
    workers: &mut [WorkerState<F>],
    delta_bars: &[DenseVector<F>],
    k: usize,
    phi: f64,
    dim: usize,
) -> Result<VoteOutcome> {
    let bs = block_size_for_ratio(phi);
    let mut up_loc = Vec::with_capacity(delta_bars.len());
    let mut votes = Vec::with_capacity(delta_bars.len());
    for bar in delta_bars {
        let mask = top_k_mask(bar, k)?;
        let stream = codec::encode_mask_blocked(&mask, bs)?;
        up_loc.push(stream.len() as u64);
        votes.push(codec::decode_mask_blocked(&stream, dim, bs)?);
    }
    let counts = tally_votes(&votes)?;
    let consensus = match server.scheme {
        Scheme::MvRs => select_random_weighted(&counts, k, &mut server.rng)?,
        _ => select_topk_mask(&counts, k)?,
    };
    // under add-drop this same path bootstraps the vote state
    if server.scheme == Scheme::MvAd {
        for (w, vote) in workers.iter_mut().zip(votes) {
            w.prev_vote = Some(vote);
        }
        server.vote_sum = Some(counts);
    }
    Ok(VoteOutcome {
        consensus: Some(consensus),
        per_worker_masks: None,
        up_loc,
    })
}

/// Incremental voting: each worker moves at most `k_ad` indices of its
/// previous vote; the server maintains the cumulative count.
fn vote_add_drop<F: Scalar>(
    server: &mut ServerState<F>,
    workers: &mut [WorkerState<F>],
    delta_bars: &[DenseVector<F>],
    k: usize,
    cfg: &ExperimentConfig,
) -> Result<VoteOutcome> {
    let dim = server.model.dim();
    if server.vote_sum.is_none() {
        // first compressed round: full votes initialize the running sum
        return vote_full(server, workers, delta_bars, k, cfg.phi, dim);
    }
    let k_ad = cfg.k_ad();
    let phi_ad = cfg
        .phi_ad
        .ok_or_else(|| Error::invalid("phi_ad required for add-drop voting"))?;
    let bs = block_size_for_ratio(phi_ad);
    let mut up_loc = Vec::with_capacity(delta_bars.len());
    let mut changes = Vec::with_capacity(delta_bars.len());
    for (w, bar) in workers.iter_mut().zip(delta_bars) {
        let prev = w
            .prev_vote
            .as_ref()
            .ok_or_else(|| Error::ProtocolViolation("worker vote not initialized".into()))?;
        let cur = top_k_mask(bar, k)?;
        let proposal = ad_propose(prev, &cur, bar, k_ad)?;
        let adds_stream = codec::encode_mask_blocked(&proposal.adds, bs)?;
        let drops_stream = codec::encode_mask_blocked(&proposal.drops, bs)?;
        up_loc.push((adds_stream.len() + drops_stream.len()) as u64);
        let received = AddDrop {
            adds: codec::decode_mask_blocked(&adds_stream, dim, bs)?,
            drops: codec::decode_mask_blocked(&drops_stream, dim, bs)?,
        };
        w.prev_vote = Some(prev.union(&received.adds).difference(&received.drops));
        changes.push(received);
    }
    let sum = server.vote_sum.as_mut().expect("checked above");
    ad_apply(sum, &changes)?;
    let consensus = select_topk_mask(sum, k)?;
    Ok(VoteOutcome {
        consensus: Some(consensus),
        per_worker_masks: None,
        up_loc,
    })
}

/// Dense accumulator used when worker supports differ (per-worker top-K).
struct DensityAcc<F> {
    sum: DenseVector<F>,
    support: SparseMask,
}

impl<F: Scalar> DensityAcc<F> {
    fn new(dim: usize) -> Self {
        Self {
            sum: DenseVector::zeros(dim),
            support: SparseMask::empty(dim),
        }
    }

    fn add(&mut self, update: &SparseUpdate<F>) {
        for (&i, &v) in update.mask.indices().iter().zip(&update.values) {
            self.sum[i as usize] += v;
        }
        self.support = self.support.union(&update.mask);
    }

    fn mean(self, n_workers: usize) -> Result<SparseUpdate<F>> {
        let scale = F::one() / F::from_config(n_workers as f64);
        apply_mask(&self.sum.scale(scale), &self.support)
    }
}
