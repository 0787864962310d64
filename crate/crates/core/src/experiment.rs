//! Drives full training runs from a config and writes the metrics files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::data::{make_eval_split, make_synthetic_regression, shard_iid, Dataset};
use crate::error::Result;
use crate::local::derive_seed;
use crate::model::{Model, ModelKind, ModelShape};
use crate::protocol::{run_round, CommLedger, RoundReport, ServerState, SimData, WorkerState};
use crate::scalar::Scalar;

const SHARD_SALT: u64 = 0x5aad;
const EVAL_SALT: u64 = 0xe7a1;
const MODEL_SALT: u64 = 0x30de1;

/// An in-memory simulation: server, workers, data, and the ledger. Tests can
/// step it round by round and inspect protocol state between rounds.
pub struct SimRun<F: Scalar> {
    pub cfg: ExperimentConfig,
    pub server: ServerState<F>,
    pub workers: Vec<WorkerState<F>>,
    pub ledger: CommLedger,
    pub reports: Vec<RoundReport>,
    train: Dataset<F>,
    eval: Option<Dataset<F>>,
}

impl<F: Scalar> SimRun<F> {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (mut train, truth) =
            make_synthetic_regression::<F>(cfg.seed, cfg.samples, cfg.input_dim, cfg.noise_std)?;
        let mut eval = if cfg.eval_samples > 0 {
            Some(make_eval_split(
                derive_seed(cfg.seed, EVAL_SALT),
                cfg.eval_samples,
                &truth,
                cfg.noise_std,
            )?)
        } else {
            None
        };
        if cfg.model == ModelKind::LogisticRegression {
            train.binarize_targets();
            if let Some(e) = &mut eval {
                e.binarize_targets();
            }
        }

        let shape = match cfg.model {
            ModelKind::Mlp1Hidden => ModelShape::mlp(cfg.input_dim, cfg.hidden_dim),
            _ => ModelShape::vector(cfg.input_dim),
        };
        let model = Model::<F>::seeded_init(
            cfg.model,
            shape,
            F::from_config(cfg.weight_decay),
            derive_seed(cfg.seed, MODEL_SALT),
        );

        let shards = shard_iid(&train, cfg.workers, derive_seed(cfg.seed, SHARD_SALT))?;
        let workers = shards
            .into_iter()
            .map(|shard| {
                WorkerState::new(shard.owner, model.clone(), shard, cfg.batch_size, cfg.seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let server = ServerState::new(cfg.scheme, model, cfg.seed);

        Ok(Self {
            cfg: cfg.clone(),
            server,
            workers,
            ledger: CommLedger::new(),
            reports: Vec::with_capacity(cfg.rounds as usize),
            train,
            eval,
        })
    }

    pub fn train_data(&self) -> &Dataset<F> {
        &self.train
    }

    /// Runs one round and records its report.
    pub fn step(&mut self) -> Result<RoundReport> {
        let data = SimData {
            train: &self.train,
            eval: self.eval.as_ref(),
        };
        let report = run_round(
            &mut self.server,
            &mut self.workers,
            &data,
            &self.cfg,
            &mut self.ledger,
        )?;
        self.reports.push(report.clone());
        Ok(report)
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        for _ in self.reports.len()..self.cfg.rounds as usize {
            self.step()?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        let totals = self.ledger.totals();
        let warmup = self
            .ledger
            .totals_in(0, self.cfg.warmup_rounds.min(self.cfg.rounds) as usize);
        let steady = self
            .ledger
            .totals_in(self.cfg.warmup_rounds as usize, self.cfg.rounds as usize);
        let d = self.cfg.param_dim() as f64;
        let h = self.cfg.local_steps as f64;
        let dense_bits = |rounds: f64| 32.0 * d * h * rounds;
        let rounds = self.reports.len() as f64;
        let steady_rounds = rounds - self.cfg.warmup_rounds.min(self.cfg.rounds) as f64;
        let last = self.reports.last();
        Summary {
            scheme: self.cfg.scheme.to_string(),
            rounds: self.reports.len() as u32,
            param_dim: self.cfg.param_dim(),
            local_steps: self.cfg.local_steps,
            final_train_loss: last.map_or(f64::NAN, |r| r.train_loss),
            final_eval_loss: last.map_or(f64::NAN, |r| r.eval_loss),
            up_loc_bits: totals.up_loc,
            up_val_bits: totals.up_val,
            up_overhead_bits: totals.up_overhead,
            down_loc_bits: totals.down_loc,
            down_val_bits: totals.down_val,
            down_overhead_bits: totals.down_overhead,
            warmup_up_bits: warmup.up_total(),
            warmup_down_bits: warmup.down_total(),
            compression_up: dense_bits(rounds) / totals.up_total() as f64,
            compression_down: dense_bits(rounds) / totals.down_total() as f64,
            steady_compression_up: dense_bits(steady_rounds) / steady.up_total() as f64,
            steady_compression_down: dense_bits(steady_rounds) / steady.down_total() as f64,
        }
    }
}

/// Final record of a run: losses, cumulative per-direction bits, and realized
/// compression against 32-bit dense transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scheme: String,
    pub rounds: u32,
    pub param_dim: usize,
    pub local_steps: u32,
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
    pub up_loc_bits: u64,
    pub up_val_bits: u64,
    pub up_overhead_bits: u64,
    pub down_loc_bits: u64,
    pub down_val_bits: u64,
    pub down_overhead_bits: u64,
    pub warmup_up_bits: u64,
    pub warmup_down_bits: u64,
    pub compression_up: f64,
    pub compression_down: f64,
    pub steady_compression_up: f64,
    pub steady_compression_down: f64,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("scheme", self.scheme.clone());
        push("rounds", self.rounds.to_string());
        push("param_dim", self.param_dim.to_string());
        push("local_steps", self.local_steps.to_string());
        push("final_train_loss", self.final_train_loss.to_string());
        push("final_eval_loss", self.final_eval_loss.to_string());
        push("up_loc_bits", self.up_loc_bits.to_string());
        push("up_val_bits", self.up_val_bits.to_string());
        push("up_overhead_bits", self.up_overhead_bits.to_string());
        push("down_loc_bits", self.down_loc_bits.to_string());
        push("down_val_bits", self.down_val_bits.to_string());
        push("down_overhead_bits", self.down_overhead_bits.to_string());
        push("warmup_up_bits", self.warmup_up_bits.to_string());
        push("warmup_down_bits", self.warmup_down_bits.to_string());
        push("compression_up", self.compression_up.to_string());
        push("compression_down", self.compression_down.to_string());
        push(
            "steady_compression_up",
            self.steady_compression_up.to_string(),
        );
        push(
            "steady_compression_down",
            self.steady_compression_down.to_string(),
        );
        out
    }
}

/// Per-round CSV in the round-report schema.
pub fn metrics_csv(reports: &[RoundReport]) -> String {
    let mut out = String::from(RoundReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Path of the summary file written next to the metrics CSV.
pub fn summary_path(out: &Path) -> PathBuf {
    let mut os = out.to_path_buf().into_os_string();
    os.push(".summary");
    PathBuf::from(os)
}

/// Runs the configured experiment end to end and writes the metrics CSV and
/// summary record. The simulator itself runs in 32-bit parameters, matching
/// the 32-bit wire format of unquantized values.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let mut run = SimRun::<f32>::new(cfg)?;
    run.run_to_end()?;
    let summary = run.summary();
    if let Some(parent) = cfg.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&cfg.out, metrics_csv(&run.reports))?;
    fs::write(summary_path(&cfg.out), summary.to_text())?;
    Ok(summary)
}
