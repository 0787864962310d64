//! Acceptance suite: one test per exit criterion, each printing a PASS line.
//!
//! Run with `cargo test -p sparsevote-cli --test acceptance -- --nocapture`.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsevote::accounting::analytic_budget;
use sparsevote::codec::selftest::{run_mask_fuzz, run_quant_fuzz};
use sparsevote::config::ExperimentConfig;
use sparsevote::local::BatchSampler;
use sparsevote::model::ModelKind;
use sparsevote::protocol::{worker_sampler_seed, Scheme};
use sparsevote::sparsify::{accumulate, apply_mask, residual, top_k_mask, ErrorAccumulator};
use sparsevote::voting::{select_topk_mask, tally_votes};
use sparsevote::{SimRun, SparseMask};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsevote"))
}

fn base_cfg(scheme: Scheme) -> ExperimentConfig {
    ExperimentConfig {
        seed: 5,
        workers: 4,
        scheme,
        model: ModelKind::LinearRegression,
        input_dim: 256,
        hidden_dim: 0,
        samples: 2048,
        eval_samples: 256,
        noise_std: 0.1,
        batch_size: 64,
        rounds: 500,
        local_steps: 1,
        phi: 0.05,
        phi_ad: None,
        q: None,
        lr: 0.05,
        warmup_rounds: 0,
        warmup_start: 0.05,
        decays: vec![(300, 0.1), (400, 0.1)],
        error_feedback: true,
        quant_error_feedback: false,
        weight_decay: 1e-4,
        out: "unused.csv".into(),
    }
}

/// Expected benchmark table: name, H, q, uplink (q_loc, q_val), downlink
/// (q_loc, q_val), and the reference compression rates as printed.
#[allow(clippy::type_complexity)]
const EXPECTED_TABLE: [(&str, u32, u32, f64, f64, f64, f64, &str, &str); 14] = [
    ("SSGD-MV", 1, 32, 9e-2, 3.2e-1, 9e-2, 3.2e-1, "78", "78"),
    ("SSGD-MV-L2", 2, 32, 4.5e-2, 1.6e-1, 4.5e-2, 1.6e-1, "156", "156"),
    ("SSGD-MV-L4", 4, 32, 2.25e-2, 8e-2, 2.25e-2, 8e-2, "312", "312"),
    ("SSGD-MV-L8", 8, 32, 1.125e-2, 4e-2, 1.125e-2, 4e-2, "624", "624"),
    ("SSGD-MV-L8-Q", 8, 4, 1.125e-2, 5e-3, 1.125e-2, 4e-2, "2000", "624"),
    ("SSGD-MV-RS-L4", 4, 32, 2.25e-2, 8e-2, 2.25e-2, 8e-2, "312", "312"),
    // reference budgets for this row repeat the L4 figures; the row is
    // reproduced from the formulas and must be flagged
    ("SSGD-MV-RS-L8", 8, 32, 1.125e-2, 4e-2, 1.125e-2, 4e-2, "624", "624"),
    ("SSGD-MV-AD", 1, 32, 2.4e-2, 3.2e-1, 9e-2, 3.2e-1, "93", "78"),
    ("SSGD-MV-AD-L2", 2, 32, 1.2e-2, 1.6e-1, 4.5e-2, 1.6e-1, "186", "156"),
    ("SSGD-MV-AD-L4", 4, 32, 6e-3, 8e-2, 2.25e-2, 8e-2, "372", "312"),
    ("SSGD-MV-AD-L4-Q", 4, 4, 6e-3, 1e-2, 2.25e-2, 8e-2, "2000", "312"),
    ("SSGD-MV-AD-L8", 8, 32, 3e-3, 4e-2, 1.125e-2, 4e-2, "745", "624"),
    ("SSGD-MV-AD-L8-Q", 8, 4, 3e-3, 5e-3, 1.125e-2, 4e-2, "4000", "624"),
    ("SSGD-top-K", 1, 32, 9e-2, 3.2e-1, 6e-1, 3.2, "78", "8.4"),
];

#[test]
fn criterion_1_table_reproduction() {
    let start = Instant::now();
    let output = bin().args(["table", "--csv"]).output().expect("run table");
    let elapsed = start.elapsed();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 15, "header plus 14 rows:\n{stdout}");

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-12);
    for (line, exp) in lines[1..].iter().zip(EXPECTED_TABLE) {
        let fields: Vec<&str> = line.splitn(13, ',').collect();
        assert_eq!(fields.len(), 13, "row: {line}");
        assert_eq!(fields[0], exp.0, "scheme name");
        assert_eq!(fields[1].parse::<u32>().unwrap(), exp.1, "{}: H", exp.0);
        assert_eq!(fields[2].parse::<u32>().unwrap(), exp.2, "{}: q", exp.0);
        let budgets: Vec<f64> = fields[3..7].iter().map(|f| f.parse().unwrap()).collect();
        assert!(close(budgets[0], exp.3), "{}: up q_loc {}", exp.0, budgets[0]);
        assert!(close(budgets[1], exp.4), "{}: up q_val {}", exp.0, budgets[1]);
        assert!(close(budgets[2], exp.5), "{}: down q_loc {}", exp.0, budgets[2]);
        assert!(close(budgets[3], exp.6), "{}: down q_val {}", exp.0, budgets[3]);
        assert_eq!(fields[7], exp.7, "{}: uplink rate", exp.0);
        assert_eq!(fields[8], exp.8, "{}: downlink rate", exp.0);
        if exp.0 == "SSGD-MV-RS-L8" {
            assert!(!fields[12].is_empty(), "inconsistent row must be flagged");
        }
        // rows whose reference rate is not the formula-derived rounding
        // must carry the computed figure in their note
        if fields[9] != fields[7] || fields[10] != fields[8] {
            assert!(!fields[12].is_empty(), "{}: divergence must be noted", exp.0);
        }
    }
    assert!(elapsed < Duration::from_secs(1), "table took {elapsed:?}");
    println!("[PASS] criterion 1: table reproduces all 14 benchmark rows ({elapsed:?})");
}

#[test]
fn criterion_2_ledger_agreement() {
    let start = Instant::now();
    for (scheme, q) in [
        (Scheme::Mv, None),
        (Scheme::Mv, Some(4)),
        (Scheme::MvAd, None),
        (Scheme::MvAd, Some(4)),
    ] {
        let cfg = ExperimentConfig {
            seed: 11,
            workers: 4,
            input_dim: 1 << 20,
            samples: 16,
            eval_samples: 0,
            batch_size: 4,
            rounds: 50,
            phi: 1e-2,
            phi_ad: Some(1e-3),
            q,
            lr: 1e-6,
            warmup_start: 1e-6,
            decays: vec![],
            weight_decay: 0.0,
            ..base_cfg(scheme)
        };
        let mut run = SimRun::<f32>::new(&cfg).unwrap();
        run.run_to_end().unwrap();

        // steady state: the add-drop bootstrap round sends full votes and is
        // excluded from the incremental-budget comparison
        let skip = usize::from(scheme == Scheme::MvAd);
        let steady = run.ledger.totals_in(skip, cfg.rounds as usize);
        let rounds = (cfg.rounds as usize - skip) as f64;
        let per_param = cfg.param_dim() as f64 * cfg.local_steps as f64 * rounds;
        let budget = analytic_budget(
            scheme,
            cfg.phi,
            cfg.phi_ad.unwrap(),
            q.unwrap_or(32),
            cfg.local_steps,
            cfg.workers as u32,
        )
        .unwrap();

        let check = |name: &str, measured_bits: u64, analytic: f64| {
            let measured = measured_bits as f64 / per_param;
            let rel = (measured / analytic - 1.0).abs();
            assert!(
                rel <= 0.01,
                "{scheme} q={q:?} {name}: measured {measured:.6e} vs analytic {analytic:.6e} \
({:.3}% off)",
                rel * 100.0
            );
        };
        check("up_loc", steady.up_loc, budget.q_loc_up);
        check("up_val", steady.up_val, budget.q_val_up);
        check("down_loc", steady.down_loc, budget.q_loc_down);
        check("down_val", steady.down_val, budget.q_val_down);

        // means-table overhead is metered separately, not folded into values
        let expected_overhead = match q {
            Some(q) => rounds as u64 * (1 << (q - 1)) * 32,
            None => 0,
        };
        assert_eq!(steady.up_overhead, expected_overhead, "{scheme} q={q:?}");
        assert_eq!(steady.down_overhead, 0);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "[PASS] criterion 2: measured bits/(dH) within 1% of analytic budgets at d=2^20 \
({elapsed:?})"
    );
}

#[test]
fn criterion_3_codec_property_suite() {
    let start = Instant::now();
    let masks = run_mask_fuzz(0xC0DE, 10_000);
    assert!(
        masks.passed(),
        "mask roundtrips failed: {:?}",
        &masks.failures[..masks.failures.len().min(5)]
    );
    let quant = run_quant_fuzz(0xC0DE, 1_000);
    assert!(
        quant.passed(),
        "quantizer checks failed: {:?}",
        &quant.failures[..quant.failures.len().min(5)]
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: 10^4 mask roundtrips exact, 10^3 quantizer trips within invariants \
({elapsed:?})"
    );
}

#[test]
fn criterion_4_oracle_equivalence() {
    // (a) consensus selection vs brute-force recount on random instances
    let mut rng = ChaCha8Rng::seed_from_u64(0x04AC);
    for _ in 0..1_000 {
        let dim = rng.random_range(1..=64usize);
        let n = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=dim);
        let masks: Vec<SparseMask> = (0..n)
            .map(|_| {
                let idx: Vec<u32> = (0..dim as u32).filter(|_| rng.random_bool(0.35)).collect();
                SparseMask::from_indices(dim, idx).unwrap()
            })
            .collect();
        let counts = tally_votes(&masks).unwrap();
        let fast = select_topk_mask(&counts, k).unwrap();

        let mut recount = vec![0u32; dim];
        for m in &masks {
            for i in 0..dim as u32 {
                if m.contains(i) {
                    recount[i as usize] += 1;
                }
            }
        }
        let mut order: Vec<u32> = (0..dim as u32).collect();
        order.sort_by(|&a, &b| recount[b as usize].cmp(&recount[a as usize]).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        assert_eq!(fast.indices(), &order[..]);
    }

    // (b) + (c) add-drop bookkeeping over a 200-round run
    let cfg = ExperimentConfig {
        input_dim: 512,
        samples: 256,
        eval_samples: 0,
        batch_size: 16,
        rounds: 200,
        phi: 0.05,
        phi_ad: Some(0.005),
        lr: 0.01,
        warmup_start: 0.01,
        decays: vec![],
        ..base_cfg(Scheme::MvAd)
    };
    let k = cfg.k();
    let k_ad = cfg.k_ad();
    let mut run = SimRun::<f32>::new(&cfg).unwrap();
    let mut prev_votes: Vec<Option<SparseMask>> = vec![None; cfg.workers];
    for _ in 0..cfg.rounds {
        run.step().unwrap();
        let votes: Vec<SparseMask> = run
            .workers
            .iter()
            .map(|w| w.prev_vote().expect("vote initialized").clone())
            .collect();
        // incremental server sum == recomputed tally, exactly
        let recomputed = tally_votes(&votes).unwrap();
        assert_eq!(run.server.vote_sum(), Some(&recomputed));
        for (w, (vote, prev)) in votes.iter().zip(&prev_votes).enumerate() {
            assert_eq!(vote.len(), k, "worker {w} vote cardinality");
            if let Some(prev) = prev {
                let churn = vote.sym_diff_len(prev);
                assert!(churn <= 2 * k_ad, "worker {w} churn {churn} > {}", 2 * k_ad);
            }
        }
        prev_votes = votes.into_iter().map(Some).collect();
    }
    println!(
        "[PASS] criterion 4: selection matches brute force (10^3 instances); add-drop vote sum \
exact and churn <= 2*K_ad over 200 rounds"
    );
}

#[test]
fn criterion_5_degenerate_equivalences() {
    // (a) K = d: majority voting degenerates to dense DSGD, bitwise
    let full = ExperimentConfig {
        input_dim: 64,
        samples: 256,
        batch_size: 16,
        rounds: 40,
        phi: 1.0,
        ..base_cfg(Scheme::Mv)
    };
    let baseline = ExperimentConfig {
        ..full.clone()
    };
    let mut mv = SimRun::<f32>::new(&full).unwrap();
    let mut base = SimRun::<f32>::new(&ExperimentConfig {
        scheme: Scheme::BaselineDsgd,
        ..baseline
    })
    .unwrap();
    for _ in 0..full.rounds {
        let rm = mv.step().unwrap();
        let rb = base.step().unwrap();
        assert!(
            mv.server.model.params().bitwise_eq(base.server.model.params()),
            "params diverged at round {}",
            rm.round
        );
        assert_eq!(rm.train_loss.to_bits(), rb.train_loss.to_bits());
        assert_eq!(rm.eval_loss.to_bits(), rb.eval_loss.to_bits());
    }

    // (b) H = 1, N = 1: the consensus mask is the worker's own top-K, so the
    // round equals top-K sparsified SGD with error feedback (independent
    // reference loop below)
    let solo = ExperimentConfig {
        workers: 1,
        input_dim: 96,
        samples: 128,
        batch_size: 8,
        rounds: 60,
        phi: 0.1,
        eval_samples: 0,
        ..base_cfg(Scheme::Mv)
    };
    let mut run = SimRun::<f32>::new(&solo).unwrap();
    let data = run.train_data().clone();
    let shard = run.workers[0].shard.clone();
    let mut model = run.server.model.clone();
    let mut sampler =
        BatchSampler::new(shard.len(), solo.batch_size, worker_sampler_seed(solo.seed, 0)).unwrap();
    let mut error = ErrorAccumulator::<f32>::zeros(model.dim());
    let schedule = solo.schedule();
    let k = solo.k();
    for round in 0..solo.rounds {
        run.step().unwrap();

        let lr = schedule.lr_at(round) as f32;
        let delta =
            sparsevote::local::local_steps(&model, &data, &shard, 1, lr, &mut sampler).unwrap();
        let delta_bar = accumulate(&delta, &error).unwrap();
        let mask = top_k_mask(&delta_bar, k).unwrap();
        let sent = apply_mask(&delta_bar, &mask).unwrap();
        error = ErrorAccumulator {
            residual: residual(&delta_bar, &sent).unwrap(),
        };
        let scaled = sparsevote::SparseUpdate::new(sent.mask.clone(), sent.values.clone()).unwrap();
        sparsevote::protocol::apply_update(&mut model, &scaled).unwrap();

        assert!(
            run.server.model.params().bitwise_eq(model.params()),
            "solo mv diverged from top-K + error feedback at round {round}"
        );
    }
    println!(
        "[PASS] criterion 5: K=d equals dense DSGD bitwise; N=1,H=1 equals per-worker top-K with \
error feedback"
    );
}

#[test]
fn criterion_6_convergence_with_error_feedback() {
    let start = Instant::now();
    let mut base = SimRun::<f32>::new(&base_cfg(Scheme::BaselineDsgd)).unwrap();
    base.run_to_end().unwrap();
    let mut mv = SimRun::<f32>::new(&base_cfg(Scheme::Mv)).unwrap();
    mv.run_to_end().unwrap();
    let mut no_ef = SimRun::<f32>::new(&ExperimentConfig {
        error_feedback: false,
        ..base_cfg(Scheme::Mv)
    })
    .unwrap();
    no_ef.run_to_end().unwrap();

    let base_loss = base.reports.last().unwrap().train_loss;
    let mv_loss = mv.reports.last().unwrap().train_loss;
    let no_ef_loss = no_ef.reports.last().unwrap().train_loss;

    assert!(
        mv_loss <= base_loss * 1.05,
        "sparse loss {mv_loss} not within 5% of dense loss {base_loss}"
    );
    assert!(
        no_ef_loss > mv_loss && no_ef_loss > base_loss * 1.05,
        "dropping error feedback should be strictly worse: {no_ef_loss} vs {mv_loss}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "[PASS] criterion 6: sparse+feedback within 5% of dense ({:.4}x); without feedback \
strictly worse ({:.0}x) ({elapsed:?})",
        mv_loss / base_loss,
        no_ef_loss / base_loss
    );
}

#[test]
fn criterion_7_determinism() {
    let dir = std::env::temp_dir().join(format!("sparsevote-acc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let text_cfg = |out: &PathBuf| {
        let cfg = ExperimentConfig {
            input_dim: 512,
            samples: 256,
            batch_size: 16,
            rounds: 40,
            phi: 0.02,
            phi_ad: Some(0.004),
            q: Some(4),
            warmup_rounds: 4,
            warmup_start: 0.01,
            out: out.clone(),
            ..base_cfg(Scheme::MvAd)
        };
        cfg.to_text()
    };
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("run{i}.csv"));
        let cfg_path = dir.join(format!("run{i}.cfg"));
        std::fs::write(&cfg_path, text_cfg(&out)).unwrap();
        let status = bin().arg("run").arg(&cfg_path).output().expect("run");
        assert!(
            status.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        let metrics = std::fs::read(&out).unwrap();
        let summary = std::fs::read(dir.join(format!("run{i}.csv.summary"))).unwrap();
        outputs.push((metrics, summary));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "metrics files differ");
    assert_eq!(outputs[0].1, outputs[1].1, "summary files differ");
    std::fs::remove_dir_all(&dir).ok();
    println!("[PASS] criterion 7: repeated runs produce byte-identical metrics files");
}
