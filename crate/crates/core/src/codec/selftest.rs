//! Seeded roundtrip fuzzing over the position and value codecs; backs both
//! the `codec-selftest` CLI subcommand and the acceptance checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::mask::{decode_mask_blocked, encode_mask_blocked, encoded_len};
use crate::codec::quant::{quantize_values, QuantizedBlock};
use crate::sparsify::SparseMask;

#[derive(Debug, Clone, Default)]
pub struct FuzzReport {
    pub trials: usize,
    pub failures: Vec<String>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Random mask roundtrips over random dims (up to 2^16), densities, and block
/// sizes (both power-of-two and arbitrary). Every trip must be exact and the
/// closed-form length must hold.
pub fn run_mask_fuzz(seed: u64, trials: usize) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport {
        trials,
        ..Default::default()
    };
    for t in 0..trials {
        let dim = rng.random_range(1..=1usize << 16);
        let block_size = if rng.random_bool(0.5) {
            1usize << rng.random_range(1..=10u32)
        } else {
            rng.random_range(1..=1024usize)
        };
        let density = rng.random_range(0.0..0.06f64);
        let mut indices = Vec::new();
        for i in 0..dim as u32 {
            if rng.random_bool(density) {
                indices.push(i);
            }
        }
        let mask = SparseMask::from_indices(dim, indices).expect("indices in range");
        let stream = match encode_mask_blocked(&mask, block_size) {
            Ok(s) => s,
            Err(e) => {
                report.failures.push(format!("trial {t}: encode failed: {e}"));
                continue;
            }
        };
        if stream.len() != encoded_len(mask.len(), dim, block_size) {
            report.failures.push(format!(
                "trial {t}: length {} != formula {}",
                stream.len(),
                encoded_len(mask.len(), dim, block_size)
            ));
        }
        match decode_mask_blocked(&stream, dim, block_size) {
            Ok(back) if back == mask => {}
            Ok(_) => report
                .failures
                .push(format!("trial {t}: decoded mask differs")),
            Err(e) => report.failures.push(format!("trial {t}: decode failed: {e}")),
        }
    }
    report
}

/// Random quantizer trips: interval membership, sign preservation, magnitude
/// bounds, and wire-format parsing.
pub fn run_quant_fuzz(seed: u64, trials: usize) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut report = FuzzReport {
        trials,
        ..Default::default()
    };
    for t in 0..trials {
        let n = rng.random_range(1..=512usize);
        let q = rng.random_range(2..=8u32);
        let mut values: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.05) {
                    0.0
                } else {
                    let mag = 10f64.powf(rng.random_range(-4.0..4.0));
                    if rng.random_bool(0.5) {
                        -mag
                    } else {
                        mag
                    }
                }
            })
            .collect();
        if values.iter().all(|v| *v == 0.0) {
            values[0] = 1.0;
        }
        if let Some(fail) = check_quant_roundtrip(&values, q) {
            report.failures.push(format!("trial {t}: {fail}"));
        }
    }
    report
}

fn check_quant_roundtrip(values: &[f64], q: u32) -> Option<String> {
    let block = match quantize_values(values, q) {
        Ok(b) => b,
        Err(e) => return Some(format!("quantize failed: {e}")),
    };
    let levels = block.levels();
    let (v_max, v_min) = (block.v_max(), block.v_min());
    let alpha = (v_max / v_min).powf(1.0 / levels as f64);
    let rel = 1e-9;

    let intervals = match block.interval_indices() {
        Ok(ix) => ix,
        Err(e) => return Some(format!("interval read failed: {e}")),
    };
    let recovered = match block.dequantize() {
        Ok(r) => r,
        Err(e) => return Some(format!("dequantize failed: {e}")),
    };
    for (i, (&v, &r)) in values.iter().zip(&recovered).enumerate() {
        if v == 0.0 {
            if r < 0.0 {
                return Some(format!("value {i}: zero decoded with negative sign"));
            }
            continue;
        }
        if v.signum() != r.signum() {
            return Some(format!("value {i}: sign flipped ({v} -> {r})"));
        }
        let mag = r.abs();
        if mag < v_min * (1.0 - rel) || mag > v_max * (1.0 + rel) {
            return Some(format!(
                "value {i}: reconstructed magnitude {mag} outside [{v_min}, {v_max}]"
            ));
        }
        // Eq bounds: m in (v_max/alpha^l, v_max/alpha^(l-1)], ties downward
        let l = intervals[i];
        let hi = v_max / alpha.powi(l as i32 - 1);
        let lo = v_max / alpha.powi(l as i32);
        let m = v.abs();
        if m > hi * (1.0 + rel) || m < lo * (1.0 - rel) {
            return Some(format!(
                "value {i}: magnitude {m} not in interval {l} = [{lo}, {hi}]"
            ));
        }
    }

    // whole-message wire roundtrip
    let wire = block.to_wire();
    match QuantizedBlock::<f64>::from_wire(&wire, values.len(), q) {
        Ok(parsed) => match parsed.dequantize() {
            Ok(reparsed) => {
                // means travel as f32, so compare at f32 precision
                let same = recovered
                    .iter()
                    .zip(&reparsed)
                    .all(|(x, y)| (x - y).abs() <= 1e-6 * x.abs().max(1e-30));
                if !same {
                    return Some("wire-parsed block decodes differently".to_string());
                }
            }
            Err(e) => return Some(format!("wire-parsed decode failed: {e}")),
        },
        Err(e) => return Some(format!("wire parse failed: {e}")),
    }
    None
}
