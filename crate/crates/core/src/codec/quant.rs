//! Fractional quantizer: geometric magnitude intervals with per-interval
//! means.
//!
//! For a bit budget `q`, magnitudes in `[v_min, v_max]` (over the nonzero
//! inputs) are split into `L = 2^(q-1)` geometric subintervals with ratio
//! `alpha = (v_max / v_min)^(1/L)`. Each value is coded in `q` bits: one sign
//! bit (0 = +, 1 = -) followed by the `q-1`-bit interval index. The means of
//! the magnitudes landing in each interval are appended to the message as `L`
//! 32-bit floats; the receiver reconstructs `sign * mean[interval]`.

use crate::codec::bitstream::BitStream;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock<F> {
    codes: BitStream,
    means: Vec<F>,
    count: usize,
    q: u32,
    v_max: F,
    v_min: F,
}

impl<F: Scalar> QuantizedBlock<F> {
    pub fn codes(&self) -> &BitStream {
        &self.codes
    }

    pub fn means(&self) -> &[F] {
        &self.means
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn levels(&self) -> usize {
        self.means.len()
    }

    pub fn v_max(&self) -> F {
        self.v_max
    }

    pub fn v_min(&self) -> F {
        self.v_min
    }

    /// A block decoding to exactly `count` zeros; stands in for a message
    /// whose masked values are all zero (which the quantizer proper rejects).
    pub fn all_zero(count: usize, q: u32) -> Result<Self> {
        check_q(q)?;
        let levels = 1usize << (q - 1);
        let mut codes = BitStream::with_capacity(count * q as usize);
        for _ in 0..count {
            codes.push_bit(false);
            codes.push_bits(levels as u64 - 1, q - 1);
        }
        Ok(Self {
            codes,
            means: vec![F::zero(); levels],
            count,
            q,
            v_max: F::zero(),
            v_min: F::zero(),
        })
    }

    /// The means table in wire form: `L` IEEE-754 binary32 values.
    pub fn means_stream(&self) -> BitStream {
        let mut out = BitStream::with_capacity(self.means.len() * 32);
        for &m in &self.means {
            out.push_bits(m.to_wire_f32_bits() as u64, 32);
        }
        out
    }

    /// One contiguous message: `count * q` code bits then `L` 32-bit means.
    pub fn to_wire(&self) -> BitStream {
        let mut out = self.codes.clone();
        out.append(&self.means_stream());
        out
    }

    /// Parses a message produced by [`Self::to_wire`].
    pub fn from_wire(stream: &BitStream, count: usize, q: u32) -> Result<Self> {
        check_q(q)?;
        let levels = 1usize << (q - 1);
        let expected = count * q as usize + levels * 32;
        if stream.len() != expected {
            return Err(Error::CorruptStream(format!(
                "quantized message is {} bits, expected {expected}",
                stream.len()
            )));
        }
        let mut cursor = stream.cursor();
        let mut codes = BitStream::with_capacity(count * q as usize);
        for _ in 0..count {
            codes.push_bits(cursor.read_bits(q)?, q);
        }
        let mut means = Vec::with_capacity(levels);
        for _ in 0..levels {
            let bits = cursor.read_bits(32)? as u32;
            let m = f32::from_bits(bits);
            if !m.is_finite() || m < 0.0 {
                return Err(Error::CorruptStream(format!("invalid mean value {m}")));
            }
            means.push(F::from_config(m as f64));
        }
        let v_max = means.iter().fold(F::zero(), |a, &b| a.max(b));
        let v_min = means
            .iter()
            .copied()
            .filter(|m| *m > F::zero())
            .fold(v_max, F::min);
        Ok(Self {
            codes,
            means,
            count,
            q,
            v_max,
            v_min,
        })
    }

    /// Reconstructs `sign * mean[interval]` per value.
    pub fn dequantize(&self) -> Result<Vec<F>> {
        let mut cursor = self.codes.cursor();
        let mut out = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let negative = cursor.read_bit()?;
            let interval = cursor.read_bits(self.q - 1)? as usize + 1;
            if interval > self.means.len() {
                return Err(Error::CorruptStream(format!(
                    "interval index {interval} out of [1, {}]",
                    self.means.len()
                )));
            }
            let magnitude = self.means[interval - 1];
            out.push(if negative { -magnitude } else { magnitude });
        }
        if !cursor.is_exhausted() {
            return Err(Error::CorruptStream("trailing code bits".to_string()));
        }
        Ok(out)
    }

    /// Interval index assigned to each value, for inspection in tests.
    pub fn interval_indices(&self) -> Result<Vec<usize>> {
        let mut cursor = self.codes.cursor();
        let mut out = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            cursor.read_bit()?;
            out.push(cursor.read_bits(self.q - 1)? as usize + 1);
        }
        Ok(out)
    }
}

fn check_q(q: u32) -> Result<()> {
    if !(2..=16).contains(&q) {
        return Err(Error::invalid(format!("q = {q} outside supported [2, 16]")));
    }
    Ok(())
}

/// Maps a nonzero magnitude to its interval in `[1, L]`. Boundary magnitudes
/// go to the larger-magnitude (lower-index) interval; `m == v_max` maps to 1.
fn interval_for<F: Scalar>(m: F, v_max: F, ln_ratio: F, levels: usize) -> usize {
    if ln_ratio <= F::zero() {
        return 1; // v_max == v_min: single effective interval
    }
    let l = F::from_config(levels as f64);
    let raw = (l * (v_max / m).ln() / ln_ratio).ceil();
    (raw.to_f64().unwrap_or(1.0) as i64).clamp(1, levels as i64) as usize
}

/// Quantizes `values` at `q` bits per value. At least one value must be
/// nonzero; zeros are coded as interval `L` with positive sign and do not
/// contribute to the means.
pub fn quantize_values<F: Scalar>(values: &[F], q: u32) -> Result<QuantizedBlock<F>> {
    check_q(q)?;
    let levels = 1usize << (q - 1);
    let mut v_max = F::zero();
    let mut v_min = F::infinity();
    for &v in values {
        if !v.is_finite() {
            return Err(Error::invalid("non-finite value"));
        }
        let m = v.abs();
        if m > F::zero() {
            v_max = v_max.max(m);
            v_min = v_min.min(m);
        }
    }
    if v_max == F::zero() {
        return Err(Error::DegenerateInput(
            "all values are zero; send an all-zero block instead".to_string(),
        ));
    }
    let ln_ratio = (v_max / v_min).ln();

    let mut codes = BitStream::with_capacity(values.len() * q as usize);
    let mut sums = vec![F::zero(); levels];
    let mut counts = vec![0u64; levels];
    for &v in values {
        let m = v.abs();
        let interval = if m > F::zero() {
            let l = interval_for(m, v_max, ln_ratio, levels);
            sums[l - 1] += m;
            counts[l - 1] += 1;
            l
        } else {
            levels
        };
        codes.push_bit(v < F::zero());
        codes.push_bits(interval as u64 - 1, q - 1);
    }
    let means = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| {
            if c == 0 {
                F::zero()
            } else {
                s / F::from_config(c as f64)
            }
        })
        .collect();
    Ok(QuantizedBlock {
        codes,
        means,
        count: values.len(),
        q,
        v_max,
        v_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example_q2() {
        // values [8,4,2,1], q=2 -> L=2, alpha=sqrt(8); {8,4} -> I1, {2,1} -> I2
        let block = quantize_values(&[8.0f64, 4.0, 2.0, 1.0], 2).unwrap();
        assert_eq!(block.levels(), 2);
        assert_eq!(block.v_max(), 8.0);
        assert_eq!(block.v_min(), 1.0);
        assert_eq!(block.interval_indices().unwrap(), vec![1, 1, 2, 2]);
        assert_eq!(block.means(), &[6.0, 1.5]);
        assert_eq!(block.dequantize().unwrap(), vec![6.0, 6.0, 1.5, 1.5]);
        assert_eq!(block.codes().len(), 4 * 2);
    }

    #[test]
    fn equal_values_dequantize_exactly() {
        let block = quantize_values(&[3.5f64, 3.5, 3.5], 4).unwrap();
        assert_eq!(block.dequantize().unwrap(), vec![3.5, 3.5, 3.5]);
    }

    #[test]
    fn signs_survive_the_roundtrip() {
        let vals = [-8.0f64, 4.0, -2.0, 1.0, -1.0];
        let block = quantize_values(&vals, 3).unwrap();
        for (orig, rec) in vals.iter().zip(block.dequantize().unwrap()) {
            assert_eq!(
                orig.signum(),
                rec.signum(),
                "sign flipped for {orig} -> {rec}"
            );
        }
    }

    #[test]
    fn zeros_map_to_last_interval_with_plus_sign() {
        let block = quantize_values(&[2.0f64, 0.0, -4.0], 2).unwrap();
        assert_eq!(block.interval_indices().unwrap(), vec![2, 2, 1]);
        let rec = block.dequantize().unwrap();
        assert!(rec[1] >= 0.0);
        // the zero does not drag the interval mean down
        assert_eq!(block.means()[1], 2.0);
    }

    #[test]
    fn all_zero_input_is_degenerate() {
        assert!(matches!(
            quantize_values(&[0.0f64, 0.0], 4),
            Err(Error::DegenerateInput(_))
        ));
        let block = QuantizedBlock::<f64>::all_zero(5, 4).unwrap();
        assert_eq!(block.dequantize().unwrap(), vec![0.0; 5]);
        assert_eq!(block.codes().len(), 5 * 4);
    }

    #[test]
    fn singleton_intervals_reconstruct_exactly() {
        // q large enough that every magnitude sits alone in its interval
        let vals = [1.0f64, 2.0, 4.0, 8.0, 16.0];
        let block = quantize_values(&vals, 6).unwrap();
        assert_eq!(block.dequantize().unwrap(), vals.to_vec());
    }

    #[test]
    fn q_out_of_range_rejected() {
        assert!(quantize_values(&[1.0f64], 1).is_err());
        assert!(quantize_values(&[1.0f64], 17).is_err());
    }

    #[test]
    fn wire_roundtrip_of_whole_message() {
        let vals = [0.5f32, -2.25, 8.0, 0.0, -0.125];
        let block = quantize_values(&vals, 4).unwrap();
        let wire = block.to_wire();
        assert_eq!(wire.len(), vals.len() * 4 + block.levels() * 32);
        let parsed = QuantizedBlock::<f32>::from_wire(&wire, vals.len(), 4).unwrap();
        assert_eq!(parsed.dequantize().unwrap(), block.dequantize().unwrap());
    }

    #[test]
    fn reconstruction_error_bounded_by_interval_width() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..200);
            let vals: Vec<f64> = (0..n)
                .map(|_| {
                    let mag = 10f64.powf(rng.random_range(-3.0..3.0));
                    if rng.random_bool(0.5) {
                        -mag
                    } else {
                        mag
                    }
                })
                .collect();
            let q = rng.random_range(2..=8);
            let block = quantize_values(&vals, q).unwrap();
            let levels = block.levels() as f64;
            let alpha = (block.v_max() / block.v_min()).powf(1.0 / levels);
            let max_width = block.v_max() - block.v_max() / alpha;
            let rec = block.dequantize().unwrap();
            for (v, r) in vals.iter().zip(&rec) {
                assert!(
                    (v - r).abs() <= max_width * (1.0 + 1e-9),
                    "error {} above width {max_width}",
                    (v - r).abs()
                );
            }
        }
    }
}
