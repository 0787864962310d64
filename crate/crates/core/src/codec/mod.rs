//! Bit-exact wire encodings for sparse positions and quantized values.

pub mod bitstream;
pub mod mask;
pub mod quant;
pub mod selftest;

pub use bitstream::{BitCursor, BitStream};
pub use mask::{
    decode_mask, decode_mask_blocked, encode_mask, encode_mask_blocked, encoded_len, offset_width,
};
pub use quant::{quantize_values, QuantizedBlock};

use crate::error::Result;
use crate::scalar::Scalar;

/// Unquantized value stream: each value as its IEEE-754 binary32 bits.
pub fn encode_values_f32<F: Scalar>(values: &[F]) -> BitStream {
    let mut out = BitStream::with_capacity(values.len() * 32);
    for &v in values {
        out.push_bits(v.to_wire_f32_bits() as u64, 32);
    }
    out
}

/// Inverse of [`encode_values_f32`].
pub fn decode_values_f32<F: Scalar>(stream: &BitStream, count: usize) -> Result<Vec<F>> {
    let mut cursor = stream.cursor();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let bits = cursor.read_bits(32)? as u32;
        out.push(F::from_config(f32::from_bits(bits) as f64));
    }
    if !cursor.is_exhausted() {
        return Err(crate::error::Error::CorruptStream(
            "trailing bits in value stream".to_string(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_value_stream_roundtrip_is_lossless() {
        let vals = vec![1.5f32, -0.25, 3.0e-8, 0.0, -1234.5];
        let s = encode_values_f32(&vals);
        assert_eq!(s.len(), vals.len() * 32);
        let back: Vec<f32> = decode_values_f32(&s, vals.len()).unwrap();
        assert!(vals
            .iter()
            .zip(&back)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
