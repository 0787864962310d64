//! Block sparse-position wire format.
//!
//! The coordinate axis is cut into fixed-size blocks. Each block emits, for
//! every masked position in ascending order, a `1` prefix bit followed by the
//! intra-block offset, then a single `0` terminator bit. Offsets are written
//! in `ceil(log2(block_size))` bits, so the encoded size is exactly
//! `|mask| * (offset_width + 1) + n_blocks` bits.

use crate::codec::bitstream::{BitCursor, BitStream};
use crate::error::{Error, Result};
use crate::sparsify::SparseMask;

/// Bits needed for an intra-block offset.
pub fn offset_width(block_size: usize) -> u32 {
    debug_assert!(block_size >= 1);
    usize::BITS - (block_size - 1).leading_zeros()
}

/// Encoded size in bits for a mask of `mask_len` entries over `dim`
/// coordinates.
pub fn encoded_len(mask_len: usize, dim: usize, block_size: usize) -> usize {
    mask_len * (offset_width(block_size) as usize + 1) + dim.div_ceil(block_size)
}

/// Encodes with an arbitrary block size (the schemes use `round(1 / phi)`).
pub fn encode_mask_blocked(mask: &SparseMask, block_size: usize) -> Result<BitStream> {
    if block_size < 1 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let width = offset_width(block_size);
    let n_blocks = mask.dim().div_ceil(block_size);
    let mut out = BitStream::with_capacity(encoded_len(mask.len(), mask.dim(), block_size));
    let mut next = mask.indices().iter().peekable();
    for block in 0..n_blocks {
        let block_end = ((block + 1) * block_size) as u64;
        while let Some(&&idx) = next.peek() {
            if (idx as u64) >= block_end {
                break;
            }
            out.push_bit(true);
            out.push_bits(idx as u64 - (block * block_size) as u64, width);
            next.next();
        }
        out.push_bit(false);
    }
    Ok(out)
}

/// Inverse of [`encode_mask_blocked`]; fails on truncated or trailing bits,
/// out-of-range offsets, and non-ascending positions.
pub fn decode_mask_blocked(stream: &BitStream, dim: usize, block_size: usize) -> Result<SparseMask> {
    if block_size < 1 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let width = offset_width(block_size);
    let n_blocks = dim.div_ceil(block_size);
    let mut cursor = stream.cursor();
    let mut indices = Vec::new();
    for block in 0..n_blocks {
        decode_block(&mut cursor, block, block_size, width, dim, &mut indices)?;
    }
    if !cursor.is_exhausted() {
        return Err(Error::CorruptStream(format!(
            "{} trailing bits after the final block",
            cursor.remaining()
        )));
    }
    SparseMask::from_indices(dim, indices)
}

fn decode_block(
    cursor: &mut BitCursor<'_>,
    block: usize,
    block_size: usize,
    width: u32,
    dim: usize,
    indices: &mut Vec<u32>,
) -> Result<()> {
    loop {
        if !cursor.read_bit()? {
            return Ok(()); // block terminator
        }
        let offset = cursor.read_bits(width)? as usize;
        let idx = block * block_size + offset;
        if offset >= block_size || idx >= dim {
            return Err(Error::CorruptStream(format!(
                "position {idx} outside block {block} (dim {dim})"
            )));
        }
        if indices.last().is_some_and(|&prev| prev as usize >= idx) {
            return Err(Error::CorruptStream(format!(
                "non-ascending position {idx}"
            )));
        }
        indices.push(idx as u32);
    }
}

/// Power-of-two block variant: `block_size = 2^block_bits`, offsets use
/// exactly `block_bits` bits.
pub fn encode_mask(mask: &SparseMask, block_bits: u32) -> Result<BitStream> {
    if block_bits < 1 {
        return Err(Error::invalid("block_bits must be at least 1"));
    }
    encode_mask_blocked(mask, 1usize << block_bits)
}

/// Inverse of [`encode_mask`].
pub fn decode_mask(stream: &BitStream, dim: usize, block_bits: u32) -> Result<SparseMask> {
    if block_bits < 1 {
        return Err(Error::invalid("block_bits must be at least 1"));
    }
    decode_mask_blocked(stream, dim, 1usize << block_bits)
}
