//! Length-counted packed bit sequences, most-significant bit first.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            bit_len: 0,
        }
    }

    /// Number of bits written so far.
    pub fn len(&self) -> usize {
        self.bit_len
    }

    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn push_bit(&mut self, bit: bool) {
        let offset = self.bit_len % 8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.bit_len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0, "value wider than field");
        for shift in (0..width).rev() {
            self.push_bit((value >> shift) & 1 == 1);
        }
    }

    pub fn append(&mut self, other: &BitStream) {
        let mut cursor = other.cursor();
        while let Ok(bit) = cursor.read_bit() {
            self.push_bit(bit);
        }
    }

    pub fn cursor(&self) -> BitCursor<'_> {
        BitCursor { stream: self, pos: 0 }
    }
}

/// Read position over a [`BitStream`]; never advances past the stream's
/// length.
pub struct BitCursor<'a> {
    stream: &'a BitStream,
    pos: usize,
}

impl BitCursor<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.stream.bit_len - self.pos
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos == self.stream.bit_len
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.stream.bit_len {
            return Err(Error::CorruptStream(
                "read past end of bit stream".to_string(),
            ));
        }
        let byte = self.stream.bytes[self.pos / 8];
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        debug_assert!(width <= 64);
        if self.remaining() < width as usize {
            return Err(Error::CorruptStream(format!(
                "needed {width} bits, {} remaining",
                self.remaining()
            )));
        }
        let mut value = 0u64;
        for _ in 0..width {
            value = (value << 1) | self.read_bit()? as u64;
        }
        Ok(value)
    }
}
