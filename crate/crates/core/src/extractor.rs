//! Seeded Toeplitz hashing over GF(2).
//!
//! An `m × n` Toeplitz matrix is fixed by `n + m − 1` seed bits with
//! `T[i][j] = seed[i − j + n − 1]`; output bit `i` is
//! `⊕_j T[i][j]·in[j]`. The hash family is two-universal, so by the leftover
//! hash lemma an `n`-bit block carrying `k` bits of min-entropy can be
//! compressed to `k − 2·log₂(1/ε)` bits that are `ε`-close to uniform. One seed
//! is reused for a whole stream.
//!
//! Bit order is LSB-first everywhere: within each ADC code, within each
//! `u64` word of a [`BitBlock`], and within each output byte. Changing it
//! changes every output.

use std::io::{self, Write};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Blocks hashed per parallel batch in [`stream_extract`].
const STREAM_BATCH_BLOCKS: usize = 32;

/// Packed bit string, bit `i` at bit `i % 64` of word `i / 64`. Bits past
/// `len` in the last word are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBlock {
    words: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for BitBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitBlock({} bits)", self.len)
    }
}

impl BitBlock {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &bit) in bits.iter().enumerate() {
            if bit {
                b.words[i / 64] |= 1 << (i % 64);
            }
        }
        b
    }

    /// First `len` bits of `bytes`, LSB-first within each byte.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: bytes.len() * 8,
            });
        }
        let mut b = Self::zeros(len);
        for (i, chunk) in bytes.chunks(8).enumerate().take(b.words.len()) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            b.words[i] = u64::from_le_bytes(w);
        }
        b.clear_tail();
        Ok(b)
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// LSB-first bytes; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn xor(&self, other: &BitBlock) -> Result<BitBlock> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        Ok(BitBlock {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
            len: self.len,
        })
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Bit-reversed copy: `out[k] = self[len − 1 − k]`.
    fn reversed(&self) -> BitBlock {
        let mut out = BitBlock::zeros(self.len);
        let pad = self.words.len() * 64 - self.len;
        let nw = self.words.len();
        for (k, w) in self.words.iter().enumerate() {
            out.words[nw - 1 - k] = w.reverse_bits();
        }
        if pad > 0 {
            // Shift the whole string right by `pad` to drop the padding zeros.
            for k in 0..nw {
                let hi = if k + 1 < nw {
                    out.words[k + 1] << (64 - pad)
                } else {
                    0
                };
                out.words[k] = (out.words[k] >> pad) | hi;
            }
        }
        out
    }
}

/// Serializes ADC codes to bits, `bits_per_code` bits per code, LSB-first.
pub fn codes_to_bits(codes: &[u16], bits_per_code: u32) -> BitBlock {
    let per = bits_per_code as usize;
    let mut out = BitBlock::zeros(codes.len() * per);
    for (c, &code) in codes.iter().enumerate() {
        for b in 0..per {
            if code >> b & 1 == 1 {
                let i = c * per + b;
                out.words[i / 64] |= 1 << (i % 64);
            }
        }
    }
    out
}

/// Toeplitz geometry, security level and seed.
#[derive(Clone, PartialEq, Eq)]
pub struct ExtractorParams {
    pub input_bits: usize,
    pub output_bits: usize,
    /// `ε = 2^−security_log2`.
    pub security_log2: u32,
    /// `input_bits + output_bits − 1` bits.
    pub seed: BitBlock,
}

impl std::fmt::Debug for ExtractorParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtractorParams")
            .field("input_bits", &self.input_bits)
            .field("output_bits", &self.output_bits)
            .field("security_log2", &self.security_log2)
            .finish_non_exhaustive()
    }
}

impl ExtractorParams {
    pub fn new(
        input_bits: usize,
        output_bits: usize,
        security_log2: u32,
        seed: BitBlock,
    ) -> Result<Self> {
        let p = Self {
            input_bits,
            output_bits,
            security_log2,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn seed_len(input_bits: usize, output_bits: usize) -> usize {
        input_bits + output_bits - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_bits == 0 || self.output_bits > self.input_bits {
            return Err(Error::param(
                "output_bits",
                format!(
                    "must lie in 1..={}, got {}",
                    self.input_bits, self.output_bits
                ),
            ));
        }
        let expected = Self::seed_len(self.input_bits, self.output_bits);
        if self.seed.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: self.seed.len(),
            });
        }
        Ok(())
    }
}

/// Output bits per block: `⌊samples · hmin⌋ − 2·security_log2`, at most the
/// raw bit count.
pub fn output_length(
    samples_per_block: usize,
    bits_per_sample: u32,
    hmin_per_sample: f64,
    security_log2: u32,
) -> Result<usize> {
    let bits = f64::from(bits_per_sample);
    if !(hmin_per_sample.is_finite() && (0.0..=bits).contains(&hmin_per_sample)) {
        return Err(Error::param(
            "hmin_per_sample",
            format!("must lie in [0, {bits}], got {hmin_per_sample}"),
        ));
    }
    let penalty = 2 * u64::from(security_log2);
    let entropy = |k: usize| (k as f64 * hmin_per_sample).floor() as u64;
    let available = entropy(samples_per_block);
    if available <= penalty {
        if hmin_per_sample == 0.0 {
            return Err(Error::param("hmin_per_sample", "no entropy to extract"));
        }
        let mut min_samples = ((penalty + 1) as f64 / hmin_per_sample).ceil() as usize;
        while entropy(min_samples) <= penalty {
            min_samples += 1;
        }
        while min_samples > 1 && entropy(min_samples - 1) > penalty {
            min_samples -= 1;
        }
        return Err(Error::BlockTooSmall {
            available,
            min_samples,
        });
    }
    let raw = samples_per_block as u64 * u64::from(bits_per_sample);
    Ok((available - penalty).min(raw) as usize)
}

/// Toeplitz hash with per-shift seed tables precomputed.
///
/// For output bit `i`, the seed bits `seed[i .. i + n]` dotted with the
/// reversed input give the result. `shifted[s]` stores the seed shifted right
/// by `s` bits so every window is a word-aligned slice.
pub struct ToeplitzExtractor {
    params: ExtractorParams,
    input_words: usize,
    stride: usize,
    shifted: Vec<u64>,
}

impl ToeplitzExtractor {
    pub fn new(params: ExtractorParams) -> Result<Self> {
        params.validate()?;
        let input_words = params.input_bits.div_ceil(64);
        let stride = (params.output_bits - 1) / 64 + input_words;
        let seed = params.seed.words();
        let word = |q: usize| seed.get(q).copied().unwrap_or(0);
        let mut shifted = vec![0u64; 64 * stride];
        for s in 0..64 {
            for q in 0..stride {
                shifted[s * stride + q] = if s == 0 {
                    word(q)
                } else {
                    (word(q) >> s) | (word(q + 1) << (64 - s))
                };
            }
        }
        Ok(Self {
            params,
            input_words,
            stride,
            shifted,
        })
    }

    pub fn params(&self) -> &ExtractorParams {
        &self.params
    }

    pub fn extract(&self, input: &BitBlock) -> Result<BitBlock> {
        if input.len() != self.params.input_bits {
            return Err(Error::LengthMismatch {
                expected: self.params.input_bits,
                actual: input.len(),
            });
        }
        let rev = input.reversed();
        let rev = rev.words();
        let m = self.params.output_bits;
        let mut out = BitBlock::zeros(m);
        for s in 0..64.min(m) {
            let table = &self.shifted[s * self.stride..(s + 1) * self.stride];
            let mut i = s;
            while i < m {
                let base = i / 64;
                let window = &table[base..base + self.input_words];
                let acc = window
                    .iter()
                    .zip(rev)
                    .fold(0u64, |acc, (w, r)| acc ^ (w & r));
                if acc.count_ones() & 1 == 1 {
                    out.words[i / 64] |= 1 << (i % 64);
                }
                i += 64;
            }
        }
        Ok(out)
    }
}

/// One-shot [`ToeplitzExtractor::extract`].
pub fn extract_block(params: &ExtractorParams, input: &BitBlock) -> Result<BitBlock> {
    ToeplitzExtractor::new(params.clone())?.extract(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub n: usize,
    pub m: usize,
    pub security_log2: u32,
    pub blocks: u64,
    /// Trailing input bits that did not fill a block.
    pub discarded_bits: u64,
    pub seconds: f64,
    /// Output bits per wall-clock second of extraction.
    pub bits_per_second: f64,
    pub output_bits: u64,
    pub output_bytes: u64,
}

struct BitSink<W: Write> {
    inner: W,
    cur: u8,
    filled: u32,
    buf: Vec<u8>,
    bytes: u64,
}

impl<W: Write> BitSink<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            cur: 0,
            filled: 0,
            buf: Vec::new(),
            bytes: 0,
        }
    }

    fn push_block(&mut self, block: &BitBlock) -> io::Result<()> {
        if self.filled == 0 {
            let full = block.len() / 8;
            let bytes = block.to_bytes();
            self.buf.extend_from_slice(&bytes[..full]);
            for i in full * 8..block.len() {
                self.push_bit(block.get(i));
            }
        } else {
            for i in 0..block.len() {
                self.push_bit(block.get(i));
            }
        }
        let written = self.buf.len() as u64;
        self.inner.write_all(&self.buf)?;
        self.bytes += written;
        self.buf.clear();
        Ok(())
    }

    fn push_bit(&mut self, bit: bool) {
        self.cur |= u8::from(bit) << self.filled;
        self.filled += 1;
        if self.filled == 8 {
            self.buf.push(self.cur);
            self.cur = 0;
            self.filled = 0;
        }
    }

    fn finish(mut self) -> io::Result<u64> {
        if self.filled > 0 {
            self.inner.write_all(&[self.cur])?;
            self.bytes += 1;
        }
        self.inner.flush()?;
        Ok(self.bytes)
    }
}

/// Hashes a stream of ADC codes block by block into `sink`.
///
/// Codes are serialized LSB-first with `adc_bits` bits each and cut into
/// `n`-bit blocks; every block is hashed with the same seed and the outputs
/// are concatenated in source order (the final partial byte is zero-padded).
/// A trailing partial block is dropped and reported.
pub fn stream_extract<I, W>(
    source: I,
    adc_bits: u32,
    extractor: &ToeplitzExtractor,
    sink: W,
) -> Result<StreamReport>
where
    I: IntoIterator<Item = io::Result<u16>>,
    W: Write,
{
    if !(1..=16).contains(&adc_bits) {
        return Err(Error::param(
            "adc_bits",
            format!("must lie in 1..=16, got {adc_bits}"),
        ));
    }
    let params = extractor.params();
    let n = params.input_bits;
    let max_code = (1u32 << adc_bits) - 1;
    let start = Instant::now();

    let mut sink = BitSink::new(sink);
    let mut blocks = 0u64;
    let mut batch: Vec<BitBlock> = Vec::with_capacity(STREAM_BATCH_BLOCKS);
    let mut current = BitBlock::zeros(n);
    let mut filled = 0usize;

    let flush =
        |batch: &mut Vec<BitBlock>, sink: &mut BitSink<W>, blocks: &mut u64| -> Result<()> {
            let outputs: Vec<BitBlock> = batch
                .par_iter()
                .map(|b| extractor.extract(b))
                .collect::<Result<_>>()?;
            for out in &outputs {
                sink.push_block(out).map_err(|source| Error::Stream {
                    block: *blocks,
                    source,
                })?;
                *blocks += 1;
            }
            batch.clear();
            Ok(())
        };

    for code in source {
        let block_index = blocks + batch.len() as u64;
        let code = code.map_err(|source| Error::Stream {
            block: block_index,
            source,
        })?;
        if u32::from(code) > max_code {
            return Err(Error::param(
                "code",
                format!("code {code} in block {block_index} exceeds {adc_bits}-bit range"),
            ));
        }
        for b in 0..adc_bits {
            if code >> b & 1 == 1 {
                current.words[filled / 64] |= 1 << (filled % 64);
            }
            filled += 1;
            if filled == n {
                batch.push(std::mem::replace(&mut current, BitBlock::zeros(n)));
                filled = 0;
                if batch.len() == STREAM_BATCH_BLOCKS {
                    flush(&mut batch, &mut sink, &mut blocks)?;
                }
            }
        }
    }
    if !batch.is_empty() {
        flush(&mut batch, &mut sink, &mut blocks)?;
    }
    let output_bytes = sink.finish().map_err(|source| Error::Stream {
        block: blocks,
        source,
    })?;

    let seconds = start.elapsed().as_secs_f64();
    let output_bits = blocks * params.output_bits as u64;
    Ok(StreamReport {
        n,
        m: params.output_bits,
        security_log2: params.security_log2,
        blocks,
        discarded_bits: filled as u64,
        seconds,
        bits_per_second: if seconds > 0.0 && output_bits > 0 {
            output_bits as f64 / seconds
        } else {
            0.0
        },
        output_bits,
        output_bytes,
    })
}

/// Where Toeplitz seed bits come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntropySource {
    /// The operating system's CSPRNG. Fails loudly if unavailable.
    Platform,
    /// Caller-supplied bits, used verbatim; the length must match.
    Fixed(BitBlock),
    /// ChaCha20 keyed from a 64-bit value. Reproducible, for tests and demos only.
    Seeded(u64),
}

pub fn generate_seed(length: usize, source: &EntropySource) -> Result<BitBlock> {
    if length == 0 {
        return Err(Error::param("length", "must be > 0"));
    }
    let mut bytes = vec![0u8; length.div_ceil(8)];
    match source {
        EntropySource::Platform => {
            getrandom::fill(&mut bytes).map_err(|e| Error::EntropyUnavailable(e.to_string()))?;
        }
        EntropySource::Fixed(bits) => {
            if bits.len() != length {
                return Err(Error::LengthMismatch {
                    expected: length,
                    actual: bits.len(),
                });
            }
            return Ok(bits.clone());
        }
        EntropySource::Seeded(seed) => {
            ChaCha20Rng::seed_from_u64(*seed).fill_bytes(&mut bytes);
        }
    }
    BitBlock::from_bytes(&bytes, length)
}
