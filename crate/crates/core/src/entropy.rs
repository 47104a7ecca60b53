//! Static-model range coder for per-layer index streams.
//!
//! Byte-oriented carry-propagating range coder with a 32-bit range and a
//! 33-bit low register. Frequencies come from a [`FreqTable`] trained offline;
//! the coder itself never adapts. All arithmetic is integer, so the output is
//! identical on every platform.

use crate::error::{Error, Result};

/// Upper bound on `FreqTable::total`; tables above it are rescaled.
pub const MAX_TOTAL: u32 = 1 << 24;

const TOP: u32 = 1 << 24;

/// Trailing zero bytes the encoder omits and the decoder supplies.
const IMPLICIT_TAIL: usize = 3;

/// Smoothed symbol frequencies for one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreqTable {
    counts: Vec<u32>,
    /// `cumulative[s]` is the sum of `counts[..s]`; one extra trailing entry holds the total.
    cumulative: Vec<u32>,
}

impl FreqTable {
    /// Builds a table from raw counts. Every count must be at least 1; totals
    /// above [`MAX_TOTAL`] are rescaled.
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("frequency table needs at least one symbol"));
        }
        if counts.len() > MAX_TOTAL as usize {
            return Err(Error::invalid(format!(
                "{} symbols exceed the coder's total cap",
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::invalid("frequency table counts must be >= 1"));
        }
        let counts = rescale(counts);
        let mut cumulative = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0u32;
        cumulative.push(0);
        for &c in &counts {
            acc += c;
            cumulative.push(acc);
        }
        Ok(FreqTable { counts, cumulative })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        FreqTable::from_counts(vec![1; k])
    }

    /// Laplace-smoothed histogram: each symbol's count is its occurrences plus one.
    pub fn from_observations(k: usize, symbols: &[u32]) -> Result<Self> {
        let mut counts = vec![1u64; k];
        for &s in symbols {
            let slot = counts.get_mut(s as usize).ok_or_else(|| {
                Error::invalid(format!("symbol {s} outside alphabet of size {k}"))
            })?;
            *slot += 1;
        }
        let total: u64 = counts.iter().sum();
        let counts = if total > MAX_TOTAL as u64 {
            // Bring into u32 range first; `rescale` finishes the job.
            counts
                .iter()
                .map(|&c| ((c as u128 * MAX_TOTAL as u128 / total as u128) as u32).max(1))
                .collect()
        } else {
            counts.into_iter().map(|c| c as u32).collect()
        };
        FreqTable::from_counts(counts)
    }

    pub fn symbol_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        *self.cumulative.last().unwrap()
    }

    pub fn probability(&self, symbol: usize) -> f64 {
        self.counts[symbol] as f64 / self.total() as f64
    }

    /// Shannon entropy of the table's distribution in bits per symbol.
    pub fn entropy_bits(&self) -> f64 {
        let t = self.total() as f64;
        self.counts
            .iter()
            .map(|&c| {
                let p = c as f64 / t;
                -p * p.log2()
            })
            .sum()
    }

    /// Ideal code length of `symbols` under this table, in bits.
    pub fn information_bits(&self, symbols: &[u32]) -> f64 {
        symbols.iter().map(|&s| -self.probability(s as usize).log2()).sum()
    }

    fn lookup(&self, target: u32) -> usize {
        // Largest s with cumulative[s] <= target.
        self.cumulative.partition_point(|&c| c <= target) - 1
    }
}

fn rescale(mut counts: Vec<u32>) -> Vec<u32> {
    loop {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total <= MAX_TOTAL as u64 {
            return counts;
        }
        for c in counts.iter_mut() {
            *c = ((*c as u64 * MAX_TOTAL as u64 / total) as u32).max(1);
        }
    }
}

/// One smoothed table per layer from observed index planes.
pub fn train_tables(index_planes: &[Vec<u32>], layer_sizes: &[usize]) -> Result<Vec<FreqTable>> {
    if index_planes.len() != layer_sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: layer_sizes.len(),
            found: index_planes.len(),
        });
    }
    index_planes
        .iter()
        .zip(layer_sizes)
        .map(|(plane, &k)| FreqTable::from_observations(k, plane))
        .collect()
}

struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        Encoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = ((self.low as u32) << 8) as u64;
    }

    fn encode(&mut self, table: &FreqTable, s: usize) {
        let r = self.range / table.total();
        let start = table.cumulative[s];
        self.low += r as u64 * start as u64;
        // The last symbol absorbs the division remainder.
        self.range = if s + 1 == table.symbol_count() {
            self.range - r * start
        } else {
            r * table.counts[s]
        };
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn finish(mut self) -> Vec<u8> {
        // Round `low` up to a multiple of 2^24; the result is still inside
        // [low, low + range) because range >= 2^24, and only its top byte is
        // significant. The decoder reads the missing tail as zeros.
        const MASK: u64 = (1 << 24) - 1;
        self.low = (self.low + MASK) & !MASK;
        self.shift_low();
        self.shift_low();
        // The first byte stands for the carry out of an empty prefix and is always zero.
        debug_assert_eq!(self.out.first(), Some(&0));
        self.out.remove(0);
        self.out
    }
}

/// Arithmetic-codes `symbols` with a static table.
pub fn ac_encode(symbols: &[u32], table: &FreqTable) -> Result<Vec<u8>> {
    let k = table.symbol_count();
    if let Some(&s) = symbols.iter().find(|&&s| s as usize >= k) {
        return Err(Error::invalid(format!("symbol {s} outside alphabet of size {k}")));
    }
    let mut enc = Encoder::new();
    for &s in symbols {
        enc.encode(table, s as usize);
    }
    Ok(enc.finish())
}

struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> Decoder<'a> {
    fn new(input: &'a [u8]) -> Result<Self> {
        let mut d = Decoder {
            input,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    /// Bytes past the end read as zero, up to the three the encoder's flush
    /// leaves implicit. Reading further means the stream was cut short.
    fn next_byte(&mut self) -> Result<u8> {
        let b = match self.input.get(self.pos) {
            Some(&b) => b,
            None if self.pos < self.input.len() + IMPLICIT_TAIL => 0,
            None => {
                return Err(Error::Truncated(format!(
                    "coded stream ended after {} bytes",
                    self.input.len()
                )))
            }
        };
        self.pos += 1;
        Ok(b)
    }

    fn decode(&mut self, table: &FreqTable) -> Result<u32> {
        let r = self.range / table.total();
        let target = (self.code / r).min(table.total() - 1);
        let s = table.lookup(target);
        let start = table.cumulative[s];
        self.code = self.code.wrapping_sub(r * start);
        self.range = if s + 1 == table.symbol_count() {
            self.range - r * start
        } else {
            r * table.counts[s]
        };
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(s as u32)
    }
}

/// Decodes `count` symbols. A stream cut short, or with bytes left over, is an
/// error. Decoding with a table other than the encoder's returns arbitrary
/// symbols or an error; it never panics.
pub fn ac_decode(bytes: &[u8], table: &FreqTable, count: usize) -> Result<Vec<u32>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut dec = Decoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(dec.decode(table)?);
    }
    // The decoder consumes every real byte plus the implicit tail, no more and no less.
    if dec.pos != bytes.len() + IMPLICIT_TAIL {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} symbols",
            bytes.len() + IMPLICIT_TAIL - dec.pos
        )));
    }
    Ok(out)
}
