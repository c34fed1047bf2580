//! Canonical Huffman coding of index streams.
//!
//! The table stores only a code length per symbol; canonical code
//! assignment (codes handed out in (length, symbol) order) makes encoder
//! and decoder agree without shipping the codes themselves. Code bits enter
//! the stream most-significant-first, the stream itself fills bytes
//! LSB-first like every other bit stream in this crate.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::FormatError;

const MAX_CODE_LEN: u8 = 63;

/// A canonical Huffman table: `lengths()[s]` is the code length of symbol
/// `s`, zero meaning the symbol does not occur.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    lengths: Vec<u8>,
}

impl HuffmanTable {
    /// Validate lengths: at least one coded symbol, lengths within bounds,
    /// and the Kraft sum at most one (otherwise no prefix code exists).
    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self, FormatError> {
        if lengths.iter().all(|&l| l == 0) {
            return Err(FormatError::InvalidTable("no coded symbols".into()));
        }
        if let Some(&l) = lengths.iter().find(|&&l| l > MAX_CODE_LEN) {
            return Err(FormatError::InvalidTable(format!("code length {l} too large")));
        }
        let kraft: f64 = lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| (0.5f64).powi(l as i32))
            .sum();
        if kraft > 1.0 + 1e-9 {
            return Err(FormatError::InvalidTable(format!("Kraft sum {kraft} exceeds 1")));
        }
        Ok(Self { lengths })
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn symbol_count(&self) -> usize {
        self.lengths.len()
    }

    /// Total payload bits this table assigns to `indices`.
    pub fn payload_bits(&self, indices: &[u32]) -> u64 {
        indices.iter().map(|&s| self.lengths[s as usize] as u64).sum()
    }

    /// Canonical code of every symbol, assigned in (length, symbol) order.
    fn canonical_codes(&self) -> Vec<(u64, u8)> {
        let mut coded: Vec<usize> = (0..self.lengths.len())
            .filter(|&s| self.lengths[s] > 0)
            .collect();
        coded.sort_by_key(|&s| (self.lengths[s], s));
        let mut codes = vec![(0u64, 0u8); self.lengths.len()];
        let mut code = 0u64;
        let mut prev_len = 0u8;
        for &s in &coded {
            let len = self.lengths[s];
            code <<= len - prev_len;
            codes[s] = (code, len);
            code += 1;
            prev_len = len;
        }
        codes
    }
}

fn code_lengths(freq: &[u64]) -> Vec<u8> {
    let coded: Vec<usize> = (0..freq.len()).filter(|&s| freq[s] > 0).collect();
    let mut lengths = vec![0u8; freq.len()];
    if coded.len() == 1 {
        // A single distinct symbol still gets a one-bit code so the payload
        // has a defined width.
        lengths[coded[0]] = 1;
        return lengths;
    }
    // Plain heap-built Huffman tree; ties broken by node id so the tree (and
    // the resulting lengths) are deterministic.
    struct Node {
        weight: u64,
        children: Option<(usize, usize)>,
        symbol: usize,
    }
    let mut nodes: Vec<Node> = coded
        .iter()
        .map(|&s| Node { weight: freq[s], children: None, symbol: s })
        .collect();
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        nodes.iter().enumerate().map(|(i, n)| Reverse((n.weight, i))).collect();
    while heap.len() > 1 {
        let Reverse((w1, a)) = heap.pop().unwrap();
        let Reverse((w2, b)) = heap.pop().unwrap();
        let id = nodes.len();
        nodes.push(Node { weight: w1 + w2, children: Some((a, b)), symbol: usize::MAX });
        heap.push(Reverse((w1 + w2, id)));
    }
    let Reverse((_, root)) = heap.pop().unwrap();
    let mut stack = vec![(root, 0u8)];
    while let Some((id, depth)) = stack.pop() {
        match nodes[id].children {
            Some((a, b)) => {
                stack.push((a, depth + 1));
                stack.push((b, depth + 1));
            }
            None => lengths[nodes[id].symbol] = depth.max(1),
        }
    }
    lengths
}

/// Huffman-code an index stream. Returns the canonical table and the
/// bitstream (zero-padded to a whole number of bytes).
pub fn huffman_encode(indices: &[u32]) -> Result<(HuffmanTable, Vec<u8>), FormatError> {
    if indices.is_empty() {
        return Err(FormatError::EmptyStream);
    }
    let max_symbol = *indices.iter().max().expect("non-empty") as usize;
    let mut freq = vec![0u64; max_symbol + 1];
    for &s in indices {
        freq[s as usize] += 1;
    }
    let table = HuffmanTable::from_lengths(code_lengths(&freq))?;
    let codes = table.canonical_codes();

    let total_bits = table.payload_bits(indices);
    let mut bytes = vec![0u8; (total_bits as usize).div_ceil(8)];
    let mut bit_pos = 0usize;
    for &s in indices {
        let (code, len) = codes[s as usize];
        for t in (0..len).rev() {
            if code >> t & 1 == 1 {
                bytes[bit_pos / 8] |= 1 << (bit_pos % 8);
            }
            bit_pos += 1;
        }
    }
    Ok((table, bytes))
}

/// Decode exactly `n` symbols from a canonical-Huffman bitstream. Exact
/// inverse of [`huffman_encode`]; trailing padding bits are ignored.
pub fn huffman_decode(
    table: &HuffmanTable,
    bytes: &[u8],
    n: usize,
) -> Result<Vec<u32>, FormatError> {
    // Per-length canonical lookup: count, first code and first slot of each
    // code length, over symbols sorted by (length, symbol).
    let lengths = table.lengths();
    let max_len = *lengths.iter().max().unwrap_or(&0) as usize;
    if max_len == 0 {
        return Err(FormatError::InvalidTable("no coded symbols".into()));
    }
    let mut sorted: Vec<usize> = (0..lengths.len()).filter(|&s| lengths[s] > 0).collect();
    sorted.sort_by_key(|&s| (lengths[s], s));
    let mut count = vec![0u64; max_len + 1];
    for &s in &sorted {
        count[lengths[s] as usize] += 1;
    }
    let mut first_code = vec![0u64; max_len + 1];
    let mut first_slot = vec![0u64; max_len + 1];
    let mut code = 0u64;
    let mut slot = 0u64;
    for len in 1..=max_len {
        code <<= 1;
        first_code[len] = code;
        first_slot[len] = slot;
        code += count[len];
        slot += count[len];
    }

    let total_bits = bytes.len() as u64 * 8;
    let mut out = Vec::with_capacity(n);
    let mut bit_pos = 0u64;
    while out.len() < n {
        let mut code = 0u64;
        let mut len = 0usize;
        loop {
            if bit_pos >= total_bits {
                return Err(FormatError::TruncatedStream { decoded: out.len(), expected: n });
            }
            let bit = bytes[(bit_pos / 8) as usize] >> (bit_pos % 8) & 1;
            bit_pos += 1;
            code = code << 1 | bit as u64;
            len += 1;
            if count[len] > 0 && code - first_code[len] < count[len] {
                let idx = (first_slot[len] + (code - first_code[len])) as usize;
                out.push(sorted[idx] as u32);
                break;
            }
            // No codeword of the maximum length matched: the accumulated
            // bits can never resolve to a symbol.
            if len == max_len {
                return Err(FormatError::CorruptStream { bit_position: bit_pos - 1 });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skewed_two_symbol_stream() {
        let (table, bytes) = huffman_encode(&[0, 0, 0, 1]).unwrap();
        assert_eq!(table.lengths(), &[1, 1]);
        assert_eq!(table.payload_bits(&[0, 0, 0, 1]), 4);
        assert_eq!(bytes.len(), 1);
        assert_eq!(huffman_decode(&table, &bytes, 4).unwrap(), vec![0, 0, 0, 1]);
    }

    #[test]
    fn uniform_stream_equals_fixed_width() {
        for b in 1..=4u32 {
            let symbols = 1u32 << b;
            let indices: Vec<u32> = (0..symbols * 7).map(|i| i % symbols).collect();
            let (table, _) = huffman_encode(&indices).unwrap();
            assert!(table.lengths().iter().all(|&l| l as u32 == b), "b={b}");
            assert_eq!(table.payload_bits(&indices), (indices.len() as u64) * b as u64);
        }
    }

    #[test]
    fn single_symbol_stream_uses_one_bit() {
        let indices = vec![3u32; 10];
        let (table, bytes) = huffman_encode(&indices).unwrap();
        assert_eq!(table.lengths()[3], 1);
        assert_eq!(bytes, vec![0, 0]);
        assert_eq!(huffman_decode(&table, &bytes, 10).unwrap(), indices);
        // A one in the stream cannot be a codeword here.
        assert!(matches!(
            huffman_decode(&table, &[0b0000_0100, 0], 10),
            Err(FormatError::CorruptStream { bit_position: 2 })
        ));
    }

    #[test]
    fn round_trip_large_random_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Skewed distribution over 16 symbols.
        let indices: Vec<u32> = (0..100_000)
            .map(|_| {
                let r: f64 = rng.random_range(0.0..1.0);
                (16.0 * r * r) as u32
            })
            .collect();
        let (table, bytes) = huffman_encode(&indices).unwrap();
        assert_eq!(huffman_decode(&table, &bytes, indices.len()).unwrap(), indices);
        // Skewed streams beat the fixed-width payload.
        assert!(table.payload_bits(&indices) < indices.len() as u64 * 4);
    }

    #[test]
    fn round_trips_across_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let symbols = rng.random_range(1..=64u32);
            let n = rng.random_range(1..=300usize);
            let indices: Vec<u32> = (0..n).map(|_| rng.random_range(0..symbols)).collect();
            let (table, bytes) = huffman_encode(&indices).unwrap();
            assert_eq!(huffman_decode(&table, &bytes, n).unwrap(), indices);
        }
    }

    #[test]
    fn truncated_stream_reports_progress() {
        let indices: Vec<u32> = (0..32).map(|i| i % 4).collect();
        let (table, bytes) = huffman_encode(&indices).unwrap();
        let err = huffman_decode(&table, &bytes[..bytes.len() - 1], 32).unwrap_err();
        assert!(matches!(err, FormatError::TruncatedStream { expected: 32, .. }));
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(huffman_encode(&[]), Err(FormatError::EmptyStream)));
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(HuffmanTable::from_lengths(vec![0, 0]).is_err());
        // Kraft sum 3/2 > 1.
        assert!(HuffmanTable::from_lengths(vec![1, 1, 1]).is_err());
        assert!(HuffmanTable::from_lengths(vec![64]).is_err());
    }
}
