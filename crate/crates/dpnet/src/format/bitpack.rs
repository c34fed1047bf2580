//! Fixed-width bit packing of codebook indices.
//!
//! Indices are laid out LSB-first within bytes: bit `i` of the stream lives
//! in byte `i / 8` at bit position `i % 8`, and each index contributes its
//! own bits lowest-first. The final byte is zero-padded.

use super::FormatError;

/// Bytes needed to pack `n` indices of `bits` bits each.
pub fn packed_len(n: usize, bits: u8) -> usize {
    (n * bits as usize).div_ceil(8)
}

/// Pack `indices` into a byte array at `bits` bits per index.
pub fn pack_indices(indices: &[u32], bits: u8) -> Result<Vec<u8>, FormatError> {
    if !(1..=8).contains(&bits) {
        return Err(FormatError::InvalidBitWidth { bits });
    }
    let limit = 1u32 << bits;
    if let Some(position) = indices.iter().position(|&v| v >= limit) {
        return Err(FormatError::IndexOverflow { position, value: indices[position], bits });
    }
    let mut bytes = vec![0u8; packed_len(indices.len(), bits)];
    let mut bit_pos = 0usize;
    for &value in indices {
        for b in 0..bits {
            if value >> b & 1 == 1 {
                bytes[bit_pos / 8] |= 1 << (bit_pos % 8);
            }
            bit_pos += 1;
        }
    }
    Ok(bytes)
}

/// Exact inverse of [`pack_indices`]; `bytes` must be exactly
/// `packed_len(n, bits)` long. Padding bits are ignored.
pub fn unpack_indices(bytes: &[u8], bits: u8, n: usize) -> Result<Vec<u32>, FormatError> {
    if !(1..=8).contains(&bits) {
        return Err(FormatError::InvalidBitWidth { bits });
    }
    let expected = packed_len(n, bits);
    if bytes.len() != expected {
        return Err(FormatError::LengthMismatch { expected, got: bytes.len() });
    }
    let mut indices = Vec::with_capacity(n);
    let mut bit_pos = 0usize;
    for _ in 0..n {
        let mut value = 0u32;
        for b in 0..bits {
            if bytes[bit_pos / 8] >> (bit_pos % 8) & 1 == 1 {
                value |= 1 << b;
            }
            bit_pos += 1;
        }
        indices.push(value);
    }
    Ok(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Bit-at-a-time reference: collect every bit into a Vec<bool>, then
    /// assemble bytes. Deliberately naive and independent of pack_indices.
    fn reference_pack(indices: &[u32], bits: u8) -> Vec<u8> {
        let mut stream: Vec<bool> = Vec::new();
        for &v in indices {
            for b in 0..bits {
                stream.push(v >> b & 1 == 1);
            }
        }
        while stream.len() % 8 != 0 {
            stream.push(false);
        }
        stream
            .chunks(8)
            .map(|byte| byte.iter().enumerate().fold(0u8, |acc, (i, &bit)| {
                acc | ((bit as u8) << i)
            }))
            .collect()
    }

    #[test]
    fn three_bit_example() {
        assert_eq!(pack_indices(&[1, 2, 3], 3).unwrap(), vec![209, 0]);
        assert_eq!(reference_pack(&[1, 2, 3], 3), vec![209, 0]);
    }

    #[test]
    fn all_zero_single_bit() {
        assert_eq!(pack_indices(&[0; 8], 1).unwrap(), vec![0]);
    }

    #[test]
    fn all_one_single_bit() {
        assert_eq!(pack_indices(&[1; 8], 1).unwrap(), vec![255]);
    }

    #[test]
    fn matches_reference_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let bits = rng.random_range(1..=8u8);
            let n = rng.random_range(0..50usize);
            let indices: Vec<u32> =
                (0..n).map(|_| rng.random_range(0..1u32 << bits)).collect();
            assert_eq!(pack_indices(&indices, bits).unwrap(), reference_pack(&indices, bits));
        }
    }

    #[test]
    fn round_trip_restores_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let bits = rng.random_range(1..=8u8);
            let n = rng.random_range(0..200usize);
            let indices: Vec<u32> =
                (0..n).map(|_| rng.random_range(0..1u32 << bits)).collect();
            let packed = pack_indices(&indices, bits).unwrap();
            assert_eq!(packed.len(), packed_len(n, bits));
            assert_eq!(unpack_indices(&packed, bits, n).unwrap(), indices);
        }
    }

    #[test]
    fn rejects_overflowing_index() {
        assert!(matches!(
            pack_indices(&[0, 8], 3),
            Err(FormatError::IndexOverflow { position: 1, value: 8, bits: 3 })
        ));
    }

    #[test]
    fn rejects_bad_width_and_length() {
        assert!(matches!(pack_indices(&[0], 0), Err(FormatError::InvalidBitWidth { bits: 0 })));
        assert!(matches!(pack_indices(&[0], 9), Err(FormatError::InvalidBitWidth { bits: 9 })));
        assert!(matches!(
            unpack_indices(&[0, 0, 0], 3, 3),
            Err(FormatError::LengthMismatch { expected: 2, got: 3 })
        ));
    }
}
