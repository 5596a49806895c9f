//! Shared block types and bit utilities.
//!
//! Bit `j` of a byte always carries weight `2^j`.

use crate::error::Error;
use crate::{CIPHER_BLOCK, PLAIN_BLOCK};

pub type PlainBlock15 = [u8; PLAIN_BLOCK];
pub type ExpandedBlock16 = [u8; CIPHER_BLOCK];

/// Number of set bits in a byte.
#[inline]
pub fn hamming_weight(b: u8) -> u32 {
    b.count_ones()
}

/// Sum of the byte weights of a block (or any byte slice).
#[inline]
pub fn block_weight(block: &[u8]) -> u32 {
    block.iter().map(|&b| b.count_ones()).sum()
}

/// Splits `data` into 15-byte plain-blocks.
pub fn partition15(data: &[u8]) -> Result<Vec<PlainBlock15>, Error> {
    if !data.len().is_multiple_of(PLAIN_BLOCK) {
        return Err(Error::NonDivisibleLength {
            len: data.len(),
            block: PLAIN_BLOCK,
        });
    }
    Ok(data
        .chunks_exact(PLAIN_BLOCK)
        .map(|c| c.try_into().expect("chunk of 15"))
        .collect())
}

/// Byte-wise XOR of two equal-length slices.
pub fn xor_bytes(a: &[u8], b: &[u8]) -> Result<Vec<u8>, Error> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

/// XOR differential of two plaintexts.
pub fn xor_differential(a: &[u8], b: &[u8]) -> Result<Differential, Error> {
    Differential::new(xor_bytes(a, b)?)
}

/// XOR of two equal-length plaintexts; its length is a multiple of 15.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Differential(Vec<u8>);

impl Differential {
    pub fn new(bytes: Vec<u8>) -> Result<Self, Error> {
        if !bytes.len().is_multiple_of(PLAIN_BLOCK) {
            return Err(Error::NonDivisibleLength {
                len: bytes.len(),
                block: PLAIN_BLOCK,
            });
        }
        Ok(Differential(bytes))
    }

    pub fn zeroed(num_blocks: usize) -> Self {
        Differential(vec![0; num_blocks * PLAIN_BLOCK])
    }

    pub fn num_blocks(&self) -> usize {
        self.0.len() / PLAIN_BLOCK
    }

    pub fn block(&self, k: usize) -> &[u8] {
        &self.0[k * PLAIN_BLOCK..(k + 1) * PLAIN_BLOCK]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [u8] {
        &mut self.0[k * PLAIN_BLOCK..(k + 1) * PLAIN_BLOCK]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    /// `base ⊕ self`, the second plaintext of the pair.
    pub fn apply_to(&self, base: &[u8]) -> Result<Vec<u8>, Error> {
        xor_bytes(base, &self.0)
    }
}

/// 8x8 bit matrix; element `(i, j)` is bit `j` of byte `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitMatrix8(pub [u8; 8]);

impl BitMatrix8 {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut rows = [0u8; 8];
        rows.copy_from_slice(&bytes[..8]);
        BitMatrix8(rows)
    }

    pub fn to_bytes(self) -> [u8; 8] {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        (self.0[i] >> j) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if value {
            self.0[i] |= 1 << j;
        } else {
            self.0[i] &= !(1 << j);
        }
    }

    /// Rotates row `i` so that column `c` moves to `(c + amount) mod 8`.
    pub fn rotate_row(&mut self, i: usize, amount: u8) {
        self.0[i] = rotate_row(self.0[i], amount);
    }

    /// Shifts column `j` downwards: row `i` moves to `(i + amount) mod 8`.
    pub fn rotate_column(&mut self, j: usize, amount: u8) {
        let amount = (amount & 7) as usize;
        if amount == 0 {
            return;
        }
        let mask = 1u8 << j;
        let column: [u8; 8] = std::array::from_fn(|i| self.0[i] & mask);
        for (i, bit) in column.into_iter().enumerate() {
            let dst = (i + amount) & 7;
            self.0[dst] = (self.0[dst] & !mask) | bit;
        }
    }
}

/// Rotates an 8-bit row so that bit `c` moves to bit `(c + amount) mod 8`.
#[inline]
pub fn rotate_row(row: u8, amount: u8) -> u8 {
    row.rotate_left(u32::from(amount & 7))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn popcount_loop(b: u8) -> u32 {
        (0..8).map(|j| u32::from((b >> j) & 1)).sum()
    }

    #[test]
    fn weights() {
        assert_eq!(hamming_weight(0x00), 0);
        assert_eq!(hamming_weight(0xFF), 8);
        assert_eq!(hamming_weight(0xA5), popcount_loop(0xA5));
        assert_eq!(popcount_loop(0xA5), 4);
        assert_eq!(block_weight(&[0u8; 16]), 0);
        assert_eq!(block_weight(&[0xFFu8; 16]), 128);
        let mut b = [0u8; 16];
        b[0] = 0x01;
        b[1] = 0x03;
        assert_eq!(block_weight(&b), popcount_loop(1) + popcount_loop(3));
    }

    #[test]
    fn partition() {
        let data: Vec<u8> = (0..15).collect();
        assert_eq!(partition15(&data).unwrap(), vec![<[u8; 15]>::try_from(&data[..]).unwrap()]);
        let data: Vec<u8> = (0..30).collect();
        let blocks = partition15(&data).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0][0], 0);
        assert_eq!(blocks[1][0], 15);
        assert_eq!(blocks[1][14], 29);
        assert_eq!(
            partition15(&[0u8; 16]),
            Err(Error::NonDivisibleLength { len: 16, block: 15 })
        );
    }

    #[test]
    fn differentials() {
        let a: Vec<u8> = (0..15).map(|i| i * 7).collect();
        assert!(xor_differential(&a, &a).unwrap().as_bytes().iter().all(|&b| b == 0));
        assert_eq!(xor_differential(&a, &[0; 15]).unwrap().as_bytes(), &a[..]);
        let mut x = vec![0u8; 15];
        let mut y = vec![0u8; 15];
        x[0] = 0xF0;
        y[0] = 0x0F;
        assert_eq!(xor_differential(&x, &y).unwrap().as_bytes()[0], 0xFF);
        assert!(matches!(
            xor_differential(&x, &y[..14]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn row_rotation() {
        assert_eq!(rotate_row(0x5A, 0), 0x5A);
        // c -> c + 2
        let oracle = |row: u8, a: u8| -> u8 {
            (0..8).fold(0u8, |acc, c| acc | (((row >> c) & 1) << ((c + a) % 8)))
        };
        assert_eq!(oracle(0x01, 2), 0x04);
        assert_eq!(rotate_row(0x01, 2), 0x04);
        for row in 0..=255u8 {
            for a in 0..8 {
                assert_eq!(rotate_row(row, a), oracle(row, a));
                assert_eq!(rotate_row(rotate_row(row, a), 8 - a), row);
            }
        }
    }

    #[test]
    fn column_rotation() {
        let mut m = BitMatrix8([0xFF, 0, 0, 0, 0, 0, 0, 0]);
        for j in 0..8 {
            m.rotate_column(j, 2);
        }
        assert_eq!(m.0, [0, 0, 0xFF, 0, 0, 0, 0, 0]);
        let mut u = BitMatrix8([0x3C; 8]);
        for j in 0..8 {
            u.rotate_column(j, j as u8);
        }
        assert_eq!(u.0, [0x3C; 8]);
    }

    proptest! {
        #[test]
        fn matrix_round_trip(bytes in prop::array::uniform8(any::<u8>())) {
            let m = BitMatrix8::from_bytes(&bytes);
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert_eq!(m.get(i, j), (bytes[i] >> j) & 1 == 1);
                }
            }
            prop_assert_eq!(m.to_bytes(), bytes);
        }

        #[test]
        fn column_rotation_inverts(bytes in prop::array::uniform8(any::<u8>()), s in 0u8..8, j in 0usize..8) {
            let mut m = BitMatrix8(bytes);
            m.rotate_column(j, s);
            m.rotate_column(j, 8 - s);
            prop_assert_eq!(m.0, bytes);
        }

        #[test]
        fn xor_weight_symmetric(a: u8, b: u8) {
            prop_assert_eq!(hamming_weight(a ^ b), hamming_weight(b ^ a));
        }

        #[test]
        fn block_weight_permutation_invariant(mut block in prop::array::uniform16(any::<u8>()), seed: u64) {
            let w = block_weight(&block);
            let mut s = seed;
            for i in (1..16).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                block.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(block_weight(&block), w);
        }
    }
}
