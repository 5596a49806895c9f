//! MCS encryption and decryption.
//!
//! Per block `k` the cipher runs five steps on the controlling bits
//! `b(129k) .. b(129k + 128)`:
//!
//! 1. expansion: append `temp`, then `temp = block[l(k)]`
//! 2. 32 conditional byte swaps from [`SWAP_TABLE`]
//! 3. bit-plane masking with `Seed1`/`Seed2` and their complements
//! 4. horizontal rotation of each row of the two 8x8 bit matrices
//! 5. vertical rotation of each column
//!
//! Bytes 0..8 form the first matrix and use `(alpha1, beta1)`; bytes 8..16
//! form the second and use `(alpha2, beta2)`.

use crate::bits::{partition15, rotate_row, BitMatrix8, ExpandedBlock16, PlainBlock15};
use crate::error::Error;
use crate::fixed::Fixed129;
use crate::key::SecretKey;
use crate::prbg::{generate_prbs, PrbsStream};
use crate::{BITS_PER_BLOCK, CIPHER_BLOCK, PLAIN_BLOCK};

/// `(i, j, l)`: swap bytes `i` and `j` when `b(129k + l) = 1`, applied in
/// this order.
pub const SWAP_TABLE: [(u8, u8, u8); 32] = [
    (0, 8, 4),
    (1, 9, 5),
    (2, 10, 6),
    (3, 11, 7),
    (4, 12, 8),
    (5, 13, 9),
    (6, 14, 10),
    (7, 15, 11),
    (0, 4, 12),
    (1, 5, 13),
    (2, 6, 14),
    (3, 7, 15),
    (8, 12, 16),
    (9, 13, 17),
    (10, 14, 18),
    (11, 15, 19),
    (0, 2, 20),
    (1, 3, 21),
    (4, 6, 22),
    (5, 7, 23),
    (8, 10, 24),
    (9, 11, 25),
    (12, 14, 26),
    (13, 15, 27),
    (0, 1, 28),
    (2, 3, 29),
    (4, 5, 30),
    (6, 7, 31),
    (8, 9, 32),
    (10, 11, 33),
    (12, 13, 34),
    (14, 15, 35),
];

/// Bit offsets inside a block's 129 controlling bits.
pub mod offsets {
    pub const EXPANSION: usize = 0;
    pub const SWAP: usize = 4;
    pub const PLANE_SELECT: usize = 36;
    pub const ROW_ROT_1: usize = 65;
    pub const COL_ROT_1: usize = 81;
    pub const ROW_ROT_2: usize = 97;
    pub const COL_ROT_2: usize = 113;
}

/// Rotation amount for direction bit `dir` and magnitude bit `mag`:
/// `alpha + beta*mag` when `dir = 0`, else `8 - (alpha + beta*mag)`.
#[inline]
pub fn rotation_amount(alpha: u8, beta: u8, dir: bool, mag: bool) -> u8 {
    let r = alpha + if mag { beta } else { 0 };
    if dir {
        8 - r
    } else {
        r
    }
}

/// Everything a block's controlling bits decide, already combined with the
/// rotation sub-keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockControl {
    /// `l(k)`, the index of the byte that becomes the next `temp`.
    pub expansion_index: u8,
    /// Bit `t` is `b(129k + 4 + t)`, controlling `SWAP_TABLE[t]`.
    pub swap_bits: u32,
    pub seed1: u16,
    pub seed2: u16,
    /// `B(k, j)` for each bit plane `j`.
    pub plane_select: [u8; 8],
    /// Horizontal amount per byte (row) of the block.
    pub row_rot: [u8; 16],
    /// Vertical amount per column; `[0..8]` first matrix, `[8..16]` second.
    pub col_rot: [u8; 16],
}

impl BlockControl {
    pub fn from_bits(bits: &[bool; BITS_PER_BLOCK], key: &SecretKey) -> Self {
        let b = |i: usize| bits[i];
        let expansion_index = (0..4).fold(0u8, |acc, i| acc | (u8::from(b(i)) << i));
        let swap_bits = (0..32).fold(0u32, |acc, t| acc | (u32::from(b(offsets::SWAP + t)) << t));
        let seed_bit = |i: usize| (0..4).fold(false, |acc, t| acc ^ b(4 * i + t));
        let seed1 = (0..16).fold(0u16, |acc, i| acc | (u16::from(seed_bit(i)) << i));
        let seed2 = (16..32).fold(0u16, |acc, i| acc | (u16::from(seed_bit(i)) << (i - 16)));
        let plane_select = std::array::from_fn(|j| {
            2 * u8::from(b(offsets::PLANE_SELECT + 2 * j)) + u8::from(b(offsets::PLANE_SELECT + 1 + 2 * j))
        });
        let (a1, b1) = key.rotation_pair(0);
        let (a2, b2) = key.rotation_pair(1);
        let amount = |base: usize, i: usize, a: u8, be: u8| rotation_amount(a, be, b(base + 2 * i), b(base + 1 + 2 * i));
        let row_rot = std::array::from_fn(|i| {
            if i < 8 {
                amount(offsets::ROW_ROT_1, i, a1, b1)
            } else {
                amount(offsets::ROW_ROT_2, i - 8, a2, b2)
            }
        });
        let col_rot = std::array::from_fn(|j| {
            if j < 8 {
                amount(offsets::COL_ROT_1, j, a1, b1)
            } else {
                amount(offsets::COL_ROT_2, j - 8, a2, b2)
            }
        });
        BlockControl {
            expansion_index,
            swap_bits,
            seed1,
            seed2,
            plane_select,
            row_rot,
            col_rot,
        }
    }

    /// `Seed(k, j)`, the 16-bit mask of bit plane `j`.
    pub fn plane_seed(&self, j: usize) -> u16 {
        match self.plane_select[j] {
            3 => self.seed1,
            2 => !self.seed1,
            1 => self.seed2,
            _ => !self.seed2,
        }
    }

    /// Byte-wise form of the mask: bit `j` of byte `i` is bit `i` of
    /// `Seed(k, j)`.
    pub fn seed_star(&self) -> [u8; 16] {
        let planes: [u16; 8] = std::array::from_fn(|j| self.plane_seed(j));
        std::array::from_fn(|i| (0..8).fold(0u8, |acc, j| acc | ((((planes[j] >> i) & 1) as u8) << j)))
    }
}

/// Step a: returns the expanded block and the next `temp`.
pub fn expand_block(plain: &PlainBlock15, temp: u8, l: u8) -> (ExpandedBlock16, u8) {
    let mut out = [0u8; 16];
    out[..15].copy_from_slice(plain);
    out[15] = temp;
    let next = out[usize::from(l & 15)];
    (out, next)
}

/// Step b: the 32 conditional swaps in table order.
pub fn swap_bytes(block: &mut ExpandedBlock16, swap_bits: u32) {
    for (t, &(i, j, _)) in SWAP_TABLE.iter().enumerate() {
        if (swap_bits >> t) & 1 == 1 {
            block.swap(usize::from(i), usize::from(j));
        }
    }
}

/// Inverse of [`swap_bytes`]: the table replayed in reverse order.
pub fn unswap_bytes(block: &mut ExpandedBlock16, swap_bits: u32) {
    for (t, &(i, j, _)) in SWAP_TABLE.iter().enumerate().rev() {
        if (swap_bits >> t) & 1 == 1 {
            block.swap(usize::from(i), usize::from(j));
        }
    }
}

/// Step c in byte-wise form. It is an involution.
pub fn mask_values(block: &mut ExpandedBlock16, seed_star: &[u8; 16]) {
    for (b, s) in block.iter_mut().zip(seed_star) {
        *b ^= s;
    }
}

/// Step d: row `i` of the block is rotated by `row_rot[i]`.
pub fn rotate_horizontal(block: &mut ExpandedBlock16, row_rot: &[u8; 16]) {
    for (b, &r) in block.iter_mut().zip(row_rot) {
        *b = rotate_row(*b, r);
    }
}

pub fn unrotate_horizontal(block: &mut ExpandedBlock16, row_rot: &[u8; 16]) {
    for (b, &r) in block.iter_mut().zip(row_rot) {
        *b = rotate_row(*b, 8 - (r & 7));
    }
}

/// Step e: column `j` of each half moves down by `col_rot[8*half + j]`.
pub fn rotate_vertical(block: &mut ExpandedBlock16, col_rot: &[u8; 16]) {
    for half in 0..2 {
        let mut m = BitMatrix8::from_bytes(&block[8 * half..]);
        for j in 0..8 {
            m.rotate_column(j, col_rot[8 * half + j]);
        }
        block[8 * half..8 * half + 8].copy_from_slice(&m.0);
    }
}

pub fn unrotate_vertical(block: &mut ExpandedBlock16, col_rot: &[u8; 16]) {
    let inverse: [u8; 16] = std::array::from_fn(|j| (8 - (col_rot[j] & 7)) & 7);
    rotate_vertical(block, &inverse);
}

/// Intermediate values of one encrypted block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTrace {
    pub expanded: ExpandedBlock16,
    pub swapped: ExpandedBlock16,
    pub masked: ExpandedBlock16,
    pub rotated_rows: ExpandedBlock16,
    pub cipher: ExpandedBlock16,
}

/// Encrypts one block and returns every stage plus the next `temp`.
pub fn trace_block(plain: &PlainBlock15, temp: u8, control: &BlockControl) -> (BlockTrace, u8) {
    let (expanded, next) = expand_block(plain, temp, control.expansion_index);
    let mut swapped = expanded;
    swap_bytes(&mut swapped, control.swap_bits);
    let mut masked = swapped;
    mask_values(&mut masked, &control.seed_star());
    let mut rotated_rows = masked;
    rotate_horizontal(&mut rotated_rows, &control.row_rot);
    let mut cipher = rotated_rows;
    rotate_vertical(&mut cipher, &control.col_rot);
    (
        BlockTrace {
            expanded,
            swapped,
            masked,
            rotated_rows,
            cipher,
        },
        next,
    )
}

pub fn encrypt_block(plain: &PlainBlock15, temp: u8, control: &BlockControl) -> (ExpandedBlock16, u8) {
    let (expanded, next) = expand_block(plain, temp, control.expansion_index);
    let mut block = expanded;
    swap_bytes(&mut block, control.swap_bits);
    mask_values(&mut block, &control.seed_star());
    rotate_horizontal(&mut block, &control.row_rot);
    rotate_vertical(&mut block, &control.col_rot);
    (block, next)
}

/// Inverts steps b..e; returns the expanded block including byte 15.
pub fn decrypt_block(cipher: &ExpandedBlock16, control: &BlockControl) -> ExpandedBlock16 {
    let mut block = *cipher;
    unrotate_vertical(&mut block, &control.col_rot);
    unrotate_horizontal(&mut block, &control.row_rot);
    mask_values(&mut block, &control.seed_star());
    unswap_bytes(&mut block, control.swap_bits);
    block
}

/// Per-block controls for a key, precomputed for a fixed number of blocks.
#[derive(Debug, Clone)]
pub struct KeySchedule {
    key: SecretKey,
    controls: Vec<BlockControl>,
}

impl KeySchedule {
    pub fn new(key: &SecretKey, num_blocks: usize) -> Self {
        Self::from_stream(key, &generate_prbs(key.x0, num_blocks))
    }

    /// Builds controls from an explicit bit stream (the key's `x0` is
    /// ignored).
    pub fn from_stream(key: &SecretKey, stream: &PrbsStream) -> Self {
        let controls = (0..stream.num_blocks())
            .map(|k| BlockControl::from_bits(&stream.block_bits(k), key))
            .collect();
        KeySchedule { key: *key, controls }
    }

    pub fn key(&self) -> &SecretKey {
        &self.key
    }

    pub fn num_blocks(&self) -> usize {
        self.controls.len()
    }

    pub fn controls(&self) -> &[BlockControl] {
        &self.controls
    }

    pub fn control(&self, k: usize) -> &BlockControl {
        &self.controls[k]
    }

    fn check_capacity(&self, blocks: usize) -> Result<(), Error> {
        if blocks > self.controls.len() {
            return Err(Error::LengthMismatch {
                left: blocks,
                right: self.controls.len(),
            });
        }
        Ok(())
    }

    pub fn encrypt(&self, plain: &[u8]) -> Result<Vec<u8>, Error> {
        let blocks = partition15(plain)?;
        self.check_capacity(blocks.len())?;
        let mut out = Vec::with_capacity(blocks.len() * CIPHER_BLOCK);
        let mut temp = self.key.secret;
        for (block, control) in blocks.iter().zip(&self.controls) {
            let (c, next) = encrypt_block(block, temp, control);
            out.extend_from_slice(&c);
            temp = next;
        }
        Ok(out)
    }

    /// Encrypts and records every stage of every block.
    pub fn trace(&self, plain: &[u8]) -> Result<Vec<BlockTrace>, Error> {
        let blocks = partition15(plain)?;
        self.check_capacity(blocks.len())?;
        let mut temp = self.key.secret;
        Ok(blocks
            .iter()
            .zip(&self.controls)
            .map(|(block, control)| {
                let (t, next) = trace_block(block, temp, control);
                temp = next;
                t
            })
            .collect())
    }

    pub fn decrypt(&self, cipher: &[u8]) -> Result<Vec<u8>, Error> {
        Ok(self.decrypt_checked(cipher)?.0)
    }

    /// Decrypts and also lists the blocks whose recovered byte 15 differs
    /// from the `temp` chain replayed from the recovered plaintext. The
    /// check is diagnostic only.
    pub fn decrypt_checked(&self, cipher: &[u8]) -> Result<(Vec<u8>, Vec<usize>), Error> {
        if !cipher.len().is_multiple_of(CIPHER_BLOCK) {
            return Err(Error::NonDivisibleLength {
                len: cipher.len(),
                block: CIPHER_BLOCK,
            });
        }
        let n = cipher.len() / CIPHER_BLOCK;
        self.check_capacity(n)?;
        let mut out = Vec::with_capacity(n * PLAIN_BLOCK);
        let mut mismatches = Vec::new();
        let mut temp = self.key.secret;
        for (k, chunk) in cipher.chunks_exact(CIPHER_BLOCK).enumerate() {
            let control = &self.controls[k];
            let expanded = decrypt_block(chunk.try_into().expect("16 bytes"), control);
            if expanded[15] != temp {
                mismatches.push(k);
            }
            temp = expanded[usize::from(control.expansion_index)];
            out.extend_from_slice(&expanded[..15]);
        }
        Ok((out, mismatches))
    }
}

/// Encrypts `plain` (length a multiple of 15) under `key`.
pub fn encrypt(plain: &[u8], key: &SecretKey) -> Result<Vec<u8>, Error> {
    if !plain.len().is_multiple_of(PLAIN_BLOCK) {
        return Err(Error::NonDivisibleLength {
            len: plain.len(),
            block: PLAIN_BLOCK,
        });
    }
    KeySchedule::new(key, plain.len() / PLAIN_BLOCK).encrypt(plain)
}

/// Decrypts `cipher` (length a multiple of 16) under `key`.
pub fn decrypt(cipher: &[u8], key: &SecretKey) -> Result<Vec<u8>, Error> {
    if !cipher.len().is_multiple_of(CIPHER_BLOCK) {
        return Err(Error::NonDivisibleLength {
            len: cipher.len(),
            block: CIPHER_BLOCK,
        });
    }
    KeySchedule::new(key, cipher.len() / CIPHER_BLOCK).decrypt(cipher)
}

/// A key whose `x0` is zero, so every controlling bit is 0.
pub fn zero_stream_key(alpha1: u8, beta1: u8, alpha2: u8, beta2: u8, secret: u8) -> Result<SecretKey, Error> {
    SecretKey::new(alpha1, beta1, alpha2, beta2, secret, Fixed129::ZERO)
}
