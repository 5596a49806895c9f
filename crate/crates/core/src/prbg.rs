//! Chaotic fixed-point pseudorandom bit generator.
//!
//! One 129-bit state `x(k)` is produced per block and all of its bits are
//! consumed as the block's controlling bits `b(129k) .. b(129k + 128)`.
//!
//! The state update keeps 129 bits of the scaled product:
//!
//! ```text
//! X' = floor(419 * (X xor H) / 2^8) mod 2^129
//! ```
//!
//! where `H` is all ones when the 64 fractional bits of `X` have odd parity
//! and zero otherwise.

use crate::fixed::Fixed129;
use crate::BITS_PER_BLOCK;

const MULTIPLIER: u64 = 419;
const SHIFT: u32 = 8;

/// One generator step.
pub fn prbg_next(state: Fixed129) -> Fixed129 {
    let mut limbs = state.limbs();
    if (limbs[0].count_ones() & 1) == 1 {
        limbs[0] = !limbs[0];
        limbs[1] = !limbs[1];
        limbs[2] ^= 1;
    }
    // 419 * X < 2^138: three limbs plus a small fourth.
    let mut product = [0u64; 4];
    let mut carry: u128 = 0;
    for (dst, &limb) in product.iter_mut().zip(limbs.iter()) {
        let t = u128::from(limb) * u128::from(MULTIPLIER) + carry;
        *dst = t as u64;
        carry = t >> 64;
    }
    product[3] = carry as u64;
    let shifted = [
        (product[0] >> SHIFT) | (product[1] << (64 - SHIFT)),
        (product[1] >> SHIFT) | (product[2] << (64 - SHIFT)),
        ((product[2] >> SHIFT) | (product[3] << (64 - SHIFT))) & 1,
    ];
    Fixed129::from_limbs(shifted)
}

/// The 129 bits of a state, most significant first: element `t` is raw bit
/// `128 - t`.
pub fn extract_bits(state: Fixed129) -> [bool; BITS_PER_BLOCK] {
    std::array::from_fn(|t| state.raw_bit(128 - t))
}

/// Controlling bit sequence for a whole message, stored as one generator
/// state per block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrbsStream {
    states: Vec<Fixed129>,
}

impl PrbsStream {
    /// Wraps explicit per-block states; block `k` reads its bits from
    /// `states[k]`.
    pub fn from_states(states: Vec<Fixed129>) -> Self {
        PrbsStream { states }
    }

    pub fn num_blocks(&self) -> usize {
        self.states.len()
    }

    /// Total number of bits, `129 * num_blocks`.
    pub fn len(&self) -> usize {
        self.states.len() * BITS_PER_BLOCK
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Fixed129] {
        &self.states
    }

    pub fn block_state(&self, k: usize) -> Fixed129 {
        self.states[k]
    }

    /// `b(129k + t)`.
    #[inline]
    pub fn bit(&self, k: usize, t: usize) -> bool {
        debug_assert!(t < BITS_PER_BLOCK);
        self.states[k].raw_bit(128 - t)
    }

    /// `b(i)` by absolute index.
    pub fn bit_at(&self, i: usize) -> bool {
        self.bit(i / BITS_PER_BLOCK, i % BITS_PER_BLOCK)
    }

    pub fn block_bits(&self, k: usize) -> [bool; BITS_PER_BLOCK] {
        extract_bits(self.states[k])
    }
}

/// Iterates the generator from `x0` for `num_blocks` blocks; block 0 uses
/// `x0` itself.
pub fn generate_prbs(x0: Fixed129, num_blocks: usize) -> PrbsStream {
    let mut states = Vec::with_capacity(num_blocks);
    let mut x = x0;
    for _ in 0..num_blocks {
        states.push(x);
        x = prbg_next(x);
    }
    PrbsStream { states }
}
