//! Differential chosen-plaintext attack producing an equivalent key.
//!
//! Seven plaintexts are queried: a base `f0` and `f0 ⊕ D` for six chosen
//! differentials.
//!
//! | query | differential | recovers |
//! |-------|--------------|----------|
//! | 1, 2  | `D1`, `D2`   | `l(k)` from block weights |
//! | 3     | `D3`         | swap bits `b(4..7)`, resolves ambiguous `l(k)` |
//! | 4     | `D4`         | swap bits `b(8..11)` |
//! | 5     | `D5`         | vertical rotations (up to a row offset) |
//! | 6     | `D6`         | horizontal rotations (same offset) |
//!
//! The in-half byte permutation comes from matching `D1..D4` bytes, and the
//! masks from the base pair `(f0, C0)`.
//!
//! Inside each half the recovered scheme is shifted by an unknown row offset
//! `s̃ = π(r) - r`, where `r` is the probe row of `D5` and `π` the true
//! permutation of the swaps 9..32. The offset cancels on decryption.

use thiserror::Error;

use crate::bits::{block_weight, rotate_row, Differential, ExpandedBlock16};
use crate::cipher::{rotate_vertical, KeySchedule};
use crate::error::Error;
use crate::key::SecretKey;
use crate::{CIPHER_BLOCK, PLAIN_BLOCK};

/// Stage tags used in [`AttackError::AttackFailed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Query,
    Expansion,
    SwapBits,
    Vertical,
    Horizontal,
    ByteSwap,
    Masking,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Query => "query",
            Stage::Expansion => "expansion",
            Stage::SwapBits => "swap-bits",
            Stage::Vertical => "vertical",
            Stage::Horizontal => "horizontal",
            Stage::ByteSwap => "byte-swap",
            Stage::Masking => "masking",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("block {block}: observed expanded-byte weights match no candidate byte")]
    InconsistentWeights { block: usize },
    #[error("block {block}: expansion index is still ambiguous")]
    UnresolvedExpansion { block: usize },
    #[error("half-block weight difference {0} is not a valid signed sum")]
    InvalidDeltaSum(i32),
    #[error("block {block}: column {column} does not hold exactly one set bit")]
    MalformedColumn { block: usize, column: usize },
    #[error("block {block}: row {row} is not a single-bit pattern")]
    MalformedRow { block: usize, row: usize },
    #[error("block {block}: cannot match bytes of half {half}")]
    AmbiguousMatch { block: usize, half: usize },
    #[error("ciphertext of {len} bytes exceeds the {max} bytes covered by the key")]
    CiphertextTooLong { len: usize, max: usize },
    #[error("oracle: {0}")]
    Oracle(String),
    #[error(transparent)]
    Input(#[from] Error),
    #[error("attack failed at stage {stage}")]
    AttackFailed {
        stage: Stage,
        #[source]
        source: Box<AttackError>,
    },
}

impl AttackError {
    fn at(self, stage: Stage) -> AttackError {
        AttackError::AttackFailed {
            stage,
            source: Box::new(self),
        }
    }
}

/// Chosen-plaintext access to encryption under one hidden key.
pub trait EncryptionOracle {
    fn query(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, AttackError>;
}

impl<F> EncryptionOracle for F
where
    F: FnMut(&[u8]) -> Result<Vec<u8>, AttackError>,
{
    fn query(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, AttackError> {
        self(plaintext)
    }
}

/// Oracle backed by the reference cipher.
#[derive(Debug, Clone)]
pub struct CipherOracle {
    schedule: KeySchedule,
}

impl CipherOracle {
    pub fn new(key: &SecretKey) -> Self {
        CipherOracle {
            schedule: KeySchedule::new(key, 0),
        }
    }
}

impl EncryptionOracle for CipherOracle {
    fn query(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, AttackError> {
        let blocks = plaintext.len() / PLAIN_BLOCK;
        if blocks > self.schedule.num_blocks() {
            self.schedule = KeySchedule::new(self.schedule.key(), blocks);
        }
        Ok(self.schedule.encrypt(plaintext)?)
    }
}

/// Wraps an oracle and counts queries.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    count: usize,
}

impl<O: EncryptionOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle { inner, count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: EncryptionOracle> EncryptionOracle for CountingOracle<O> {
    fn query(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, AttackError> {
        self.count += 1;
        self.inner.query(plaintext)
    }
}

/// The byte of weight `w` used in every chosen differential.
#[inline]
pub fn canonical_byte(w: u8) -> u8 {
    ((1u16 << w) - 1) as u8
}

// ---------------------------------------------------------------------------
// Expansion
// ---------------------------------------------------------------------------

/// Weights `(|D1(i)|, |D2(i)|)` at global byte index `i`. The pattern has
/// period 80 and covers every pair except `(0, 0)` once.
pub fn expansion_weights(i: usize) -> (u8, u8) {
    let m = i % 80;
    if m < 8 {
        (0, m as u8 + 1)
    } else {
        (((m - 8) / 9 + 1) as u8, ((m - 8) % 9) as u8)
    }
}

pub fn gen_expansion_differentials(num_blocks: usize) -> (Differential, Differential) {
    let n = num_blocks * PLAIN_BLOCK;
    let (a, b): (Vec<u8>, Vec<u8>) = (0..n)
        .map(|i| {
            let (w1, w2) = expansion_weights(i);
            (canonical_byte(w1), canonical_byte(w2))
        })
        .unzip();
    (
        Differential::new(a).expect("multiple of 15"),
        Differential::new(b).expect("multiple of 15"),
    )
}

/// Candidate sets for `l(k)`, one bit mask per block (bit `j` set means
/// `l(k) = j` is consistent). The last block's index is never observable
/// and is stored as `0xFFFF`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionIndices {
    pub candidates: Vec<u16>,
}

impl ExpansionIndices {
    pub fn num_blocks(&self) -> usize {
        self.candidates.len()
    }

    /// The index when it is uniquely determined.
    pub fn get(&self, k: usize) -> Option<u8> {
        let c = self.candidates[k];
        (c.count_ones() == 1).then(|| c.trailing_zeros() as u8)
    }

    pub fn is_ambiguous(&self, k: usize) -> bool {
        let c = self.candidates[k];
        c.count_ones() > 1 && c != u16::MAX
    }

    /// The payload position competing with 15 in an ambiguous set.
    pub fn ambiguous_payload(&self, k: usize) -> Option<u8> {
        self.is_ambiguous(k).then(|| (self.candidates[k] & 0x7FFF).trailing_zeros() as u8)
    }

    pub fn ambiguous_blocks(&self) -> Vec<usize> {
        (0..self.num_blocks()).filter(|&k| self.is_ambiguous(k)).collect()
    }
}

/// Per-block weight of the expanded-byte differential:
/// `|C(k)| - |D(k)|`.
pub fn expanded_weights(diff: &Differential, cipher_diff: &[u8]) -> Result<Vec<u8>, AttackError> {
    let n = diff.num_blocks();
    check_cipher_len(cipher_diff, n)?;
    (0..n)
        .map(|k| {
            let c = block_weight(&cipher_diff[k * CIPHER_BLOCK..(k + 1) * CIPHER_BLOCK]) as i64;
            let p = block_weight(diff.block(k)) as i64;
            let w = c - p;
            if (0..=8).contains(&w) {
                Ok(w as u8)
            } else {
                Err(AttackError::InconsistentWeights { block: k })
            }
        })
        .collect()
}

fn check_cipher_len(cipher_diff: &[u8], blocks: usize) -> Result<(), AttackError> {
    if cipher_diff.len() != blocks * CIPHER_BLOCK {
        return Err(AttackError::Input(Error::LengthMismatch {
            left: cipher_diff.len(),
            right: blocks * CIPHER_BLOCK,
        }));
    }
    Ok(())
}

/// Recovers `l(k)` candidate sets from the two expansion differentials and
/// their cipher differentials.
pub fn recover_expansion_indices(
    d1: &Differential,
    d2: &Differential,
    c1: &[u8],
    c2: &[u8],
) -> Result<ExpansionIndices, AttackError> {
    let n = d1.num_blocks();
    if d2.num_blocks() != n {
        return Err(Error::LengthMismatch {
            left: d1.num_blocks(),
            right: d2.num_blocks(),
        }
        .into());
    }
    let w1 = expanded_weights(d1, c1)?;
    let w2 = expanded_weights(d2, c2)?;
    let mut candidates = vec![u16::MAX; n];
    for k in 1..n {
        let observed = (w1[k], w2[k]);
        let prev1 = d1.block(k - 1);
        let prev2 = d2.block(k - 1);
        let mut mask = 0u16;
        for j in 0..PLAIN_BLOCK {
            if (prev1[j].count_ones() as u8, prev2[j].count_ones() as u8) == observed {
                mask |= 1 << j;
            }
        }
        if (w1[k - 1], w2[k - 1]) == observed {
            mask |= 1 << 15;
        }
        if mask == 0 {
            return Err(AttackError::InconsistentWeights { block: k });
        }
        candidates[k - 1] = mask;
    }
    Ok(ExpansionIndices { candidates })
}

/// Expanded-byte differential of every block, given the payload
/// differential and the (resolved) expansion indices. Unknown past an
/// unresolved index.
pub fn expanded_chain(diff: &Differential, l: &[Option<u8>]) -> Vec<Option<u8>> {
    let n = diff.num_blocks();
    let mut out = Vec::with_capacity(n);
    let mut e = Some(0u8);
    for k in 0..n {
        out.push(e);
        e = match l[k] {
            Some(15) => e,
            Some(p) => Some(diff.block(k)[usize::from(p)]),
            None => None,
        };
    }
    out
}

// ---------------------------------------------------------------------------
// First eight swaps
// ---------------------------------------------------------------------------

const SWAP_MAGNITUDES: [i8; 4] = [4, 5, 6, 8];

/// All 16 signed sums `Σ b±(i)·c(i)`, indexed by the bit pattern (bit `i`
/// set means pair `i` swapped).
pub fn signed_sums(coeffs: [i8; 4]) -> [i32; 16] {
    std::array::from_fn(|pattern| {
        (0..4)
            .map(|i| {
                let c = i32::from(coeffs[i]);
                if (pattern >> i) & 1 == 1 {
                    -c
                } else {
                    c
                }
            })
            .sum()
    })
}

/// Decodes a weight difference against arbitrary coefficients.
pub fn decode_signed(delta: i32, coeffs: [i8; 4]) -> Option<[bool; 4]> {
    let sums = signed_sums(coeffs);
    let mut hits = sums.iter().enumerate().filter(|(_, &s)| s == delta);
    let (pattern, _) = hits.next()?;
    if hits.next().is_some() {
        return None;
    }
    Some(std::array::from_fn(|i| (pattern >> i) & 1 == 1))
}

/// Decodes a half-block weight difference produced with coefficients
/// `(4, 5, 6, 8)`. Bit `i` true means the pair was swapped.
pub fn decode_swap_bits(delta_sum: i32) -> Result<[bool; 4], AttackError> {
    decode_signed(delta_sum, SWAP_MAGNITUDES).ok_or(AttackError::InvalidDeltaSum(delta_sum))
}

/// Weight difference between the two halves of a cipher block.
pub fn half_weight_delta(cipher_block: &[u8]) -> i32 {
    block_weight(&cipher_block[..8]) as i32 - block_weight(&cipher_block[8..16]) as i32
}

/// A swap-bit differential and, per block, the signed coefficient
/// `|x(i)| - |x(i+8)|` of each of its four probed pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapDifferential {
    pub diff: Differential,
    /// Pairs `0..4` for the first, `4..8` for the second differential.
    pub coefficients: Vec<[i8; 4]>,
}

/// Weights `(low, high)` for a pair with signed coefficient `c`, keeping one
/// side at `fixed` when given (`(side, weight)`, side 0 is the low byte).
fn pair_weights(c: i8, fixed: Option<(usize, u8)>) -> Option<(u8, u8)> {
    let c = i16::from(c);
    let (lo, hi) = match fixed {
        None if c >= 0 => (c, 0),
        None => (0, -c),
        Some((0, w)) => (i16::from(w), i16::from(w) - c),
        Some((_, w)) => (i16::from(w) + c, i16::from(w)),
    };
    ((0..=8).contains(&lo) && (0..=8).contains(&hi)).then_some((lo as u8, hi as u8))
}

/// Picks signed coefficients for four pairs so that an optional fixed
/// weight on one pair is feasible. Returns coefficients and weights.
fn assign_pairs(fixed: Option<(usize, usize, u8)>) -> Option<([i8; 4], [(u8, u8); 4])> {
    for rot in 0..4 {
        let mags: [i8; 4] = std::array::from_fn(|i| SWAP_MAGNITUDES[(i + rot) % 4]);
        for signs in 0..16u8 {
            let coeffs: [i8; 4] = std::array::from_fn(|i| if (signs >> i) & 1 == 1 { -mags[i] } else { mags[i] });
            let weights: Option<Vec<(u8, u8)>> = (0..4)
                .map(|i| {
                    let f = fixed.and_then(|(pair, side, w)| (pair == i).then_some((side, w)));
                    pair_weights(coeffs[i], f)
                })
                .collect();
            if let Some(w) = weights {
                return Some((coeffs, w.try_into().expect("four pairs")));
            }
        }
    }
    None
}

/// Plan for the first swap-bit differential, built before the ambiguous
/// expansion indices are known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapPlanA {
    pub swap: SwapDifferential,
    /// Weight of byte 7 of each block; pair 7's coefficient is this minus
    /// the observed expanded weight.
    pub byte7_weight: Vec<u8>,
}

/// Builds `D3` (swap bits `b(4..7)`). Where `l(k) ∈ {p, 15}` is ambiguous,
/// byte `p` gets a weight no hypothesis of the expanded byte has, so the
/// next block's weight settles the question.
pub fn plan_swap_a(idx: &ExpansionIndices) -> Result<SwapPlanA, AttackError> {
    let n = idx.num_blocks();
    let mut diff = Differential::zeroed(n);
    let mut coefficients = Vec::with_capacity(n);
    let mut byte7_weight = Vec::with_capacity(n);
    let mut hyp: Vec<u8> = vec![0];
    for k in 0..n {
        let amb = idx.ambiguous_payload(k).map(usize::from);
        let mut hyp_weights: Vec<u8> = hyp.iter().map(|b| b.count_ones() as u8).collect();
        hyp_weights.sort_unstable();
        hyp_weights.dedup();
        let forced_weight = match amb {
            Some(_) => Some((0..=8u8).find(|w| !hyp_weights.contains(w)).ok_or(AttackError::UnresolvedExpansion { block: k })?),
            None => None,
        };
        let fixed = match (amb, forced_weight) {
            (Some(p), Some(w)) if p % 8 < 4 => Some((p % 8, p / 8, w)),
            _ => None,
        };
        let (coeffs, weights) = assign_pairs(fixed).ok_or(AttackError::UnresolvedExpansion { block: k })?;
        let block = diff.block_mut(k);
        for i in 0..4 {
            block[i] = canonical_byte(weights[i].0);
            block[i + 8] = canonical_byte(weights[i].1);
        }
        block[7] = if hyp_weights.len() == 1 { canonical_byte(hyp_weights[0]) } else { 0 };
        if let (Some(p), Some(w)) = (amb, forced_weight) {
            match p % 8 {
                0..=3 => {}
                7 => block[7] = canonical_byte(w),
                i => {
                    block[i] = canonical_byte(w);
                    block[i + 8] = canonical_byte(w);
                }
            }
        }
        byte7_weight.push(block[7].count_ones() as u8);
        coefficients.push(coeffs);

        hyp = match (idx.get(k), amb) {
            (Some(15), _) => hyp,
            (Some(p), _) => vec![block[usize::from(p)]],
            (None, Some(p)) => {
                let mut h = hyp;
                h.push(block[p]);
                h
            }
            (None, None) => vec![],
        };
    }
    Ok(SwapPlanA {
        swap: SwapDifferential { diff, coefficients },
        byte7_weight,
    })
}

/// Settles every ambiguous `l(k)` from the `D3` cipher differential and
/// returns the resolved indices together with the observed expanded-byte
/// weights of `D3`.
pub fn resolve_expansion(
    idx: &ExpansionIndices,
    plan: &SwapPlanA,
    c3: &[u8],
) -> Result<(Vec<Option<u8>>, Vec<u8>), AttackError> {
    let n = idx.num_blocks();
    let omega = expanded_weights(&plan.swap.diff, c3)?;
    let mut l = Vec::with_capacity(n);
    for k in 0..n {
        let v = if k + 1 == n {
            None
        } else if let Some(p) = idx.ambiguous_payload(k) {
            let wp = plan.swap.diff.block(k)[usize::from(p)].count_ones() as u8;
            if omega[k + 1] == wp {
                Some(p)
            } else if omega[k + 1] == omega[k] {
                Some(15)
            } else {
                return Err(AttackError::InconsistentWeights { block: k + 1 });
            }
        } else {
            let p = idx.get(k).ok_or(AttackError::UnresolvedExpansion { block: k })?;
            Some(p)
        };
        l.push(v);
    }
    Ok((l, omega))
}

/// Builds `D4` (swap bits `b(8..11)`) from fully resolved indices.
pub fn plan_swap_b(num_blocks: usize, l: &[Option<u8>]) -> Result<SwapDifferential, AttackError> {
    let mut diff = Differential::zeroed(num_blocks);
    let mut coefficients = Vec::with_capacity(num_blocks);
    let mut e = 0u8;
    for k in 0..num_blocks {
        let we = e.count_ones() as u8;
        // Pair 7 is (7, 15): byte 15 carries the expanded differential.
        let (coeffs, weights) = assign_pairs(Some((3, 1, we))).ok_or(AttackError::UnresolvedExpansion { block: k })?;
        let block = diff.block_mut(k);
        for i in 0..4 {
            block[4 + i] = canonical_byte(weights[i].0);
            if i < 3 {
                block[12 + i] = canonical_byte(weights[i].1);
            }
        }
        coefficients.push(coeffs);
        e = match l[k] {
            Some(15) => e,
            Some(p) => block[usize::from(p)],
            None if k + 1 == num_blocks => e,
            None => return Err(AttackError::UnresolvedExpansion { block: k }),
        };
    }
    Ok(SwapDifferential { diff, coefficients })
}

/// The two non-adaptive swap-bit differentials with the canonical
/// coefficients `(4, 5, 6, 8)`. Needs every `l(k)` except the last to be
/// unique.
pub fn gen_swap_differentials(idx: &ExpansionIndices) -> Result<(SwapDifferential, SwapDifferential), AttackError> {
    let n = idx.num_blocks();
    let l: Vec<Option<u8>> = (0..n)
        .map(|k| match idx.get(k) {
            Some(v) => Ok(Some(v)),
            None if k + 1 == n => Ok(None),
            None => Err(AttackError::UnresolvedExpansion { block: k }),
        })
        .collect::<Result<_, _>>()?;
    let plan = plan_swap_a(idx)?;
    let b = plan_swap_b(n, &l)?;
    Ok((plan.swap, b))
}

/// Decodes `b(4..11)` of every block. Returns bit `i` = `b(129k + 4 + i)`.
pub fn recover_swap_bits(
    plan_a: &SwapPlanA,
    omega_a: &[u8],
    c3: &[u8],
    plan_b: &SwapDifferential,
    c4: &[u8],
) -> Result<Vec<u8>, AttackError> {
    let n = plan_b.coefficients.len();
    check_cipher_len(c3, n)?;
    check_cipher_len(c4, n)?;
    (0..n)
        .map(|k| {
            let d4 = half_weight_delta(&c4[k * 16..k * 16 + 16]);
            let high = decode_signed(d4, plan_b.coefficients[k]).ok_or(AttackError::InvalidDeltaSum(d4))?;
            let c7 = i32::from(plan_a.byte7_weight[k]) - i32::from(omega_a[k]);
            let d3 = half_weight_delta(&c3[k * 16..k * 16 + 16]) - if high[3] { -c7 } else { c7 };
            let low = decode_signed(d3, plan_a.swap.coefficients[k]).ok_or(AttackError::InvalidDeltaSum(d3))?;
            Ok((0..4).fold(0u8, |acc, i| acc | (u8::from(low[i]) << i) | (u8::from(high[i]) << (i + 4))))
        })
        .collect()
}

/// Applies the first eight swaps (pairs `(i, i+8)`) selected by `bits`.
pub fn swap_first8(block: &mut ExpandedBlock16, bits: u8) {
    for i in 0..8 {
        if (bits >> i) & 1 == 1 {
            block.swap(i, i + 8);
        }
    }
}

// ---------------------------------------------------------------------------
// Rotations
// ---------------------------------------------------------------------------

/// `D5`: bytes `r` and `r + 8` set to 255 in each block, with `r` chosen so
/// that the expanded differential stays zero. Returns the probe rows.
pub fn gen_vertical_differential(l: &[Option<u8>]) -> (Differential, Vec<u8>) {
    let n = l.len();
    let mut diff = Differential::zeroed(n);
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let r = (0..7u8)
            .find(|&r| l[k].is_none_or(|lk| lk != r && lk != r + 8))
            .expect("seven rows, one excluded index");
        let block = diff.block_mut(k);
        block[usize::from(r)] = 0xFF;
        block[usize::from(r) + 8] = 0xFF;
        rows.push(r);
    }
    (diff, rows)
}

/// Per block, the 16 column amounts `s̄ + s̃ (mod 8)`.
pub fn recover_vertical_part(cipher_diff: &[u8], probe_rows: &[u8]) -> Result<Vec<[u8; 16]>, AttackError> {
    check_cipher_len(cipher_diff, probe_rows.len())?;
    probe_rows
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let c = &cipher_diff[k * 16..k * 16 + 16];
            let mut out = [0u8; 16];
            for half in 0..2 {
                for j in 0..8 {
                    let rows: Vec<usize> = (0..8).filter(|&i| (c[8 * half + i] >> j) & 1 == 1).collect();
                    if rows.len() != 1 {
                        return Err(AttackError::MalformedColumn {
                            block: k,
                            column: 8 * half + j,
                        });
                    }
                    out[8 * half + j] = ((rows[0] + 8 - usize::from(r)) % 8) as u8;
                }
            }
            Ok(out)
        })
        .collect()
}

/// The byte every position of `D6` carries.
pub const HORIZONTAL_PROBE: u8 = 0x01;

pub fn gen_horizontal_differential(num_blocks: usize) -> Differential {
    Differential::new(vec![HORIZONTAL_PROBE; num_blocks * PLAIN_BLOCK]).expect("multiple of 15")
}

/// Blocks whose expanded differential is zero under any payload-uniform
/// differential: those reached from block 0 through `l = 15` only.
pub fn expanded_from_secret(l: &[Option<u8>]) -> Vec<bool> {
    let mut out = Vec::with_capacity(l.len());
    let mut from_secret = true;
    for lk in l {
        out.push(from_secret);
        from_secret = from_secret && *lk == Some(15);
    }
    out
}

/// Inverse of the vertical part.
pub fn unrotate_columns(block: &mut ExpandedBlock16, rot_y: &[u8; 16]) {
    let inv: [u8; 16] = std::array::from_fn(|j| (8 - rot_y[j]) & 7);
    rotate_vertical(block, &inv);
}

/// Per block, the 16 row amounts (indexed in the shifted frame) and the mask
/// of rows whose amount cannot be observed.
pub fn recover_horizontal_part(
    cipher_diff: &[u8],
    rot_y: &[[u8; 16]],
    from_secret: &[bool],
) -> Result<(Vec<[u8; 16]>, Vec<u16>), AttackError> {
    check_cipher_len(cipher_diff, rot_y.len())?;
    let mut amounts = Vec::with_capacity(rot_y.len());
    let mut unknown = Vec::with_capacity(rot_y.len());
    for (k, ry) in rot_y.iter().enumerate() {
        let mut h: ExpandedBlock16 = cipher_diff[k * 16..k * 16 + 16].try_into().expect("16 bytes");
        unrotate_columns(&mut h, ry);
        let mut out = [0u8; 16];
        let mut mask = 0u16;
        for (row, &v) in h.iter().enumerate() {
            if v == 0 && from_secret[k] && mask == 0 {
                mask |= 1 << row;
            } else if v.count_ones() == 1 {
                out[row] = ((v.trailing_zeros() + 8 - HORIZONTAL_PROBE.trailing_zeros()) % 8) as u8;
            } else {
                return Err(AttackError::MalformedRow { block: k, row });
            }
        }
        if from_secret[k] && mask == 0 {
            return Err(AttackError::MalformedRow { block: k, row: 15 });
        }
        amounts.push(out);
        unknown.push(mask);
    }
    Ok((amounts, unknown))
}

/// Inverse vertical then inverse horizontal rotation.
pub fn undo_rotations(cipher_block: &[u8], rot_y: &[u8; 16], rot_x: &[u8; 16]) -> ExpandedBlock16 {
    let mut b: ExpandedBlock16 = cipher_block.try_into().expect("16 bytes");
    unrotate_columns(&mut b, rot_y);
    for (v, &r) in b.iter_mut().zip(rot_x) {
        *v = rotate_row(*v, 8 - r);
    }
    b
}

// ---------------------------------------------------------------------------
// Byte swap and masking
// ---------------------------------------------------------------------------

/// In-half permutation of the recovered scheme: `perm[h][i]` is the shifted
/// row receiving row `i` of half `h` after the first eight swaps.
pub type HalfPerms = [[u8; 8]; 2];

/// Matches rows of the known pre-swap differentials against the
/// de-rotated cipher differentials. Inputs are per differential, per block.
pub fn recover_byteswap_part(
    pre: &[Vec<ExpandedBlock16>],
    observed: &[Vec<ExpandedBlock16>],
    unknown_rows: &[u16],
) -> Result<Vec<HalfPerms>, AttackError> {
    let n = unknown_rows.len();
    (0..n)
        .map(|k| {
            let mut perms = [[0u8; 8]; 2];
            for half in 0..2 {
                let tag = |src: &[Vec<ExpandedBlock16>], row: usize| -> Vec<u8> { src.iter().map(|d| d[k][8 * half + row]).collect() };
                let mut used_src = [false; 8];
                let mut assigned = [false; 8];
                for dst in 0..8 {
                    if (unknown_rows[k] >> (8 * half + dst)) & 1 == 1 {
                        continue;
                    }
                    let t = tag(observed, dst);
                    let mut hits = (0..8).filter(|&i| tag(pre, i) == t);
                    let src = hits.next().ok_or(AttackError::AmbiguousMatch { block: k, half })?;
                    if hits.next().is_some() || used_src[src] {
                        return Err(AttackError::AmbiguousMatch { block: k, half });
                    }
                    used_src[src] = true;
                    assigned[dst] = true;
                    perms[half][src] = dst as u8;
                }
                let free_src: Vec<usize> = (0..8).filter(|&i| !used_src[i]).collect();
                let free_dst: Vec<usize> = (0..8).filter(|&i| !assigned[i]).collect();
                if free_src.len() > 1 {
                    return Err(AttackError::AmbiguousMatch { block: k, half });
                }
                for (s, d) in free_src.into_iter().zip(free_dst) {
                    perms[half][s] = d as u8;
                }
            }
            Ok(perms)
        })
        .collect()
}

/// Applies a recovered in-half permutation.
pub fn permute_halves(block: &ExpandedBlock16, perms: &HalfPerms) -> ExpandedBlock16 {
    let mut out = [0u8; 16];
    for half in 0..2 {
        for i in 0..8 {
            out[8 * half + usize::from(perms[half][i])] = block[8 * half + i];
        }
    }
    out
}

pub fn unpermute_halves(block: &ExpandedBlock16, perms: &HalfPerms) -> ExpandedBlock16 {
    let mut out = [0u8; 16];
    for half in 0..2 {
        for i in 0..8 {
            out[8 * half + i] = block[8 * half + usize::from(perms[half][i])];
        }
    }
    out
}

/// Mask bytes of the recovered scheme from one known plaintext/ciphertext
/// pair. `pre` holds the plaintext blocks after the first eight swaps and
/// `pre_unknown` the row of that form that is not known. Returns masks and
/// the rows left unknown.
pub fn recover_masking_part(
    pre: &[ExpandedBlock16],
    pre_unknown: &[Option<usize>],
    derotated: &[ExpandedBlock16],
    perms: &[HalfPerms],
    unknown_rows: &[u16],
) -> (Vec<[u8; 16]>, Vec<u16>) {
    let mut seeds = Vec::with_capacity(pre.len());
    let mut unknown = Vec::with_capacity(pre.len());
    for k in 0..pre.len() {
        let y = permute_halves(&pre[k], &perms[k]);
        let mut mask = unknown_rows[k];
        if let Some(row) = pre_unknown[k] {
            let half = row / 8;
            mask |= 1 << (8 * half + usize::from(perms[k][half][row % 8]));
        }
        let seed: [u8; 16] = std::array::from_fn(|i| if (mask >> i) & 1 == 1 { 0 } else { y[i] ^ derotated[k][i] });
        seeds.push(seed);
        unknown.push(mask);
    }
    (seeds, unknown)
}

// ---------------------------------------------------------------------------
// Equivalent key
// ---------------------------------------------------------------------------

/// Recovered items of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockKey {
    /// `l(k)`; `None` for the last block.
    pub l: Option<u8>,
    /// Candidate mask for `l(k)` seen by the expansion stage.
    pub l_candidates: u16,
    /// Bit `i` is `b(129k + 4 + i)`.
    pub swap_bits: u8,
    /// Row `r` of the vertical probe; offsets are relative to it.
    pub probe_row: u8,
    pub perm: HalfPerms,
    pub seed: [u8; 16],
    pub rot_x: [u8; 16],
    pub rot_y: [u8; 16],
    /// Shifted-frame rows whose mask or horizontal amount is unknown.
    pub unknown_rows: u16,
}

impl BlockKey {
    pub fn l_was_ambiguous(&self) -> bool {
        self.l_candidates != u16::MAX && self.l_candidates.count_ones() > 1
    }

    pub fn decrypt_block(&self, cipher: &[u8]) -> ExpandedBlock16 {
        let z = undo_rotations(cipher, &self.rot_y, &self.rot_x);
        let y: ExpandedBlock16 = std::array::from_fn(|i| z[i] ^ self.seed[i]);
        let mut f = unpermute_halves(&y, &self.perm);
        swap_first8(&mut f, self.swap_bits);
        f
    }

    pub fn encrypt_block(&self, expanded: &ExpandedBlock16) -> ExpandedBlock16 {
        let mut f = *expanded;
        swap_first8(&mut f, self.swap_bits);
        let y = permute_halves(&f, &self.perm);
        let mut out: ExpandedBlock16 = std::array::from_fn(|i| rotate_row(y[i] ^ self.seed[i], self.rot_x[i]));
        rotate_vertical(&mut out, &self.rot_y);
        out
    }
}

/// Drop-in decryption key for ciphertexts of up to `blocks.len()` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalentKey {
    pub blocks: Vec<BlockKey>,
}

impl EquivalentKey {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Decrypts with an equivalent key; the expanded bytes are dropped.
pub fn ees_decrypt(cipher: &[u8], ek: &EquivalentKey) -> Result<Vec<u8>, AttackError> {
    if !cipher.len().is_multiple_of(CIPHER_BLOCK) {
        return Err(Error::NonDivisibleLength {
            len: cipher.len(),
            block: CIPHER_BLOCK,
        }
        .into());
    }
    let max = ek.num_blocks() * CIPHER_BLOCK;
    if cipher.len() > max {
        return Err(AttackError::CiphertextTooLong { len: cipher.len(), max });
    }
    let mut out = Vec::with_capacity(cipher.len() / CIPHER_BLOCK * PLAIN_BLOCK);
    for (chunk, bk) in cipher.chunks_exact(CIPHER_BLOCK).zip(&ek.blocks) {
        out.extend_from_slice(&bk.decrypt_block(chunk)[..PLAIN_BLOCK]);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// What the driver saw while attacking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackLog {
    pub queries: usize,
    pub num_blocks: usize,
    /// Blocks whose `l(k)` needed the third differential to settle.
    pub ambiguous_blocks: Vec<usize>,
    /// Blocks with at least one unknown row.
    pub blocks_with_unknown_rows: usize,
}

fn xor_cipher(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn pre_swap_blocks(diff: &Differential, expanded: &[Option<u8>], swap_bits: &[u8]) -> Vec<(ExpandedBlock16, Option<usize>)> {
    (0..diff.num_blocks())
        .map(|k| {
            let mut b = [0u8; 16];
            b[..15].copy_from_slice(diff.block(k));
            b[15] = expanded[k].unwrap_or(0);
            swap_first8(&mut b, swap_bits[k]);
            let row = if (swap_bits[k] >> 7) & 1 == 1 { 7 } else { 15 };
            (b, expanded[k].is_none().then_some(row))
        })
        .collect()
}

fn derotate_all(cipher_diff: &[u8], rot_y: &[[u8; 16]], rot_x: &[[u8; 16]]) -> Vec<ExpandedBlock16> {
    (0..rot_y.len())
        .map(|k| undo_rotations(&cipher_diff[k * 16..k * 16 + 16], &rot_y[k], &rot_x[k]))
        .collect()
}

/// Runs the full attack and returns the equivalent key.
pub fn run_attack<O: EncryptionOracle + ?Sized>(oracle: &mut O, base: &[u8]) -> Result<EquivalentKey, AttackError> {
    Ok(run_attack_logged(oracle, base)?.0)
}

/// [`run_attack`] plus a log of what happened.
pub fn run_attack_logged<O: EncryptionOracle + ?Sized>(
    oracle: &mut O,
    base: &[u8],
) -> Result<(EquivalentKey, AttackLog), AttackError> {
    let base_diff = Differential::new(base.to_vec())?;
    let n = base_diff.num_blocks();
    let mut queries = 0usize;
    let mut ask = |plain: &[u8]| -> Result<Vec<u8>, AttackError> {
        queries += 1;
        let c = oracle.query(plain).map_err(|e| e.at(Stage::Query))?;
        if c.len() != plain.len() / PLAIN_BLOCK * CIPHER_BLOCK {
            return Err(AttackError::Oracle(format!(
                "expected {} ciphertext bytes, got {}",
                plain.len() / PLAIN_BLOCK * CIPHER_BLOCK,
                c.len()
            ))
            .at(Stage::Query));
        }
        Ok(c)
    };
    let query_diff = |ask: &mut dyn FnMut(&[u8]) -> Result<Vec<u8>, AttackError>, d: &Differential, c0: &[u8]| {
        let p = d.apply_to(base)?;
        Ok::<_, AttackError>(xor_cipher(c0, &ask(&p)?))
    };

    let c0 = ask(base)?;

    let (d1, d2) = gen_expansion_differentials(n);
    let c1 = query_diff(&mut ask, &d1, &c0)?;
    let c2 = query_diff(&mut ask, &d2, &c0)?;
    let idx = recover_expansion_indices(&d1, &d2, &c1, &c2).map_err(|e| e.at(Stage::Expansion))?;

    let plan_a = plan_swap_a(&idx).map_err(|e| e.at(Stage::SwapBits))?;
    let c3 = query_diff(&mut ask, &plan_a.swap.diff, &c0)?;
    let (l, omega_a) = resolve_expansion(&idx, &plan_a, &c3).map_err(|e| e.at(Stage::Expansion))?;
    let plan_b = plan_swap_b(n, &l).map_err(|e| e.at(Stage::SwapBits))?;
    let c4 = query_diff(&mut ask, &plan_b.diff, &c0)?;
    let swap_bits = recover_swap_bits(&plan_a, &omega_a, &c3, &plan_b, &c4).map_err(|e| e.at(Stage::SwapBits))?;

    let (d5, probe_rows) = gen_vertical_differential(&l);
    let c5 = query_diff(&mut ask, &d5, &c0)?;
    let rot_y = recover_vertical_part(&c5, &probe_rows).map_err(|e| e.at(Stage::Vertical))?;

    let d6 = gen_horizontal_differential(n);
    let c6 = query_diff(&mut ask, &d6, &c0)?;
    let from_secret = expanded_from_secret(&l);
    let (rot_x, unknown_rows) = recover_horizontal_part(&c6, &rot_y, &from_secret).map_err(|e| e.at(Stage::Horizontal))?;

    let tag_diffs = [&d1, &d2, &plan_a.swap.diff, &plan_b.diff];
    let tag_ciphers = [&c1, &c2, &c3, &c4];
    let pre: Vec<Vec<ExpandedBlock16>> = tag_diffs
        .iter()
        .map(|d| pre_swap_blocks(d, &expanded_chain(d, &l), &swap_bits).into_iter().map(|x| x.0).collect())
        .collect();
    let observed: Vec<Vec<ExpandedBlock16>> = tag_ciphers.iter().map(|c| derotate_all(c, &rot_y, &rot_x)).collect();
    let perms = recover_byteswap_part(&pre, &observed, &unknown_rows).map_err(|e| e.at(Stage::ByteSwap))?;

    // The base plaintext's expanded byte is known except on the chain that
    // starts at the unknown initial temp.
    let base_expanded: Vec<Option<u8>> = expanded_chain(&base_diff, &l)
        .into_iter()
        .zip(&from_secret)
        .map(|(e, &s)| if s { None } else { e })
        .collect();
    let (base_pre, base_unknown): (Vec<_>, Vec<_>) = pre_swap_blocks(&base_diff, &base_expanded, &swap_bits).into_iter().unzip();
    let base_derot = derotate_all(&c0, &rot_y, &rot_x);
    let (seeds, unknown) = recover_masking_part(&base_pre, &base_unknown, &base_derot, &perms, &unknown_rows);

    let blocks: Vec<BlockKey> = (0..n)
        .map(|k| BlockKey {
            l: l[k],
            l_candidates: idx.candidates[k],
            swap_bits: swap_bits[k],
            probe_row: probe_rows[k],
            perm: perms[k],
            seed: seeds[k],
            rot_x: rot_x[k],
            rot_y: rot_y[k],
            unknown_rows: unknown[k],
        })
        .collect();
    let log = AttackLog {
        queries,
        num_blocks: n,
        ambiguous_blocks: idx.ambiguous_blocks(),
        blocks_with_unknown_rows: unknown.iter().filter(|&&m| m != 0).count(),
    };
    Ok((EquivalentKey { blocks }, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::{KeySchedule, SWAP_TABLE};
    use crate::fixed::Fixed129;
    use crate::prbg::PrbsStream;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plain(rng: &mut ChaCha8Rng, blocks: usize) -> Vec<u8> {
        (0..blocks * 15).map(|_| rng.random()).collect()
    }

    /// A stream whose block `k` has `l(k) = ls[k]`, other bits random.
    fn stream_with_indices(rng: &mut ChaCha8Rng, ls: &[u8]) -> PrbsStream {
        PrbsStream::from_states(
            ls.iter()
                .map(|&l| {
                    let mut x = Fixed129::random(rng);
                    for t in 0..4 {
                        x.set_raw_bit(128 - t, (l >> t) & 1 == 1);
                    }
                    x
                })
                .collect(),
        )
    }

    fn schedule_oracle(sched: KeySchedule) -> impl FnMut(&[u8]) -> Result<Vec<u8>, AttackError> {
        move |p: &[u8]| Ok(sched.encrypt(p)?)
    }

    /// True permutation of swaps 9..32 within each half.
    fn true_inner_perm(swap_bits: u32) -> [[u8; 8]; 2] {
        let mut pos: [u8; 16] = std::array::from_fn(|i| i as u8);
        for (t, &(i, j, _)) in SWAP_TABLE.iter().enumerate().skip(8) {
            if (swap_bits >> t) & 1 == 1 {
                pos.swap(i as usize, j as usize);
            }
        }
        // pos[dst] = src; invert.
        let mut out = [[0u8; 8]; 2];
        for dst in 0..16 {
            let src = pos[dst] as usize;
            out[src / 8][src % 8] = (dst % 8) as u8;
        }
        out
    }

    #[test]
    fn expansion_weight_pattern() {
        let first: Vec<(u8, u8)> = (0..8).map(expansion_weights).collect();
        assert!(first.iter().all(|p| p.0 == 0));
        assert_eq!(first.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(expansion_weights(8), (1, 0));
        assert_eq!(expansion_weights(79), (8, 8));
        assert_eq!(expansion_weights(80), expansion_weights(0));
        let mut all: Vec<(u8, u8)> = (0..80).map(expansion_weights).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 80);
        assert!(!all.contains(&(0, 0)));
        for k in 0..16 {
            let mut pairs: Vec<(u8, u8)> = (0..15).map(|j| expansion_weights(15 * k + j)).collect();
            pairs.sort();
            pairs.dedup();
            assert_eq!(pairs.len(), 15);
        }
        let (d1, d2) = gen_expansion_differentials(2);
        assert_eq!(d1.as_bytes()[8], 0x01);
        assert_eq!(d2.as_bytes()[7], 0xFF);
    }

    #[test]
    fn decode_table() {
        let mut sums = signed_sums(SWAP_MAGNITUDES).to_vec();
        sums.sort();
        let mut expected = vec![23, 15, 13, 11, 7, 5, 3, 1];
        expected.extend(expected.clone().iter().map(|v: &i32| -v));
        expected.sort();
        assert_eq!(sums, expected);
        assert_eq!(decode_swap_bits(23).unwrap(), [false; 4]);
        assert_eq!(decode_swap_bits(-23).unwrap(), [true; 4]);
        assert_eq!(decode_swap_bits(7).unwrap(), [false, false, false, true]);
        assert_eq!(decode_swap_bits(0), Err(AttackError::InvalidDeltaSum(0)));
        assert_eq!(decode_swap_bits(2), Err(AttackError::InvalidDeltaSum(2)));
        for pattern in 0..16usize {
            let bits: [bool; 4] = std::array::from_fn(|i| (pattern >> i) & 1 == 1);
            assert_eq!(decode_swap_bits(signed_sums(SWAP_MAGNITUDES)[pattern]).unwrap(), bits);
        }
    }

    #[test]
    fn pair_assignment_always_feasible() {
        for pair in 0..4 {
            for side in 0..2 {
                for w in 0..=8 {
                    let (coeffs, weights) = assign_pairs(Some((pair, side, w))).unwrap();
                    let mut mags: Vec<i8> = coeffs.iter().map(|c| c.abs()).collect();
                    mags.sort();
                    assert_eq!(mags, vec![4, 5, 6, 8]);
                    let fixed = if side == 0 { weights[pair].0 } else { weights[pair].1 };
                    assert_eq!(fixed, w);
                    for i in 0..4 {
                        assert_eq!(weights[i].0 as i8 - weights[i].1 as i8, coeffs[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn expansion_indices_match_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let key = SecretKey::random(&mut rng);
        let n = 10_000;
        let sched = KeySchedule::new(&key, n);
        let base = random_plain(&mut rng, n);
        let (d1, d2) = gen_expansion_differentials(n);
        let c0 = sched.encrypt(&base).unwrap();
        let c1 = xor_cipher(&c0, &sched.encrypt(&d1.apply_to(&base).unwrap()).unwrap());
        let c2 = xor_cipher(&c0, &sched.encrypt(&d2.apply_to(&base).unwrap()).unwrap());
        let idx = recover_expansion_indices(&d1, &d2, &c1, &c2).unwrap();
        for k in 0..n - 1 {
            let truth = sched.control(k).expansion_index;
            assert!((idx.candidates[k] >> truth) & 1 == 1);
            if !idx.is_ambiguous(k) {
                assert_eq!(idx.get(k), Some(truth));
            }
        }
        assert_eq!(idx.candidates[n - 1], u16::MAX);
        // Block 0's expanded differential is zero.
        assert_eq!(expanded_weights(&d1, &c1).unwrap()[0], 0);
    }

    #[test]
    fn forced_ambiguity_is_reported_and_resolved() {
        // l(0) = 0 and l(1..5) = 15: block 5's expanded byte comes from
        // global index 0, the same weight pair as block 5 position 5.
        for tail in [5u8, 15] {
            let mut rng = ChaCha8Rng::seed_from_u64(u64::from(tail));
            let ls = [0, 15, 15, 15, 15, tail, 3, 9, 1];
            let stream = stream_with_indices(&mut rng, &ls);
            let key = SecretKey::random(&mut rng);
            let sched = KeySchedule::from_stream(&key, &stream);
            let base = random_plain(&mut rng, ls.len());
            let (d1, d2) = gen_expansion_differentials(ls.len());
            let c0 = sched.encrypt(&base).unwrap();
            let c1 = xor_cipher(&c0, &sched.encrypt(&d1.apply_to(&base).unwrap()).unwrap());
            let c2 = xor_cipher(&c0, &sched.encrypt(&d2.apply_to(&base).unwrap()).unwrap());
            let idx = recover_expansion_indices(&d1, &d2, &c1, &c2).unwrap();
            assert_eq!(idx.candidates[5], (1 << 5) | (1 << 15));
            assert_eq!(idx.ambiguous_blocks(), vec![5]);

            let mut oracle = CountingOracle::new(schedule_oracle(sched.clone()));
            let (ek, log) = run_attack_logged(&mut oracle, &base).unwrap();
            assert_eq!(oracle.count(), 7);
            assert_eq!(log.ambiguous_blocks, vec![5]);
            assert_eq!(ek.blocks[5].l, Some(tail));
            assert!(ek.blocks[5].l_was_ambiguous());
            let fresh = random_plain(&mut rng, ls.len());
            assert_eq!(ees_decrypt(&sched.encrypt(&fresh).unwrap(), &ek).unwrap(), fresh);
        }
    }

    #[test]
    fn ambiguity_on_swap_pair_position() {
        // With l(0) = l0 and six 15s after it, block 6 inherits global index
        // l0, whose weight pair reappears at position l0 - 10 of block 6.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut found = false;
        for l0 in 0..15u8 {
            let ls = [l0, 15, 15, 15, 15, 15, 15, 2, 4];
            let stream = stream_with_indices(&mut rng, &ls);
            let key = SecretKey::random(&mut rng);
            let sched = KeySchedule::from_stream(&key, &stream);
            let base = random_plain(&mut rng, ls.len());
            let mut oracle = CountingOracle::new(schedule_oracle(sched.clone()));
            let (ek, log) = run_attack_logged(&mut oracle, &base).unwrap();
            for &k in &log.ambiguous_blocks {
                let q = (ek.blocks[k].l_candidates & 0x7FFF).trailing_zeros();
                if q % 8 < 4 {
                    found = true;
                }
                assert_eq!(ek.blocks[k].l, Some(ls[k]));
            }
            let fresh = random_plain(&mut rng, ls.len());
            assert_eq!(ees_decrypt(&sched.encrypt(&fresh).unwrap(), &ek).unwrap(), fresh);
        }
        assert!(found);
    }

    #[test]
    fn swap_bits_match_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let key = SecretKey::random(&mut rng);
        let n = 500;
        let sched = KeySchedule::new(&key, n);
        let base = random_plain(&mut rng, n);
        let mut oracle = schedule_oracle(sched.clone());
        let ek = run_attack(&mut oracle, &base).unwrap();
        for k in 0..n {
            let c = sched.control(k);
            assert_eq!(ek.blocks[k].swap_bits, (c.swap_bits & 0xFF) as u8);
            if k + 1 < n {
                assert_eq!(ek.blocks[k].l, Some(c.expansion_index));
            }
        }
    }

    #[test]
    fn non_adaptive_swap_differentials() {
        let idx = ExpansionIndices {
            candidates: vec![1 << 3, 1 << 15, u16::MAX],
        };
        let (a, b) = gen_swap_differentials(&idx).unwrap();
        assert_eq!(a.coefficients[0], [4, 5, 6, 8]);
        assert_eq!(b.coefficients[0], [4, 5, 6, 8]);
        let amb = ExpansionIndices {
            candidates: vec![(1 << 3) | (1 << 15), 1, u16::MAX],
        };
        assert_eq!(
            gen_swap_differentials(&amb).unwrap_err(),
            AttackError::UnresolvedExpansion { block: 0 }
        );
    }

    #[test]
    fn all_unswapped_and_all_swapped_sums() {
        // Zero-PRBS-like controls: build blocks where the first eight swap
        // bits are all 0 or all 1 and check the weight difference directly.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &bit in &[false, true] {
            let mut x = Fixed129::random(&mut rng);
            for t in 0..4 {
                x.set_raw_bit(128 - t, false);
            }
            for t in 4..12 {
                x.set_raw_bit(128 - t, bit);
            }
            let stream = PrbsStream::from_states(vec![x]);
            let key = SecretKey::random(&mut rng);
            let sched = KeySchedule::from_stream(&key, &stream);
            let idx = ExpansionIndices {
                candidates: vec![u16::MAX],
            };
            let (a, _) = gen_swap_differentials(&idx).unwrap();
            let base = random_plain(&mut rng, 1);
            let c = xor_cipher(&sched.encrypt(&base).unwrap(), &sched.encrypt(&a.diff.apply_to(&base).unwrap()).unwrap());
            assert_eq!(half_weight_delta(&c), if bit { -23 } else { 23 });
        }
    }

    #[test]
    fn rotation_parts_match_internals() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let key = SecretKey::random(&mut rng);
        let n = 300;
        let sched = KeySchedule::new(&key, n);
        let base = random_plain(&mut rng, n);
        let ek = run_attack(&mut schedule_oracle(sched.clone()), &base).unwrap();
        for (k, bk) in ek.blocks.iter().enumerate() {
            let c = sched.control(k);
            let pi = true_inner_perm(c.swap_bits);
            for half in 0..2 {
                let r = bk.probe_row as usize;
                let s = (pi[half][r] as usize + 8 - r) % 8;
                let (a, b) = key.rotation_pair(half);
                let set = [a, a + b, 8 - a, 8 - (a + b)];
                for j in 0..8 {
                    assert_eq!(bk.rot_y[8 * half + j] as usize, (c.col_rot[8 * half + j] as usize + s) % 8);
                }
                for i in 0..8 {
                    if (bk.unknown_rows >> (8 * half + i)) & 1 == 1 {
                        continue;
                    }
                    assert_eq!(bk.rot_x[8 * half + i], c.row_rot[8 * half + (i + s) % 8]);
                    assert!(set.contains(&bk.rot_x[8 * half + i]));
                    assert_eq!(bk.seed[8 * half + i], c.seed_star()[8 * half + (i + s) % 8]);
                }
                for i in 0..8 {
                    assert_eq!(bk.perm[half][i] as usize, (pi[half][i] as usize + 8 - s) % 8);
                }
            }
        }
    }

    #[test]
    fn identity_controls_give_identity_parts() {
        // All controlling bits zero except l: no swaps, zero offsets.
        let ls = [0u8, 0, 0];
        let stream = PrbsStream::from_states(vec![Fixed129::ZERO; 3]);
        let _ = ls;
        let key = SecretKey::new(1, 1, 1, 1, 7, Fixed129::ZERO).unwrap();
        let sched = KeySchedule::from_stream(&key, &stream);
        let base = vec![0x33u8; 45];
        let ek = run_attack(&mut schedule_oracle(sched.clone()), &base).unwrap();
        for bk in &ek.blocks {
            assert_eq!(bk.perm, [[0, 1, 2, 3, 4, 5, 6, 7]; 2]);
            assert_eq!(bk.swap_bits, 0);
            assert_eq!(bk.rot_y, [1; 16]);
        }
    }

    #[test]
    fn masks_do_not_depend_on_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let key = SecretKey::random(&mut rng);
        let n = 50;
        let sched = KeySchedule::new(&key, n);
        let a = run_attack(&mut schedule_oracle(sched.clone()), &random_plain(&mut rng, n)).unwrap();
        let b = run_attack(&mut schedule_oracle(sched.clone()), &random_plain(&mut rng, n)).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            let known = !(x.unknown_rows | y.unknown_rows);
            for i in 0..16 {
                if (known >> i) & 1 == 1 {
                    assert_eq!(x.seed[i], y.seed[i]);
                }
            }
        }
    }

    #[test]
    fn ees_round_trip_and_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let key = SecretKey::reference();
        let n = 64;
        let sched = KeySchedule::new(&key, n);
        let base = random_plain(&mut rng, n);
        let mut oracle = CountingOracle::new(CipherOracle::new(&key));
        let ek = run_attack(&mut oracle, &base).unwrap();
        assert_eq!(oracle.count(), 7);
        assert_eq!(ees_decrypt(&sched.encrypt(&base).unwrap(), &ek).unwrap(), base);
        let short = random_plain(&mut rng, 10);
        assert_eq!(ees_decrypt(&sched.encrypt(&short).unwrap(), &ek).unwrap(), short);
        for bk in &ek.blocks {
            let e: ExpandedBlock16 = std::array::from_fn(|i| i as u8 * 9);
            assert_eq!(bk.decrypt_block(&bk.encrypt_block(&e)), e);
        }
        assert!(matches!(
            ees_decrypt(&vec![0u8; 16 * (n + 1)], &ek),
            Err(AttackError::CiphertextTooLong { .. })
        ));
        assert!(ees_decrypt(&[0u8; 15], &ek).is_err());
    }

    #[test]
    fn malformed_inputs() {
        let mut c = vec![0xFFu8; 16];
        c[1] = 0xFE;
        assert_eq!(
            recover_vertical_part(&c, &[0]),
            Err(AttackError::MalformedColumn { block: 0, column: 0 })
        );
        let c = vec![0x03u8; 16];
        assert!(matches!(
            recover_horizontal_part(&c, &[[0; 16]], &[false]),
            Err(AttackError::MalformedRow { block: 0, row: 0 })
        ));
        let d = gen_expansion_differentials(2);
        let bad = vec![0xFFu8; 32];
        assert!(matches!(
            recover_expansion_indices(&d.0, &d.1, &bad, &bad),
            Err(AttackError::InconsistentWeights { .. })
        ));
    }

    #[test]
    fn vertical_probe_rows_avoid_expansion_index() {
        let l = [Some(0), Some(8), Some(1), Some(15), None];
        let (d, rows) = gen_vertical_differential(&l);
        assert_eq!(rows, vec![1, 1, 0, 0, 0]);
        assert!(expanded_chain(&d, &l).iter().all(|e| *e == Some(0)));
        assert!(d.as_bytes().iter().all(|&b| b == 0 || b == 0xFF));
        assert_eq!(expanded_from_secret(&[Some(15), Some(15), Some(3), Some(15)]), vec![true, true, true, false]);
    }

    #[test]
    fn tampered_oracle_fails_with_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let key = SecretKey::random(&mut rng);
        let other = SecretKey::random(&mut rng);
        let base = random_plain(&mut rng, 20);
        let mut calls = 0;
        let mut oracle = |p: &[u8]| -> Result<Vec<u8>, AttackError> {
            calls += 1;
            let k = if calls == 2 { &other } else { &key };
            Ok(crate::cipher::encrypt(p, k)?)
        };
        let err = run_attack(&mut oracle, &base).unwrap_err();
        assert!(matches!(err, AttackError::AttackFailed { .. }), "{err}");
    }
}
