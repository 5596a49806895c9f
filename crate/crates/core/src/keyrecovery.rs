//! Sub-key and controlling-bit recovery from an equivalent key.
//!
//! The horizontal amounts of the equivalent key are true rotation amounts
//! (only their row index is shifted), so their union gives the rotation set
//! `R = {α, 8-α, α+β, 8-(α+β)}` of each half. The vertical amounts are
//! shifted by the row offset `s̃`; comparing them with `R` pins `s̃` down when
//! `R` has no translation symmetry. With `s̃` known the swap permutation,
//! masks and rotation amounts can be put back in the true frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attack::{BlockKey, EquivalentKey};
use crate::cipher::{offsets, rotation_amount, SWAP_TABLE};
use crate::key::{is_legal_pair, SecretKey, LEGAL_ROTATION_PAIRS};
use crate::BITS_PER_BLOCK;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecoveryError {
    #[error("no legal (alpha, beta) produces the rotation set {0}")]
    IllegalSet(RotationSet),
    #[error("{0}")]
    DomainError(String),
}

/// Subset of `{0..7}` stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RotationSet(pub u8);

impl RotationSet {
    pub fn from_pair(alpha: u8, beta: u8) -> Self {
        let mut s = RotationSet::default();
        for v in [alpha, 8 - alpha, alpha + beta, 8 - (alpha + beta)] {
            s.insert(v);
        }
        s
    }

    pub fn from_members(members: &[u8]) -> Self {
        let mut s = RotationSet::default();
        for &m in members {
            s.insert(m);
        }
        s
    }

    pub fn insert(&mut self, v: u8) {
        self.0 |= 1 << (v & 7);
    }

    pub fn contains(&self, v: u8) -> bool {
        (self.0 >> (v & 7)) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn members(&self) -> Vec<u8> {
        (0..8).filter(|&v| self.contains(v)).collect()
    }

    /// `{v + t mod 8}`.
    pub fn shifted(&self, t: u8) -> Self {
        RotationSet(self.0.rotate_left(u32::from(t & 7)))
    }
}

impl std::fmt::Display for RotationSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let m: Vec<String> = self.members().iter().map(u8::to_string).collect();
        write!(f, "{{{}}}", m.join(","))
    }
}

/// Union of `{r, 8-r}` over the known horizontal amounts of each half.
pub fn recover_rotation_sets(ek: &EquivalentKey) -> [RotationSet; 2] {
    let mut sets = [RotationSet::default(); 2];
    for bk in &ek.blocks {
        for row in 0..16 {
            if (bk.unknown_rows >> row) & 1 == 1 {
                continue;
            }
            let r = bk.rot_x[row];
            sets[row / 8].insert(r);
            sets[row / 8].insert((8 - r) & 7);
        }
    }
    sets
}

/// Every legal `(α, β)` whose rotation set equals `r`.
pub fn candidate_alpha_beta(r: RotationSet) -> Result<Vec<(u8, u8)>, RecoveryError> {
    let out: Vec<(u8, u8)> = LEGAL_ROTATION_PAIRS
        .iter()
        .copied()
        .filter(|&(a, b)| RotationSet::from_pair(a, b) == r)
        .collect();
    if out.is_empty() {
        Err(RecoveryError::IllegalSet(r))
    } else {
        Ok(out)
    }
}

fn check_prop1_domain(alpha: u8, beta: u8, p: f64, n: u32) -> Result<(), RecoveryError> {
    if !is_legal_pair(alpha, beta) {
        return Err(RecoveryError::DomainError(format!("illegal (alpha, beta) = ({alpha}, {beta})")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(RecoveryError::DomainError(format!("p = {p} outside [0, 1]")));
    }
    if n == 0 {
        return Err(RecoveryError::DomainError("n must be at least 1".into()));
    }
    Ok(())
}

/// Probability that `n` amounts, each in `{α, 8-α}` with probability `p`,
/// fail to reveal the full rotation set.
pub fn prop1_probability(alpha: u8, beta: u8, p: f64, n: u32) -> Result<f64, RecoveryError> {
    check_prop1_domain(alpha, beta, p, n)?;
    Ok(if 2 * alpha + beta == 8 {
        0.0
    } else if n == 1 {
        1.0
    } else {
        p.powi(n as i32) + (1.0 - p).powi(n as i32)
    })
}

/// Monte Carlo estimate of [`prop1_probability`].
pub fn prop1_montecarlo(alpha: u8, beta: u8, p: f64, n: u32, trials: u64, seed: u64) -> Result<f64, RecoveryError> {
    check_prop1_domain(alpha, beta, p, n)?;
    let full = RotationSet::from_pair(alpha, beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = 0u64;
    for _ in 0..trials {
        let mut seen = RotationSet::default();
        for _ in 0..n {
            let base = if rng.random_bool(p) { alpha } else { alpha + beta };
            let r = if rng.random_bool(0.5) { base } else { 8 - base };
            seen.insert(r);
            seen.insert(8 - r);
        }
        if seen != full {
            misses += 1;
        }
    }
    Ok(misses as f64 / trials.max(1) as f64)
}

/// Row offset of one half of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SOffset {
    Unique(u8),
    Ambiguous(Vec<u8>),
}

impl SOffset {
    pub fn value(&self) -> Option<u8> {
        match self {
            SOffset::Unique(v) => Some(*v),
            SOffset::Ambiguous(_) => None,
        }
    }
}

/// Offsets `t` for which every observed vertical amount minus `t` lies in
/// `r`.
pub fn s_offset_candidates(rot_y_half: &[u8], r: RotationSet) -> Vec<u8> {
    (0..8u8)
        .filter(|&t| rot_y_half.iter().all(|&v| r.contains((v + 8 - t) & 7)))
        .collect()
}

pub fn classify_offsets(candidates: Vec<u8>) -> SOffset {
    if candidates.len() == 1 {
        SOffset::Unique(candidates[0])
    } else {
        SOffset::Ambiguous(candidates)
    }
}

pub fn determine_s_offsets(ek: &EquivalentKey, r: &[RotationSet; 2]) -> Vec<[SOffset; 2]> {
    ek.blocks
        .iter()
        .map(|bk| {
            std::array::from_fn(|half| classify_offsets(s_offset_candidates(&bk.rot_y[8 * half..8 * half + 8], r[half])))
        })
        .collect()
}

/// True in-half permutation `π(i) = perm(i) + s̃`.
pub fn true_permutation(perm: &[u8; 8], s: u8) -> [u8; 8] {
    std::array::from_fn(|i| (perm[i] + s) & 7)
}

/// In-half swap steps `(i, j)` of a half, in the order they are applied,
/// with the index of the controlling bit inside the block.
fn half_swaps(half: usize) -> Vec<(usize, usize, usize)> {
    SWAP_TABLE
        .iter()
        .skip(8)
        .filter(|&&(i, _, _)| usize::from(i) / 8 == half)
        .map(|&(i, j, l)| (usize::from(i) % 8, usize::from(j) % 8, usize::from(l)))
        .collect()
}

/// Recovers the 12 swap bits of one half from its true permutation. Bits are
/// returned as `(bit index, value)`; `None` when the permutation cannot be
/// produced by the swap network.
pub fn decode_half_swaps(pi: &[u8; 8], half: usize) -> Option<Vec<(usize, bool)>> {
    let swaps = half_swaps(half);
    let mut pos: [u8; 8] = std::array::from_fn(|i| i as u8);
    let mut bits = Vec::with_capacity(12);
    for phase in swaps.chunks(4) {
        for &(i, j, l) in phase {
            // Element now at i must end where pi sends it; swap if its
            // destination falls on j's side of this phase's split.
            let elem = (0..8).find(|&e| pos[e] as usize == i).expect("bijection");
            let dest = pi[elem] as usize;
            let split = j - i;
            let swapped = (dest / split) % 2 != (i / split) % 2;
            if swapped {
                let other = (0..8).find(|&e| pos[e] as usize == j).expect("bijection");
                pos[elem] = j as u8;
                pos[other] = i as u8;
            }
            bits.push((l, swapped));
        }
    }
    (pos == *pi).then_some(bits)
}

/// Status of one recovered controlling bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitStatus {
    Zero,
    One,
    Unknown,
}

impl BitStatus {
    pub fn from_bool(b: bool) -> Self {
        if b {
            BitStatus::One
        } else {
            BitStatus::Zero
        }
    }

    pub fn value(self) -> Option<bool> {
        match self {
            BitStatus::Zero => Some(false),
            BitStatus::One => Some(true),
            BitStatus::Unknown => None,
        }
    }
}

/// Admissible values of the bit pair `(b(index), b(index + 1))` steering one
/// rotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstrainedPair {
    pub index: usize,
    pub admissible: Vec<(bool, bool)>,
}

/// All `(direction, magnitude)` bit pairs producing `amount` under some
/// candidate `(α, β)`.
pub fn admissible_pairs(amount: u8, candidates: &[(u8, u8)]) -> Vec<(bool, bool)> {
    [(false, false), (false, true), (true, false), (true, true)]
        .into_iter()
        .filter(|&(d, m)| candidates.iter().any(|&(a, b)| rotation_amount(a, b, d, m) == amount))
        .collect()
}

/// Mask-selection bits `b(36..51)` of one block from its true-frame mask
/// bytes and `Seed1`'s nine low bits. Entry `2j` is `b(36 + 2j)`.
pub fn recover_masking_bits(seed_star: &[u8; 16], seed1_low9: u16) -> [BitStatus; 16] {
    let mut out = [BitStatus::Unknown; 16];
    let planes: [u16; 8] =
        std::array::from_fn(|j| (0..16).fold(0u16, |acc, i| acc | (u16::from((seed_star[i] >> j) & 1) << i)));
    let low = |p: u16| p & 0x1FF;
    let l = seed1_low9 & 0x1FF;
    let not_l = !seed1_low9 & 0x1FF;
    let foreign: Vec<u16> = planes.iter().copied().filter(|&p| low(p) != l && low(p) != not_l).collect();
    // Without a visible Seed2-family plane the planes matching Seed1's low
    // bits may still be Seed2 with colliding low bits.
    let Some(&s2) = foreign.first() else {
        return out;
    };
    if foreign.iter().any(|&p| p != s2 && p != !s2) {
        return out;
    }
    let family1: Vec<u16> = planes.iter().copied().filter(|&p| low(p) == l || low(p) == not_l).collect();
    if let Some(&s1) = family1.first() {
        if family1.iter().any(|&p| p != s1 && p != !s1) {
            return out;
        }
    }
    for (j, &p) in planes.iter().enumerate() {
        if low(p) == l {
            out[2 * j] = BitStatus::One;
            out[2 * j + 1] = BitStatus::One;
        } else if low(p) == not_l {
            out[2 * j] = BitStatus::One;
            out[2 * j + 1] = BitStatus::Zero;
        } else {
            out[2 * j] = BitStatus::Zero;
        }
    }
    out
}

/// Everything recovered from an equivalent key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryReport {
    pub rotation_sets: [RotationSet; 2],
    pub alpha_beta: [Vec<(u8, u8)>; 2],
    pub s_offsets: Vec<[SOffset; 2]>,
    /// `bits[129k + t]` is the status of `b(129k + t)`.
    pub bits: Vec<BitStatus>,
    pub pairs: Vec<ConstrainedPair>,
}

impl RecoveryReport {
    pub fn num_blocks(&self) -> usize {
        self.s_offsets.len()
    }

    pub fn known_bits(&self) -> usize {
        self.bits.iter().filter(|b| **b != BitStatus::Unknown).count()
    }

    pub fn unique_offsets(&self) -> usize {
        self.s_offsets.iter().flatten().filter(|s| s.value().is_some()).count()
    }
}

/// Swap bits `b(12..35)` of one block; entry `t` is `b(12 + t)`. A half
/// contributes only when its row offset is known and its permutation is
/// reachable by the swap network.
pub fn recover_swap_bits_9to35(bk: &BlockKey, s: [Option<u8>; 2]) -> [BitStatus; 24] {
    let mut out = [BitStatus::Unknown; 24];
    for half in 0..2 {
        let Some(sh) = s[half] else { continue };
        if let Some(decoded) = decode_half_swaps(&true_permutation(&bk.perm[half], sh), half) {
            for (idx, v) in decoded {
                out[idx - 12] = BitStatus::from_bool(v);
            }
        }
    }
    out
}

/// Admissible bit pairs for every rotation of block `k` whose amount is
/// known in the true frame.
pub fn constrain_rotation_bits(
    k: usize,
    bk: &BlockKey,
    s: [Option<u8>; 2],
    alpha_beta: &[Vec<(u8, u8)>; 2],
) -> Vec<ConstrainedPair> {
    let base = BITS_PER_BLOCK * k;
    let mut pairs = Vec::new();
    for half in 0..2 {
        let Some(sh) = s[half] else { continue };
        if alpha_beta[half].is_empty() {
            continue;
        }
        let (row_base, col_base) = if half == 0 {
            (offsets::ROW_ROT_1, offsets::COL_ROT_1)
        } else {
            (offsets::ROW_ROT_2, offsets::COL_ROT_2)
        };
        for rho in 0..8 {
            let shifted = (rho + 8 - usize::from(sh)) % 8;
            if (bk.unknown_rows >> (8 * half + shifted)) & 1 == 1 {
                continue;
            }
            pairs.push(ConstrainedPair {
                index: base + row_base + 2 * rho,
                admissible: admissible_pairs(bk.rot_x[8 * half + shifted], &alpha_beta[half]),
            });
        }
        for j in 0..8 {
            let amount = (bk.rot_y[8 * half + j] + 8 - sh) & 7;
            pairs.push(ConstrainedPair {
                index: base + col_base + 2 * j,
                admissible: admissible_pairs(amount, &alpha_beta[half]),
            });
        }
    }
    pairs
}

fn recover_block(
    k: usize,
    bk: &BlockKey,
    offsets_k: &[SOffset; 2],
    alpha_beta: &[Vec<(u8, u8)>; 2],
    bits: &mut [BitStatus],
    pairs: &mut Vec<ConstrainedPair>,
) {
    let base = BITS_PER_BLOCK * k;
    if let Some(l) = bk.l {
        for t in 0..4 {
            bits[base + t] = BitStatus::from_bool((l >> t) & 1 == 1);
        }
    }
    for t in 0..8 {
        bits[base + 4 + t] = BitStatus::from_bool((bk.swap_bits >> t) & 1 == 1);
    }
    let s = [offsets_k[0].value(), offsets_k[1].value()];
    bits[base + 12..base + 36].copy_from_slice(&recover_swap_bits_9to35(bk, s));
    pairs.extend(constrain_rotation_bits(k, bk, s, alpha_beta));
    // Masking bits need both halves in the true frame and bits 0..35.
    let (Some(s0), Some(s1)) = (s[0], s[1]) else { return };
    if bk.unknown_rows != 0 {
        return;
    }
    let Some(low_bits) = (0..36).map(|t| bits[base + t].value()).collect::<Option<Vec<bool>>>() else {
        return;
    };
    let seed1_low9 = (0..9).fold(0u16, |acc, i| {
        let x = (0..4).fold(false, |a, t| a ^ low_bits[4 * i + t]);
        acc | (u16::from(x) << i)
    });
    let seed_star: [u8; 16] = std::array::from_fn(|rho| {
        let half = rho / 8;
        let sh = if half == 0 { s0 } else { s1 };
        bk.seed[8 * half + (rho % 8 + 8 - usize::from(sh)) % 8]
    });
    for (t, status) in recover_masking_bits(&seed_star, seed1_low9).into_iter().enumerate() {
        bits[base + offsets::PLANE_SELECT + t] = status;
    }
}

/// Runs the whole recovery pipeline on an equivalent key.
pub fn recover(ek: &EquivalentKey) -> RecoveryReport {
    let rotation_sets = recover_rotation_sets(ek);
    let alpha_beta = rotation_sets.map(|r| candidate_alpha_beta(r).unwrap_or_default());
    let s_offsets = determine_s_offsets(ek, &rotation_sets);
    let mut bits = vec![BitStatus::Unknown; BITS_PER_BLOCK * ek.num_blocks()];
    let mut pairs = Vec::new();
    for (k, bk) in ek.blocks.iter().enumerate() {
        recover_block(k, bk, &s_offsets[k], &alpha_beta, &mut bits, &mut pairs);
    }
    RecoveryReport {
        rotation_sets,
        alpha_beta,
        s_offsets,
        bits,
        pairs,
    }
}

/// Comparison of a report with the true key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Grade {
    pub assigned: usize,
    pub wrong_bits: usize,
    pub pairs: usize,
    pub violated_pairs: usize,
    pub rotation_sets_correct: bool,
    pub alpha_beta_contains_truth: bool,
}

impl Grade {
    pub fn is_sound(&self) -> bool {
        self.wrong_bits == 0 && self.violated_pairs == 0
    }
}

pub fn grade(report: &RecoveryReport, key: &SecretKey) -> Grade {
    let stream = crate::prbg::generate_prbs(key.x0, report.num_blocks());
    let truth = |i: usize| stream.bit_at(i);
    let mut g = Grade {
        rotation_sets_correct: (0..2).all(|h| {
            let (a, b) = key.rotation_pair(h);
            report.rotation_sets[h] == RotationSet::from_pair(a, b)
        }),
        alpha_beta_contains_truth: (0..2).all(|h| report.alpha_beta[h].contains(&key.rotation_pair(h))),
        ..Grade::default()
    };
    for (i, status) in report.bits.iter().enumerate() {
        if let Some(v) = status.value() {
            g.assigned += 1;
            if v != truth(i) {
                g.wrong_bits += 1;
            }
        }
    }
    for p in &report.pairs {
        g.pairs += 1;
        if !p.admissible.contains(&(truth(p.index), truth(p.index + 1))) {
            g.violated_pairs += 1;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{run_attack, CipherOracle};
    use crate::fixed::Fixed129;

    #[test]
    fn rotation_set_basics() {
        assert_eq!(RotationSet::from_pair(2, 5).members(), vec![1, 2, 6, 7]);
        assert_eq!(RotationSet::from_pair(2, 4).members(), vec![2, 6]);
        assert_eq!(RotationSet::from_members(&[1, 7]).to_string(), "{1,7}");
        assert_eq!(RotationSet::from_members(&[2, 6]).shifted(4), RotationSet::from_members(&[2, 6]));
        assert_eq!(RotationSet::from_members(&[1, 7]).shifted(1).members(), vec![0, 2]);
    }

    #[test]
    fn printed_candidate_lists() {
        let c = |m: &[u8]| candidate_alpha_beta(RotationSet::from_members(m)).unwrap();
        assert_eq!(c(&[1, 7]), vec![(1, 6)]);
        assert_eq!(c(&[2, 6]), vec![(2, 4)]);
        assert_eq!(c(&[3, 5]), vec![(3, 2)]);
        assert_eq!(c(&[4, 1, 7]), vec![(1, 3), (4, 3)]);
        assert_eq!(c(&[4, 2, 6]), vec![(2, 2), (4, 2)]);
        assert_eq!(c(&[4, 3, 5]), vec![(3, 1), (4, 1)]);
        assert_eq!(c(&[1, 2, 6, 7]), vec![(1, 1), (1, 5), (2, 5), (6, 1)]);
        assert_eq!(c(&[1, 3, 5, 7]), vec![(1, 2), (1, 4), (3, 4), (5, 2)]);
        assert_eq!(c(&[2, 3, 5, 6]), vec![(2, 1), (2, 3), (3, 3), (5, 1)]);
        assert!(matches!(
            candidate_alpha_beta(RotationSet::from_members(&[1, 2])),
            Err(RecoveryError::IllegalSet(_))
        ));
    }

    #[test]
    fn classification_split() {
        let mut sizes = [0usize; 5];
        for &(a, b) in LEGAL_ROTATION_PAIRS.iter() {
            let c = candidate_alpha_beta(RotationSet::from_pair(a, b)).unwrap();
            assert!(c.contains(&(a, b)));
            sizes[c.len()] += 1;
        }
        assert_eq!((sizes[1], sizes[2], sizes[4]), (3, 6, 12));
    }

    #[test]
    fn prop1_values() {
        assert_eq!(prop1_probability(2, 4, 0.3, 5).unwrap(), 0.0);
        assert_eq!(prop1_probability(1, 1, 0.3, 1).unwrap(), 1.0);
        assert!((prop1_probability(1, 1, 0.5, 8).unwrap() - 0.0078125).abs() < 1e-15);
        assert!(prop1_probability(0, 1, 0.5, 2).is_err());
        assert!(prop1_probability(1, 1, 1.5, 2).is_err());
        assert!(prop1_probability(1, 1, 0.5, 0).is_err());
        assert_eq!(prop1_montecarlo(2, 4, 0.5, 3, 10_000, 1).unwrap(), 0.0);
        assert_eq!(prop1_montecarlo(3, 3, 0.5, 1, 10_000, 1).unwrap(), 1.0);
        let est = prop1_montecarlo(1, 1, 0.5, 2, 100_000, 7).unwrap();
        assert!((est - 0.5).abs() < 3.0 * (0.25f64 / 1e5).sqrt());
    }

    #[test]
    fn offset_cases() {
        let r17 = RotationSet::from_members(&[1, 7]);
        for s in 0..8u8 {
            let obs = [(1 + s) & 7, (7 + s) & 7, (1 + s) & 7, (1 + s) & 7];
            assert_eq!(classify_offsets(s_offset_candidates(&obs, r17)), SOffset::Unique(s));
        }
        let r1357 = RotationSet::from_members(&[1, 3, 5, 7]);
        let obs = [2u8, 4, 6, 0];
        assert_eq!(s_offset_candidates(&obs, r1357), vec![1, 3, 5, 7]);
        let r26 = RotationSet::from_members(&[2, 6]);
        for s in 0..8u8 {
            let obs = [(2 + s) & 7, (6 + s) & 7];
            assert_eq!(s_offset_candidates(&obs, r26), vec![s % 4, s % 4 + 4]);
        }
        // Partial observation of a four-element set.
        let r1267 = RotationSet::from_members(&[1, 2, 6, 7]);
        let obs = [1u8];
        assert!(s_offset_candidates(&obs, r1267).len() > 1);
    }

    #[test]
    fn swap_decoding_round_trip() {
        for half in 0..2 {
            for pattern in 0..4096u32 {
                let mut pos: [u8; 8] = std::array::from_fn(|i| i as u8);
                let swaps = half_swaps(half);
                for (n, &(i, j, _)) in swaps.iter().enumerate() {
                    if (pattern >> n) & 1 == 1 {
                        let a = (0..8).find(|&e| pos[e] as usize == i).unwrap();
                        let b = (0..8).find(|&e| pos[e] as usize == j).unwrap();
                        pos[a] = j as u8;
                        pos[b] = i as u8;
                    }
                }
                let bits = decode_half_swaps(&pos, half).unwrap();
                for (n, &(_, v)) in bits.iter().enumerate() {
                    assert_eq!(v, (pattern >> n) & 1 == 1);
                }
            }
        }
        assert_eq!(decode_half_swaps(&[0, 1, 2, 3, 4, 5, 6, 7], 0).unwrap().iter().filter(|b| b.1).count(), 0);
        assert!(decode_half_swaps(&[1, 2, 0, 3, 4, 5, 6, 7], 0).is_none());
        let idx: Vec<usize> = half_swaps(0).iter().map(|s| s.2).collect();
        assert_eq!(idx, vec![12, 13, 14, 15, 20, 21, 22, 23, 28, 29, 30, 31]);
        assert_eq!(half_swaps(0)[3], (3, 7, 15));
    }

    #[test]
    fn rotation_pair_tables() {
        let tt = [(false, false), (true, true)];
        let ft = [(false, true), (true, false)];
        assert_eq!(admissible_pairs(1, &[(1, 6)]), tt);
        assert_eq!(admissible_pairs(7, &[(1, 6)]), ft);
        assert_eq!(admissible_pairs(4, &[(2, 2), (4, 2)]).len(), 4);
        assert_eq!(admissible_pairs(2, &[(2, 2), (4, 2)]), tt);
        assert_eq!(admissible_pairs(2, &[(1, 1), (1, 5), (2, 5), (6, 1)]).len(), 4);
        assert_eq!(admissible_pairs(1, &[(1, 1), (1, 5), (2, 5), (6, 1)]), tt);
        assert_eq!(admissible_pairs(3, &[(1, 2), (1, 4), (3, 4), (5, 2)]).len(), 4);
        assert_eq!(admissible_pairs(6, &[(2, 1), (2, 3), (3, 3), (5, 1)]), ft);
    }

    #[test]
    fn masking_degenerate_block() {
        // Zero stream: Seed1 = Seed2 = 0, every plane is !Seed2.
        let key = SecretKey::new(1, 1, 1, 1, 0, Fixed129::ZERO).unwrap();
        let c = crate::cipher::KeySchedule::new(&key, 1).control(0).to_owned();
        let bits = recover_masking_bits(&c.seed_star(), 0);
        assert!(bits.iter().all(|b| *b == BitStatus::Unknown));
    }

    #[test]
    fn recovery_is_sound_on_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let key = SecretKey::random(&mut rng);
            let n = 400;
            let base: Vec<u8> = (0..n * 15).map(|_| rng.random()).collect();
            let ek = run_attack(&mut CipherOracle::new(&key), &base).unwrap();
            let report = recover(&ek);
            let g = grade(&report, &key);
            assert!(g.is_sound(), "{g:?}");
            assert!(g.rotation_sets_correct);
            assert!(g.alpha_beta_contains_truth);
            assert!(g.assigned > 12 * n);
        }
    }

    #[test]
    fn reference_key_sets() {
        let key = SecretKey::reference();
        let base = vec![0u8; 15 * 200];
        let ek = run_attack(&mut CipherOracle::new(&key), &base).unwrap();
        let report = recover(&ek);
        assert_eq!(report.rotation_sets[0].members(), vec![1, 2, 6, 7]);
        assert!(report.alpha_beta[0].contains(&(2, 5)));
        assert_eq!(report.alpha_beta[0].len(), 4);
    }
}
