use std::fmt;

use crate::error::Error;

/// Unsigned 129-bit fixed-point number with 64 fractional bits.
///
/// The raw integer `X` has value `x = X * 2^-64`; bit `j` of `x`
/// (`-64 <= j <= 64`) is raw bit `j + 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Fixed129 {
    hi: bool,
    lo: u128,
}

/// Number of hex digits in the textual form of a raw value.
pub const HEX_DIGITS: usize = 33;

impl Fixed129 {
    pub const ZERO: Fixed129 = Fixed129 { hi: false, lo: 0 };
    pub const MAX: Fixed129 = Fixed129 {
        hi: true,
        lo: u128::MAX,
    };

    /// Builds the raw value `hi * 2^128 + lo`.
    pub const fn from_parts(hi: bool, lo: u128) -> Self {
        Fixed129 { hi, lo }
    }

    pub const fn from_low(lo: u128) -> Self {
        Fixed129 { hi: false, lo }
    }

    pub const fn high_bit(self) -> bool {
        self.hi
    }

    pub const fn low_bits(self) -> u128 {
        self.lo
    }

    /// Raw bit `i`, `0 <= i <= 128`.
    #[inline]
    pub fn raw_bit(self, i: usize) -> bool {
        debug_assert!(i <= 128);
        if i == 128 {
            self.hi
        } else {
            (self.lo >> i) & 1 == 1
        }
    }

    pub fn set_raw_bit(&mut self, i: usize, value: bool) {
        if i == 128 {
            self.hi = value;
        } else if value {
            self.lo |= 1 << i;
        } else {
            self.lo &= !(1u128 << i);
        }
    }

    /// Little-endian 64-bit limbs; the third limb holds only bit 128.
    pub(crate) fn limbs(self) -> [u64; 3] {
        [self.lo as u64, (self.lo >> 64) as u64, u64::from(self.hi)]
    }

    pub(crate) fn from_limbs(limbs: [u64; 3]) -> Self {
        Fixed129 {
            hi: limbs[2] & 1 == 1,
            lo: u128::from(limbs[0]) | (u128::from(limbs[1]) << 64),
        }
    }

    /// Exactly 33 hex digits, most significant first.
    pub fn to_hex(self) -> String {
        format!("{}{:032x}", u8::from(self.hi), self.lo)
    }

    /// Parses up to 33 hex digits into a raw value `< 2^129`.
    pub fn from_hex(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if s.is_empty() || s.len() > HEX_DIGITS || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Fixed129Parse(format!("expected 1..=33 hex digits, got {s:?}")));
        }
        let (head, tail) = if s.len() > 32 { s.split_at(s.len() - 32) } else { ("", s) };
        let lo = u128::from_str_radix(tail, 16).map_err(|e| Error::Fixed129Parse(e.to_string()))?;
        let hi = match head {
            "" | "0" => false,
            "1" => true,
            _ => return Err(Error::Fixed129Overflow),
        };
        Ok(Fixed129 { hi, lo })
    }

    /// Parses a non-negative decimal such as `0.251`, rounding to the
    /// nearest multiple of `2^-64` (ties away from zero).
    ///
    /// At most 19 fractional digits are accepted.
    pub fn from_decimal_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if (int_part.is_empty() && frac_part.is_empty()) || !digits_ok(int_part) || !digits_ok(frac_part) {
            return Err(Error::Fixed129Parse(format!("not a decimal number: {s:?}")));
        }
        if frac_part.len() > 19 {
            return Err(Error::Fixed129Parse("more than 19 fractional digits".into()));
        }
        let int: u128 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| Error::Fixed129Overflow)?
        };
        if int >> 65 != 0 {
            return Err(Error::Fixed129Overflow);
        }
        let mut frac_raw: u128 = 0;
        let mut carry = 0u128;
        if !frac_part.is_empty() {
            let denom = 10u128.pow(frac_part.len() as u32);
            let num: u128 = frac_part.parse().expect("validated digits");
            // num < 10^19 < 2^64, so num * 2^64 fits in u128.
            let scaled = (num << 64) + denom / 2;
            let q = scaled / denom;
            carry = q >> 64;
            frac_raw = q & u128::from(u64::MAX);
        }
        let int = int + carry;
        if int >> 65 != 0 {
            return Err(Error::Fixed129Overflow);
        }
        Ok(Fixed129 {
            hi: (int >> 64) & 1 == 1,
            lo: ((int & u128::from(u64::MAX)) << 64) | frac_raw,
        })
    }

    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        Fixed129 {
            hi: rng.random(),
            lo: rng.random(),
        }
    }
}

impl fmt::Display for Fixed129 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
