use rand::Rng;

use crate::error::Error;
use crate::fixed::Fixed129;

/// The 21 legal `(alpha, beta)` rotation sub-key pairs: `1 <= alpha`,
/// `1 <= beta`, `alpha + beta <= 7`.
pub const LEGAL_ROTATION_PAIRS: [(u8, u8); 21] = {
    let mut out = [(0u8, 0u8); 21];
    let mut n = 0;
    let mut a = 1;
    while a <= 6 {
        let mut b = 1;
        while a + b <= 7 {
            out[n] = (a, b);
            n += 1;
            b += 1;
        }
        a += 1;
    }
    out
};

/// MCS secret key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretKey {
    pub alpha1: u8,
    pub beta1: u8,
    pub alpha2: u8,
    pub beta2: u8,
    /// Initial `temp`; it never affects decryption.
    pub secret: u8,
    pub x0: Fixed129,
}

pub fn is_legal_pair(alpha: u8, beta: u8) -> bool {
    alpha >= 1 && beta >= 1 && u16::from(alpha) + u16::from(beta) <= 7
}

impl SecretKey {
    pub fn new(alpha1: u8, beta1: u8, alpha2: u8, beta2: u8, secret: u8, x0: Fixed129) -> Result<Self, Error> {
        let key = SecretKey {
            alpha1,
            beta1,
            alpha2,
            beta2,
            secret,
            x0,
        };
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !is_legal_pair(self.alpha1, self.beta1) {
            return Err(Error::InvalidKey(format!(
                "need 1 <= alpha1 < alpha1 + beta1 <= 7, got ({}, {})",
                self.alpha1, self.beta1
            )));
        }
        if !is_legal_pair(self.alpha2, self.beta2) {
            return Err(Error::InvalidKey(format!(
                "need 1 <= alpha2 < alpha2 + beta2 <= 7, got ({}, {})",
                self.alpha2, self.beta2
            )));
        }
        Ok(())
    }

    /// Rotation parameters `(alpha, beta)` of half-block `half` (0 or 1).
    pub fn rotation_pair(&self, half: usize) -> (u8, u8) {
        if half == 0 {
            (self.alpha1, self.beta1)
        } else {
            (self.alpha2, self.beta2)
        }
    }

    /// Uniform over the 21 legal pairs per half, uniform `secret` and `x0`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (alpha1, beta1) = LEGAL_ROTATION_PAIRS[rng.random_range(0..21)];
        let (alpha2, beta2) = LEGAL_ROTATION_PAIRS[rng.random_range(0..21)];
        SecretKey {
            alpha1,
            beta1,
            alpha2,
            beta2,
            secret: rng.random(),
            x0: Fixed129::random(rng),
        }
    }

    /// The experimental key `alpha1=2, beta1=5, alpha2=3, beta2=4,
    /// secret=20, x0=0.251`.
    pub fn reference() -> Self {
        SecretKey {
            alpha1: 2,
            beta1: 5,
            alpha2: 3,
            beta2: 4,
            secret: 20,
            x0: Fixed129::from_decimal_str("0.251").expect("constant"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legal_pairs() {
        assert_eq!(LEGAL_ROTATION_PAIRS.len(), 21);
        assert!(LEGAL_ROTATION_PAIRS.iter().all(|&(a, b)| is_legal_pair(a, b)));
        let mut count = 0;
        for a in 0..=8u8 {
            for b in 0..=8u8 {
                if is_legal_pair(a, b) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 21);
    }

    #[test]
    fn rejects_illegal() {
        assert!(SecretKey::new(0, 1, 1, 1, 0, Fixed129::ZERO).is_err());
        assert!(SecretKey::new(1, 0, 1, 1, 0, Fixed129::ZERO).is_err());
        assert!(SecretKey::new(4, 4, 1, 1, 0, Fixed129::ZERO).is_err());
        assert!(SecretKey::new(1, 1, 6, 2, 0, Fixed129::ZERO).is_err());
        assert!(SecretKey::new(6, 1, 1, 6, 255, Fixed129::MAX).is_ok());
        assert!(SecretKey::reference().validate().is_ok());
    }
}
