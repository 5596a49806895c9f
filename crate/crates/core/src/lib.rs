//! MCS multimedia cipher and a differential chosen-plaintext attack on it.
//!
//! The cipher encrypts 15-byte plain-blocks into 16-byte cipher-blocks. Every
//! block is expanded with a running `temp` byte, byte-swapped, masked bit-plane
//! by bit-plane, and then rotated horizontally and vertically as two 8x8 bit
//! matrices. A chaotic fixed-point bit generator supplies 129 controlling bits
//! per block.
//!
//! The [`attack`] module recovers an [`attack::EquivalentKey`] from seven
//! chosen plaintexts. That key decrypts any ciphertext produced under the same
//! secret key. [`keyrecovery`] then extracts the rotation sub-keys and a large
//! share of the controlling bits from the equivalent key.
//!
//! ```
//! use mcs_core::{cipher, Fixed129, SecretKey};
//!
//! let key = SecretKey::new(2, 5, 3, 4, 20, Fixed129::from_decimal_str("0.251").unwrap()).unwrap();
//! let plain: Vec<u8> = (0..30).collect();
//! let ct = cipher::encrypt(&plain, &key).unwrap();
//! assert_eq!(ct.len(), 32);
//! assert_eq!(cipher::decrypt(&ct, &key).unwrap(), plain);
//! ```

pub mod attack;
pub mod bits;
pub mod cipher;
mod error;
mod fixed;
pub mod formats;
mod key;
pub mod keyrecovery;
pub mod prbg;
pub mod stats;

pub use bits::{BitMatrix8, Differential, ExpandedBlock16, PlainBlock15};
pub use error::Error;
pub use fixed::{Fixed129, HEX_DIGITS};
pub use key::{is_legal_pair, SecretKey, LEGAL_ROTATION_PAIRS};

/// Bytes per plain-block.
pub const PLAIN_BLOCK: usize = 15;
/// Bytes per expanded (and cipher) block.
pub const CIPHER_BLOCK: usize = 16;
/// Controlling bits consumed per block.
pub const BITS_PER_BLOCK: usize = 129;
