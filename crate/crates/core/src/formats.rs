//! File formats: plain-text key files, binary equivalent-key files and
//! binary PGM (P5) images.
//!
//! Key file, one `name=value` per line, `#` comments and blank lines ignored:
//!
//! ```text
//! alpha1=2
//! beta1=5
//! alpha2=3
//! beta2=4
//! secret=20
//! x0=00000000000000000404189374bc6a7f0
//! ```
//!
//! `x0` is the raw 129-bit integer as 33 hex digits; a value containing a
//! `.` is read as a decimal fraction and rounded to 64 fractional bits.
//!
//! Equivalent-key file: magic `MCSE`, version byte `1`, `u32` block count
//! (little-endian), then per block a `u16` section length (always
//! [`EQKEY_SECTION_LEN`]) followed by `l` (`0xFF` for none), the `u16`
//! candidate mask, swap bits, probe row, both permutations, 16 mask bytes,
//! 16 horizontal amounts, 16 vertical amounts, the `u16` unknown-row mask
//! and a flag byte (bit 0: `l` was ambiguous).

use thiserror::Error;

use crate::attack::{BlockKey, EquivalentKey};
use crate::{Fixed129, SecretKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("key file line {line}: {msg}")]
    KeyFile { line: usize, msg: String },
    #[error("key file: {0}")]
    KeyFileMissing(String),
    #[error("equivalent-key file: {0}")]
    EqKey(String),
    #[error("PGM: {0}")]
    Pgm(String),
}

// ---------------------------------------------------------------------------
// Key file
// ---------------------------------------------------------------------------

const KEY_FIELDS: [&str; 6] = ["alpha1", "beta1", "alpha2", "beta2", "secret", "x0"];

pub fn emit_key_file(key: &SecretKey) -> String {
    format!(
        "alpha1={}\nbeta1={}\nalpha2={}\nbeta2={}\nsecret={}\nx0={}\n",
        key.alpha1,
        key.beta1,
        key.alpha2,
        key.beta2,
        key.secret,
        key.x0.to_hex()
    )
}

pub fn parse_key_file(text: &str) -> Result<SecretKey, FormatError> {
    let mut small: [Option<u8>; 5] = [None; 5];
    let mut x0: Option<Fixed129> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| FormatError::KeyFile { line: n + 1, msg };
        let (name, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected name=value, got {line:?}")))?;
        let (name, value) = (name.trim(), value.trim());
        let pos = KEY_FIELDS
            .iter()
            .position(|f| *f == name)
            .ok_or_else(|| err(format!("unknown field {name:?}")))?;
        if pos == 5 {
            if x0.is_some() {
                return Err(err("duplicate x0".into()));
            }
            let v = if value.contains('.') {
                Fixed129::from_decimal_str(value)
            } else {
                Fixed129::from_hex(value)
            };
            x0 = Some(v.map_err(|e| err(e.to_string()))?);
        } else {
            if small[pos].is_some() {
                return Err(err(format!("duplicate {name}")));
            }
            small[pos] = Some(value.parse().map_err(|_| err(format!("{name}: not a byte: {value:?}")))?);
        }
    }
    let get = |i: usize| small[i].ok_or_else(|| FormatError::KeyFileMissing(format!("missing {}", KEY_FIELDS[i])));
    let x0 = x0.ok_or_else(|| FormatError::KeyFileMissing("missing x0".into()))?;
    SecretKey::new(get(0)?, get(1)?, get(2)?, get(3)?, get(4)?, x0)
        .map_err(|e| FormatError::KeyFileMissing(e.to_string()))
}

// ---------------------------------------------------------------------------
// Equivalent-key file
// ---------------------------------------------------------------------------

pub const EQKEY_MAGIC: &[u8; 4] = b"MCSE";
pub const EQKEY_VERSION: u8 = 1;
/// Bytes following each block's length prefix.
pub const EQKEY_SECTION_LEN: u16 = 72;

pub fn write_equivalent_key(ek: &EquivalentKey) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + ek.num_blocks() * (2 + usize::from(EQKEY_SECTION_LEN)));
    out.extend_from_slice(EQKEY_MAGIC);
    out.push(EQKEY_VERSION);
    out.extend_from_slice(&(ek.num_blocks() as u32).to_le_bytes());
    for bk in &ek.blocks {
        out.extend_from_slice(&EQKEY_SECTION_LEN.to_le_bytes());
        out.push(bk.l.unwrap_or(0xFF));
        out.extend_from_slice(&bk.l_candidates.to_le_bytes());
        out.push(bk.swap_bits);
        out.push(bk.probe_row);
        out.extend_from_slice(&bk.perm[0]);
        out.extend_from_slice(&bk.perm[1]);
        out.extend_from_slice(&bk.seed);
        out.extend_from_slice(&bk.rot_x);
        out.extend_from_slice(&bk.rot_y);
        out.extend_from_slice(&bk.unknown_rows.to_le_bytes());
        out.push(u8::from(bk.l_was_ambiguous()));
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| FormatError::EqKey(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn arr<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

fn is_permutation(p: &[u8; 8]) -> bool {
    let mut seen = 0u8;
    for &v in p {
        if v >= 8 {
            return false;
        }
        seen |= 1 << v;
    }
    seen == 0xFF
}

pub fn read_equivalent_key(data: &[u8]) -> Result<EquivalentKey, FormatError> {
    let bad = |m: String| FormatError::EqKey(m);
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != EQKEY_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u8()?;
    if version != EQKEY_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(r.arr::<4>()?) as usize;
    let needed = count.checked_mul(2 + usize::from(EQKEY_SECTION_LEN));
    if needed != Some(data.len() - r.pos) {
        return Err(bad(format!("{count} blocks do not match {} payload bytes", data.len() - r.pos)));
    }
    let mut blocks = Vec::with_capacity(count);
    for k in 0..count {
        let len = r.u16()?;
        if len != EQKEY_SECTION_LEN {
            return Err(bad(format!("block {k}: section length {len}")));
        }
        let l = match r.u8()? {
            0xFF => None,
            v if v < 16 => Some(v),
            v => return Err(bad(format!("block {k}: l = {v}"))),
        };
        let l_candidates = r.u16()?;
        let swap_bits = r.u8()?;
        let probe_row = r.u8()?;
        let perm = [r.arr::<8>()?, r.arr::<8>()?];
        let seed = r.arr::<16>()?;
        let rot_x = r.arr::<16>()?;
        let rot_y = r.arr::<16>()?;
        let unknown_rows = r.u16()?;
        let flags = r.u8()?;
        if probe_row >= 8 {
            return Err(bad(format!("block {k}: probe row {probe_row}")));
        }
        if !perm.iter().all(is_permutation) {
            return Err(bad(format!("block {k}: not a permutation")));
        }
        if rot_x.iter().chain(&rot_y).any(|&v| v >= 8) {
            return Err(bad(format!("block {k}: rotation amount out of range")));
        }
        let bk = BlockKey {
            l,
            l_candidates,
            swap_bits,
            probe_row,
            perm,
            seed,
            rot_x,
            rot_y,
            unknown_rows,
        };
        if flags != u8::from(bk.l_was_ambiguous()) {
            return Err(bad(format!("block {k}: flag byte {flags:#04x} disagrees with candidate mask")));
        }
        blocks.push(bk);
    }
    Ok(EquivalentKey { blocks })
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

/// 8-bit binary greyscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    /// Comment lines without the leading `#`.
    pub comments: Vec<String>,
    pub pixels: Vec<u8>,
}

impl PgmImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FormatError> {
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(FormatError::Pgm(format!("{width}x{height} needs {} pixels", width * height)));
        }
        Ok(PgmImage {
            width,
            height,
            comments: Vec::new(),
            pixels,
        })
    }

    /// Lays a byte stream out as `width x ceil(len / width)`, zero-padding
    /// the last row and recording the pad in a comment.
    pub fn from_stream(width: usize, data: &[u8]) -> Result<Self, FormatError> {
        if width == 0 {
            return Err(FormatError::Pgm("zero width".into()));
        }
        let height = data.len().div_ceil(width);
        let pad = height * width - data.len();
        let mut pixels = data.to_vec();
        pixels.resize(height * width, 0);
        let mut img = PgmImage::new(width, height, pixels)?;
        if pad > 0 {
            img.comments.push(format!(" pad={pad}"));
        }
        Ok(img)
    }

    /// The `pad=N` value from a comment, if any.
    pub fn recorded_pad(&self) -> Option<usize> {
        self.comments
            .iter()
            .find_map(|c| c.trim().strip_prefix("pad=").and_then(|v| v.parse().ok()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = b"P5\n".to_vec();
        for c in &self.comments {
            out.push(b'#');
            out.extend_from_slice(c.as_bytes());
            out.push(b'\n');
        }
        out.extend_from_slice(format!("{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn parse(data: &[u8]) -> Result<Self, FormatError> {
        let bad = |m: &str| FormatError::Pgm(m.into());
        if !data.starts_with(b"P5") {
            return Err(bad("missing P5 magic"));
        }
        let mut pos = 2;
        let mut comments = Vec::new();
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            // Whitespace and comments before each header number.
            loop {
                match data.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        let end = data[pos..]
                            .iter()
                            .position(|&b| b == b'\n')
                            .map(|e| pos + e)
                            .ok_or_else(|| bad("unterminated comment"))?;
                        let text = std::str::from_utf8(&data[pos + 1..end]).map_err(|_| bad("non-UTF-8 comment"))?;
                        comments.push(text.to_owned());
                        pos = end + 1;
                    }
                    Some(_) => break,
                    None => return Err(bad("truncated header")),
                }
            }
            let start = pos;
            while data.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos || pos - start > 9 {
                return Err(bad("bad header number"));
            }
            *field = std::str::from_utf8(&data[start..pos]).expect("digits").parse().expect("digits");
        }
        if fields[2] != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        if !data.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(bad("missing whitespace after maxval"));
        }
        pos += 1;
        let (width, height) = (fields[0], fields[1]);
        let pixels = &data[pos..];
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(bad("pixel count does not match header"));
        }
        Ok(PgmImage {
            width,
            height,
            comments,
            pixels: pixels.to_vec(),
        })
    }
}
