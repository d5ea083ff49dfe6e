//! Binary export of packed codes.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes   "HSGC"
//! version    u16       1
//! N, M, K    u64 x 3   users, items, code width in bits
//! codes      (N + M) * ceil(K / 64) u64 words, users first, row-major;
//!            bit b of a row is bit (b % 64) of word (b / 64), 1 = +1, 0 = -1,
//!            pad bits zero
//! ids        N user ids then M item ids, each a u32 byte length followed
//!            by that many bytes of UTF-8
//! ```

use std::path::Path;

use super::codes::{words_for, PackedCodes};
use crate::corpus::{IdMap, IdMaps};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HSGC";
pub const VERSION: u16 = 1;

/// Packed codes for every user and item plus the id tables needed to
/// translate dense indices back to external ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeFile {
    pub num_users: usize,
    pub num_items: usize,
    pub codes: PackedCodes,
    pub ids: IdMaps,
}

impl CodeFile {
    pub fn new(num_users: usize, codes: PackedCodes, ids: IdMaps) -> Result<Self> {
        let num_items = codes.rows().checked_sub(num_users).ok_or_else(|| {
            Error::ShapeMismatch(format!("{num_users} users but {} rows", codes.rows()))
        })?;
        if ids.users.len() != num_users || ids.items.len() != num_items {
            return Err(Error::ShapeMismatch(format!(
                "id maps cover {} users and {} items, codes {num_users} and {num_items}",
                ids.users.len(),
                ids.items.len()
            )));
        }
        Ok(Self {
            num_users,
            num_items,
            codes,
            ids,
        })
    }

    pub fn width(&self) -> usize {
        self.codes.width()
    }

    pub fn user_code(&self, user: u32) -> &[u64] {
        self.codes.row(user as usize)
    }

    pub fn item_view(&self) -> super::PackedView<'_> {
        self.codes.slice(self.num_users..self.codes.rows())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(30 + self.codes.words().len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.num_users, self.num_items, self.codes.width()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for w in self.codes.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for id in self.ids.users.externals().iter().chain(self.ids.items.externals()) {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing HSGC magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = r.u64()? as usize;
        let m = r.u64()? as usize;
        let k = r.u64()? as usize;
        let words = n
            .checked_add(m)
            .and_then(|rows| rows.checked_mul(words_for(k)))
            .filter(|&w| w.saturating_mul(8) <= bytes.len())
            .ok_or_else(|| Error::Format("code block larger than file".into()))?;
        let mut bits = Vec::with_capacity(words);
        for _ in 0..words {
            bits.push(r.u64()?);
        }
        let codes = PackedCodes::from_words(n + m, k, bits)?;
        let mut read_ids = |count: usize| -> Result<IdMap> {
            let mut v = Vec::with_capacity(count.min(bytes.len()));
            for _ in 0..count {
                let len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
                let s = std::str::from_utf8(r.take(len)?)
                    .map_err(|e| Error::Format(format!("id is not UTF-8: {e}")))?;
                v.push(s.to_owned());
            }
            IdMap::from_external(v)
        };
        let users = read_ids(n)?;
        let items = read_ids(m)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Self::new(n, codes, IdMaps { users, items })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
