//! Length-prefixed, field-ordered binary encoding.
//!
//! Integers are big-endian and fixed width, collections carry a `u32` count,
//! strings and byte strings a `u32` length. An `Option` of a fixed-width
//! value is always `1 + width` bytes, so the presence of an optional deadline
//! or time limit never changes the size of the record around it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{Nonce, PublicKey, Signature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("invalid tag {tag} for {ty} at offset {offset}")]
    BadTag {
        ty: &'static str,
        tag: u8,
        offset: usize,
    },
    #[error("invalid utf-8 string at offset {0}")]
    Utf8(usize),
    #[error("{0} trailing bytes after record")]
    Trailing(usize),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_domain(domain: &[u8]) -> Self {
        let mut enc = Self::new();
        enc.bytes(domain);
        enc
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn fixed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection longer than u32::MAX"));
    }

    pub fn bytes(&mut self, bytes: &[u8]) {
        self.len(bytes.len());
        self.fixed(bytes);
    }

    pub fn string(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn string_map(&mut self, map: &BTreeMap<String, String>) {
        self.len(map.len());
        for (k, v) in map {
            self.string(k);
            self.string(v);
        }
    }

    pub fn put<T: Canonical>(&mut self, value: &T) {
        value.encode_into(self);
    }

    pub fn list<T: Canonical>(&mut self, items: &[T]) {
        self.len(items.len());
        for item in items {
            item.encode_into(self);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.input.len());
        let end = end.ok_or(DecodeError::Truncated(self.pos))?;
        let out = &self.input[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(self.bad_tag("bool", tag)),
        }
    }

    pub fn length(&mut self) -> Result<usize, DecodeError> {
        Ok(self.u32()? as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.length()?;
        self.take(n)
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let at = self.pos;
        let raw = self.bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::Utf8(at))
    }

    pub fn string_map(&mut self) -> Result<BTreeMap<String, String>, DecodeError> {
        let n = self.length()?;
        let mut map = BTreeMap::new();
        for _ in 0..n {
            let k = self.string()?;
            let v = self.string()?;
            map.insert(k, v);
        }
        Ok(map)
    }

    pub fn get<T: Canonical>(&mut self) -> Result<T, DecodeError> {
        T::decode_from(self)
    }

    pub fn list<T: Canonical>(&mut self) -> Result<Vec<T>, DecodeError> {
        let n = self.length()?;
        // cap the preallocation; the count is untrusted
        let mut out = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            out.push(T::decode_from(self)?);
        }
        Ok(out)
    }

    pub fn bad_tag(&self, ty: &'static str, tag: u8) -> DecodeError {
        DecodeError::BadTag {
            ty,
            tag,
            offset: self.pos.saturating_sub(1),
        }
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.input.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

pub trait Canonical: Sized {
    /// Set for values that always encode to the same number of bytes.
    const FIXED_WIDTH: Option<usize> = None;

    fn encode_into(&self, enc: &mut Encoder);
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;
}

pub fn canonical_encode<T: Canonical>(value: &T) -> Vec<u8> {
    let mut enc = Encoder::new();
    value.encode_into(&mut enc);
    enc.finish()
}

pub fn canonical_decode<T: Canonical>(bytes: &[u8]) -> Result<T, DecodeError> {
    let mut dec = Decoder::new(bytes);
    let value = T::decode_from(&mut dec)?;
    dec.finish()?;
    Ok(value)
}

impl Canonical for u64 {
    const FIXED_WIDTH: Option<usize> = Some(8);

    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.u64()
    }
}

impl Canonical for String {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.string(self);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.string()
    }
}

impl Canonical for BTreeMap<String, String> {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.string_map(self);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.string_map()
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.list(self);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.list()
    }
}

impl<T: Canonical> Canonical for Option<T> {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            None => {
                enc.u8(0);
                if let Some(width) = T::FIXED_WIDTH {
                    enc.fixed(&vec![0; width]);
                }
            }
            Some(v) => {
                enc.u8(1);
                v.encode_into(enc);
            }
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => {
                if let Some(width) = T::FIXED_WIDTH {
                    if dec.take(width)?.iter().any(|&b| b != 0) {
                        return Err(DecodeError::Invalid(
                            "non-zero padding in empty option".into(),
                        ));
                    }
                }
                Ok(None)
            }
            1 => Ok(Some(T::decode_from(dec)?)),
            tag => Err(dec.bad_tag("option", tag)),
        }
    }
}

macro_rules! fixed_bytes {
    ($ty:ident, $len:expr) => {
        impl Canonical for $ty {
            const FIXED_WIDTH: Option<usize> = Some($len);

            fn encode_into(&self, enc: &mut Encoder) {
                enc.fixed(&self.0);
            }

            fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
                Ok($ty(dec.take($len)?.try_into().unwrap()))
            }
        }
    };
}

fixed_bytes!(PublicKey, 32);
fixed_bytes!(Signature, 64);
fixed_bytes!(Nonce, 16);

/// Implements `Canonical` for a fieldless enum as a single tag byte.
macro_rules! tag_enum {
    ($ty:ty, $name:literal, [$($variant:path = $tag:literal),+ $(,)?]) => {
        impl $crate::model::encoding::Canonical for $ty {
            const FIXED_WIDTH: Option<usize> = Some(1);

            fn encode_into(&self, enc: &mut $crate::model::encoding::Encoder) {
                enc.u8(match self { $($variant => $tag),+ });
            }

            fn decode_from(
                dec: &mut $crate::model::encoding::Decoder<'_>,
            ) -> Result<Self, $crate::model::encoding::DecodeError> {
                match dec.u8()? {
                    $($tag => Ok($variant),)+
                    tag => Err(dec.bad_tag($name, tag)),
                }
            }
        }
    };
}
pub(crate) use tag_enum;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_of_fixed_width_is_constant_size() {
        assert_eq!(
            canonical_encode(&Some(7u64)).len(),
            canonical_encode(&None::<u64>).len()
        );
        assert_eq!(
            canonical_decode::<Option<u64>>(&canonical_encode(&None::<u64>)),
            Ok(None)
        );
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let bytes = canonical_encode(&vec![1u64, 2, 3]);
        assert!(matches!(
            canonical_decode::<Vec<u64>>(&bytes[..bytes.len() - 1]),
            Err(DecodeError::Truncated(_))
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(
            canonical_decode::<Vec<u64>>(&longer),
            Err(DecodeError::Trailing(1))
        );
    }

    #[test]
    fn huge_count_does_not_allocate() {
        let mut enc = Encoder::new();
        enc.u32(u32::MAX);
        assert!(canonical_decode::<Vec<u64>>(&enc.finish()).is_err());
    }
}
