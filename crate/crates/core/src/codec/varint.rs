//! Unsigned LEB128 varints: 7 bits per byte, least significant group first,
//! high bit set on every byte except the last.

use crate::error::{Error, Result};

pub fn encode_varint(mut value: u64, out: &mut Vec<u8>) {
    while value >= 0x80 {
        out.push((value as u8 & 0x7f) | 0x80);
        value >>= 7;
    }
    out.push(value as u8);
}

/// Decodes one varint starting at `*pos`, advancing it.
pub fn decode_varint(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let start = *pos;
    let mut value = 0u64;
    let mut shift = 0;
    loop {
        let Some(&byte) = bytes.get(*pos) else {
            return Err(Error::decode(start, "truncated varint"));
        };
        *pos += 1;
        if shift == 63 && byte > 1 {
            return Err(Error::decode(start, "varint overflows u64"));
        }
        value |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
        if shift > 63 {
            return Err(Error::decode(start, "varint overflows u64"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encodings() {
        let mut out = Vec::new();
        encode_varint(0, &mut out);
        encode_varint(300, &mut out);
        assert_eq!(out, [0x00, 0xac, 0x02]);
    }

    #[test]
    fn truncated() {
        let mut pos = 0;
        assert!(decode_varint(&[0x80], &mut pos).is_err());
        let mut pos = 0;
        assert!(decode_varint(&[0xff; 11], &mut pos).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(v in any::<u64>()) {
            let mut out = Vec::new();
            encode_varint(v, &mut out);
            let mut pos = 0;
            prop_assert_eq!(decode_varint(&out, &mut pos).unwrap(), v);
            prop_assert_eq!(pos, out.len());
        }
    }
}
