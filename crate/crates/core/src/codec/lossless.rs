//! General-purpose lossless byte compression behind a small trait.

use std::io::{Read, Write};

use xz2::stream::{LzmaOptions, Stream};

use crate::error::{Error, Result};

pub trait LosslessCodec {
    fn compress(&self, bytes: &[u8]) -> Vec<u8>;
    fn decompress(&self, bytes: &[u8]) -> Result<Vec<u8>>;
}

/// Raw LZMA (`.lzma` "alone" container) at the given preset.
#[derive(Debug, Clone, Copy)]
pub struct Lzma {
    pub preset: u32,
}

impl Default for Lzma {
    fn default() -> Self {
        Lzma { preset: 9 }
    }
}

impl LosslessCodec for Lzma {
    fn compress(&self, bytes: &[u8]) -> Vec<u8> {
        let options = LzmaOptions::new_preset(self.preset).expect("valid LZMA preset");
        let stream = Stream::new_lzma_encoder(&options).expect("LZMA encoder");
        let mut encoder = xz2::write::XzEncoder::new_stream(Vec::new(), stream);
        encoder
            .write_all(bytes)
            .and_then(|_| encoder.finish())
            .expect("writing to a Vec cannot fail")
    }

    fn decompress(&self, bytes: &[u8]) -> Result<Vec<u8>> {
        let stream = Stream::new_lzma_decoder(u64::MAX)
            .map_err(|e| Error::decode(0, format!("LZMA decoder: {e}")))?;
        let mut decoder = xz2::read::XzDecoder::new_stream(bytes, stream);
        let mut out = Vec::new();
        decoder
            .read_to_end(&mut out)
            .map_err(|e| Error::decode(0, format!("corrupt LZMA stream: {e}")))?;
        Ok(out)
    }
}

/// Compresses with the default backend.
pub fn compress_lossless(bytes: &[u8]) -> Vec<u8> {
    Lzma::default().compress(bytes)
}

pub fn decompress_lossless(bytes: &[u8]) -> Result<Vec<u8>> {
    Lzma::default().decompress(bytes)
}
