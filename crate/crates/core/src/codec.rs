//! 8-bit PNG and binary PNM (P5/P6) interchange.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Png8,
    /// Binary PGM (P5) for one channel, PPM (P6) for three.
    Ppm,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to PNG.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("ppm" | "pgm" | "pnm") => Format::Ppm,
            _ => Format::Png8,
        }
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Decodes an 8-bit PNG or binary PGM/PPM stream.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' {
        decode_pnm(bytes)
    } else {
        Err(Error::Decode {
            offset: 0,
            message: "unrecognized signature (expected PNG, P5 or P6)".into(),
        })
    }
}

/// Encodes with samples `round(clamp(v, 0, 1) * 255)`.
pub fn encode_image(img: &Image, format: Format) -> Result<Vec<u8>> {
    if !matches!(img.channels(), 1 | 3) {
        return Err(Error::InvalidImage(format!(
            "cannot encode {} channels",
            img.channels()
        )));
    }
    let samples = quantize(img);
    match format {
        Format::Ppm => {
            let magic = if img.channels() == 1 { "P5" } else { "P6" };
            let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend_from_slice(&samples);
            Ok(out)
        }
        Format::Png8 => encode_png(img, &samples),
    }
}

fn quantize(img: &Image) -> Vec<u8> {
    // f32::round rounds half away from zero.
    img.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn dequantize(width: usize, height: usize, channels: usize, samples: &[u8]) -> Image {
    let data = samples.iter().map(|&s| s as f32 / 255.0).collect();
    Image::from_parts_unchecked(width, height, channels, data)
}

fn encode_png(img: &Image, samples: &[u8]) -> Result<Vec<u8>> {
    let width = u32::try_from(img.width()).map_err(|_| Error::Encode("width too large".into()))?;
    let height =
        u32::try_from(img.height()).map_err(|_| Error::Encode("height too large".into()))?;
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Encode(e.to_string()))?;
        writer
            .write_image_data(samples)
            .map_err(|e| Error::Encode(e.to_string()))?;
        writer.finish().map_err(|e| Error::Encode(e.to_string()))?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let png_err = |reader_pos: u64, e: png::DecodingError| Error::Decode {
        offset: reader_pos as usize,
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(0, e))?;
    let (width, height, channels) = {
        let info = reader.info();
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Unsupported(format!(
                "PNG bit depth {:?}; only 8-bit is supported",
                info.bit_depth
            )));
        }
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::Rgb => 3,
            other => {
                return Err(Error::Unsupported(format!(
                    "PNG color type {other:?}; only grayscale and RGB are supported"
                )))
            }
        };
        (info.width as usize, info.height as usize, channels)
    };
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        offset: 0,
        message: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| png_err(bytes.len() as u64, e))?;
    let expected = width * height * channels;
    if frame.buffer_size() < expected {
        return Err(Error::Decode {
            offset: bytes.len(),
            message: "truncated PNG frame".into(),
        });
    }
    Ok(dequantize(width, height, channels, &buf[..expected]))
}

/// Cursor over a PNM header that tracks the byte offset for error reporting.
struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmHeader<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Decode {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        b'1' | b'2' | b'3' | b'4' => {
            return Err(Error::Unsupported(format!(
                "PNM variant P{}; only binary P5/P6 are supported",
                bytes[1] as char
            )))
        }
        _ => {
            return Err(Error::Decode {
                offset: 1,
                message: "unknown PNM magic".into(),
            })
        }
    };
    let mut header = PnmHeader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(header.error(format!("invalid maxval {maxval}")));
    }
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "maxval {maxval}; only 8-bit (255) samples are supported"
        )));
    }
    if width == 0 || height == 0 {
        return Err(header.error("zero image dimension"));
    }
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(header.error("missing whitespace after maxval")),
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| header.error("dimensions overflow"))?;
    let payload = &bytes[header.pos..];
    if payload.len() < needed {
        return Err(Error::Decode {
            offset: bytes.len(),
            message: format!(
                "truncated payload: {} of {needed} sample bytes present",
                payload.len()
            ),
        });
    }
    Ok(dequantize(width, height, channels, &payload[..needed]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_max_sample_is_one() {
        let img = decode_image(b"P5\n1 1\n255\n\xff").unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (1, 1, 1));
        assert_eq!(img.data(), &[1.0]);
    }

    #[test]
    fn ppm_linear_mapping() {
        let img = decode_image(b"P6 1 1 255\n\x00\x80\xff").unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn pnm_comments_are_skipped() {
        let img = decode_image(b"P5\n# made by hand\n2 1\n# max\n255\n\x00\x33").unwrap();
        assert_eq!(img.data(), &[0.0, 0.2]);
    }

    #[test]
    fn truncated_pnm_reports_offset() {
        let err = decode_image(b"P6\n2 2\n255\n\x00\x00\x00").unwrap_err();
        match err {
            Error::Decode { offset, message } => {
                assert_eq!(offset, 14);
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_offset() {
        match decode_image(b"P5\n4 x\n255\n").unwrap_err() {
            Error::Decode { offset, .. } => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sixteen_bit_pnm_is_unsupported() {
        let err = decode_image(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn unknown_signature() {
        assert!(matches!(
            decode_image(b"GIF89a").unwrap_err(),
            Error::Decode { offset: 0, .. }
        ));
    }

    fn png_bytes(color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, 1, 1);
        enc.set_color(color);
        enc.set_depth(depth);
        if color == png::ColorType::Indexed {
            enc.set_palette(vec![0u8, 0, 0]);
        }
        let mut w = enc.write_header().unwrap();
        w.write_image_data(data).unwrap();
        w.finish().unwrap();
        out
    }

    #[test]
    fn sixteen_bit_png_is_unsupported() {
        let bytes = png_bytes(png::ColorType::Grayscale, png::BitDepth::Sixteen, &[0, 0]);
        assert!(matches!(
            decode_image(&bytes).unwrap_err(),
            Error::Unsupported(_)
        ));
    }

    #[test]
    fn palette_png_is_unsupported() {
        let bytes = png_bytes(png::ColorType::Indexed, png::BitDepth::Eight, &[0]);
        assert!(matches!(
            decode_image(&bytes).unwrap_err(),
            Error::Unsupported(_)
        ));
    }

    #[test]
    fn truncated_png_is_a_decode_error() {
        let img = Image::filled(8, 8, 3, 0.5);
        let bytes = encode_image(&img, Format::Png8).unwrap();
        let err = decode_image(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }), "{err:?}");
    }

    #[test]
    fn encode_zero_image() {
        let img = Image::filled(2, 2, 1, 0.0);
        let bytes = encode_image(&img, Format::Ppm).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0, 0]);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        let img = Image::filled(1, 1, 1, 0.5);
        let bytes = encode_image(&img, Format::Ppm).unwrap();
        assert_eq!(*bytes.last().unwrap(), 128);
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let img = Image::new(3, 1, 1, vec![-0.5, 1.5, 0.2]).unwrap();
        let bytes = encode_image(&img, Format::Ppm).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 255, 51]);
    }

    #[test]
    fn rejects_two_channel_images() {
        let img = Image::filled(1, 1, 2, 0.0);
        assert!(matches!(
            encode_image(&img, Format::Png8),
            Err(Error::InvalidImage(_))
        ));
    }

    #[test]
    fn encode_is_deterministic() {
        let img = Image::from_fn(9, 7, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f32 / 10.0);
        for format in [Format::Png8, Format::Ppm] {
            assert_eq!(
                encode_image(&img, format).unwrap(),
                encode_image(&img, format).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn round_trip_within_half_quantum(
            data in proptest::collection::vec(0.0f32..=1.0, 8 * 8 * 3),
            gray in any::<bool>(),
            png in any::<bool>(),
        ) {
            let channels = if gray { 1 } else { 3 };
            let img = Image::new(8, 8, channels, data[..64 * channels].to_vec()).unwrap();
            let format = if png { Format::Png8 } else { Format::Ppm };
            let back = decode_image(&encode_image(&img, format).unwrap()).unwrap();
            prop_assert!(back.same_shape(&img));
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-7);
            }
        }
    }
}
