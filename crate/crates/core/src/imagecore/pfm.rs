//! Portable float map codec.
//!
//! Header: `PF` (RGB) or `Pf` (grey), then width and height, then a scale
//! whose sign gives the byte order (negative = little-endian), then a
//! single whitespace byte before the raster. Rows are stored bottom-to-top.

use super::{ImageDims, ImageError, ImageF, LoadedImage};

fn malformed(msg: impl Into<String>) -> ImageError {
    ImageError::MalformedPfm(msg.into())
}

/// Splits the three header lines off `bytes`, returning the tokens and the
/// raster offset.
fn header_tokens(bytes: &[u8]) -> Result<([String; 4], usize), ImageError> {
    let mut tokens: Vec<String> = Vec::with_capacity(4);
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(malformed("truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| malformed("non-ASCII header"))?;
        tokens.push(tok.to_owned());
    }
    // exactly one whitespace byte separates the scale from the raster
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(malformed("missing separator after scale"));
    }
    let tokens: [String; 4] = tokens.try_into().expect("four tokens");
    Ok((tokens, i + 1))
}

pub(super) fn decode(bytes: &[u8]) -> Result<LoadedImage, ImageError> {
    let ([magic, w, h, scale], offset) = header_tokens(bytes)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(malformed(format!("bad magic {other:?}"))),
    };
    let width: usize = w.parse().map_err(|_| malformed(format!("bad width {w:?}")))?;
    let height: usize = h.parse().map_err(|_| malformed(format!("bad height {h:?}")))?;
    let scale: f64 = scale.parse().map_err(|_| malformed(format!("bad scale {scale:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed("scale must be finite and nonzero"));
    }
    let little_endian = scale < 0.0;
    let dims = ImageDims::new(width, height)?;
    let raster_len = dims
        .pixel_count()
        .checked_mul(channels * 4)
        .ok_or(ImageError::DimensionOverflow { width, height })?;
    let raster = &bytes[offset..];
    if raster.len() < raster_len {
        return Err(malformed(format!(
            "raster has {} bytes, expected {raster_len}",
            raster.len()
        )));
    }

    let mut data = vec![0.0f64; dims.pixel_count() * 3];
    let mut clamped = 0usize;
    for (i, chunk) in raster[..raster_len].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("4-byte chunk");
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(ImageError::NonFinite(i));
        }
        let mut v = f64::from(v);
        if v < 0.0 {
            clamped += 1;
            v = 0.0;
        }
        let pixel = i / channels;
        let (x, file_row) = (pixel % width, pixel / width);
        let y = height - 1 - file_row;
        let base = (y * width + x) * 3;
        if channels == 3 {
            data[base + i % 3] = v;
        } else {
            data[base..base + 3].fill(v);
        }
    }
    Ok(LoadedImage {
        image: ImageF::from_vec_unchecked(dims, data),
        clamped_negatives: clamped,
    })
}

/// Encodes as little-endian RGB PFM with samples narrowed to `f32`.
pub(super) fn encode(img: &ImageF) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let header = format!("PF\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + w * h * 12);
    out.extend_from_slice(header.as_bytes());
    for y in (0..h).rev() {
        let row = &img.data()[y * w * 3..(y + 1) * w * 3];
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn be_pfm(width: usize, height: usize, samples: &[f32]) -> Vec<u8> {
        let mut out = format!("PF\n{width} {height}\n1.0\n").into_bytes();
        for v in samples {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    #[test]
    fn single_pixel_identity() {
        let img = ImageF::new(1, 1, vec![0.5, 0.5, 0.5]).unwrap();
        let back = decode(&encode(&img)).unwrap();
        assert_eq!(back.image, img);
        assert_eq!(back.clamped_negatives, 0);
    }

    #[test]
    fn rows_are_bottom_to_top() {
        // 1x2 image: file stores the bottom row first
        let bytes = be_pfm(1, 2, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let img = decode(&bytes).unwrap().image;
        assert_eq!(img.pixel(0, 0), [2.0; 3]);
        assert_eq!(img.pixel(0, 1), [1.0; 3]);
        let le = encode(&img);
        let top_row_last = f32::from_le_bytes(le[le.len() - 4..].try_into().unwrap());
        assert_eq!(top_row_last, 2.0);
    }

    #[test]
    fn big_endian_and_greyscale() {
        let img = decode(&be_pfm(2, 1, &[0.25, 0.5, 0.75, 1.0, 1.25, 1.5])).unwrap().image;
        assert_eq!(img.pixel(1, 0), [1.0, 1.25, 1.5]);

        let mut grey = b"Pf\n2 1\n-1\n".to_vec();
        grey.extend_from_slice(&0.25f32.to_le_bytes());
        grey.extend_from_slice(&3.0f32.to_le_bytes());
        let img = decode(&grey).unwrap().image;
        assert_eq!(img.data(), &[0.25, 0.25, 0.25, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn negatives_are_clamped_and_counted() {
        let loaded = decode(&be_pfm(1, 1, &[-0.5, 0.5, -1.0])).unwrap();
        assert_eq!(loaded.image.data(), &[0.0, 0.5, 0.0]);
        assert_eq!(loaded.clamped_negatives, 2);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(decode(b"P6\n1 1\n255\n"), Err(ImageError::MalformedPfm(_))));
        assert!(matches!(decode(b"PF\n1 1\n"), Err(ImageError::MalformedPfm(_))));
        assert!(matches!(
            decode(b"PF\n1 1\n0\n\0\0\0\0"),
            Err(ImageError::MalformedPfm(_))
        ));
        assert!(matches!(
            decode(b"PF\n2 2\n-1\n\0\0\0\0"),
            Err(ImageError::MalformedPfm(_))
        ));
        assert!(matches!(decode(b"PF\n0 2\n-1\n"), Err(ImageError::EmptyDims { .. })));
        let huge = format!("PF\n{} {}\n-1\n", usize::MAX / 2, 4);
        assert!(matches!(
            decode(huge.as_bytes()),
            Err(ImageError::DimensionOverflow { .. })
        ));
        assert!(matches!(
            decode(&be_pfm(1, 1, &[f32::INFINITY, 0.0, 0.0])),
            Err(ImageError::NonFinite(0))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (w, h, samples) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(0.0f32..1e6, w * h * 3))
            })
        ) {
            let data: Vec<f64> = samples.iter().map(|&v| f64::from(v)).collect();
            let img = ImageF::new(w, h, data).unwrap();
            let back = decode(&encode(&img)).unwrap().image;
            prop_assert_eq!(
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
