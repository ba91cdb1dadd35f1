//! Deterministic PNG encoding (fixed filter and compression level).

use std::io::Cursor;

use super::{RasterImage, SceneError};

pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>, SceneError> {
    let err = |e: png::EncodingError| SceneError::Png(e.to_string());
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Sub);
        let mut w = enc.write_header().map_err(err)?;
        w.write_image_data(&img.rgba).map_err(err)?;
        w.finish().map_err(err)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, SceneError> {
    let err = |e: png::DecodingError| SceneError::Png(e.to_string());
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(err)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| SceneError::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
        return Err(SceneError::Png(format!("expected RGBA8, got {:?}/{:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok(RasterImage { width: info.width, height: info.height, rgba: buf })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker() -> RasterImage {
        let mut img = RasterImage::new(13, 7, [0, 0, 0, 255]);
        for (i, px) in img.rgba.chunks_mut(4).enumerate() {
            px.copy_from_slice(&[(i * 37) as u8, (i * 11) as u8, (i * 3) as u8, if i % 5 == 0 { 0 } else { 255 }]);
        }
        img
    }

    #[test]
    fn signature_roundtrip_determinism() {
        let img = checker();
        let a = encode_png(&img).unwrap();
        assert_eq!(&a[..8], &[137, 80, 78, 71, 13, 10, 26, 10]);
        assert_eq!(decode_png(&a).unwrap(), img);
        assert_eq!(a, encode_png(&img).unwrap());
    }
}
