//! 8-bit PNG decoding and encoding.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use migate_core::corrupt::ImageBuffer;
use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

fn asset(path: &Path, message: impl ToString) -> Error {
    Error::Asset {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads an 8-bit grey, grey+alpha, RGB or RGBA PNG. Palette images are
/// expanded; 16-bit images are rejected.
pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| asset(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| asset(path, e))?;
    let mut data = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut data).map_err(|e| asset(path, e))?;
    if info.bit_depth != BitDepth::Eight {
        return Err(asset(
            path,
            format!("only 8-bit images are supported, found {:?}", info.bit_depth),
        ));
    }
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let row = w * channels;
    let mut packed = Vec::with_capacity(h * row);
    for y in 0..h {
        packed.extend_from_slice(&data[y * info.line_size..y * info.line_size + row]);
    }
    Ok(ImageBuffer::new(h, w, channels, packed)?)
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let color = match img.channels {
        1 => ColorType::Grayscale,
        2 => ColorType::GrayscaleAlpha,
        3 => ColorType::Rgb,
        4 => ColorType::Rgba,
        c => return Err(asset(path, format!("cannot encode {c} channels"))),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(color);
    encoder.set_depth(BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| asset(path, e))?;
    writer.write_image_data(&img.data).map_err(|e| asset(path, e))?;
    writer.finish().map_err(|e| asset(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let data = (0..5 * 7 * 3).map(|i| (i * 11 % 256) as u8).collect();
        let img = ImageBuffer::new(5, 7, 3, data).unwrap();
        write_png(&path, &img).unwrap();
        assert_eq!(read_png(&path).unwrap(), img);
    }

    #[test]
    fn garbage_is_an_asset_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png").unwrap();
        let e = read_png(&path).unwrap_err();
        assert_eq!(e.exit_code(), 5);
    }
}
