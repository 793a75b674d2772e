//! PNG and binary PGM (P5) loading and saving.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use super::PixelGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Png,
    Pgm,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => Ok(Format::Png),
            Some("pgm") | Some("pnm") => Ok(Format::Pgm),
            other => Err(Error::Unsupported(format!(
                "unknown image extension {:?}, expected .png or .pgm",
                other.unwrap_or("")
            ))),
        }
    }
}

fn planes_from_dynamic(img: DynamicImage) -> Result<Vec<PixelGrid>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(vec![PixelGrid::new(w, h, buf.into_raw())?]),
        DynamicImage::ImageRgb8(buf) => {
            let raw = buf.into_raw();
            (0..3)
                .map(|ch| PixelGrid::new(w, h, raw.iter().skip(ch).step_by(3).copied().collect()))
                .collect()
        }
        other => Err(Error::Unsupported(format!(
            "{:?} images are not supported, use 8-bit grayscale or RGB",
            other.color()
        ))),
    }
}

/// Decodes PNG or PGM bytes into one plane (grayscale) or three (RGB).
pub fn decode_planes(bytes: &[u8]) -> Result<Vec<PixelGrid>> {
    let img = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .decode()?;
    planes_from_dynamic(img)
}

pub fn load_planes(path: impl AsRef<Path>) -> Result<Vec<PixelGrid>> {
    let bytes = std::fs::read(path)?;
    decode_planes(&bytes)
}

/// Loads an 8-bit grayscale PNG or PGM.
pub fn load_gray(path: impl AsRef<Path>) -> Result<PixelGrid> {
    let path = path.as_ref();
    let mut planes = load_planes(path)?;
    if planes.len() != 1 {
        return Err(Error::Unsupported(format!(
            "{} is not a grayscale image",
            path.display()
        )));
    }
    Ok(planes.remove(0))
}

pub fn encode(grid: &PixelGrid, format: Format) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let (w, h) = (grid.width() as u32, grid.height() as u32);
    match format {
        Format::Png => {
            PngEncoder::new(&mut out).write_image(grid.pixels(), w, h, ExtendedColorType::L8)?
        }
        Format::Pgm => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(grid.pixels(), w, h, ExtendedColorType::L8)?,
    }
    Ok(out)
}

/// Saves as PNG or PGM depending on the file extension.
pub fn save(grid: &PixelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(grid, Format::from_path(path)?)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PixelGrid {
        PixelGrid::from_fn(17, 11, |r, c| (r * 31 + c * 7) as u8)
    }

    #[test]
    fn png_round_trip() {
        let g = sample();
        let bytes = encode(&g, Format::Png).unwrap();
        assert_eq!(decode_planes(&bytes).unwrap(), vec![g]);
    }

    #[test]
    fn pgm_is_binary_p5() {
        let g = sample();
        let bytes = encode(&g, Format::Pgm).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(&bytes[bytes.len() - g.pixels().len()..], g.pixels());
        assert_eq!(decode_planes(&bytes).unwrap(), vec![g]);
    }

    #[test]
    fn rgb_splits_into_planes() {
        let mut out = Vec::new();
        let raw: Vec<u8> = (0..4 * 3 * 3).map(|i| i as u8).collect();
        PngEncoder::new(&mut out)
            .write_image(&raw, 4, 3, ExtendedColorType::Rgb8)
            .unwrap();
        let planes = decode_planes(&out).unwrap();
        assert_eq!(planes.len(), 3);
        assert_eq!(planes[1].pixels(), &[1, 4, 7, 10, 13, 16, 19, 22, 25, 28, 31, 34]);
    }

    #[test]
    fn sixteen_bit_rejected() {
        let mut out = Vec::new();
        PngEncoder::new(&mut out)
            .write_image(&[0u8; 18], 3, 3, ExtendedColorType::L16)
            .unwrap();
        assert!(matches!(decode_planes(&out), Err(Error::Unsupported(_))));
    }

    #[test]
    fn extension_dispatch() {
        assert_eq!(Format::from_path(Path::new("a/b.PNG")).unwrap(), Format::Png);
        assert_eq!(Format::from_path(Path::new("x.pgm")).unwrap(), Format::Pgm);
        assert!(Format::from_path(Path::new("x.jpg")).is_err());
    }
}
