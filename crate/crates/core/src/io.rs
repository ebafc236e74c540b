//! Image and annotation file I/O. On-disk format is 8-bit grayscale PNG
//! (PGM also accepted on read); intensities are normalized into `[0, 1]`
//! in memory.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{ClassId, LabelMaskSet, Mask};
use crate::scalar::Scalar;

fn decode_luma8(path: &Path) -> Result<image::GrayImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let format = reader.format();
    if !matches!(format, Some(ImageFormat::Png) | Some(ImageFormat::Pnm)) {
        return Err(Error::BadImage {
            path: path.into(),
            reason: format!("unsupported format {format:?}, expected PNG or PGM"),
        });
    }
    let img = reader.decode().map_err(|e| Error::BadImage {
        path: path.into(),
        reason: e.to_string(),
    })?;
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(buf),
        other => Err(Error::BadImage {
            path: path.into(),
            reason: format!(
                "expected 8-bit grayscale, got {:?}",
                other.color()
            ),
        }),
    }
}

/// Load an 8-bit grayscale PNG or PGM, intensities divided by 255.
pub fn load_image<S: Scalar>(path: impl AsRef<Path>) -> Result<Image<S>> {
    let buf = decode_luma8(path.as_ref())?;
    Image::from_bytes(buf.width(), buf.height(), buf.as_raw())
}

/// Write as 8-bit grayscale PNG; intensity `i` becomes `round(i * 255)`
/// with round-half-up, clamped to `[0, 255]`.
pub fn save_image<S: Scalar>(img: &Image<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(img.width(), img.height(), img.to_bytes())
        .expect("byte buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::BadImage {
            path: path.into(),
            reason: e.to_string(),
        })
}

/// Load a binary mask: any nonzero pixel is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let buf = decode_luma8(path.as_ref())?;
    Mask::from_vec(
        buf.width(),
        buf.height(),
        buf.as_raw().iter().map(|&b| b != 0).collect(),
    )
}

/// Write a binary mask as a 0/255 grayscale PNG.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .map(|(x, y)| if mask.get(x, y) { 255 } else { 0 })
        .collect();
    let buf = image::GrayImage::from_raw(mask.width(), mask.height(), bytes)
        .expect("byte buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::BadImage {
            path: path.into(),
            reason: e.to_string(),
        })
}

/// Load a label set from four per-class binary PNGs, in `ClassId` order.
pub fn load_masks_per_class(paths: [&Path; 4]) -> Result<LabelMaskSet> {
    let masks = [
        load_mask(paths[0])?,
        load_mask(paths[1])?,
        load_mask(paths[2])?,
        load_mask(paths[3])?,
    ];
    LabelMaskSet::from_masks(masks)
}

/// Load a label set from one bit-packed 8-bit PNG: bit `k` of each pixel
/// encodes membership in class `k`.
pub fn load_masks_packed(path: impl AsRef<Path>) -> Result<LabelMaskSet> {
    let buf = decode_luma8(path.as_ref())?;
    let (w, h) = (buf.width(), buf.height());
    let mut set = LabelMaskSet::empty(w, h);
    for class in ClassId::ALL {
        let bit = 1u8 << class.index();
        let data = buf.as_raw().iter().map(|&b| b & bit != 0).collect();
        *set.mask_mut(class) = Mask::from_vec(w, h, data)?;
    }
    Ok(set)
}

/// Write a label set as one bit-packed 8-bit PNG.
pub fn save_masks_packed(set: &LabelMaskSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (set.width(), set.height());
    let mut bytes = vec![0u8; (w as usize) * (h as usize)];
    for class in ClassId::ALL {
        let bit = 1u8 << class.index();
        for (x, y) in set.mask(class).foreground() {
            bytes[y as usize * w as usize + x as usize] |= bit;
        }
    }
    let buf = image::GrayImage::from_raw(w, h, bytes).expect("buffer sized to raster");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::BadImage {
            path: path.into(),
            reason: e.to_string(),
        })
}
