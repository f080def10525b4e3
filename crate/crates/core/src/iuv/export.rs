use std::path::Path;

use image::{ImageFormat, RgbImage};

use super::map::IuvMap;
use crate::error::{Error, Result};

/// 8-bit RGB encoding: `R = I * 255`, `G = U * 255`, `B = V * 255`, rounded.
pub fn quantize_iuv(m: &IuvMap) -> Vec<u8> {
    let hw = m.height * m.width;
    let q = |x: f32| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    (0..hw)
        .flat_map(|k| [q(m.data[k]), q(m.data[hw + k]), q(m.data[2 * hw + k])])
        .collect()
}

pub fn export_iuv_image(m: &IuvMap, path: &Path) -> Result<()> {
    m.validate()?;
    let img = RgbImage::from_raw(m.width as u32, m.height as u32, quantize_iuv(m))
        .ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {}", path.display(), e)))
}

/// Reads an RGB image back as `(height, width, rgb bytes)`.
pub fn read_iuv_image(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {}", path.display(), e)))?
        .to_rgb8();
    Ok((img.height() as usize, img.width() as usize, img.into_raw()))
}
