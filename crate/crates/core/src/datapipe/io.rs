//! 8-bit RGB PNG reading and writing.

use std::path::Path;

use image::RgbImage;

use crate::error::{shape_err, Error, Result};
use crate::image::{denormalize_image, normalize_image, ImageTensor, RawImage};

pub fn read_png(path: &Path, size: usize) -> Result<ImageTensor> {
    let img = image::open(path)
        .map_err(|e| Error::ImageFile {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let raw = RawImage::new(h as usize, w as usize, 3, img.into_raw())?;
    normalize_image(&raw, size).map_err(|e| Error::ImageFile {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_png(path: &Path, img: &ImageTensor) -> Result<()> {
    if img.channels() != 3 {
        return Err(shape_err("png image channels", 3, img.channels()));
    }
    let raw = denormalize_image(img);
    let buf = RgbImage::from_raw(raw.width as u32, raw.height as u32, raw.data)
        .expect("buffer length matches dimensions");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    buf.save(path).map_err(|e| Error::ImageFile {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Lays equally sized images out left to right.
pub fn filmstrip(images: &[ImageTensor]) -> Result<ImageTensor> {
    let Some(first) = images.first() else {
        return Err(shape_err("filmstrip", "at least one frame", 0));
    };
    let (h, w, c) = first.dims();
    let mut out = ImageTensor::filled(h, w * images.len(), c, 0.0);
    for (k, img) in images.iter().enumerate() {
        if img.dims() != (h, w, c) {
            return Err(shape_err("filmstrip frame", format!("{h}x{w}x{c}"), format!("{:?}", img.dims())));
        }
        for r in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    out.set(r, k * w + col, ch, img.get(r, col, ch));
                }
            }
        }
    }
    Ok(out)
}
