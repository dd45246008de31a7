//! Geometric (linear) augmentation: small rotations about the image center
//! combined with integer translations, bilinear resampling, edge-replicate
//! borders.

use crate::image::ImageTensor;

pub const LINEAR_ROTATIONS: [f64; 4] = [-5.0, -3.0, 3.0, 5.0];
/// `(dx, dy)` in pixels; positive `dx` moves content right, positive `dy` down.
pub const LINEAR_SHIFTS: [(f64, f64); 7] = [
    (0.0, 0.0),
    (2.0, 0.0),
    (-2.0, 0.0),
    (0.0, 2.0),
    (0.0, -2.0),
    (4.0, 0.0),
    (-4.0, 0.0),
];

fn sample_bilinear(img: &ImageTensor, y: f64, x: f64, ch: usize) -> f32 {
    let (h, w, _) = img.dims();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = (y - y0 as f64) as f32;
    let fx = (x - x0 as f64) as f32;
    let top = img.get(y0, x0, ch) * (1.0 - fx) + img.get(y0, x1, ch) * fx;
    let bottom = img.get(y1, x0, ch) * (1.0 - fx) + img.get(y1, x1, ch) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotates by `degrees` (counter-clockwise on screen) about the center,
/// then shifts by `(dx, dy)`. Each output pixel samples the inverse-mapped
/// source position.
pub fn affine_warp(img: &ImageTensor, degrees: f64, dx: f64, dy: f64) -> ImageTensor {
    let (h, w, c) = img.dims();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (s, co) = degrees.to_radians().sin_cos();
    let mut out = ImageTensor::filled(h, w, c, 0.0);
    for r in 0..h {
        for col in 0..w {
            let u = col as f64 - dx - cx;
            let v = r as f64 - dy - cy;
            // inverse of a screen-space counter-clockwise rotation (y down)
            let sx = co * u - s * v + cx;
            let sy = s * u + co * v + cy;
            for ch in 0..c {
                out.set(r, col, ch, sample_bilinear(img, sy, sx, ch));
            }
        }
    }
    out
}

/// Every rotation paired with every shift: 4 x 7 = 28 images.
pub fn linear_augment(img: &ImageTensor) -> Vec<ImageTensor> {
    LINEAR_ROTATIONS
        .iter()
        .flat_map(|&a| LINEAR_SHIFTS.iter().map(move |&(dx, dy)| affine_warp(img, a, dx, dy)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(size: usize) -> ImageTensor {
        let mut img = ImageTensor::filled(size, size, 3, 0.0);
        let c = (size as f64 - 1.0) / 2.0;
        for r in 0..size {
            for col in 0..size {
                let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                let v = (2.0 * (-d2 / (2.0 * 10.0f64.powi(2))).exp() - 1.0) as f32;
                for ch in 0..3 {
                    img.set(r, col, ch, v);
                }
            }
        }
        img
    }

    #[test]
    fn produces_28_same_shape_images() {
        let img = blob(32);
        let out = linear_augment(&img);
        assert_eq!(out.len(), 28);
        assert!(out.iter().all(|o| o.dims() == img.dims()));
    }

    #[test]
    fn opposite_rotations_nearly_cancel() {
        let img = blob(64);
        let back = affine_warp(&affine_warp(&img, -3.0, 0.0, 0.0), 3.0, 0.0, 0.0);
        assert!(img.mean_abs_diff(&back).unwrap() < 0.02);
    }

    #[test]
    fn shift_moves_impulse_exactly() {
        let mut img = ImageTensor::filled(16, 16, 3, -1.0);
        img.set(7, 5, 0, 1.0);
        let out = affine_warp(&img, 0.0, 2.0, 0.0);
        assert_eq!(out.get(7, 7, 0), 1.0);
        assert_eq!(out.get(7, 5, 0), -1.0);
        let down = affine_warp(&img, 0.0, 0.0, -2.0);
        assert_eq!(down.get(5, 5, 0), 1.0);
    }

    #[test]
    fn zero_warp_is_identity() {
        let img = blob(16);
        assert_eq!(affine_warp(&img, 0.0, 0.0, 0.0), img);
    }
}
