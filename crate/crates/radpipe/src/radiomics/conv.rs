//! Dense 2-D convolution with symmetric reflective padding.
//!
//! The kernel loop is outermost and the x loop innermost so each tap is a
//! contiguous scaled row accumulation; this keeps the Gabor bank within the
//! per-image extraction budget without SIMD intrinsics.

use crate::imgio::Image;

/// Pad `img` by `radius` on every side with symmetric reflection (edge
/// sample included). Returns the padded buffer and its width.
pub fn pad_reflect(img: &Image, radius: usize) -> (Vec<f32>, usize, usize) {
    let (w, h) = (img.width(), img.height());
    let pw = w + 2 * radius;
    let ph = h + 2 * radius;
    let reflect = |i: isize, n: isize| -> usize {
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return i as usize;
            }
        }
    };
    let mut out = vec![0.0f32; pw * ph];
    for py in 0..ph {
        let sy = reflect(py as isize - radius as isize, h as isize);
        let src = img.row(sy);
        let dst = &mut out[py * pw..(py + 1) * pw];
        for (px, d) in dst.iter_mut().enumerate() {
            let sx = reflect(px as isize - radius as isize, w as isize);
            *d = src[sx];
        }
    }
    (out, pw, ph)
}

/// Convolve with a square kernel of side `2 * radius + 1` under reflective
/// padding. `kernel` is row-major.
pub fn convolve2d_reflect(img: &Image, kernel: &[f32], radius: usize) -> Vec<f32> {
    let (w, h) = (img.width(), img.height());
    let side = 2 * radius + 1;
    debug_assert_eq!(kernel.len(), side * side);
    let (pad, pw, _ph) = pad_reflect(img, radius);
    let mut out = vec![0.0f32; w * h];
    // Output row outermost so it stays cache-hot across all taps; per
    // element the taps still accumulate in (ky, kx) order.
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for ky in 0..side {
            let src_row = &pad[(y + ky) * pw..(y + ky) * pw + pw];
            for kx in 0..side {
                let kv = kernel[ky * side + kx];
                if kv == 0.0 {
                    continue;
                }
                let src = &src_row[kx..kx + w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += kv * s;
                }
            }
        }
    }
    out
}

/// Convolve with the separable kernel `ky * kx` (outer product, each of
/// length `2 * radius + 1`) under the same reflective padding as
/// [`convolve2d_reflect`].
pub fn convolve_separable_reflect(
    img: &Image,
    kx: &[f32],
    ky: &[f32],
    radius: usize,
) -> Vec<f32> {
    let (w, h) = (img.width(), img.height());
    let side = 2 * radius + 1;
    debug_assert_eq!(kx.len(), side);
    debug_assert_eq!(ky.len(), side);
    let (pad, pw, ph) = pad_reflect(img, radius);
    // Horizontal pass over every padded row; reflection commutes with a
    // row-wise convolution, so this equals row-convolving first and
    // reflect-padding after.
    let mut mid = vec![0.0f32; ph * w];
    for py in 0..ph {
        let src = &pad[py * pw..(py + 1) * pw];
        let dst = &mut mid[py * w..(py + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (k, &kv) in kx.iter().enumerate() {
                acc += kv * src[x + k];
            }
            *d = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &kv) in ky.iter().enumerate() {
            let src = &mid[(y + k) * w..(y + k + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}
