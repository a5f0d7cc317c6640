//! Bicubic convolution resampling with the `a = -0.5` kernel.

use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Interpolation weight at signed distance `s`.
pub fn bicubic_kernel(s: f64) -> f64 {
    let t = s.abs();
    if t < 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Transmitted bits over source bits.
pub fn compression_rate_of(payload_bits: f64, source_bits: f64) -> f64 {
    payload_bits / source_bits
}

/// Source coordinate sampled by output index `i`, pixel centres aligned.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    (i as f64 + 0.5) * (src as f64 / dst as f64) - 0.5
}

/// Four `(index, weight)` taps along one axis, edges clamped.
fn taps(coord: f64, len: usize) -> [(usize, f64); 4] {
    let base = coord.floor();
    let frac = coord - base;
    let mut out = [(0, 0.0); 4];
    for (k, slot) in (-1i64..=2).zip(out.iter_mut()) {
        let idx = (base as i64 + k).clamp(0, len as i64 - 1) as usize;
        *slot = (idx, bicubic_kernel(frac - k as f64));
    }
    out
}

/// Resamples to `out_w x out_h`, clamping results to `[0, max]`.
pub fn resample(img: &ImageBuffer, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Image(format!("cannot resample to {out_w}x{out_h}")));
    }
    let (w, h, ch) = img.dims();
    let xt: Vec<_> = (0..out_w).map(|x| taps(source_coord(x, w, out_w), w)).collect();
    let yt: Vec<_> = (0..out_h).map(|y| taps(source_coord(y, h, out_h), h)).collect();
    let mut data = Vec::with_capacity(out_w * out_h * ch);
    for ys in &yt {
        for xs in &xt {
            for c in 0..ch {
                let mut acc = 0.0;
                for &(sy, wy) in ys {
                    for &(sx, wx) in xs {
                        acc += wy * wx * img.get(sx, sy, c);
                    }
                }
                data.push(acc.clamp(0.0, img.max()));
            }
        }
    }
    ImageBuffer::new(out_w, out_h, ch, img.max(), data)
}

/// Output size for rate `rate`: each axis scaled by `sqrt(rate)`.
pub fn extracted_dims(width: usize, height: usize, rate: f64) -> Result<(usize, usize)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid(format!("compression rate must be in (0, 1], got {rate}")));
    }
    let scale = rate.sqrt();
    let w = (width as f64 * scale).round() as usize;
    let h = (height as f64 * scale).round() as usize;
    if w == 0 || h == 0 {
        return Err(Error::RateTooSmall(rate, width, height));
    }
    Ok((w, h))
}

/// Semantic extraction: bicubic downsampling so the pixel count shrinks by
/// roughly `rate`.
pub fn extract(img: &ImageBuffer, rate: f64) -> Result<ImageBuffer> {
    let (w, h) = extracted_dims(img.width(), img.height(), rate)?;
    resample(img, w, h)
}
