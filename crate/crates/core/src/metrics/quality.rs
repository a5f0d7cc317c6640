//! Full-reference fidelity metrics.

use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Side of the square window used by [`SsimMode::Windowed`].
pub const SSIM_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// One evaluation over whole-image statistics.
    #[default]
    Global,
    /// Mean over every `SSIM_WINDOW`-square window at stride one. Images
    /// smaller than the window use a single window clipped to the image.
    Windowed,
}

/// Mean squared error over every pixel and channel.
pub fn mse(x: &ImageBuffer, y: &ImageBuffer) -> Result<f64> {
    x.check_same_dims(y)?;
    let sum: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.data().len() as f64)
}

/// `10 log10(MAX^2 / MSE)` in dB. Identical images have no finite PSNR.
pub fn psnr(x: &ImageBuffer, y: &ImageBuffer) -> Result<f64> {
    let e = mse(x, y)?;
    if e == 0.0 {
        return Err(Error::IdenticalImages);
    }
    Ok(10.0 * (x.max() * x.max() / e).log10())
}

fn ssim_stats(a: &[f64], b: &[f64], c1: f64, c2: f64) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        va += (p - ma) * (p - ma);
        vb += (q - mb) * (q - mb);
        cov += (p - ma) * (q - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

/// Structural similarity, averaged over channels.
pub fn ssim(x: &ImageBuffer, y: &ImageBuffer, mode: SsimMode) -> Result<f64> {
    x.check_same_dims(y)?;
    let c1 = (0.01 * x.max()).powi(2);
    let c2 = (0.03 * x.max()).powi(2);
    let (w, h) = (x.width(), x.height());
    let mut total = 0.0;
    for c in 0..x.channels() {
        let (px, py) = (x.plane(c), y.plane(c));
        total += match mode {
            SsimMode::Global => ssim_stats(&px, &py, c1, c2),
            SsimMode::Windowed => {
                let (ww, wh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
                let mut sum = 0.0;
                let mut count = 0usize;
                let mut wa = Vec::with_capacity(ww * wh);
                let mut wb = Vec::with_capacity(ww * wh);
                for y0 in 0..=h - wh {
                    for x0 in 0..=w - ww {
                        wa.clear();
                        wb.clear();
                        for yy in y0..y0 + wh {
                            wa.extend_from_slice(&px[yy * w + x0..yy * w + x0 + ww]);
                            wb.extend_from_slice(&py[yy * w + x0..yy * w + x0 + ww]);
                        }
                        sum += ssim_stats(&wa, &wb, c1, c2);
                        count += 1;
                    }
                }
                sum / count as f64
            }
        };
    }
    Ok(total / x.channels() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, data: Vec<f64>) -> ImageBuffer {
        ImageBuffer::new(w, h, 1, 255.0, data).unwrap()
    }

    #[test]
    fn two_by_two_fixture() {
        let x = gray(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        let y = gray(2, 2, vec![12.0, 17.0, 30.0, 44.0]);
        // (4 + 9 + 0 + 16) / 4
        assert_eq!(mse(&x, &y).unwrap(), 7.25);
        assert!((psnr(&x, &y).unwrap() - 10.0 * (65025.0f64 / 7.25).log10()).abs() < 1e-12);
    }

    #[test]
    fn shifted_by_one() {
        let x = ImageBuffer::from_fn(7, 5, 3, 255.0, |i, j, c| ((i * 31 + j * 17 + c * 5) % 250) as f64).unwrap();
        let y = ImageBuffer::from_fn(7, 5, 3, 255.0, |i, j, c| ((i * 31 + j * 17 + c * 5) % 250) as f64 + 1.0).unwrap();
        assert_eq!(mse(&x, &y).unwrap(), 1.0);
        assert!((psnr(&x, &y).unwrap() - 48.1308036086791).abs() < 1e-9);
    }

    #[test]
    fn psnr_zero_db_at_full_scale_error() {
        let x = gray(2, 1, vec![0.0, 255.0]);
        let y = gray(2, 1, vec![255.0, 0.0]);
        assert_eq!(psnr(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn identical_images() {
        let x = gray(3, 3, (0..9).map(|v| v as f64 * 20.0).collect());
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert!(matches!(psnr(&x, &x), Err(Error::IdenticalImages)));
        assert_eq!(ssim(&x, &x, SsimMode::Global).unwrap(), 1.0);
        assert_eq!(ssim(&x, &x, SsimMode::Windowed).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let x = gray(2, 2, vec![0.0; 4]);
        let y = gray(4, 1, vec![0.0; 4]);
        assert!(matches!(mse(&x, &y), Err(Error::DimensionMismatch(..))));
        assert!(ssim(&x, &y, SsimMode::Global).is_err());
    }

    #[test]
    fn inverted_high_variance_image() {
        let x = ImageBuffer::from_fn(16, 16, 1, 255.0, |i, j, _| if (i / 2 + j / 2) % 2 == 0 { 0.0 } else { 255.0 }).unwrap();
        let inv = ImageBuffer::from_fn(16, 16, 1, 255.0, |i, j, _| 255.0 - x.get(i, j, 0)).unwrap();
        let s = ssim(&x, &inv, SsimMode::Global).unwrap();
        // Equal means, perfectly anti-correlated: the structure term is
        // (C2 - 2 var) / (2 var + C2).
        let var = 127.5f64 * 127.5;
        let c2 = (0.03f64 * 255.0).powi(2);
        assert!((s - (c2 - 2.0 * var) / (2.0 * var + c2)).abs() < 1e-12);
        assert!(s < 0.5);
        assert!(ssim(&x, &inv, SsimMode::Windowed).unwrap() < 0.5);
    }

    #[test]
    fn windowed_falls_back_to_one_window_on_small_images() {
        let x = gray(3, 2, vec![1.0, 50.0, 90.0, 30.0, 200.0, 7.0]);
        let y = gray(3, 2, vec![3.0, 40.0, 99.0, 35.0, 190.0, 0.0]);
        assert_eq!(ssim(&x, &y, SsimMode::Windowed).unwrap(), ssim(&x, &y, SsimMode::Global).unwrap());
    }

    fn image_pair() -> impl Strategy<Value = (ImageBuffer, ImageBuffer)> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (
                prop::collection::vec(0.0..=255.0f64, w * h),
                prop::collection::vec(0.0..=255.0f64, w * h),
            )
                .prop_map(move |(a, b)| (gray(w, h, a), gray(w, h, b)))
        })
    }

    proptest! {
        #[test]
        fn ssim_symmetric_and_bounded((x, y) in image_pair()) {
            for mode in [SsimMode::Global, SsimMode::Windowed] {
                let a = ssim(&x, &y, mode).unwrap();
                let b = ssim(&y, &x, mode).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!(a.abs() <= 1.0 + 1e-12);
                prop_assert!((ssim(&x, &x, mode).unwrap() - 1.0).abs() < 1e-12);
            }
            prop_assert!((mse(&x, &y).unwrap() - mse(&y, &x).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn psnr_decreases_with_mse(base in prop::collection::vec(10.0..=200.0f64, 16), d1 in 0.1..5.0f64, extra in 0.1..5.0f64) {
            let x = gray(4, 4, base.clone());
            let near = gray(4, 4, base.iter().map(|v| v + d1).collect());
            let far = gray(4, 4, base.iter().map(|v| v + d1 + extra).collect());
            prop_assert!(mse(&x, &near).unwrap() < mse(&x, &far).unwrap());
            prop_assert!(psnr(&x, &near).unwrap() > psnr(&x, &far).unwrap());
        }
    }
}
