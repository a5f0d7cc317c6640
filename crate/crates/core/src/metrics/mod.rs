//! Image fidelity and the bicubic extraction layer.

mod bicubic;
mod image;
pub mod pnm;
mod quality;

pub use bicubic::{bicubic_kernel, compression_rate_of, extract, extracted_dims, resample};
pub use image::ImageBuffer;
pub use quality::{mse, psnr, ssim, SsimMode, SSIM_WINDOW};
