//! Browser bindings: the pricing game and the semantic extraction layer.
//!
//! Everything here also runs natively so it can be tested without a browser.

use semcom_core::metrics::{self, ImageBuffer, SsimMode};
use semcom_core::scenario;
use semcom_core::stackelberg::{
    aggregate_demand, best_responses, equilibrium, masp_utility, printed_formula_price, MarketConfig,
};
use wasm_bindgen::prelude::*;

/// The reference market with adjustable cost, cap and population.
#[wasm_bindgen]
pub struct Market {
    config: MarketConfig,
}

#[wasm_bindgen]
impl Market {
    #[wasm_bindgen(constructor)]
    pub fn new(unit_cost: f64, bandwidth_cap: f64, users: usize) -> Result<Market, String> {
        if !(1..=64).contains(&users) {
            return Err(format!("user count must be in 1..=64, got {users}"));
        }
        let base = scenario::market_with_users(users);
        let config = MarketConfig::new(unit_cost, base.service_fee, bandwidth_cap, base.price_cap, base.users)
            .map_err(|e| e.to_string())?;
        Ok(Market { config })
    }

    #[wasm_bindgen(getter)]
    pub fn unit_cost(&self) -> f64 {
        self.config.unit_cost
    }

    #[wasm_bindgen(getter)]
    pub fn price_cap(&self) -> f64 {
        self.config.price_cap
    }

    #[wasm_bindgen(getter)]
    pub fn user_count(&self) -> usize {
        self.config.user_count()
    }

    /// Interleaved `[price, leader utility, aggregate demand, ...]` over an
    /// even grid of `points` prices on `[c, p_max]`. Demand over the cap is
    /// scaled down, as when the market settles a posted price.
    pub fn utility_curve(&self, points: usize) -> Vec<f64> {
        let points = points.max(2);
        let (lo, hi) = (self.config.unit_cost, self.config.price_cap);
        let mut out = Vec::with_capacity(3 * points);
        for k in 0..points {
            let p = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let demands = self.settled_demands(p);
            out.extend([p, masp_utility(&self.config, p, &demands), demands.iter().sum()]);
        }
        out
    }

    /// Per-user bandwidth (MHz) bought at `price`.
    pub fn demands(&self, price: f64) -> Vec<f64> {
        self.settled_demands(self.config.clamp_price(price))
    }

    /// Leader utility when `price` is posted.
    pub fn leader_utility(&self, price: f64) -> f64 {
        let p = self.config.clamp_price(price);
        masp_utility(&self.config, p, &self.settled_demands(p))
    }

    /// Age of semantic information (seconds) per user at `price`; infinite
    /// for users who buy nothing.
    pub fn aosi(&self, price: f64) -> Vec<f64> {
        self.config
            .users
            .iter()
            .zip(self.demands(price))
            .map(|(u, b)| u.aosi(b).unwrap_or(f64::INFINITY))
            .collect()
    }

    /// `[price, leader utility, total demand, printed-formula price]`.
    pub fn solve(&self) -> Result<Vec<f64>, String> {
        let eq = equilibrium(&self.config).map_err(|e| e.to_string())?;
        let total = eq.total_demand();
        Ok(vec![eq.price, eq.leader_utility, total, printed_formula_price(&self.config)])
    }
}

impl Market {
    fn settled_demands(&self, price: f64) -> Vec<f64> {
        let mut demands = best_responses(&self.config, price);
        let total = aggregate_demand(&self.config, price);
        if total > self.config.bandwidth_cap {
            let s = self.config.bandwidth_cap / total;
            demands.iter_mut().for_each(|b| *b *= s);
        }
        demands
    }
}

/// A procedural grayscale test card: rings, a diagonal ramp and a checker.
fn test_card(size: usize) -> ImageBuffer {
    let c = size as f64 / 2.0;
    ImageBuffer::from_fn(size, size, 1, 255.0, |x, y, _| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let r = (dx * dx + dy * dy).sqrt();
        let rings = 0.5 + 0.5 * (r * 0.35).cos();
        let ramp = (x + y) as f64 / (2 * size) as f64;
        let checker = if (x / 8 + y / 8) % 2 == 0 { 1.0 } else { 0.0 };
        let v = if y < size / 3 { rings } else if y < 2 * size / 3 { ramp } else { 0.3 * rings + 0.7 * checker };
        (v * 255.0).round()
    })
    .expect("test card dimensions are valid")
}

/// Extracted image plus its fidelity once scaled back to the source size.
#[wasm_bindgen]
pub struct Extraction {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    restored: Vec<u8>,
    ssim: f64,
    psnr: f64,
}

#[wasm_bindgen]
impl Extraction {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Extracted grayscale pixels, row-major.
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }

    /// The extraction resampled back to the source size.
    pub fn restored(&self) -> Vec<u8> {
        self.restored.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ssim(&self) -> f64 {
        self.ssim
    }

    /// Infinite when the restoration is exact.
    #[wasm_bindgen(getter)]
    pub fn psnr(&self) -> f64 {
        self.psnr
    }
}

fn to_bytes(img: &ImageBuffer) -> Vec<u8> {
    img.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

/// Source test card as grayscale bytes.
#[wasm_bindgen]
pub fn test_card_pixels(size: usize) -> Vec<u8> {
    to_bytes(&test_card(size))
}

/// Extract the `size`-pixel test card at compression `rate` and score the
/// round trip with windowed SSIM and PSNR.
#[wasm_bindgen]
pub fn extract_test_card(size: usize, rate: f64) -> Result<Extraction, String> {
    if !(8..=1024).contains(&size) {
        return Err(format!("size must be in 8..=1024, got {size}"));
    }
    let src = test_card(size);
    let small = metrics::extract(&src, rate).map_err(|e| e.to_string())?;
    let back = metrics::resample(&small, size, size).map_err(|e| e.to_string())?;
    let ssim = metrics::ssim(&src, &back, SsimMode::Windowed).map_err(|e| e.to_string())?;
    let psnr = match metrics::psnr(&src, &back) {
        Ok(v) => v,
        Err(semcom_core::Error::IdenticalImages) => f64::INFINITY,
        Err(e) => return Err(e.to_string()),
    };
    Ok(Extraction {
        width: small.width(),
        height: small.height(),
        pixels: to_bytes(&small),
        restored: to_bytes(&back),
        ssim,
        psnr,
    })
}
