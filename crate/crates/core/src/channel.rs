//! OFDMA downlink model: per-user capacity, transmission rate, and the age of
//! semantic information (AoSI) of one semantic payload.
//!
//! Bandwidth is exposed in MHz at the game layer; the functions here work in
//! SI units (Hz, bit/s, seconds).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hz per MHz.
pub const HZ_PER_MHZ: f64 = 1e6;

/// Decimal megabyte in bits.
pub const BITS_PER_MEGABYTE: f64 = 8e6;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) / 1000.0
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Physical parameters of one downlink resource block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Transmit power in watts.
    pub tx_power: f64,
    /// Average noise power in watts.
    pub noise_power: f64,
    /// Unit channel power gain (linear).
    pub unit_gain: f64,
    /// Distance in meters.
    pub distance: f64,
    pub path_loss_exp: f64,
}

impl LinkParams {
    pub fn new(
        tx_power: f64,
        noise_power: f64,
        unit_gain: f64,
        distance: f64,
        path_loss_exp: f64,
    ) -> Result<Self> {
        let link = Self {
            tx_power,
            noise_power,
            unit_gain,
            distance,
            path_loss_exp,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
            ("unit_gain", self.unit_gain),
            ("distance", self.distance),
            ("path_loss_exp", self.path_loss_exp),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.path_loss_exp < 1.0 {
            return Err(Error::invalid(format!(
                "path_loss_exp must be >= 1, got {}",
                self.path_loss_exp
            )));
        }
        Ok(())
    }

    /// Received signal-to-noise ratio, `gamma * d^-eps * P / N0`.
    pub fn snr(&self) -> f64 {
        self.unit_gain * self.distance.powf(-self.path_loss_exp) * self.tx_power / self.noise_power
    }
}

/// Size of the semantic information sent to one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticPayload {
    pub source_bits: f64,
    /// Transmitted bits over source bits, in (0, 1].
    pub compression_rate: f64,
}

impl SemanticPayload {
    pub fn new(source_bits: f64, compression_rate: f64) -> Result<Self> {
        let p = Self {
            source_bits,
            compression_rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_bits.is_finite() && self.source_bits > 0.0) {
            return Err(Error::invalid(format!(
                "source_bits must be > 0, got {}",
                self.source_bits
            )));
        }
        if !(self.compression_rate > 0.0 && self.compression_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "compression_rate must be in (0, 1], got {}",
                self.compression_rate
            )));
        }
        Ok(())
    }

    pub fn payload_bits(&self) -> f64 {
        self.compression_rate * self.source_bits
    }
}

/// Spectral efficiency of the link in bit/s/Hz.
pub fn channel_capacity(link: &LinkParams) -> f64 {
    link.snr().ln_1p() / std::f64::consts::LN_2
}

/// Rate in bit/s for `bandwidth_hz` of spectrum at `capacity` bit/s/Hz.
pub fn transmission_rate(bandwidth_hz: f64, capacity: f64) -> f64 {
    bandwidth_hz * capacity
}

/// AoSI in seconds: payload bits over transmission rate.
pub fn aosi(payload: &SemanticPayload, rate: f64) -> Result<f64> {
    if rate <= 0.0 {
        return Err(Error::NoService);
    }
    Ok(payload.payload_bits() / rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_link(distance: f64) -> LinkParams {
        LinkParams::new(dbm_to_watts(40.0), dbm_to_watts(-150.0), db_to_linear(-20.0), distance, 2.0)
            .unwrap()
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(40.0) - 10.0).abs() < 1e-12);
        assert!((dbm_to_watts(-150.0) - 1e-18).abs() < 1e-30);
        assert!((db_to_linear(-20.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unit_snr_gives_one_bit() {
        // gamma d^-eps P / N0 = 1 with gamma = 1, d = 1.
        let link = LinkParams::new(2.0, 2.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(channel_capacity(&link), 1.0);
    }

    #[test]
    fn vanishing_power_gives_vanishing_capacity() {
        let link = LinkParams::new(1e-30, 1.0, 1.0, 1.0, 2.0).unwrap();
        let c = channel_capacity(&link);
        assert!(c > 0.0 && c < 1e-29);
    }

    #[test]
    fn default_user_capacity_golden() {
        // log2(1 + 0.01 * 100^-2 * 10 / 1e-18) = log2(1 + 1e13), evaluated by hand.
        let c = channel_capacity(&reference_link(100.0));
        assert!((c - 43.18506523353585).abs() < 1e-12);
        let c5 = channel_capacity(&reference_link(500.0));
        assert!((c5 - 38.541209043764596).abs() < 1e-12);
    }

    #[test]
    fn rate_and_aosi_golden() {
        let c = channel_capacity(&reference_link(100.0));
        assert_eq!(transmission_rate(0.0, c), 0.0);
        let r = transmission_rate(10.0 * HZ_PER_MHZ, c);
        assert!((r - 431850652.3353585).abs() / r < 1e-12);
        assert_eq!(transmission_rate(2e6, c), 2.0 * transmission_rate(1e6, c));

        let payload = SemanticPayload::new(10.0 * BITS_PER_MEGABYTE, 0.3).unwrap();
        let age = aosi(&payload, r).unwrap();
        assert!((age - 0.05557476843027327).abs() < 1e-15);
    }

    #[test]
    fn aosi_edge_cases() {
        let payload = SemanticPayload::new(1000.0, 0.5).unwrap();
        assert_eq!(aosi(&payload, 500.0).unwrap(), 1.0);
        assert!(matches!(aosi(&payload, 0.0), Err(Error::NoService)));
        let a1 = aosi(&payload, transmission_rate(1e6, 3.0)).unwrap();
        let a2 = aosi(&payload, transmission_rate(2e6, 3.0)).unwrap();
        assert!((a1 - 2.0 * a2).abs() < 1e-18);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(LinkParams::new(0.0, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(LinkParams::new(1.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(LinkParams::new(1.0, f64::NAN, 1.0, 1.0, 2.0).is_err());
        assert!(SemanticPayload::new(100.0, 0.0).is_err());
        assert!(SemanticPayload::new(100.0, 1.5).is_err());
        assert!(SemanticPayload::new(-1.0, 0.5).is_err());
    }

    fn link_strategy() -> impl Strategy<Value = LinkParams> {
        (1e-3..1e3f64, 1e-20..1e-10f64, 1e-4..1.0f64, 1.0..1e4f64, 1.0..5.0f64)
            .prop_map(|(p, n, g, d, e)| LinkParams::new(p, n, g, d, e).unwrap())
    }

    proptest! {
        #[test]
        fn capacity_monotonicity(link in link_strategy(), k in 1.01..10.0f64) {
            let base = channel_capacity(&link);
            let changed = LinkParams { tx_power: link.tx_power * k, ..link };
            prop_assert!(channel_capacity(&changed) > base);
            let changed = LinkParams { unit_gain: link.unit_gain * k, ..link };
            prop_assert!(channel_capacity(&changed) > base);
            let changed = LinkParams { distance: link.distance * k, ..link };
            prop_assert!(channel_capacity(&changed) < base);
            let changed = LinkParams { noise_power: link.noise_power * k, ..link };
            prop_assert!(channel_capacity(&changed) < base);
        }

        #[test]
        fn aosi_monotone_in_bandwidth_and_rate(
            link in link_strategy(),
            b in 0.1..100.0f64,
            rate in 0.05..0.9f64,
        ) {
            let c = channel_capacity(&link);
            let payload = SemanticPayload::new(8e7, rate).unwrap();
            let base = aosi(&payload, transmission_rate(b * HZ_PER_MHZ, c)).unwrap();
            let wider = aosi(&payload, transmission_rate(1.1 * b * HZ_PER_MHZ, c)).unwrap();
            prop_assert!(wider < base);
            let heavier = SemanticPayload::new(8e7, rate + 0.05).unwrap();
            prop_assert!(aosi(&heavier, transmission_rate(b * HZ_PER_MHZ, c)).unwrap() > base);
        }

        #[test]
        fn db_round_trip(x in 1e-12..1e12f64) {
            let back = db_to_linear(linear_to_db(x));
            prop_assert!((back - x).abs() / x < 1e-12);
        }
    }
}
