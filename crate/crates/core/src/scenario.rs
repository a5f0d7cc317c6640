//! The reference five-user deployment and helpers to grow or shrink it.

use crate::channel::{db_to_linear, dbm_to_watts, LinkParams, SemanticPayload, BITS_PER_MEGABYTE};
use crate::stackelberg::{MarketConfig, UserProfile};

pub const UNIT_COST: f64 = 2.0;
pub const SERVICE_FEE: f64 = 10.0;
pub const BANDWIDTH_CAP_MHZ: f64 = 200.0;
pub const PRICE_CAP: f64 = 20.0;
pub const IMMERSION: f64 = 15.0;
pub const TX_POWER_DBM: f64 = 40.0;
pub const UNIT_GAIN_DB: f64 = -20.0;
pub const PATH_LOSS_EXP: f64 = 2.0;
pub const NOISE_POWER_DBM: f64 = -150.0;
pub const SOURCE_MEGABYTES: f64 = 10.0;
pub const DISTANCES_M: [f64; 5] = [100.0, 200.0, 300.0, 400.0, 500.0];
pub const COMPRESSION_RATES: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
pub const SSIMS: [f64; 5] = [0.75, 0.8, 0.85, 0.9, 0.95];

/// Parameters of users appended when the population grows past five.
pub const EXTRA_USER_DISTANCE_M: f64 = 500.0;
pub const EXTRA_USER_COMPRESSION_RATE: f64 = 0.5;
pub const EXTRA_USER_SSIM: f64 = 0.8;

pub fn link(distance_m: f64) -> LinkParams {
    LinkParams {
        tx_power: dbm_to_watts(TX_POWER_DBM),
        noise_power: dbm_to_watts(NOISE_POWER_DBM),
        unit_gain: db_to_linear(UNIT_GAIN_DB),
        distance: distance_m,
        path_loss_exp: PATH_LOSS_EXP,
    }
}

pub fn user(distance_m: f64, compression_rate: f64, ssim: f64) -> UserProfile {
    let payload = SemanticPayload {
        source_bits: SOURCE_MEGABYTES * BITS_PER_MEGABYTE,
        compression_rate,
    };
    UserProfile::new(IMMERSION, ssim, link(distance_m), payload).expect("reference user is valid")
}

pub fn default_users() -> Vec<UserProfile> {
    (0..5)
        .map(|i| user(DISTANCES_M[i], COMPRESSION_RATES[i], SSIMS[i]))
        .collect()
}

/// Reference market: five users, `c = 2`, fee 10, 200 MHz, `p_max = 20`.
pub fn default_market() -> MarketConfig {
    MarketConfig::new(UNIT_COST, SERVICE_FEE, BANDWIDTH_CAP_MHZ, PRICE_CAP, default_users())
        .expect("reference market is valid")
}

/// Reference market with `count` users: the first five are the reference
/// users, the rest use the extra-user parameters.
pub fn market_with_users(count: usize) -> MarketConfig {
    let mut users = default_users();
    users.truncate(count);
    while users.len() < count {
        users.push(user(EXTRA_USER_DISTANCE_M, EXTRA_USER_COMPRESSION_RATE, EXTRA_USER_SSIM));
    }
    MarketConfig {
        users,
        ..default_market()
    }
}
