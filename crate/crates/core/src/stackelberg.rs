//! One-leader, many-follower bandwidth market.
//!
//! The MASP (leader) posts a unit price `p` per MHz, each user (follower)
//! buys `b_i` MHz to maximize `delta_i ln(1 + 1/A_i) S_i - p b_i`, where
//! `A_i` is the AoSI at that bandwidth and `S_i = ln(1 + SSIM_i)`. The leader
//! earns `fee + sum_i (p - c) b_i`.
//!
//! Follower demand is solved in closed form. Leader pricing is available in
//! closed form ([`closed_form_price`]), by grid search
//! ([`brute_force_equilibrium`]), and with the bandwidth cap enforced
//! ([`equilibrium`]).

use crate::channel::{self, LinkParams, SemanticPayload, HZ_PER_MHZ};
use crate::error::{Error, Result};

/// Relative tolerance for equality checks on utilities and prices.
pub const REL_TOL: f64 = 1e-6;

/// Default price grid for [`brute_force_equilibrium`].
pub const DEFAULT_GRID_POINTS: usize = 10_000;

/// Demand tolerance (MHz) when the bandwidth cap binds.
pub const CAP_TOL_MHZ: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    immersion: f64,
    ssim: f64,
    quality: f64,
    link: LinkParams,
    payload: SemanticPayload,
    capacity: f64,
}

impl UserProfile {
    pub fn new(immersion: f64, ssim: f64, link: LinkParams, payload: SemanticPayload) -> Result<Self> {
        if !(immersion.is_finite() && immersion > 0.0) {
            return Err(Error::invalid(format!("immersion must be > 0, got {immersion}")));
        }
        if !(ssim > 0.0 && ssim <= 1.0) {
            return Err(Error::invalid(format!("ssim must be in (0, 1], got {ssim}")));
        }
        link.validate()?;
        payload.validate()?;
        Ok(Self {
            immersion,
            ssim,
            quality: ssim.ln_1p(),
            capacity: channel::channel_capacity(&link),
            link,
            payload,
        })
    }

    pub fn immersion(&self) -> f64 {
        self.immersion
    }

    pub fn ssim(&self) -> f64 {
        self.ssim
    }

    /// `S_i = ln(1 + SSIM_i)`.
    pub fn quality(&self) -> f64 {
        self.quality
    }

    pub fn link(&self) -> &LinkParams {
        &self.link
    }

    pub fn payload(&self) -> &SemanticPayload {
        &self.payload
    }

    /// Spectral efficiency in bit/s/Hz.
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Payload size in Mbit, so that `payload_mbit / capacity` is in MHz.
    pub fn payload_mbit(&self) -> f64 {
        self.payload.payload_bits() / HZ_PER_MHZ
    }

    /// `V_i / C_i` in MHz: the bandwidth at which the AoSI is one second.
    pub fn transfer_bandwidth(&self) -> f64 {
        self.payload_mbit() / self.capacity
    }

    /// `delta_i S_i`.
    pub fn weighted_quality(&self) -> f64 {
        self.immersion * self.quality
    }

    /// Highest price at which the user still buys: `delta_i S_i C_i / V_i`.
    pub fn participation_threshold(&self) -> f64 {
        self.weighted_quality() / self.transfer_bandwidth()
    }

    /// AoSI in seconds when the user holds `bandwidth_mhz`.
    pub fn aosi(&self, bandwidth_mhz: f64) -> Result<f64> {
        let rate = channel::transmission_rate(bandwidth_mhz * HZ_PER_MHZ, self.capacity);
        channel::aosi(&self.payload, rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    /// `c`, cost per MHz.
    pub unit_cost: f64,
    /// Flat AIGC service fee.
    pub service_fee: f64,
    /// `B_max` in MHz.
    pub bandwidth_cap: f64,
    /// `p_max` per MHz.
    pub price_cap: f64,
    pub users: Vec<UserProfile>,
}

impl MarketConfig {
    pub fn new(
        unit_cost: f64,
        service_fee: f64,
        bandwidth_cap: f64,
        price_cap: f64,
        users: Vec<UserProfile>,
    ) -> Result<Self> {
        let cfg = Self {
            unit_cost,
            service_fee,
            bandwidth_cap,
            price_cap,
            users,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.unit_cost > 0.0 && self.unit_cost <= self.price_cap && self.price_cap.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < unit_cost <= price_cap, got c = {}, p_max = {}",
                self.unit_cost, self.price_cap
            )));
        }
        if !(self.bandwidth_cap > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth_cap must be > 0, got {}",
                self.bandwidth_cap
            )));
        }
        if !self.service_fee.is_finite() {
            return Err(Error::invalid("service_fee must be finite"));
        }
        if self.users.is_empty() {
            return Err(Error::invalid("market needs at least one user"));
        }
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn clamp_price(&self, price: f64) -> f64 {
        price.clamp(self.unit_cost, self.price_cap)
    }
}

/// Price, demands, and payoffs of one play of the game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub price: f64,
    /// MHz per user.
    pub demands: Vec<f64>,
    pub leader_utility: f64,
    pub follower_utilities: Vec<f64>,
}

impl GameOutcome {
    pub fn evaluate(config: &MarketConfig, price: f64, demands: Vec<f64>) -> Self {
        let follower_utilities = config
            .users
            .iter()
            .zip(&demands)
            .map(|(u, &b)| user_utility(u, b, price))
            .collect();
        Self {
            price,
            leader_utility: masp_utility(config, price, &demands),
            demands,
            follower_utilities,
        }
    }

    pub fn total_demand(&self) -> f64 {
        self.demands.iter().sum()
    }
}

/// `U_i(b) = delta_i ln(1 + 1/A_i(b)) S_i - p b`, with `U_i(0) = 0`.
pub fn user_utility(user: &UserProfile, bandwidth: f64, price: f64) -> f64 {
    let inv_age = match user.aosi(bandwidth) {
        Ok(age) => 1.0 / age,
        Err(_) => 0.0,
    };
    user.weighted_quality() * inv_age.ln_1p() - price * bandwidth
}

/// Utility-maximizing demand in MHz for a posted price.
pub fn best_response(user: &UserProfile, price: f64) -> f64 {
    if user.participation_threshold() > price {
        (user.weighted_quality() / price - user.transfer_bandwidth()).max(0.0)
    } else {
        0.0
    }
}

pub fn best_responses(config: &MarketConfig, price: f64) -> Vec<f64> {
    config.users.iter().map(|u| best_response(u, price)).collect()
}

pub fn aggregate_demand(config: &MarketConfig, price: f64) -> f64 {
    config.users.iter().map(|u| best_response(u, price)).sum()
}

/// `U_s = fee + sum_i (p - c) b_i`.
pub fn masp_utility(config: &MarketConfig, price: f64, demands: &[f64]) -> f64 {
    let margin = price - config.unit_cost;
    config.service_fee + demands.iter().map(|b| margin * b).sum::<f64>()
}

/// Leader utility when every follower best-responds, ignoring the cap.
pub fn reduced_leader_utility(config: &MarketConfig, price: f64) -> f64 {
    masp_utility(config, price, &best_responses(config, price))
}

fn stationary_price(config: &MarketConfig, active: &[&UserProfile]) -> f64 {
    let quality: f64 = active.iter().map(|u| u.weighted_quality()).sum();
    let transfer: f64 = active.iter().map(|u| u.transfer_bandwidth()).sum();
    (config.unit_cost * quality / transfer).sqrt()
}

/// Leader price maximizing the reduced utility, ignoring the bandwidth cap.
///
/// Users sorted by participation threshold split the price axis into
/// segments with a fixed active set. On each segment the reduced utility is
/// concave with stationary point `sqrt(c sum delta S / sum V/C)` over the
/// active users; the point is clamped into the segment and into
/// `[c, p_max]`, and the best segment wins (lowest price on ties). The
/// chosen price therefore has a stable active set.
pub fn closed_form_price(config: &MarketConfig) -> Result<f64> {
    let mut users: Vec<&UserProfile> = config.users.iter().collect();
    users.sort_by(|a, b| b.participation_threshold().total_cmp(&a.participation_threshold()));

    let mut best: Option<(f64, f64)> = None;
    for k in 1..=users.len() {
        let upper = users[k - 1].participation_threshold();
        let lower = users.get(k).map_or(0.0, |u| u.participation_threshold());
        let lo = lower.max(config.unit_cost);
        let hi = upper.min(config.price_cap);
        if lo >= hi {
            continue;
        }
        let p = stationary_price(config, &users[..k]).clamp(lo, hi);
        let value = reduced_leader_utility(config, p);
        match best {
            Some((bp, bv)) if value < bv || (value == bv && p >= bp) => {}
            _ => best = Some((p, value)),
        }
    }
    best.map(|(p, _)| p).ok_or_else(|| {
        Error::MarketCollapse(format!(
            "no user buys at any price in [{}, {}]",
            config.unit_cost, config.price_cap
        ))
    })
}

/// The pricing formula with `C_i` inside the numerator sum,
/// `sqrt(c sum delta S C / sum V)`, over all users, clamped into `[c, p_max]`.
///
/// Agrees with [`closed_form_price`] when all users share one capacity.
pub fn printed_formula_price(config: &MarketConfig) -> f64 {
    let num: f64 = config
        .users
        .iter()
        .map(|u| u.weighted_quality() * u.capacity())
        .sum();
    let den: f64 = config.users.iter().map(|u| u.payload_mbit()).sum();
    (config.unit_cost * num / den)
        .sqrt()
        .clamp(config.unit_cost, config.price_cap)
}

fn feasible_demand(config: &MarketConfig, total: f64) -> bool {
    total > 0.0 && total <= config.bandwidth_cap
}

/// Grid search over `[c, p_max]` with best-responding followers.
///
/// Prices whose aggregate demand is zero or exceeds the cap are infeasible.
/// Ties go to the lowest price.
pub fn brute_force_equilibrium(config: &MarketConfig, grid_points: usize) -> Result<GameOutcome> {
    if grid_points < 1000 {
        return Err(Error::invalid(format!(
            "grid_points must be >= 1000, got {grid_points}"
        )));
    }
    let step = (config.price_cap - config.unit_cost) / (grid_points - 1) as f64;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for k in 0..grid_points {
        let p = config.unit_cost + step * k as f64;
        let demands = best_responses(config, p);
        if !feasible_demand(config, demands.iter().sum()) {
            continue;
        }
        let u = masp_utility(config, p, &demands);
        if best.as_ref().is_none_or(|(_, bu, _)| u > *bu) {
            best = Some((p, u, demands));
        }
    }
    let (price, _, demands) = best.ok_or_else(|| {
        Error::MarketCollapse(format!(
            "no grid price yields demand within (0, {}] MHz",
            config.bandwidth_cap
        ))
    })?;
    Ok(GameOutcome::evaluate(config, price, demands))
}

/// Stackelberg equilibrium with the bandwidth cap enforced.
///
/// Starts from [`closed_form_price`]; if aggregate demand exceeds the cap,
/// the price is raised by bisection to the smallest price whose demand fits
/// (aggregate demand is non-increasing in price).
pub fn equilibrium(config: &MarketConfig) -> Result<GameOutcome> {
    let p0 = closed_form_price(config)?;
    if aggregate_demand(config, p0) <= config.bandwidth_cap {
        return Ok(GameOutcome::evaluate(config, p0, best_responses(config, p0)));
    }
    if aggregate_demand(config, config.price_cap) > config.bandwidth_cap {
        return Err(Error::MarketCollapse(format!(
            "demand exceeds {} MHz even at the price cap {}",
            config.bandwidth_cap, config.price_cap
        )));
    }
    let (mut lo, mut hi) = (p0, config.price_cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if aggregate_demand(config, mid) > config.bandwidth_cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let demands = best_responses(config, hi);
    if !feasible_demand(config, demands.iter().sum()) {
        return Err(Error::MarketCollapse(
            "bandwidth cap can only be met with zero demand".into(),
        ));
    }
    Ok(GameOutcome::evaluate(config, hi, demands))
}

/// Largest unilateral gains found when probing an outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    /// Max over users and probes of `U_i(b) - U_i(b*)`.
    pub follower_gain: f64,
    /// Max over feasible probe prices of `U_s(p) - U_s(p*)`, followers best-responding.
    pub leader_gain: f64,
}

impl DeviationReport {
    /// Both gains within `REL_TOL` of the corresponding payoff scale.
    pub fn is_equilibrium(&self, outcome: &GameOutcome) -> bool {
        let follower_scale = outcome
            .follower_utilities
            .iter()
            .fold(1.0f64, |m, u| m.max(u.abs()));
        self.follower_gain <= REL_TOL * follower_scale
            && self.leader_gain <= REL_TOL * outcome.leader_utility.abs().max(1.0)
    }
}

/// Probe both equilibrium inequalities on uniform grids of `probes` points:
/// each follower deviates over `[0, B_max]`, the leader over `[c, p_max]`.
///
/// The leader's deviations are evaluated with followers re-optimizing, and
/// deviation prices whose demand breaks the cap are not admissible.
pub fn probe_deviations(config: &MarketConfig, outcome: &GameOutcome, probes: usize) -> DeviationReport {
    let probes = probes.max(2);
    let mut follower_gain = f64::NEG_INFINITY;
    for (user, &u_star) in config.users.iter().zip(&outcome.follower_utilities) {
        let step = config.bandwidth_cap / (probes - 1) as f64;
        for k in 0..probes {
            let gain = user_utility(user, step * k as f64, outcome.price) - u_star;
            follower_gain = follower_gain.max(gain);
        }
    }
    let mut leader_gain = f64::NEG_INFINITY;
    let step = (config.price_cap - config.unit_cost) / (probes - 1) as f64;
    for k in 0..probes {
        let p = config.unit_cost + step * k as f64;
        let demands = best_responses(config, p);
        if !feasible_demand(config, demands.iter().sum()) {
            continue;
        }
        leader_gain = leader_gain.max(masp_utility(config, p, &demands) - outcome.leader_utility);
    }
    DeviationReport {
        follower_gain,
        leader_gain,
    }
}
