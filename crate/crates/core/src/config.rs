//! Experiment configuration: a TOML file whose sections mirror the modules.
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{EnvConfig, TrainConfig};
use crate::channel::{db_to_linear, dbm_to_watts, LinkParams, SemanticPayload, BITS_PER_MEGABYTE};
use crate::error::{Error, Result};
use crate::scenario;
use crate::stackelberg::{MarketConfig, UserProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub unit_cost: f64,
    pub service_fee: f64,
    /// MHz.
    pub bandwidth_cap: f64,
    pub price_cap: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            unit_cost: scenario::UNIT_COST,
            service_fee: scenario::SERVICE_FEE,
            bandwidth_cap: scenario::BANDWIDTH_CAP_MHZ,
            price_cap: scenario::PRICE_CAP,
        }
    }
}

/// One entry per user; all vectors must have the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersSection {
    pub immersion: Vec<f64>,
    pub distance_m: Vec<f64>,
    pub compression_rate: Vec<f64>,
    pub ssim: Vec<f64>,
    pub source_megabytes: f64,
}

impl Default for UsersSection {
    fn default() -> Self {
        Self {
            immersion: vec![scenario::IMMERSION; 5],
            distance_m: scenario::DISTANCES_M.to_vec(),
            compression_rate: scenario::COMPRESSION_RATES.to_vec(),
            ssim: scenario::SSIMS.to_vec(),
            source_megabytes: scenario::SOURCE_MEGABYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub tx_power_dbm: f64,
    pub unit_gain_db: f64,
    pub path_loss_exp: f64,
    pub noise_power_dbm: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            tx_power_dbm: scenario::TX_POWER_DBM,
            unit_gain_db: scenario::UNIT_GAIN_DB,
            path_loss_exp: scenario::PATH_LOSS_EXP,
            noise_power_dbm: scenario::NOISE_POWER_DBM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    UnitCost,
    UserCount,
    DenoisingSteps,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::UnitCost => "unit_cost",
            SweepAxis::UserCount => "user_count",
            SweepAxis::DenoisingSteps => "denoising_steps",
        }
    }
}

/// Parameters of users added by a `user_count` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtraUser {
    pub immersion: f64,
    pub distance_m: f64,
    pub compression_rate: f64,
    pub ssim: f64,
}

impl Default for ExtraUser {
    fn default() -> Self {
        Self {
            immersion: scenario::IMMERSION,
            distance_m: scenario::EXTRA_USER_DISTANCE_M,
            compression_rate: scenario::EXTRA_USER_COMPRESSION_RATE,
            ssim: scenario::EXTRA_USER_SSIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Training seeds per point: `seed, seed + 1, ...`.
    pub seeds: usize,
    /// Episode budget per training run; `0` keeps `train.episodes`.
    pub episodes: usize,
    pub extra_user: ExtraUser,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::UnitCost,
            values: vec![2.0, 3.0, 4.0, 5.0],
            seeds: 3,
            episodes: 0,
            extra_user: ExtraUser::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep.values must not be empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("sweep.seeds must be >= 1".into()));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::UnitCost => v.is_finite() && v > 0.0,
                SweepAxis::UserCount | SweepAxis::DenoisingSteps => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Config(format!("sweep value {v} is not valid for {}", self.axis.name())));
            }
        }
        Ok(())
    }
}

/// How trained and baseline policies are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Trailing training episodes averaged into the reported utility.
    pub window: usize,
    /// Episodes of noise-free rollouts for `evaluate`.
    pub episodes: usize,
    /// Chains averaged per inferred price.
    pub draws: usize,
    /// Price grid for the oracle.
    pub grid_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            window: 50,
            episodes: 20,
            draws: 16,
            grid_points: crate::stackelberg::DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSection,
    pub users: UsersSection,
    pub channel: ChannelSection,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub sweep: SweepSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section, including that the market can be built.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        self.market().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        if self.env.history_len == 0 {
            return Err(Error::Config("env.history_len must be positive".into()));
        }
        if self.eval.window == 0 || self.eval.draws == 0 || self.eval.grid_points < 1000 {
            return Err(Error::Config("eval.window and eval.draws must be >= 1, eval.grid_points >= 1000".into()));
        }
        let extra = &self.sweep.extra_user;
        self.user(extra.immersion, extra.distance_m, extra.compression_rate, extra.ssim)
            .map_err(as_config)?;
        self.sweep.validate()
    }

    fn user(&self, immersion: f64, distance_m: f64, rate: f64, ssim: f64) -> Result<UserProfile> {
        let ch = &self.channel;
        let link = LinkParams::new(
            dbm_to_watts(ch.tx_power_dbm),
            dbm_to_watts(ch.noise_power_dbm),
            db_to_linear(ch.unit_gain_db),
            distance_m,
            ch.path_loss_exp,
        )?;
        let payload = SemanticPayload::new(self.users.source_megabytes * BITS_PER_MEGABYTE, rate)?;
        UserProfile::new(immersion, ssim, link, payload)
    }

    pub fn market(&self) -> Result<MarketConfig> {
        let u = &self.users;
        let m = u.distance_m.len();
        if m == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if u.immersion.len() != m || u.compression_rate.len() != m || u.ssim.len() != m {
            return Err(Error::Config(format!(
                "user vectors differ in length: immersion {}, distance_m {m}, compression_rate {}, ssim {}",
                u.immersion.len(),
                u.compression_rate.len(),
                u.ssim.len()
            )));
        }
        let users = (0..m)
            .map(|i| self.user(u.immersion[i], u.distance_m[i], u.compression_rate[i], u.ssim[i]))
            .collect::<Result<Vec<_>>>()?;
        let s = &self.market;
        MarketConfig::new(s.unit_cost, s.service_fee, s.bandwidth_cap, s.price_cap, users)
    }

    /// This config with `count` users: truncated, or padded with the sweep's
    /// extra user.
    pub fn with_user_count(&self, count: usize) -> Self {
        let mut out = self.clone();
        let u = &mut out.users;
        let e = &self.sweep.extra_user;
        for v in [&mut u.immersion, &mut u.distance_m, &mut u.compression_rate, &mut u.ssim] {
            v.truncate(count);
        }
        while u.distance_m.len() < count {
            u.immersion.push(e.immersion);
            u.distance_m.push(e.distance_m);
            u.compression_rate.push(e.compression_rate);
            u.ssim.push(e.ssim);
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_the_reference_market() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let m = cfg.market().unwrap();
        let r = scenario::default_market();
        assert_eq!(m.users.len(), 5);
        for (a, b) in m.users.iter().zip(&r.users) {
            assert!((a.capacity() - b.capacity()).abs() < 1e-12);
            assert_eq!(a.payload_mbit(), b.payload_mbit());
        }
    }

    #[test]
    fn toml_round_trip_and_hash_stability() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.train.seed = 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn partial_files_and_dotted_keys() {
        let cfg = ExperimentConfig::from_toml("market.unit_cost = 3.0\n[train]\nepisodes = 7\n").unwrap();
        assert_eq!(cfg.market.unit_cost, 3.0);
        assert_eq!(cfg.train.episodes, 7);
        assert_eq!(cfg.train.batch_size, 512);
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(matches!(
            ExperimentConfig::from_toml("[market]\nunit_costs = 3.0\n"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml("[bogus]\nx = 1\n").is_err());
    }

    #[test]
    fn invalid_values_fail() {
        for text in [
            "[users]\nssim = [0.9]\n",
            "[market]\nunit_cost = -1.0\n",
            "[train]\nbatch_size = 0\n",
            "[sweep]\nvalues = []\n",
            "[sweep]\naxis = \"user_count\"\nvalues = [5.5]\n",
            "[env]\nhistory_len = 0\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn user_count_padding() {
        let cfg = ExperimentConfig::default().with_user_count(7);
        let m = cfg.market().unwrap();
        assert_eq!(m.users.len(), 7);
        let r = scenario::market_with_users(7);
        assert!((m.users[6].capacity() - r.users[6].capacity()).abs() < 1e-12);
        assert_eq!(ExperimentConfig::default().with_user_count(2).market().unwrap().users.len(), 2);
    }
}
