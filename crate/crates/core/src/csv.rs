//! Plain CSV emission. Every file starts with one `#` line naming the crate
//! version, the config hash, and the seed.

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvHeader {
    pub config_hash: String,
    pub seed: u64,
}

impl CsvHeader {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            seed,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "# semcom-core {VERSION} config={} seed={} bandwidth_unit=MHz\n",
            self.config_hash, self.seed
        )
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}
