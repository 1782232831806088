//! Run configuration: key=value files overridden by flags.

use std::fmt::Write as _;
use std::path::Path;

use sparsect_core::baselines::SartConfig;
use sparsect_core::train::{parse_kv, TrainConfig};
use sparsect_core::Dtype;

/// Invalid configuration or arguments (exit code 3).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub sart: SartConfig,
    pub width_mult: f64,
    pub size: usize,
    pub views: usize,
    pub interval: usize,
    pub n_volumes: usize,
    pub test_volumes: usize,
    pub n_slices: usize,
    pub drift: f64,
    /// Element type for training, restoration and benchmarking.
    pub precision: Dtype,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            sart: SartConfig::default(),
            width_mult: 0.25,
            size: 64,
            views: 180,
            interval: 4,
            n_volumes: 8,
            test_volumes: 2,
            n_slices: 12,
            drift: 0.5,
            precision: Dtype::F32,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> anyhow::Result<V> {
    match value.trim().parse() {
        Ok(v) => Ok(v),
        Err(_) => config_err(format!("{key}: cannot parse {value:?}")),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match self.train.set(key, value) {
            Ok(true) => return Ok(()),
            Ok(false) => {}
            Err(e) => return config_err(e.to_string()),
        }
        match key {
            "n_iters" => self.sart.n_iters = parse(key, value)?,
            "relaxation" => self.sart.relaxation = parse(key, value)?,
            "tv_steps" => self.sart.tv_steps = parse(key, value)?,
            "tv_step_size" => self.sart.tv_step_size = parse(key, value)?,
            "nonneg" => self.sart.nonneg = parse(key, value)?,
            "width_mult" => self.width_mult = parse(key, value)?,
            "size" => self.size = parse(key, value)?,
            "views" => self.views = parse(key, value)?,
            "interval" => self.interval = parse(key, value)?,
            "n_volumes" => self.n_volumes = parse(key, value)?,
            "test_volumes" => self.test_volumes = parse(key, value)?,
            "n_slices" => self.n_slices = parse(key, value)?,
            "drift" => self.drift = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            _ => return config_err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> anyhow::Result<()> {
        let pairs = parse_kv(text).map_err(|e| ConfigError(e.to_string()))?;
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let check = |r: sparsect_core::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        check(self.train.validate())?;
        check(self.sart.validate())?;
        if !(self.width_mult > 0.0 && self.width_mult <= 1.0) {
            return config_err(format!("width_mult must lie in (0, 1], got {}", self.width_mult));
        }
        if self.size < 16 || !self.size.is_multiple_of(16) {
            return config_err(format!("size must be a positive multiple of 16, got {}", self.size));
        }
        if self.views < 2 || self.interval == 0 || self.interval > self.views {
            return config_err(format!("bad view setup: {} views at interval {}", self.views, self.interval));
        }
        if self.n_volumes == 0 || self.test_volumes == 0 {
            return config_err("volume counts must be >= 1");
        }
        if self.n_slices < 4 * self.train.t + 1 {
            return config_err(format!("n_slices {} too small for T = {}", self.n_slices, self.train.t));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return config_err(format!("drift must lie in [0, 1], got {}", self.drift));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = self.train.to_kv();
        let s_ = &self.sart;
        for (k, v) in [
            ("n_iters", s_.n_iters.to_string()),
            ("relaxation", s_.relaxation.to_string()),
            ("tv_steps", s_.tv_steps.to_string()),
            ("tv_step_size", s_.tv_step_size.to_string()),
            ("nonneg", s_.nonneg.to_string()),
            ("width_mult", self.width_mult.to_string()),
            ("size", self.size.to_string()),
            ("views", self.views.to_string()),
            ("interval", self.interval.to_string()),
            ("n_volumes", self.n_volumes.to_string()),
            ("test_volumes", self.test_volumes.to_string()),
            ("n_slices", self.n_slices.to_string()),
            ("drift", self.drift.to_string()),
            ("precision", self.precision.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_rejects_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_text("steps=12\nwidth_mult=0.5\ntv_steps=3\n# comment\nT=2\nprecision=f64").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_kv()).unwrap();
        assert_eq!(c, d);
        assert!(c.apply_text("bogus=1").unwrap_err().downcast_ref::<ConfigError>().is_some());
        assert!(c.apply_text("steps=abc").is_err());
        assert!(c.apply_text("precision=f16").is_err());
    }
}
