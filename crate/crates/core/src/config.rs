//! Pipeline configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Every threshold, iteration count, neighborhood and seed used by the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Foreground certainty threshold for the certain filter and EP.
    pub delta_fg: f64,
    /// Background certainty threshold.
    pub delta_bg: f64,
    /// SCG high-activation threshold.
    pub delta_h: f64,
    /// SCG low-activation threshold.
    pub delta_l: f64,
    pub pamr_iterations: usize,
    pub pamr_dilations: Vec<usize>,
    pub pamr_sigma_window: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    pub ccl_connectivity: u8,
    pub epsilon: f64,
    pub rng_seed: u64,
    /// Largest pixel count for which the SCG correlation volume is materialized.
    pub scg_volume_cap: usize,
    pub learning_rate: f64,
    /// Polynomial decay exponent for the learning rate; 0 keeps it constant.
    pub lr_power: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub mix_after: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            delta_fg: 0.55,
            delta_bg: 0.10,
            delta_h: 0.70,
            delta_l: 0.05,
            pamr_iterations: 10,
            pamr_dilations: vec![1, 2, 4, 8],
            pamr_sigma_window: 5,
            canny_low: 10.0,
            canny_high: 100.0,
            ccl_connectivity: 4,
            epsilon: 1e-4,
            rng_seed: 0,
            scg_volume_cap: 4096,
            learning_rate: 2.0,
            lr_power: 0.0,
            batch_size: 8,
            epochs: 30,
            mix_after: 15,
        }
    }
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        unit_open("delta_fg", self.delta_fg)?;
        unit_open("delta_bg", self.delta_bg)?;
        unit_open("delta_h", self.delta_h)?;
        unit_open("delta_l", self.delta_l)?;
        if self.delta_bg >= self.delta_fg {
            return Err(Error::Config("delta_bg must be below delta_fg".into()));
        }
        if self.delta_l >= self.delta_h {
            return Err(Error::Config("delta_l must be below delta_h".into()));
        }
        if !(self.canny_low < self.canny_high) {
            return Err(Error::Config("canny_low must be below canny_high".into()));
        }
        if !matches!(self.ccl_connectivity, 4 | 8) {
            return Err(Error::Config(format!(
                "ccl_connectivity must be 4 or 8, got {}",
                self.ccl_connectivity
            )));
        }
        if self.pamr_sigma_window < 3 || self.pamr_sigma_window % 2 == 0 {
            return Err(Error::Config(format!(
                "pamr_sigma_window must be odd and >= 3, got {}",
                self.pamr_sigma_window
            )));
        }
        if self.pamr_dilations.is_empty() || self.pamr_dilations.contains(&0) {
            return Err(Error::Config("pamr_dilations must be nonempty positive integers".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be nonnegative".into()));
        }
        if !(self.lr_power >= 0.0 && self.lr_power.is_finite()) {
            return Err(Error::Config("lr_power must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Sorted, de-duplicated dilation set.
    pub fn dilations(&self) -> Vec<usize> {
        let mut d = self.pamr_dilations.clone();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "delta_fg" => self.delta_fg = num(key, value)?,
            "delta_bg" => self.delta_bg = num(key, value)?,
            "delta_h" => self.delta_h = num(key, value)?,
            "delta_l" => self.delta_l = num(key, value)?,
            "pamr_iterations" => self.pamr_iterations = num(key, value)?,
            "pamr_dilations" => {
                self.pamr_dilations = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "pamr_sigma_window" => self.pamr_sigma_window = num(key, value)?,
            "canny_low" => self.canny_low = num(key, value)?,
            "canny_high" => self.canny_high = num(key, value)?,
            "ccl_connectivity" => self.ccl_connectivity = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            "scg_volume_cap" => self.scg_volume_cap = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "lr_power" => self.lr_power = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "mix_after" => self.mix_after = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses UTF-8 `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dil: Vec<String> = self.pamr_dilations.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "delta_fg = {}", self.delta_fg);
        let _ = writeln!(s, "delta_bg = {}", self.delta_bg);
        let _ = writeln!(s, "delta_h = {}", self.delta_h);
        let _ = writeln!(s, "delta_l = {}", self.delta_l);
        let _ = writeln!(s, "pamr_iterations = {}", self.pamr_iterations);
        let _ = writeln!(s, "pamr_dilations = {}", dil.join(","));
        let _ = writeln!(s, "pamr_sigma_window = {}", self.pamr_sigma_window);
        let _ = writeln!(s, "canny_low = {}", self.canny_low);
        let _ = writeln!(s, "canny_high = {}", self.canny_high);
        let _ = writeln!(s, "ccl_connectivity = {}", self.ccl_connectivity);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "rng_seed = {}", self.rng_seed);
        let _ = writeln!(s, "scg_volume_cap = {}", self.scg_volume_cap);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "lr_power = {}", self.lr_power);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "mix_after = {}", self.mix_after);
        s
    }
}
